"""Regularised zero-forcing reference precoder (direct solve).

The ridge-regularised precoder F = beta * H (H^H H + reg I)^{-1} is the
ground truth the iterative schemes are measured against.  The Gram system is
Hermitian positive definite for reg > 0, so it is solved by Cholesky
factorisation; the matrix inverse is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelMatrix


@dataclass(frozen=True)
class Precoder:
    """A precoding matrix with its power normalisation.

    ``f`` satisfies ||f||_F = 1; ``norm_factor`` is the scalar that was
    applied to the raw solution to get there.
    """

    f: np.ndarray
    norm_factor: float
    scheme: str = ""


def _channel_array(h) -> np.ndarray:
    if isinstance(h, ChannelMatrix):
        return h.h
    return np.asarray(h)


def _gram(h: np.ndarray, reg: float) -> np.ndarray:
    k = h.shape[1]
    return h.conj().T @ h + reg * np.eye(k)


def apply_auxiliary(h, reg: float, s: np.ndarray) -> np.ndarray:
    """Solve (H^H H + reg I) v = s for one or more right-hand sides.

    ``s`` may be a length-K vector or a (K, m) block of right-hand sides.
    For reg = 0 the Gram matrix must be positive definite (full column rank).
    """
    h = _channel_array(h)
    if reg < 0.0:
        raise ValueError("regularisation must be non-negative")
    gram = _gram(h, reg)
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - depends on input
        raise np.linalg.LinAlgError(
            "Gram matrix is not positive definite; the channel is rank "
            "deficient and reg = 0"
        ) from exc
    return scipy.linalg.cho_solve(cho, np.asarray(s))


def auxiliary_matrix(h, reg: float) -> np.ndarray:
    """All K canonical solves at once: (H^H H + reg I)^{-1} column by column."""
    h = _channel_array(h)
    return apply_auxiliary(h, reg, np.eye(h.shape[1], dtype=np.complex128))


def rzf_precoder(h, reg: float) -> Precoder:
    """Ridge-regularised precoder, normalised to a unit power budget.

    reg -> 0 recovers zero forcing (needs full column rank); a very large reg
    turns the inverse into a scaled identity and the result approaches the
    matched filter.
    """
    h = _channel_array(h)
    v = auxiliary_matrix(h, reg)
    raw = h @ v
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise ValueError("degenerate precoder: H (H^H H + reg I)^{-1} vanished")
    beta = 1.0 / norm
    return Precoder(f=raw * beta, norm_factor=beta, scheme="rzf")


def mrc_precoder(h) -> Precoder:
    """Matched-filter precoder: normalised channel columns stacked as-is."""
    h = _channel_array(h)
    norm = np.linalg.norm(h)
    if norm == 0.0:
        raise ValueError("degenerate precoder: zero channel")
    beta = 1.0 / norm
    return Precoder(f=h * beta, norm_factor=beta, scheme="mrc")
