"""Quality and cost metrics: NMSE, per-user rates, flop models and counters.

Flop accounting uses the usual real-operation equivalents: one complex
multiply = 6 real flops, one complex add = 2.  Closed-form per-scheme cost
formulas are evaluated in exact rational arithmetic so integer parameter sets
give exact integers; visibility-dependent runs pass realized per-instance
average set sizes, which may be fractional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - annotation only
    from .solvers import AugmentedSystem

CMUL = 6  # real flops per complex multiply
CADD = 2  # real flops per complex add


class FlopCounter:
    """Accumulates real-flop counts for the operations a solver performs."""

    __slots__ = ("total",)

    def __init__(self):
        self.total = 0

    def cmul(self, n: int) -> None:
        self.total += CMUL * n

    def cadd(self, n: int) -> None:
        self.total += CADD * n

    def real(self, n: int) -> None:
        """Raw real operations (divisions, magnitudes, bookkeeping)."""
        self.total += n


def nmse(f, f_ref) -> float:
    """Normalised matrix error ||f_ref - f||_F / ||f_ref||_F."""
    f = np.asarray(f)
    f_ref = np.asarray(f_ref)
    ref_norm = np.linalg.norm(f_ref)
    if ref_norm == 0.0:
        raise ValueError("reference precoder has zero norm")
    return float(np.linalg.norm(f_ref - f) / ref_norm)


def spectral_efficiency(h: np.ndarray, f: np.ndarray, snr_linear: float):
    """Per-user achievable rates and their sum for a unit-power precoder.

    ``h`` is the (n_antennas, n_users) channel, ``f`` the precoding matrix of
    the same shape with ||f||_F <= 1, and the noise power is ``1/snr_linear``
    to match the unit-norm power-controlled channel columns.

    Returns ``(rates, sum_rate)`` with rates in bit/s/Hz.
    """
    h = np.asarray(h)
    f = np.asarray(f)
    if h.shape != f.shape:
        raise ValueError(f"shape mismatch: channel {h.shape} vs precoder {f.shape}")
    if snr_linear <= 0.0:
        raise ValueError("snr_linear must be positive")
    total = np.linalg.norm(f)
    if total > 1.0 + 1e-9:
        raise ValueError(f"precoder violates the unit power budget: ||F||_F = {total}")
    cross = h.conj().T @ f  # (K, K); entry [k, i] = h_k^H f_i
    power = np.abs(cross) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    noise = 1.0 / snr_linear
    rates = np.log2(1.0 + signal / (interference + noise))
    return rates, float(rates.sum())


@dataclass(frozen=True)
class VrStats:
    """Realized visibility-set sizes entering the cost formulas.

    antennas_visible    mean |support| over users (visible antennas)
    coupled             mean |coupled set| over users
    users_per_subarray  mean number of users seeing a subarray
    n_orthogonal        size of the orthogonal group
    n_non_orthogonal    users outside the orthogonal group
    """

    antennas_visible: Fraction
    coupled: Fraction
    users_per_subarray: Fraction
    n_orthogonal: int
    n_non_orthogonal: int

    @classmethod
    def from_partition(cls, vrs, partition) -> "VrStats":
        n = len(vrs)
        vis = sum(vr.n_visible_antennas for vr in vrs)
        cpl = sum(len(c) for c in partition.coupled)
        qs = sum(len(q) for q in partition.subarray_users)
        n_sub = len(partition.subarray_users)
        return cls(
            antennas_visible=Fraction(vis, n),
            coupled=Fraction(cpl, n),
            users_per_subarray=Fraction(qs, n_sub),
            n_orthogonal=len(partition.orthogonal),
            n_non_orthogonal=len(partition.non_orthogonal),
        )


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(x).limit_denominator(10**12)


#: Schemes with a closed-form flop count.
FLOP_SCHEMES = ("rzf", "urk", "swor-erk", "gk", "grk", "vr-ogrk", "vr-oahk")


# Schemes the cost table covers.  The dense aggregate scheme ("ahk") has no
# closed form and is only ever costed by measurement.
COSTED_SCHEMES = ("rzf", "urk", "swor-erk", "gk", "grk", "vr-ogrk", "vr-oahk")


def analytic_flops(scheme: str, n_antennas: int, n_users: int, n_iters: int = 0,
                   stats: VrStats | None = None):
    """Closed-form real-flop count for one full precoder computation.

    ``n_iters`` is the iteration count T for the iterative schemes (ignored
    for the direct solver).  Visibility-aware schemes need ``stats``.  GRK is
    costed identically to GK: the two differ only in how the already-computed
    greedy weights pick a row.  Returns an int when the inputs are integral,
    otherwise a float.
    """
    nt = Fraction(int(n_antennas))
    k = Fraction(int(n_users))
    t = Fraction(int(n_iters))
    name = scheme.lower()
    if name == "rzf":
        val = 8 * k**3 + 9 * k**2 + 12 * nt * k**2 - 3 * k
    elif name == "urk":
        val = 8 * nt * k**2 + 4 * nt * k + t * (16 * nt - 4)
    elif name == "swor-erk":
        val = 8 * nt * k**2 + 4 * nt * k + k - 1 + t * (16 * nt + k + 8)
    elif name in ("gk", "grk"):
        val = 8 * nt * k**2 + 4 * nt * k - k + t * (8 * nt * (k + 1) + k - 5)
    elif name == "vr-ogrk":
        if stats is None:
            raise ValueError("vr-ogrk cost needs visibility statistics")
        gam = _as_fraction(stats.antennas_visible)
        cpl = _as_fraction(stats.coupled)
        q = _as_fraction(stats.users_per_subarray)
        val = 8 * nt * k * (q + Fraction(1, 2)) - k + t * (8 * gam * (cpl + 1) + k - 5)
    elif name == "vr-oahk":
        if stats is None:
            raise ValueError("vr-oahk cost needs visibility statistics")
        gam = _as_fraction(stats.antennas_visible)
        q = _as_fraction(stats.users_per_subarray)
        n_orth = Fraction(int(stats.n_orthogonal))
        n_non = Fraction(int(stats.n_non_orthogonal))
        val = 8 * nt * k * (q + Fraction(1, 2)) + t * (
            8 * gam * (2 * n_non + n_orth + 2) + 24 * n_non + 14 * nt + 5
        )
    else:
        raise ValueError(f"no cost formula for scheme {scheme!r}")
    if val.denominator == 1:
        return int(val)
    return float(val)


@dataclass(frozen=True)
class ConvergenceBound:
    """Expected per-iteration squared-error contraction for greedy selection.

    contraction = 1 - sigma_min^2 / frob_sq, where sigma_min is the smallest
    singular value of the regularised row system and frob_sq its squared
    Frobenius norm (the sum of row energies).
    """

    sigma_min: float
    frob_sq: float
    contraction: float


def estimate_rate_bound(sys: "AugmentedSystem") -> ConvergenceBound:
    """Compute the greedy-selection contraction bound for a solver system."""
    k = sys.n_users
    if k > 64:
        raise ValueError("rate bound is meant for small instances (n_users <= 64)")
    h = sys.channel.h
    gram = h.conj().T @ h + sys.reg * np.eye(k)
    eigs = np.linalg.eigvalsh(gram)
    sigma_min_sq = float(eigs[0])
    frob_sq = float(np.sum(sys.row_energies))
    return ConvergenceBound(
        sigma_min=float(np.sqrt(max(sigma_min_sq, 0.0))),
        frob_sq=frob_sq,
        contraction=1.0 - sigma_min_sq / frob_sq,
    )


def contraction_diagnostics(errors):
    """Per-step error ratios and the slope of log10(error) vs step.

    ``errors`` is a 1-D sequence of positive error norms.  Returns
    ``(ratios, slope)``; entries where the previous error is zero give a
    ratio of 0 (converged).
    """
    e = np.asarray(errors, dtype=np.float64)
    prev = e[:-1]
    ratios = np.where(prev > 0.0, e[1:] / np.where(prev > 0.0, prev, 1.0), 0.0)
    pos = e > 0.0
    if pos.sum() >= 2:
        idx = np.flatnonzero(pos)
        slope = float(np.polyfit(idx, np.log10(e[idx]), 1)[0])
    else:
        slope = float("-inf")
    return ratios, slope


@dataclass
class RunTrace:
    """Per-run record assembled by the experiment harness."""

    scheme: str
    seed: int | None = None
    nmse: list = field(default_factory=list)
    resid: list = field(default_factory=list)
    flops: list = field(default_factory=list)  # cumulative measured, per iteration
    n_iters: int = 0
    converged: bool = True
    flops_analytic: float | None = None
    flops_measured: int | None = None
    sum_rate: float | None = None
