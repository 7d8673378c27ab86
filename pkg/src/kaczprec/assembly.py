"""Precoder assembly F = H V, dense or blocked by subarray.

When users see only parts of the array, each subarray's slice of the product
only involves the users whose visibility region covers that subarray; the
blocked path skips the structurally-zero columns and its multiply count drops
from K to the mean users-per-subarray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix
from .metrics import FlopCounter
from .rzf import Precoder


@dataclass(frozen=True)
class SubarrayChannel:
    """Channel split into S row blocks with per-subarray active-user lists."""

    blocks: tuple  # S arrays of shape (subarray_size, n_users)
    active_users: tuple  # active_users[s] = index array of users seeing subarray s
    n_users: int

    @classmethod
    def from_channel(cls, chan: ChannelMatrix) -> "SubarrayChannel":
        s_count = chan.cfg.n_subarrays
        m = chan.cfg.subarray_size
        blocks = []
        active = []
        for s in range(s_count):
            block = chan.h[s * m:(s + 1) * m, :]
            users = np.asarray(
                sorted(k for k, vr in enumerate(chan.vrs) if s in vr.visible_subarrays),
                dtype=np.intp,
            )
            inactive = np.setdiff1d(np.arange(chan.n_users), users)
            if inactive.size and np.any(block[:, inactive] != 0.0):
                raise ValueError(
                    f"subarray {s}: channel is nonzero for a user outside its "
                    "visibility region"
                )
            blocks.append(block)
            active.append(users)
        return cls(blocks=tuple(blocks), active_users=tuple(active), n_users=chan.n_users)


def _normalise(raw: np.ndarray, scheme: str) -> Precoder:
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise ValueError("degenerate precoder: H V vanished")
    beta = 1.0 / norm
    return Precoder(f=raw * beta, norm_factor=beta, scheme=scheme)


def assemble_dense(chan, v: np.ndarray, counter: FlopCounter | None = None,
                   scheme: str = "") -> Precoder:
    """Plain F = H V followed by unit-power normalisation."""
    h = chan.h if isinstance(chan, ChannelMatrix) else np.asarray(chan)
    v = np.asarray(v)
    nt, k = h.shape
    if v.shape != (k, k):
        raise ValueError(f"expected a ({k}, {k}) solution block, got {v.shape}")
    raw = h @ v
    if counter is not None:
        counter.cmul(nt * k * k)
        counter.cadd(nt * k * (k - 1))
    return _normalise(raw, scheme)


def assemble_vr(sub: SubarrayChannel, v: np.ndarray, counter: FlopCounter | None = None,
                scheme: str = "") -> Precoder:
    """Blocked product: each subarray row block uses only its visible users."""
    v = np.asarray(v)
    k = sub.n_users
    if v.shape != (k, k):
        raise ValueError(f"expected a ({k}, {k}) solution block, got {v.shape}")
    parts = []
    for block, users in zip(sub.blocks, sub.active_users):
        m = block.shape[0]
        if users.size == 0:
            parts.append(np.zeros((m, k), dtype=np.complex128))
            continue
        parts.append(block[:, users] @ v[users, :])
        if counter is not None:
            counter.cmul(m * users.size * k)
            counter.cadd(m * (users.size - 1) * k)
    raw = np.vstack(parts)
    return _normalise(raw, scheme)
