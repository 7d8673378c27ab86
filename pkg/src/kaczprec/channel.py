"""Spherical-wavefront channel generation for very large linear arrays.

Users close to a large aperture see curved wavefronts and only a portion of
the array (a "visibility region" made of whole subarrays), so each channel
column is a sum of spherical-wave steering vectors masked by a per-user
antenna support.  Channels can be written to / read from a small text format
so a run is replayable from disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s

# Sources closer than this to the array reference point are rejected: the
# spherical-wave geometry degenerates once a scatterer sits on the aperture.
MIN_SOURCE_DISTANCE = 0.5  # m


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array at half-wavelength spacing, split into equal subarrays.

    Parameters
    ----------
    n_antennas : int
        Total number of elements.
    carrier_freq : float
        Carrier frequency in Hz.
    n_subarrays : int
        Number of equal-size subarrays; must divide ``n_antennas``.
    """

    n_antennas: int
    carrier_freq: float
    n_subarrays: int = 1

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError(f"n_antennas must be positive, got {self.n_antennas}")
        if self.carrier_freq <= 0:
            raise ValueError(f"carrier_freq must be positive, got {self.carrier_freq}")
        if self.n_subarrays < 1 or self.n_antennas % self.n_subarrays != 0:
            raise ValueError(
                f"n_subarrays={self.n_subarrays} must be positive and divide "
                f"n_antennas={self.n_antennas}"
            )

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def spacing(self) -> float:
        """Element spacing (half wavelength)."""
        return self.wavelength / 2.0

    @property
    def subarray_size(self) -> int:
        return self.n_antennas // self.n_subarrays

    @property
    def aperture(self) -> float:
        """Physical array length in metres."""
        return (self.n_antennas - 1) * self.spacing


def antenna_index(cfg: ArrayConfig) -> np.ndarray:
    """Symmetric element indices around the array centre.

    Steps of one, centred on zero; half-integers when ``n_antennas`` is even,
    so the reference point is always the physical array centre.
    """
    n = cfg.n_antennas
    return np.arange(n, dtype=np.float64) - (n - 1) / 2.0


def antenna_positions(cfg: ArrayConfig) -> np.ndarray:
    """Element coordinates along the array axis in metres."""
    return antenna_index(cfg) * cfg.spacing


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: a point source seen from the array centre.

    angle is measured from the array axis (broadside = pi/2) and must lie in
    (0, pi); center_distance is from the source to the array reference point.
    """

    angle: float
    center_distance: float
    gain: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not (0.0 < self.angle < math.pi):
            raise ValueError(f"angle must lie in (0, pi), got {self.angle}")
        if self.center_distance < MIN_SOURCE_DISTANCE:
            raise ValueError(
                f"center_distance must be >= {MIN_SOURCE_DISTANCE} m, "
                f"got {self.center_distance}"
            )
        if not (math.isfinite(self.gain.real) and math.isfinite(self.gain.imag)):
            raise ValueError("gain must be finite")


def distance_profile(path: PathSpec, cfg: ArrayConfig) -> np.ndarray:
    """Exact source-to-element distances (law of cosines, no Fresnel expansion)."""
    n = antenna_index(cfg)
    d = cfg.spacing
    d0 = path.center_distance
    sq = d0 * d0 + (n * d) ** 2 - 2.0 * n * d * d0 * math.cos(path.angle)
    return np.sqrt(sq)


def steering_vector(path: PathSpec, cfg: ArrayConfig) -> np.ndarray:
    """Unit-norm spherical steering vector for a single path.

    Entry n carries the phase of the excess propagation distance relative to
    the array centre; in the limit of a far source this reduces to the usual
    planar phase ramp along the aperture.
    """
    prof = distance_profile(path, cfg)
    excess = prof - path.center_distance
    phase = -2.0 * math.pi / cfg.wavelength * excess
    return np.exp(1j * phase) / math.sqrt(cfg.n_antennas)


@dataclass(frozen=True)
class VisibilityRegion:
    """Set of subarrays over which a user's channel is nonzero."""

    visible_subarrays: frozenset
    n_subarrays: int
    subarray_size: int

    def __post_init__(self):
        if not self.visible_subarrays:
            raise ValueError("visibility region must contain at least one subarray")
        bad = [s for s in self.visible_subarrays if not 0 <= s < self.n_subarrays]
        if bad:
            raise ValueError(f"subarray indices out of range: {bad}")

    @property
    def n_antennas(self) -> int:
        return self.n_subarrays * self.subarray_size

    @property
    def n_visible_antennas(self) -> int:
        return len(self.visible_subarrays) * self.subarray_size

    @cached_property
    def antenna_indices(self) -> np.ndarray:
        """Sorted indices of all visible elements."""
        m = self.subarray_size
        parts = [np.arange(s * m, (s + 1) * m) for s in sorted(self.visible_subarrays)]
        return np.concatenate(parts)

    @cached_property
    def indicator(self) -> np.ndarray:
        """0/1 mask of length n_antennas."""
        u = np.zeros(self.n_antennas)
        u[self.antenna_indices] = 1.0
        return u

    def overlaps(self, other: "VisibilityRegion") -> bool:
        return bool(self.visible_subarrays & other.visible_subarrays)


def sample_visibility(p_visible: float, cfg: ArrayConfig, rng: np.random.Generator) -> VisibilityRegion:
    """Draw each subarray visible independently with probability ``p_visible``.

    An all-invisible draw would leave the user with no channel at all, so it
    is redrawn until at least one subarray is visible.
    """
    if not 0.0 < p_visible <= 1.0:
        raise ValueError(f"p_visible must lie in (0, 1], got {p_visible}")
    while True:
        mask = rng.random(cfg.n_subarrays) < p_visible
        if mask.any():
            break
    return VisibilityRegion(
        visible_subarrays=frozenset(int(s) for s in np.flatnonzero(mask)),
        n_subarrays=cfg.n_subarrays,
        subarray_size=cfg.subarray_size,
    )


@dataclass(frozen=True)
class UserSpec:
    """Multipath description of one user: L paths plus a visibility region."""

    paths: tuple
    visibility: VisibilityRegion

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a user needs at least one path")


def stationary_channel(user: UserSpec, cfg: ArrayConfig) -> np.ndarray:
    """Full-aperture multipath channel, before any visibility masking.

    Scaled by sqrt(n_antennas / L) so the expected channel energy does not
    shrink as more paths are averaged in.
    """
    n_paths = len(user.paths)
    h = np.zeros(cfg.n_antennas, dtype=np.complex128)
    for path in user.paths:
        h += path.gain * steering_vector(path, cfg)
    return math.sqrt(cfg.n_antennas / n_paths) * h


def apply_visibility(h: np.ndarray, vr: VisibilityRegion) -> np.ndarray:
    """Mask a channel vector to its visibility region (exact zeros outside)."""
    h = np.asarray(h)
    if h.shape != (vr.n_antennas,):
        raise ValueError(f"channel length {h.shape} does not match array size {vr.n_antennas}")
    return h * vr.indicator


@dataclass(frozen=True)
class ChannelMatrix:
    """Stacked user channels: column k is user k's masked channel vector."""

    h: np.ndarray  # (n_antennas, n_users) complex
    vrs: tuple  # one VisibilityRegion per column
    cfg: ArrayConfig

    def __post_init__(self):
        if self.h.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if self.h.shape[0] != self.cfg.n_antennas:
            raise ValueError("row count does not match the array size")
        if len(self.vrs) != self.h.shape[1]:
            raise ValueError("need one visibility region per user column")

    @property
    def n_antennas(self) -> int:
        return self.h.shape[0]

    @property
    def n_users(self) -> int:
        return self.h.shape[1]


def build_channel_matrix(users, cfg: ArrayConfig) -> ChannelMatrix:
    """Assemble a ChannelMatrix from per-user specs (columns in user order)."""
    cols = []
    vrs = []
    for user in users:
        cols.append(apply_visibility(stationary_channel(user, cfg), user.visibility))
        vrs.append(user.visibility)
    h = np.stack(cols, axis=1) if cols else np.zeros((cfg.n_antennas, 0), dtype=np.complex128)
    return ChannelMatrix(h=h, vrs=tuple(vrs), cfg=cfg)


def sample_users(
    cfg: ArrayConfig,
    n_users: int,
    n_paths: int,
    p_visible: float,
    rng: np.random.Generator,
    min_distance: float = 1.0,
    max_distance: float = 50.0,
    angle_lo: float = math.pi / 6,
    angle_hi: float = 5 * math.pi / 6,
):
    """Draw user drops: distances U[min,max], angles U(lo,hi), CN(0,1) gains."""
    users = []
    for _ in range(n_users):
        paths = []
        for _ in range(n_paths):
            angle = rng.uniform(angle_lo, angle_hi)
            dist = rng.uniform(min_distance, max_distance)
            gain = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
            paths.append(PathSpec(angle=angle, center_distance=dist, gain=complex(gain)))
        vr = sample_visibility(p_visible, cfg, rng)
        users.append(UserSpec(paths=tuple(paths), visibility=vr))
    return users


def random_channel(
    cfg: ArrayConfig,
    n_users: int,
    n_paths: int,
    p_visible: float,
    rng: np.random.Generator,
) -> ChannelMatrix:
    """Convenience wrapper: sample user drops and build the channel matrix."""
    return build_channel_matrix(sample_users(cfg, n_users, n_paths, p_visible, rng), cfg)


def power_control(chan: ChannelMatrix, snr_db: float):
    """Equalise user SNRs and return the matched regularisation factor.

    Every column is rescaled to unit norm, so with unit transmit power the
    per-user SNR is ``1 / sigma^2`` for a common noise power
    ``sigma^2 = 1 / snr_linear``.  Returns ``(scaled channel, reg)`` where
    ``reg = 1 / snr_linear`` is the ridge weight matched to that operating
    point (large for low SNR, 0 in the noiseless limit).
    """
    norms = np.linalg.norm(chan.h, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("cannot power-control a user with an all-zero channel")
    snr_linear = 10.0 ** (snr_db / 10.0)
    scaled = chan.h / norms
    return ChannelMatrix(h=scaled, vrs=chan.vrs, cfg=chan.cfg), 1.0 / snr_linear


# ---------------------------------------------------------------------------
# On-disk format: a short self-describing text header, one line per user
# listing the visible subarrays, then n_antennas * n_users "re im" pairs in
# row-major order.  repr() round-trips doubles exactly, so save -> load is
# bit-faithful.
# ---------------------------------------------------------------------------

_MAGIC = "kaczprec-channel 1"


def save_channel(path, chan: ChannelMatrix, seed=None, p_visible=None) -> None:
    """Write a channel realization to ``path`` in the documented text format."""
    lines = [_MAGIC]
    lines.append(
        "nt=%d k=%d s=%d f=%s seed=%s p=%s"
        % (
            chan.n_antennas,
            chan.n_users,
            chan.cfg.n_subarrays,
            repr(float(chan.cfg.carrier_freq)),
            "none" if seed is None else int(seed),
            "none" if p_visible is None else repr(float(p_visible)),
        )
    )
    for k, vr in enumerate(chan.vrs):
        subs = " ".join(str(s) for s in sorted(vr.visible_subarrays))
        lines.append(f"vr {k}: {subs}")
    for n in range(chan.n_antennas):
        for k in range(chan.n_users):
            z = complex(chan.h[n, k])  # builtin repr round-trips exactly
            lines.append(f"{z.real!r} {z.imag!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_channel(path):
    """Read a channel written by :func:`save_channel`.

    Returns ``(ChannelMatrix, meta)`` where ``meta`` carries the header
    fields (seed and visibility probability may be None).
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a channel file (bad magic)")
    header = dict(item.split("=", 1) for item in lines[1].split())
    nt = int(header["nt"])
    k = int(header["k"])
    s = int(header["s"])
    freq = float(header["f"])
    seed = None if header["seed"] == "none" else int(header["seed"])
    p_vis = None if header["p"] == "none" else float(header["p"])
    cfg = ArrayConfig(n_antennas=nt, carrier_freq=freq, n_subarrays=s)
    vrs = []
    for i in range(k):
        tag, subs = lines[2 + i].split(":")
        if tag.strip() != f"vr {i}":
            raise ValueError(f"{path}: malformed visibility line {i}")
        vrs.append(
            VisibilityRegion(
                visible_subarrays=frozenset(int(x) for x in subs.split()),
                n_subarrays=s,
                subarray_size=cfg.subarray_size,
            )
        )
    body = lines[2 + k:]
    if len(body) != nt * k:
        raise ValueError(f"{path}: expected {nt * k} entries, found {len(body)}")
    h = np.empty((nt, k), dtype=np.complex128)
    row = 0
    for n in range(nt):
        for col in range(k):
            re, im = body[row].split()
            h[n, col] = complex(float(re), float(im))
            row += 1
    meta = {"seed": seed, "p_visible": p_vis}
    return ChannelMatrix(h=h, vrs=tuple(vrs), cfg=cfg), meta
