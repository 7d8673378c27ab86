"""Row-action solvers for the regularised precoding system.

The ridge system (H^H H + reg I) v = s is rewritten as a consistent row
system: stack H on top of sqrt(reg) I and take the conjugate-transpose rows.
Row i is then [h_i^H, sqrt(reg) e_i^T] with energy ||h_i||^2 + reg, acting on
an iterate split as (col, coef): ``col`` lives in antenna space and ``coef``
carries the auxiliary coefficients.  A projection on row i is

    gamma = r_i / e_i,   col += gamma h_i,   coef_i += gamma,

and at convergence ``coef`` solves the ridge system while ``col`` equals
H coef.  Because each h_i is supported on the user's visible antennas only,
projections touch just that support, and users with disjoint supports have
exactly orthogonal rows.

Scheme zoo (all share the same state and step primitives):

    urk        uniform random row choice
    swor-erk   energy-weighted sampling without replacement, per epoch
    gk         deterministic pick of the largest residual-to-energy ratio
    grk        random pick weighted by squared residual magnitude
    vr-ogrk    grk with residual upkeep limited to overlapping users
    ahk        one aggregated step along a residual-weighted row combination
    vr-oahk    exact block projection on the orthogonal group, then one
               aggregated step over the remaining users
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix
from .metrics import FlopCounter, RunTrace, nmse
from .vrgraph import UserPartition, build_partition

SCHEMES = ("urk", "swor-erk", "gk", "grk", "vr-ogrk", "ahk", "vr-oahk")

#: Schemes whose row choice involves random draws.
STOCHASTIC_SCHEMES = frozenset({"urk", "swor-erk", "grk", "vr-ogrk"})

#: Schemes that exploit visibility supports in their inner loop.
VR_SCHEMES = frozenset({"vr-ogrk", "vr-oahk"})


def canonical_scheme(name: str) -> str:
    low = name.strip().lower()
    if low not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    return low


def display_scheme(name: str) -> str:
    return canonical_scheme(name).upper()


@dataclass(frozen=True)
class AugmentedSystem:
    """Shared, immutable problem description for all solver runs.

    Caches row energies, per-user antenna supports and the restricted channel
    columns, plus the user partition derived from the visibility regions.
    """

    channel: ChannelMatrix
    reg: float
    row_energies: np.ndarray  # (K,) real
    supports: tuple  # per-user sorted antenna index arrays
    eff_rows: tuple  # per-user channel restricted to its support
    h_adj: np.ndarray  # conj(H).T, cached for dense residual refreshes
    partition: UserPartition

    @classmethod
    def from_channel(cls, chan: ChannelMatrix, reg: float) -> "AugmentedSystem":
        if reg < 0.0:
            raise ValueError("regularisation must be non-negative")
        if chan.n_users < 1:
            raise ValueError("need at least one user")
        supports = []
        eff = []
        for k, vr in enumerate(chan.vrs):
            idx = vr.antenna_indices
            outside = np.delete(chan.h[:, k], idx)
            if outside.size and np.any(outside != 0.0):
                raise ValueError(f"column {k} is nonzero outside its visibility region")
            supports.append(idx)
            eff.append(np.ascontiguousarray(chan.h[idx, k]))
        energies = np.array([np.sum(np.abs(e) ** 2) for e in eff]) + reg
        if np.any(energies == 0.0):
            raise ValueError("zero-energy row: empty channel with reg = 0")
        return cls(
            channel=chan,
            reg=float(reg),
            row_energies=energies,
            supports=tuple(supports),
            eff_rows=tuple(eff),
            h_adj=np.ascontiguousarray(chan.h.conj().T),
            partition=build_partition(chan.vrs),
        )

    @property
    def n_users(self) -> int:
        return self.channel.n_users

    @property
    def n_antennas(self) -> int:
        return self.channel.n_antennas


@dataclass
class SolverState:
    """Mutable per-right-hand-side iterate.

    ``resid`` tracks row residuals for s = e_rhs; entries are only guaranteed
    fresh where the running scheme maintains them (rows with disjoint supports
    are untouched by a projection, so skipping them is exact, not approximate).
    """

    rhs: int
    col: np.ndarray  # (n_antennas,) complex
    coef: np.ndarray  # (n_users,) complex
    resid: np.ndarray  # (n_users,) complex
    counter: FlopCounter = field(default_factory=FlopCounter)
    iters: int = 0
    noop_steps: int = 0

    @classmethod
    def initial(cls, sys: AugmentedSystem, rhs: int, col_buffer: np.ndarray | None = None) -> "SolverState":
        if not 0 <= rhs < sys.n_users:
            raise ValueError(f"rhs index {rhs} out of range")
        col = col_buffer if col_buffer is not None else np.zeros(sys.n_antennas, dtype=np.complex128)
        resid = np.zeros(sys.n_users, dtype=np.complex128)
        resid[rhs] = 1.0  # residual of the untouched start equals the target itself
        return cls(rhs=rhs, col=col, coef=np.zeros(sys.n_users, dtype=np.complex128), resid=resid)


def _target(state: SolverState, i: int) -> float:
    return 1.0 if i == state.rhs else 0.0


def residual_refresh(state: SolverState, sys: AugmentedSystem, rows=None, use_vr: bool = True) -> None:
    """Recompute row residuals r_i = s_i - h_i^H col - reg * coef_i.

    ``rows=None`` refreshes everything; with ``use_vr`` each dot product runs
    over the row's visible support only.
    """
    if rows is None and not use_vr:
        k = sys.n_users
        state.resid[:] = -(sys.h_adj @ state.col) - sys.reg * state.coef
        state.resid[state.rhs] += 1.0
        state.counter.cmul(k * sys.n_antennas)
        state.counter.cadd(k * (sys.n_antennas + 1))
        state.counter.real(2 * k)
        return
    if rows is None:
        rows = range(sys.n_users)
    for i in rows:
        if use_vr:
            idx = sys.supports[i]
            dot = np.vdot(sys.eff_rows[i], state.col[idx])
            n = idx.size
        else:
            dot = np.vdot(sys.channel.h[:, i], state.col)
            n = sys.n_antennas
        state.resid[i] = _target(state, i) - dot - sys.reg * state.coef[i]
        state.counter.cmul(n)
        state.counter.cadd(n + 1)
        state.counter.real(2)


def rk_step(state: SolverState, sys: AugmentedSystem, i: int, use_vr: bool = True) -> None:
    """Project the iterate onto row i, using the residual currently stored."""
    gamma = state.resid[i] / sys.row_energies[i]
    state.counter.real(2)
    if use_vr:
        idx = sys.supports[i]
        state.col[idx] += gamma * sys.eff_rows[i]
        n = idx.size
    else:
        state.col += gamma * sys.channel.h[:, i]
        n = sys.n_antennas
    state.coef[i] += gamma
    state.counter.cmul(n)
    state.counter.cadd(n + 1)
    state.resid[i] = 0.0  # the projection zeroes this row's residual exactly
    state.iters += 1


@dataclass
class SelectionStrategy:
    """Row-choice rule; ``pool`` holds the without-replacement epoch state."""

    variant: str  # uniform | energy | energy-swor | greedy-max | greedy-weighted
    pool: list = field(default_factory=list)

    _VARIANTS = ("uniform", "energy", "energy-swor", "greedy-max", "greedy-weighted")

    def __post_init__(self):
        if self.variant not in self._VARIANTS:
            raise ValueError(f"unknown selection variant {self.variant!r}")


def select_row(strategy: SelectionStrategy, state: SolverState, sys: AugmentedSystem,
               rng: np.random.Generator | None = None):
    """Pick the next row index, or None when greedy rules see no residual left."""
    k = sys.n_users
    variant = strategy.variant
    if variant == "greedy-max":
        score = np.abs(state.resid) ** 2 / sys.row_energies
        state.counter.real(4 * k)
        if not score.any():
            return None
        return int(np.argmax(score))
    if rng is None:
        raise ValueError(f"selection variant {variant!r} needs an rng")
    if variant == "uniform":
        return int(rng.integers(k))
    if variant == "energy":
        w = sys.row_energies
        state.counter.real(k + 2)
        return int(rng.choice(k, p=w / w.sum()))
    if variant == "energy-swor":
        if not strategy.pool:
            strategy.pool = list(range(k))
        w = sys.row_energies[strategy.pool]
        state.counter.real(len(strategy.pool) + 2)
        j = int(rng.choice(len(strategy.pool), p=w / w.sum()))
        return strategy.pool.pop(j)
    # greedy-weighted
    w = np.abs(state.resid) ** 2
    state.counter.real(4 * k + 2)
    total = w.sum()
    if total == 0.0:
        return None
    return int(rng.choice(k, p=w / total))


@dataclass(frozen=True)
class AggregationWeights:
    """Residual-proportional weights phi supported on ``rows``."""

    phi: np.ndarray  # (n_users,) complex, zero off support
    rows: np.ndarray  # sorted indices where phi may be nonzero


def aggregation_weights(state: SolverState, sys: AugmentedSystem, rows) -> AggregationWeights:
    """Weights phi_i = r_i / e_i on ``rows`` (current stored residuals)."""
    rows = np.asarray(sorted(int(r) for r in rows), dtype=np.intp)
    phi = np.zeros(sys.n_users, dtype=np.complex128)
    phi[rows] = state.resid[rows] / sys.row_energies[rows]
    state.counter.real(2 * rows.size)
    return AggregationWeights(phi=phi, rows=rows)


def ahk_step(state: SolverState, sys: AugmentedSystem, weights: AggregationWeights,
             use_vr: bool = True, union: np.ndarray | None = None) -> bool:
    """One projection onto the hyperplane aggregated with weights phi.

    The step length is (phi^H r) / (||H phi||^2 + reg ||phi||^2); the update
    moves ``col`` along H phi (accumulated over the union of the involved
    supports) and ``coef`` along phi.  Returns False — leaving the state
    untouched aside from a no-op flag — when phi vanishes.

    Stored residuals are not updated; aggregated steps leave them stale.
    """
    rows = weights.rows
    phi_r = weights.phi[rows]
    m = rows.size
    if m == 0 or not phi_r.any():
        state.noop_steps += 1
        return False
    num = np.vdot(phi_r, state.resid[rows])
    state.counter.cmul(m)
    state.counter.cadd(max(m - 1, 0))
    if use_vr:
        if union is None:
            union = np.unique(np.concatenate([sys.supports[i] for i in rows]))
        y = np.zeros(sys.n_antennas, dtype=np.complex128)
        for i in rows:
            idx = sys.supports[i]
            y[idx] += weights.phi[i] * sys.eff_rows[i]
            state.counter.cmul(idx.size)
            state.counter.cadd(idx.size)
        span = union
    else:
        y = sys.channel.h[:, rows] @ phi_r
        state.counter.cmul(sys.n_antennas * m)
        state.counter.cadd(sys.n_antennas * max(m - 1, 0))
        span = None
    span_size = span.size if span is not None else sys.n_antennas
    den = float(np.sum(np.abs(y) ** 2)) + sys.reg * float(np.sum(np.abs(phi_r) ** 2))
    state.counter.real(4 * span_size + 3 * m + 2)
    if den == 0.0:
        state.noop_steps += 1
        return False
    gamma = num / den
    state.counter.real(2)
    if span is not None:
        state.col[span] += gamma * y[span]
    else:
        state.col += gamma * y
    state.counter.cmul(span_size)
    state.counter.cadd(span_size)
    state.coef[rows] += gamma * phi_r
    state.counter.cmul(m)
    state.counter.cadd(m)
    return True


def orthogonal_block_step(state: SolverState, sys: AugmentedSystem, rows, use_vr: bool = True) -> None:
    """Simultaneous exact projections onto pairwise-orthogonal rows.

    With disjoint supports the independent per-row projections do not
    interfere, so applying them together drives every residual in ``rows`` to
    zero in one shot.
    """
    for i in rows:
        phi_i = state.resid[i] / sys.row_energies[i]
        state.counter.real(2)
        if use_vr:
            idx = sys.supports[i]
            state.col[idx] += phi_i * sys.eff_rows[i]
            n = idx.size
        else:
            state.col += phi_i * sys.channel.h[:, i]
            n = sys.n_antennas
        state.coef[i] += phi_i
        state.counter.cmul(n)
        state.counter.cadd(n + 1)
        state.resid[i] = 0.0


def augmented_iterate(state: SolverState, sys: AugmentedSystem) -> np.ndarray:
    """The stacked iterate the projections act on: [col; sqrt(reg) coef]."""
    return np.concatenate([state.col, math.sqrt(sys.reg) * state.coef])


def augmented_target(sys: AugmentedSystem, v: np.ndarray) -> np.ndarray:
    """Image of an auxiliary solution v in the stacked space: [H v; sqrt(reg) v]."""
    return np.concatenate([sys.channel.h @ v, math.sqrt(sys.reg) * np.asarray(v)])


class InstanceRun:
    """One right-hand side advanced one scheme iteration at a time."""

    def __init__(self, scheme: str, sys: AugmentedSystem, rhs: int,
                 rng: np.random.Generator | None, col_buffer: np.ndarray | None = None):
        self.scheme = canonical_scheme(scheme)
        if self.scheme in STOCHASTIC_SCHEMES and rng is None:
            raise ValueError(f"scheme {self.scheme!r} draws rows at random; pass an rng")
        self.sys = sys
        self.rng = rng
        self.state = SolverState.initial(sys, rhs, col_buffer=col_buffer)
        self.done = False  # greedy rules signal an exactly-zero residual
        if self.scheme == "urk":
            self.strategy = SelectionStrategy("uniform")
        elif self.scheme == "swor-erk":
            self.strategy = SelectionStrategy("energy-swor")
        elif self.scheme == "gk":
            self.strategy = SelectionStrategy("greedy-max")
        elif self.scheme in ("grk", "vr-ogrk"):
            self.strategy = SelectionStrategy("greedy-weighted")
        else:
            self.strategy = None
        if self.scheme == "vr-ogrk":
            self.prev_row = None
            self.coupled = [np.asarray(sorted(c), dtype=np.intp) for c in sys.partition.coupled]
        if self.scheme == "vr-oahk":
            self.orth_rows = np.asarray(sys.partition.orthogonal_sorted, dtype=np.intp)
            self.non_rows = np.asarray(sys.partition.non_orthogonal, dtype=np.intp)
            if self.non_rows.size:
                self.non_union = np.unique(
                    np.concatenate([sys.supports[i] for i in self.non_rows])
                )
            else:
                self.non_union = None
        if self.scheme == "ahk":
            self.all_rows = np.arange(sys.n_users)

    def step(self) -> None:
        if self.done:
            return
        scheme = self.scheme
        state, sys = self.state, self.sys
        if scheme in ("urk", "swor-erk"):
            i = select_row(self.strategy, state, sys, self.rng)
            residual_refresh(state, sys, rows=(i,), use_vr=False)
            rk_step(state, sys, i, use_vr=False)
        elif scheme in ("gk", "grk"):
            residual_refresh(state, sys, use_vr=False)
            i = select_row(self.strategy, state, sys, self.rng)
            if i is None:
                self.done = True
                return
            rk_step(state, sys, i, use_vr=False)
        elif scheme == "vr-ogrk":
            if self.prev_row is not None:
                residual_refresh(state, sys, rows=self.coupled[self.prev_row], use_vr=True)
            i = select_row(self.strategy, state, sys, self.rng)
            if i is None:
                self.done = True
                return
            rk_step(state, sys, i, use_vr=True)
            self.prev_row = i
        elif scheme == "ahk":
            residual_refresh(state, sys, use_vr=False)
            weights = aggregation_weights(state, sys, self.all_rows)
            if not ahk_step(state, sys, weights, use_vr=False):
                self.done = True
                return
            state.iters += 1
        elif scheme == "vr-oahk":
            residual_refresh(state, sys, rows=self.orth_rows, use_vr=True)
            orthogonal_block_step(state, sys, self.orth_rows, use_vr=True)
            if self.non_rows.size:
                residual_refresh(state, sys, rows=self.non_rows, use_vr=True)
                weights = aggregation_weights(state, sys, self.non_rows)
                ahk_step(state, sys, weights, use_vr=True, union=self.non_union)
            state.iters += 1
        else:  # pragma: no cover - canonical_scheme guards this
            raise AssertionError(scheme)


@dataclass
class StoppingRule:
    """When to stop a single-right-hand-side run.

    mode "oracle": stop once ||coef - reference|| / ||reference|| drops below
    ``epsilon`` (needs the direct-solver column as ``reference``).
    mode "residual": stop once the fresh residual norm, relative to the
    right-hand side, drops to ``epsilon`` — the deployable rule, no oracle
    required.  ``check_every`` spaces out the convergence checks so schemes
    that do not track full residuals are not forced to.
    """

    mode: str = "oracle"
    epsilon: float = 1e-6
    reference: np.ndarray | None = None
    max_iters: int | None = None
    check_every: int = 1

    def __post_init__(self):
        if self.mode not in ("oracle", "residual"):
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")


def _true_residual_norm(state: SolverState, sys: AugmentedSystem) -> float:
    """Fresh residual norm for instrumentation; not charged to the counter."""
    r = -(sys.h_adj @ state.col) - sys.reg * state.coef
    r[state.rhs] += 1.0
    return float(np.linalg.norm(r))


def solve(scheme: str, sys: AugmentedSystem, rhs: int, stop: StoppingRule,
          rng: np.random.Generator | None = None):
    """Run one scheme for the canonical right-hand side e_rhs.

    Returns ``(state, trace)``: the state's ``coef`` is the auxiliary solution
    estimate, and the trace records the stopping metric per checked iteration
    together with the cumulative measured flops.  The iteration cap (default
    10^4 * n_users) flags the run as non-converged instead of raising.
    """
    scheme = canonical_scheme(scheme)
    if stop.mode == "oracle":
        if stop.reference is None:
            raise ValueError("oracle stopping needs the direct-solver reference column")
        ref = np.asarray(stop.reference)
        ref_norm = float(np.linalg.norm(ref))
        if ref_norm == 0.0:
            raise ValueError("oracle reference column is zero")
    cap = stop.max_iters if stop.max_iters is not None else 10_000 * sys.n_users
    run = InstanceRun(scheme, sys, rhs, rng)
    trace = RunTrace(scheme=display_scheme(scheme))
    converged = False
    while True:
        run.step()
        at_check = run.state.iters % stop.check_every == 0 or run.done
        if at_check:
            resid_norm = _true_residual_norm(run.state, sys)
            trace.resid.append(resid_norm)
            trace.flops.append(run.state.counter.total)
            if stop.mode == "oracle":
                err = float(np.linalg.norm(run.state.coef - ref)) / ref_norm
                trace.nmse.append(err)
                if err < stop.epsilon:
                    converged = True
                    break
            else:
                if resid_norm <= stop.epsilon:
                    converged = True
                    break
        if run.done:
            # A greedy rule found every tracked residual at exact zero.
            converged = True
            break
        if run.state.iters >= cap:
            break
    trace.n_iters = run.state.iters
    trace.converged = converged
    trace.flops_measured = run.state.counter.total
    return run.state, trace


def solve_all(scheme: str, sys: AugmentedSystem, stop: StoppingRule,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Independent per-column solves for every canonical right-hand side.

    In oracle mode ``stop.reference`` must be the full (K, K) direct-solver
    auxiliary matrix; column k is sliced out for run k.  Returns the stacked
    auxiliary solution estimate V.
    """
    scheme = canonical_scheme(scheme)
    k = sys.n_users
    child_rngs = rng.spawn(k) if rng is not None else [None] * k
    ref = stop.reference
    if stop.mode == "oracle":
        ref = np.asarray(ref)
        if ref.shape != (k, k):
            raise ValueError(f"oracle reference must be (K, K), got {ref.shape}")
    v = np.empty((k, k), dtype=np.complex128)
    for col in range(k):
        col_stop = StoppingRule(
            mode=stop.mode,
            epsilon=stop.epsilon,
            reference=ref[:, col] if stop.mode == "oracle" else None,
            max_iters=stop.max_iters,
            check_every=stop.check_every,
        )
        state, _ = solve(scheme, sys, col, col_stop, rng=child_rngs[col])
        v[:, col] = state.coef
    return v


@dataclass
class PrecodingRun:
    """Outcome of a full lockstep precoder computation."""

    scheme: str
    v: np.ndarray  # (K, K) auxiliary solution estimate
    precoder: object  # Precoder from the assembly stage
    n_iters: int
    converged: bool
    nmse_trace: list
    resid_trace: list
    flops_trace: list  # cumulative measured flops at each outer iteration
    flops_measured: int
    noop_steps: int


def run_precoding(scheme: str, sys: AugmentedSystem, reference, epsilon: float = 1e-6,
                  max_iters: int | None = None, rng: np.random.Generator | None = None) -> PrecodingRun:
    """Full evaluation-mode run: advance all K right-hand sides in lockstep.

    Each outer iteration advances every column's solver by one scheme
    iteration, then checks the normalised distance between the current
    unit-power precoder and ``reference`` (the direct-solver Precoder); the
    loop exits once it drops below ``epsilon``.  The returned flop total
    includes the row-energy setup and the final assembly stage (dense for the
    baselines, subarray-blocked for the visibility-aware schemes).
    """
    from .assembly import SubarrayChannel, assemble_dense, assemble_vr

    scheme = canonical_scheme(scheme)
    k = sys.n_users
    nt = sys.n_antennas
    f_ref = reference.f if hasattr(reference, "f") else np.asarray(reference)
    child_rngs = rng.spawn(k) if rng is not None else [None] * k
    cols = np.zeros((nt, k), dtype=np.complex128, order="F")
    runs = [
        InstanceRun(scheme, sys, rhs, child_rngs[rhs], col_buffer=cols[:, rhs])
        for rhs in range(k)
    ]
    setup_flops = 4 * nt * k  # row energies, computed once per precoding run
    cap = max_iters if max_iters is not None else 10_000 * k
    nmse_trace = []
    resid_trace = []
    flops_trace = []
    eye = np.eye(k)
    converged = False
    t = 0
    while True:
        t += 1
        for run in runs:
            run.step()
        mnorm = float(np.linalg.norm(cols))
        f_now = cols / mnorm if mnorm > 0.0 else cols
        err = nmse(f_now, f_ref)
        coefs = np.stack([run.state.coef for run in runs], axis=1)
        r_full = eye - sys.h_adj @ cols - sys.reg * coefs
        nmse_trace.append(err)
        resid_trace.append(float(np.linalg.norm(r_full)))
        flops_trace.append(setup_flops + sum(run.state.counter.total for run in runs))
        if err < epsilon:
            converged = True
            break
        if t >= cap or all(run.done for run in runs):
            break
    v = np.stack([run.state.coef for run in runs], axis=1)
    assembly_counter = FlopCounter()
    if scheme in VR_SCHEMES:
        sub = SubarrayChannel.from_channel(sys.channel)
        prec = assemble_vr(sub, v, counter=assembly_counter, scheme=display_scheme(scheme))
    else:
        prec = assemble_dense(sys.channel, v, counter=assembly_counter, scheme=display_scheme(scheme))
    total = setup_flops + sum(run.state.counter.total for run in runs) + assembly_counter.total
    return PrecodingRun(
        scheme=display_scheme(scheme),
        v=v,
        precoder=prec,
        n_iters=t,
        converged=converged,
        nmse_trace=nmse_trace,
        resid_trace=resid_trace,
        flops_trace=flops_trace,
        flops_measured=total,
        noop_steps=sum(run.state.noop_steps for run in runs),
    )
