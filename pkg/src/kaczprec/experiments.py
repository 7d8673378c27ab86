"""Config-driven experiment sweeps emitting the documented CSV schema.

Six figure-style runs are provided: one convergence-trace run and five
parameter sweeps (sum rate vs SNR / array size, flop cost vs user count /
array size / visibility probability).  Every run writes a single CSV whose
rows all carry the full configuration fingerprint, so a file is reproducible
byte-for-byte from its header alone.

Iteration unit: one `iter` is one lockstep outer iteration of the
multi-column run — every right-hand side advances by one scheme iteration
(one row selection-and-projection for the single-row schemes, one
block-plus-aggregate pair for the aggregated scheme).  The analytic flop
column evaluates the closed-form per-scheme cost at T = `iter`; the measured
column counts every complex operation actually performed across all K
right-hand sides.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .channel import ArrayConfig, power_control, random_channel
from .metrics import COSTED_SCHEMES, VrStats, analytic_flops, spectral_efficiency
from .rzf import rzf_precoder
from .solvers import SCHEMES, VR_SCHEMES, AugmentedSystem, run_precoding

WORKERS_ENV = "KACZPREC_WORKERS"

#: Column order of every emitted CSV.
CSV_COLUMNS = (
    "run_id", "scheme", "seed", "N_t", "K", "S", "p", "snr_db",
    "iter", "nmse", "resid", "flops_measured", "flops_analytic", "sum_rate",
)

#: Figure-style run names understood by the CLI.
RUN_KINDS = ("convergence", "rate-snr", "rate-nt", "flops-k", "flops-nt", "flops-p")

_ALL_SCHEMES = SCHEMES + ("rzf",)


class ConfigError(ValueError):
    """Raised for infeasible or malformed experiment configurations."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario description shared by all runs; sweeps override one axis."""

    n_antennas: int = 256
    n_users: int = 16
    n_subarrays: int = 16
    carrier_freq: float = 100e9
    p_visible: float = 0.35
    n_paths: int = 5
    snr_db: float = 0.0
    epsilon: float = 1e-6
    max_iters: int = 20_000
    fixed_iters: int = 15  # rate sweeps run exactly this many iterations
    schemes: tuple = SCHEMES
    seeds: tuple = tuple(range(10))
    preset: str = "desk"
    snr_sweep: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    nt_sweep: tuple = (64, 128, 256, 512)
    k_sweep: tuple = (4, 8, 12, 16)
    p_sweep: tuple = (0.2, 0.35, 0.5, 0.65, 0.8, 1.0)

    def validate(self) -> "ExperimentConfig":
        if self.n_users < 1 or self.n_users > self.n_antennas:
            raise ConfigError(
                f"need 1 <= K <= N_t, got K={self.n_users}, N_t={self.n_antennas}")
        if self.n_antennas % self.n_subarrays != 0:
            raise ConfigError(
                f"S={self.n_subarrays} must divide N_t={self.n_antennas}")
        if not 0.0 < self.p_visible <= 1.0:
            raise ConfigError(f"p={self.p_visible} outside (0, 1]")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        for scheme in self.schemes:
            if scheme not in _ALL_SCHEMES:
                raise ConfigError(f"unknown scheme {scheme!r}; choose from {_ALL_SCHEMES}")
        for nt in self.nt_sweep:
            if nt % self.n_subarrays != 0:
                raise ConfigError(f"swept N_t={nt} not divisible by S={self.n_subarrays}")
        for k in self.k_sweep:
            if k < 1 or k > self.n_antennas:
                raise ConfigError(f"swept K={k} outside [1, N_t]")
        for p in self.p_sweep:
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"swept p={p} outside (0, 1]")
        return self


def desk_preset() -> ExperimentConfig:
    """Defaults small enough for interactive runs."""
    return ExperimentConfig()


def paper_preset() -> ExperimentConfig:
    """Full-scale scenario; expect long runtimes."""
    return ExperimentConfig(
        n_antennas=2000, n_users=30, n_subarrays=20, preset="paper",
        nt_sweep=(500, 1000, 1500, 2000), k_sweep=(10, 20, 30),
        seeds=tuple(range(3)),
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset}

# Mapping from config-file keys to dataclass fields, with parsers.
_INT_KEYS = {"N_t": "n_antennas", "K": "n_users", "S": "n_subarrays",
             "L": "n_paths", "max_iter": "max_iters", "T": "fixed_iters"}
_FLOAT_KEYS = {"f_Hz": "carrier_freq", "p": "p_visible", "snr_db": "snr_db",
               "epsilon": "epsilon"}
_LIST_KEYS = {"seeds": ("seeds", int), "schemes": ("schemes", str),
              "snr_sweep": ("snr_sweep", float), "nt_sweep": ("nt_sweep", int),
              "k_sweep": ("k_sweep", int), "p_sweep": ("p_sweep", float)}


def parse_config_text(text: str) -> dict:
    """Flat ``key=value`` lines; '#' comments; lists are comma-separated."""
    out = {}
    for ln_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                out[_INT_KEYS[key]] = int(value)
            elif key in _FLOAT_KEYS:
                out[_FLOAT_KEYS[key]] = float(value)
            elif key in _LIST_KEYS:
                name, cast = _LIST_KEYS[key]
                out[name] = tuple(cast(v.strip()) for v in value.split(",") if v.strip())
            elif key == "preset":
                out["preset"] = value
            else:
                raise ConfigError(f"line {ln_no}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {ln_no}: bad value for {key}: {exc}") from None
    return out


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Assemble a config from preset, optional file, and CLI overrides."""
    opts = {}
    if path is not None:
        with open(path) as fh:
            opts.update(parse_config_text(fh.read()))
    if overrides:
        opts.update(overrides)
    preset = opts.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset]()
    known = {f.name for f in fields(ExperimentConfig)}
    bad = set(opts) - known
    if bad:
        raise ConfigError(f"unknown config fields: {sorted(bad)}")
    return replace(cfg, **opts).validate()


def _fingerprint(cfg: ExperimentConfig, kind: str) -> str:
    """Stable short id over the full configuration and run kind."""
    canon = kind + "|" + "|".join(
        f"{f.name}={getattr(cfg, f.name)!r}" for f in fields(ExperimentConfig))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows, meta_lines=()) -> None:
    """Write rows in the documented column order; '#' lines carry metadata."""
    out = []
    for line in meta_lines:
        out.append("# " + line)
    out.append(",".join(CSV_COLUMNS))
    for row in rows:
        assert len(row) == len(CSV_COLUMNS)
        out.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(out) + "\n")


def _meta(cfg: ExperimentConfig, kind: str, run_id: str):
    return (
        f"kind={kind} run_id={run_id} preset={cfg.preset}",
        f"N_t={cfg.n_antennas} K={cfg.n_users} S={cfg.n_subarrays} "
        f"f_Hz={cfg.carrier_freq!r} p={cfg.p_visible!r} L={cfg.n_paths} "
        f"snr_db={cfg.snr_db!r} epsilon={cfg.epsilon!r}",
        "iter unit: one lockstep outer iteration (all K right-hand sides advance once)",
    )


def _build_system(cfg: ExperimentConfig, seed: int, n_antennas=None, n_users=None,
                  p_visible=None, snr_db=None):
    nt = n_antennas if n_antennas is not None else cfg.n_antennas
    k = n_users if n_users is not None else cfg.n_users
    p = p_visible if p_visible is not None else cfg.p_visible
    snr = snr_db if snr_db is not None else cfg.snr_db
    arr = ArrayConfig(n_antennas=nt, carrier_freq=cfg.carrier_freq,
                      n_subarrays=cfg.n_subarrays)
    chan = random_channel(arr, k, cfg.n_paths, p, np.random.default_rng(seed))
    chan, reg = power_control(chan, snr)
    sys_ = AugmentedSystem.from_channel(chan, reg)
    return chan, reg, sys_


def _solver_rng(seed: int):
    # distinct stream from the channel draw, still fully determined by `seed`
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))


def _analytic(scheme, nt, k, n_iters, sys_):
    if scheme not in COSTED_SCHEMES:  # no closed form -> empty CSV cell
        return None
    if scheme in VR_SCHEMES:
        stats = VrStats.from_partition(sys_.channel.vrs, sys_.partition)
        return analytic_flops(scheme, nt, k, n_iters, stats)
    return analytic_flops(scheme, nt, k, n_iters)


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map_tasks(fn, tasks):
    """Run tasks via a process pool when requested; order always preserved."""
    workers = _worker_count()
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# convergence traces
# ---------------------------------------------------------------------------

def _trace_task(args):
    cfg, scheme, seed = args
    chan, reg, sys_ = _build_system(cfg, seed)
    ref = rzf_precoder(chan, reg)
    run = run_precoding(scheme, sys_, ref, epsilon=cfg.epsilon,
                        max_iters=cfg.max_iters, rng=_solver_rng(seed))
    analytic = [
        _analytic(scheme, cfg.n_antennas, cfg.n_users, t + 1, sys_)
        for t in range(run.n_iters)
    ]
    return scheme, seed, run.nmse_trace, run.resid_trace, run.flops_trace, analytic


def run_convergence(cfg: ExperimentConfig, out_path) -> str:
    """Per-iteration error traces for every scheme; includes seed-averaged rows.

    Seed-level rows carry their seed number; rows with seed = -1 hold the
    across-seed mean at each iteration, where a seed that converged early
    keeps contributing its final value (a converged run stays converged).
    """
    cfg.validate()
    run_id = _fingerprint(cfg, "convergence")
    schemes = [s for s in cfg.schemes if s != "rzf"]
    tasks = [(cfg, scheme, seed) for scheme in schemes for seed in cfg.seeds]
    results = _map_tasks(_trace_task, tasks)
    rows = []
    base = (cfg.n_antennas, cfg.n_users, cfg.n_subarrays, cfg.p_visible, cfg.snr_db)
    by_scheme = {}
    for scheme, seed, nmse_tr, resid_tr, flops_tr, analytic in results:
        by_scheme.setdefault(scheme, []).append((nmse_tr, resid_tr))
        for t in range(len(nmse_tr)):
            rows.append((run_id, scheme, seed, *base, t + 1, nmse_tr[t],
                         resid_tr[t], flops_tr[t], analytic[t], None))
    # seed-averaged trace, padded with each seed's final value
    for scheme in schemes:
        traces = by_scheme[scheme]
        t_max = max(len(tr) for tr, _ in traces)
        for t in range(t_max):
            mean_nmse = float(np.mean([tr[min(t, len(tr) - 1)] for tr, _ in traces]))
            mean_res = float(np.mean([rs[min(t, len(rs) - 1)] for _, rs in traces]))
            rows.append((run_id, scheme, -1, *base, t + 1, mean_nmse,
                         mean_res, None, None, None))
    write_csv(out_path, rows, _meta(cfg, "convergence", run_id))
    return run_id


# ---------------------------------------------------------------------------
# rate sweeps (fixed iteration budget)
# ---------------------------------------------------------------------------

def _rate_task(args):
    cfg, scheme, seed, axis, value = args
    kw = {axis: value} if axis else {}
    chan, reg, sys_ = _build_system(cfg, seed, **kw)
    ref = rzf_precoder(chan, reg)
    snr_linear = 1.0 / reg
    nt, k = chan.n_antennas, chan.n_users
    if scheme == "rzf":
        _, total = spectral_efficiency(chan.h, ref.f, snr_linear)
        cost = analytic_flops("rzf", nt, k)
        return scheme, seed, value, 0, 0.0, 0.0, cost, cost, total
    run = run_precoding(scheme, sys_, ref, epsilon=0.0,
                        max_iters=cfg.fixed_iters, rng=_solver_rng(seed))
    _, total = spectral_efficiency(chan.h, run.precoder.f, snr_linear)
    analytic = _analytic(scheme, nt, k, run.n_iters, sys_)
    return (scheme, seed, value, run.n_iters, run.nmse_trace[-1],
            run.resid_trace[-1], run.flops_measured, analytic, total)


def _run_rate_sweep(cfg, out_path, axis, values, kind):
    cfg.validate()
    run_id = _fingerprint(cfg, kind)
    tasks = [(cfg, scheme, seed, axis, value)
             for value in values for scheme in cfg.schemes for seed in cfg.seeds]
    results = _map_tasks(_rate_task, tasks)
    rows = []
    for scheme, seed, value, n_iters, err, resid, measured, analytic, total in results:
        nt = value if axis == "n_antennas" else cfg.n_antennas
        snr = value if axis == "snr_db" else cfg.snr_db
        rows.append((run_id, scheme, seed, nt, cfg.n_users, cfg.n_subarrays,
                     cfg.p_visible, snr, n_iters, err, resid, measured, analytic, total))
    write_csv(out_path, rows, _meta(cfg, kind, run_id)
              + (f"fixed_iters={cfg.fixed_iters}",))
    return run_id


def run_rate_vs_snr(cfg: ExperimentConfig, out_path) -> str:
    return _run_rate_sweep(cfg, out_path, "snr_db", cfg.snr_sweep, "rate-snr")


def run_rate_vs_nt(cfg: ExperimentConfig, out_path) -> str:
    return _run_rate_sweep(cfg, out_path, "n_antennas", cfg.nt_sweep, "rate-nt")


# ---------------------------------------------------------------------------
# flop sweeps (run to epsilon, report cost at the realized iteration count)
# ---------------------------------------------------------------------------

def _flops_task(args):
    cfg, scheme, seed, axis, value = args
    chan, reg, sys_ = _build_system(cfg, seed, **{axis: value})
    ref = rzf_precoder(chan, reg)
    nt, k = chan.n_antennas, chan.n_users
    if scheme == "rzf":
        cost = analytic_flops("rzf", nt, k)
        return scheme, seed, value, 0, 0.0, 0.0, cost, cost
    run = run_precoding(scheme, sys_, ref, epsilon=cfg.epsilon,
                        max_iters=cfg.max_iters, rng=_solver_rng(seed))
    analytic = _analytic(scheme, nt, k, run.n_iters, sys_)
    return (scheme, seed, value, run.n_iters, run.nmse_trace[-1],
            run.resid_trace[-1], run.flops_measured, analytic)


def _run_flops_sweep(cfg, out_path, axis, values, kind):
    cfg.validate()
    run_id = _fingerprint(cfg, kind)
    tasks = [(cfg, scheme, seed, axis, value)
             for value in values for scheme in cfg.schemes for seed in cfg.seeds]
    results = _map_tasks(_flops_task, tasks)
    rows = []
    for scheme, seed, value, n_iters, err, resid, measured, analytic in results:
        nt = value if axis == "n_antennas" else cfg.n_antennas
        k = value if axis == "n_users" else cfg.n_users
        p = value if axis == "p_visible" else cfg.p_visible
        rows.append((run_id, scheme, seed, nt, k, cfg.n_subarrays, p, cfg.snr_db,
                     n_iters, err, resid, measured, analytic, None))
    write_csv(out_path, rows, _meta(cfg, kind, run_id))
    return run_id


def run_flops_vs_k(cfg: ExperimentConfig, out_path) -> str:
    return _run_flops_sweep(cfg, out_path, "n_users", cfg.k_sweep, "flops-k")


def run_flops_vs_nt(cfg: ExperimentConfig, out_path) -> str:
    return _run_flops_sweep(cfg, out_path, "n_antennas", cfg.nt_sweep, "flops-nt")


def run_flops_vs_p(cfg: ExperimentConfig, out_path) -> str:
    return _run_flops_sweep(cfg, out_path, "p_visible", cfg.p_sweep, "flops-p")


RUNNERS = {
    "convergence": run_convergence,
    "rate-snr": run_rate_vs_snr,
    "rate-nt": run_rate_vs_nt,
    "flops-k": run_flops_vs_k,
    "flops-nt": run_flops_vs_nt,
    "flops-p": run_flops_vs_p,
}
