"""Chart construction: one figure kind per experiment CSV kind.

fig2  NMSE vs iteration (log y), seed-averaged convergence traces
fig3  sum rate vs SNR at a fixed iteration budget
fig4  sum rate vs array size at a fixed iteration budget
fig5  closed-form flops-to-epsilon vs number of users (log y)
fig6  closed-form flops-to-epsilon vs array size (log y)
fig7  closed-form flops-to-epsilon vs visibility probability (log y)

Everything that influences the rendered pixels is pinned here, so the same
CSV always produces the same image.
"""

import warnings
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

from matplotlib import pyplot as plt  # noqa: E402  (backend must be set first)

from .reader import CsvFormatError, read_rows  # noqa: E402

KINDS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7")

# kind -> (x column, y column, x label, y label, log y)
_AXES = {
    "fig2": ("iter", "nmse", "iteration", "NMSE", True),
    "fig3": ("snr_db", "sum_rate", "SNR (dB)", "sum rate (bit/s/Hz)", False),
    "fig4": ("N_t", "sum_rate", "number of antennas", "sum rate (bit/s/Hz)", False),
    "fig5": ("K", "flops_analytic", "number of users", "FLOPS", True),
    "fig6": ("N_t", "flops_analytic", "number of antennas", "FLOPS", True),
    "fig7": ("p", "flops_analytic", "visibility probability", "FLOPS", True),
}

SCHEME_ORDER = ("rzf", "urk", "swor-erk", "gk", "grk", "vr-ogrk", "ahk", "vr-oahk")

SCHEME_STYLES = {
    "rzf": dict(color="black", linestyle="--", marker=""),
    "urk": dict(color="tab:gray", linestyle="-", marker="v"),
    "swor-erk": dict(color="tab:brown", linestyle="-", marker="^"),
    "gk": dict(color="tab:green", linestyle="-", marker="s"),
    "grk": dict(color="tab:olive", linestyle="-", marker="D"),
    "vr-ogrk": dict(color="tab:blue", linestyle="-", marker="o"),
    "ahk": dict(color="tab:purple", linestyle="-", marker="P"),
    "vr-oahk": dict(color="tab:red", linestyle="-", marker="*"),
}
_FALLBACK_STYLE = dict(color="0.5", linestyle=":", marker=".")

# schemes a complete harness CSV of each kind carries; anything requested but
# absent is skipped with a warning rather than failing the render
_EXPECTED = {
    "fig2": tuple(s for s in SCHEME_ORDER if s != "rzf"),
    "fig3": SCHEME_ORDER,
    "fig4": SCHEME_ORDER,
    # the dense aggregate scheme has no closed-form cost row
    "fig5": tuple(s for s in SCHEME_ORDER if s != "ahk"),
    "fig6": tuple(s for s in SCHEME_ORDER if s != "ahk"),
    "fig7": tuple(s for s in SCHEME_ORDER if s != "ahk"),
}

# render parameters pinned for pixel-reproducible output
STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.4,
    "grid.linewidth": 0.6,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
    "legend.framealpha": 0.9,
    "legend.fontsize": 9,
}


@dataclass(frozen=True)
class FigureSpec:
    """Everything one render needs: inputs, kind, style, destination."""

    csv_paths: tuple
    kind: str
    out_path: str
    styles: dict = field(default_factory=lambda: SCHEME_STYLES)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; pick from {KINDS}")
        if not self.csv_paths:
            raise ValueError("need at least one input CSV")


def _mean(values):
    return sum(values) / len(values)


def _series(rows, kind):
    """Aggregate rows into {scheme: (xs, ys)} for the kind's axes."""
    x_col, y_col, *_ = _AXES[kind]
    if kind == "fig2":
        # prefer the precomputed seed-mean rows (seed = -1); otherwise
        # average the per-seed traces here
        mean_rows = [r for r in rows if r["seed"] == -1]
        pool = mean_rows if mean_rows else rows
    else:
        pool = [r for r in rows if r["seed"] != -1]
    groups = {}
    for r in pool:
        if r[y_col] is None:
            continue
        groups.setdefault(r["scheme"], {}).setdefault(r[x_col], []).append(r[y_col])
    out = {}
    for scheme, by_x in groups.items():
        xs = sorted(by_x)
        out[scheme] = (xs, [_mean(by_x[x]) for x in xs])
    return out


def render(spec: FigureSpec) -> str:
    """Render one figure kind from harness CSVs; returns the output path.

    Raises CsvFormatError (before any file is written) when the inputs are
    malformed, empty, or carry no values for the kind's y column.
    """
    rows = []
    for path in spec.csv_paths:
        _, part = read_rows(path)
        rows.extend(part)
    series = _series(rows, spec.kind)
    if not series:
        y_col = _AXES[spec.kind][1]
        raise CsvFormatError(
            f"no {y_col!r} values in {', '.join(map(str, spec.csv_paths))}; "
            f"not a {spec.kind} input?")
    missing = [s for s in _EXPECTED[spec.kind] if s not in series]
    if missing:
        warnings.warn(f"schemes absent from input, skipped: {', '.join(missing)}")
    _, _, x_label, y_label, log_y = _AXES[spec.kind]
    ordered = [s for s in SCHEME_ORDER if s in series]
    ordered += sorted(s for s in series if s not in SCHEME_ORDER)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for scheme in ordered:
            xs, ys = series[scheme]
            style = spec.styles.get(scheme, _FALLBACK_STYLE)
            ax.plot(xs, ys, label=scheme.upper(), **style)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        ax.legend()
        fig.tight_layout()
        # fixed metadata: the default would embed the backend version string
        fig.savefig(spec.out_path, metadata={"Software": "kaczplot"})
        plt.close(fig)
    return str(spec.out_path)
