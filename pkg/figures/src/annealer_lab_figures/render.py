"""Render annealer-lab CSV outputs into raster figures.

Six job kinds, one image per job.  Inputs are validated against the
documented column schemas before plotting; a missing column is reported by
name.  Every image embeds a sha256 over its input bytes in the PNG metadata,
so a figure can always be traced back to the exact data it was drawn from.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("Contour", "GapCurves", "Regimes", "PvsT", "PvsHL", "Scaling")

# Fig-style regime colours: thermalized red, slowdown blue, frozen gray
REGIME_COLOURS = {"thermalized": "#f4cccc", "slowdown": "#cfe2f3", "frozen": "#d9d9d9"}

_EXPECTED = {
    "Contour": [["s", "theta_L", "V"]],
    "GapCurves": [["s", "E0", "E1", "omega10", "a_elem", "hamming"]],
    "Regimes": [["s", "p0", "p1", "p0_eq"], ["s", "gamma_down", "gamma_up", "regime"]],
    "PvsT": [["temperature_mK", "success_probability", "ci_low", "ci_high", "successes", "replicas"]],
    "PvsHL": [["h_l", "success_probability", "ci_low", "ci_high", "successes", "replicas"]],
    "Scaling": [
        ["n_qubits", "success_probability", "ci_low", "ci_high", "successes", "replicas"],
        ["alpha", "alpha_err", "r_squared"],
    ],
}


class SchemaError(ValueError):
    """An input CSV does not carry the columns its job kind requires."""


@dataclass(frozen=True)
class FigureJob:
    kind: str
    inputs: tuple[str, ...]
    output: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")


@dataclass
class RenderReport:
    """What was drawn; used by callers and tests to verify figure content."""

    kind: str
    output: str
    input_hash: str
    n_bands: int | None = None
    legend_alpha: float | None = None
    legend_alpha_err: float | None = None
    series: list[str] = field(default_factory=list)


def _read_csv(path: str) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        rows = list(reader)
    cols = {name: [r[name] for r in rows] for name in reader.fieldnames}
    return cols


def _require(cols: dict[str, list[str]], required: list[str], path: str) -> None:
    for name in required:
        if name not in cols:
            raise SchemaError(f"{path}: missing column {name!r}")


def _floats(cols: dict[str, list[str]], name: str) -> np.ndarray:
    return np.array([float(v) for v in cols[name]])


def _match_inputs(job: FigureJob) -> list[dict[str, list[str]]]:
    """Validate and order inputs against the kind's expected schemas.

    Kinds with one schema accept any number of inputs (one series each);
    kinds with two schemas need both, in any order.
    """
    schemas = _EXPECTED[job.kind]
    loaded = [(path, _read_csv(path)) for path in job.inputs]
    if len(schemas) == 1:
        for path, cols in loaded:
            _require(cols, schemas[0], path)
        return [cols for _, cols in loaded]
    if len(loaded) != len(schemas):
        raise SchemaError(f"{job.kind} needs {len(schemas)} inputs, got {len(loaded)}")
    ordered: list[dict[str, list[str]] | None] = [None] * len(schemas)
    for path, cols in loaded:
        placed = False
        for i, schema in enumerate(schemas):
            if ordered[i] is None and all(c in cols for c in schema):
                ordered[i] = cols
                placed = True
                break
        if not placed:
            missing = [c for c in schemas[0] if c not in cols]
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
    return ordered  # type: ignore[return-value]


def _input_hash(paths: tuple[str, ...]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        with open(path, "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def _series_label(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    return name[:-4] if name.endswith(".csv") else name


def render(job: FigureJob) -> RenderReport:
    """Draw one figure; returns a report describing what was rendered."""
    inputs = _match_inputs(job)
    digest = _input_hash(job.inputs)
    report = RenderReport(kind=job.kind, output=job.output, input_hash=digest)

    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=150)
    try:
        if job.kind == "Contour":
            _draw_contour(ax, fig, inputs[0])
        elif job.kind == "GapCurves":
            _draw_gap_curves(ax, inputs, job.inputs, report)
        elif job.kind == "Regimes":
            report.n_bands = _draw_regimes(ax, inputs[0], inputs[1])
        elif job.kind in ("PvsT", "PvsHL"):
            x_col = "temperature_mK" if job.kind == "PvsT" else "h_l"
            _draw_success(ax, inputs, job.inputs, x_col, report)
        elif job.kind == "Scaling":
            _draw_scaling(ax, inputs[0], inputs[1], report)
        ax.annotate(
            f"inputs sha256:{digest[:16]}",
            xy=(0.99, 0.01),
            xycoords="figure fraction",
            ha="right",
            fontsize=5,
            color="0.45",
        )
        fig.tight_layout()
        fig.savefig(job.output, metadata={"annealer-lab-inputs": digest})
    finally:
        plt.close(fig)
    return report


def _draw_contour(ax, fig, surface) -> None:
    s = _floats(surface, "s")
    theta = _floats(surface, "theta_L")
    v = _floats(surface, "V")
    s_vals = np.unique(s)
    t_vals = np.unique(theta)
    grid = v.reshape(len(s_vals), len(t_vals))
    mesh = ax.contourf(s_vals, t_vals, grid.T, levels=40, cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="V (GHz)")
    ax.set_xlim(s_vals.min(), s_vals.max())
    ax.set_ylim(t_vals.min(), t_vals.max())
    ax.set_xlabel("annealing parameter s")
    ax.set_ylabel(r"$\theta_L$ (rad)")
    ax.set_title("cluster effective potential")


def _draw_gap_curves(ax, inputs, paths, report) -> None:
    for cols, path in zip(inputs, paths):
        label = _series_label(path)
        ax.semilogy(_floats(cols, "s"), _floats(cols, "omega10"), label=label)
        report.series.append(label)
    ax.set_xlabel("annealing parameter s")
    ax.set_ylabel(r"$\Omega_{10}$ (GHz)")
    ax.set_title("instantaneous gap")
    ax.legend(fontsize=7)


def _draw_regimes(ax, populations, rates) -> int:
    s = _floats(populations, "s")
    ax.plot(s, _floats(populations, "p0"), color="k", label="p0")
    ax.plot(s, _floats(populations, "p0_eq"), color="k", ls="--", lw=0.9, label="p0 equilibrium")

    r_s = _floats(rates, "s")
    regimes = rates["regime"]
    bands = 0
    start = 0
    for i in range(1, len(regimes) + 1):
        if i == len(regimes) or regimes[i] != regimes[start]:
            colour = REGIME_COLOURS.get(regimes[start], "#ffffff")
            left = r_s[start] if start > 0 else min(r_s[0], s[0])
            right = r_s[i - 1] if i < len(regimes) else max(r_s[-1], s[-1])
            ax.axvspan(left, right, color=colour, zorder=0)
            bands += 1
            start = i
    ax.set_xlabel("annealing parameter s")
    ax.set_ylabel("ground state population")
    ax.set_ylim(0, 1.02)
    ax.set_title("population and dynamical regimes")
    ax.legend(fontsize=7, loc="lower left")
    return bands


def _draw_success(ax, inputs, paths, x_col, report) -> None:
    for cols, path in zip(inputs, paths):
        label = _series_label(path)
        x = _floats(cols, x_col)
        p = _floats(cols, "success_probability")
        lo = _floats(cols, "ci_low")
        hi = _floats(cols, "ci_high")
        ax.errorbar(x, p, yerr=[p - lo, hi - p], marker="o", ms=3.5, capsize=2, label=label)
        report.series.append(label)
    ax.set_xlabel("temperature (mK)" if x_col == "temperature_mK" else r"$h_L$")
    ax.set_ylabel("success probability")
    ax.set_title("success probability")
    ax.legend(fontsize=7)


def _draw_scaling(ax, points, fit, report) -> None:
    n_q = _floats(points, "n_qubits")
    p = _floats(points, "success_probability")
    lo = _floats(points, "ci_low")
    hi = _floats(points, "ci_high")
    alpha = float(fit["alpha"][0])
    alpha_err = float(fit["alpha_err"][0])
    ax.errorbar(n_q, p, yerr=[p - lo, hi - p], fmt="o", ms=4, capsize=2, label="measured")
    order = np.argsort(n_q)
    x_fit = np.linspace(n_q.min(), n_q.max(), 200)
    # anchor the overlay at the weighted centre of the measured points
    log_c = np.mean(np.log(p[order]) + alpha * n_q[order])
    ax.semilogy(
        x_fit,
        np.exp(log_c - alpha * x_fit),
        "--",
        label=rf"fit $\alpha$ = {alpha:.4g} $\pm$ {alpha_err:.2g}",
    )
    report.legend_alpha = alpha
    report.legend_alpha_err = alpha_err
    ax.set_xlabel("number of qubits")
    ax.set_ylabel("success probability")
    ax.set_title("success scaling")
    ax.legend(fontsize=8)
