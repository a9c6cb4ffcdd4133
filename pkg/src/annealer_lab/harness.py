"""Experiment orchestration: parameter sweeps, scaling fits, result files.

Every experiment writes one CSV per (experiment, engine) into the output
directory plus a manifest JSON recording the config hash, derived seeds and
a content hash per output file.  Re-running the same config reproduces
byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .model import (
    CELL_SIZE,
    Instance,
    MotifSpec,
    Schedule,
    build_probe,
    default_schedule,
    generate_motif_glass,
)
from .openquantum import NoiseParams, PointerRegimeAdvisory, evolve_populations
from .pimc import PimcParams, pimcqa_run
from .results import wilson_interval
from .spectrum import compute_profile, default_s_grid
from .spinvector import SVMCParams, svmc_run, trace_minima

EXPERIMENTS = ("PvsT", "PvsHL", "Scaling", "Profile", "Potential")
STOCHASTIC_ENGINES = ("SVMC", "PIMC")
RATE_ENGINES = ("GoldenRule", "NIBA")
ENGINES = STOCHASTIC_ENGINES + RATE_ENGINES


class ZeroSuccessError(ValueError):
    """A size with zero successes cannot enter the log-linear fit."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one experiment run."""

    experiment: str
    engines: tuple[str, ...] = ()
    out_dir: str = "results"
    seed: int = 1234
    h_l: float = 0.44
    h_l_values: tuple[float, ...] = (0.40, 0.42, 0.44, 0.46, 0.48)
    temperatures_mk: tuple[float, ...] = (15.5, 20.0, 25.0, 30.0, 35.0)
    t_qa_us: float = 20.0
    replicas: int = 2000
    jobs: int = 1
    schedule_path: str = ""
    svmc_sweeps: int = 3000
    svmc_proposal_width: float = float(np.pi / 2)
    pimc_slices: int = 64
    pimc_sweeps: int = 200
    pimc_readout: str = "random_slice"
    noise_w_ghz: float = 0.40
    noise_eta: float = 0.24
    noise_tau_c_s: float = 1e-12
    scaling_sizes: tuple[int, ...] = (16, 40, 80, 120, 200)
    scaling_replicas: tuple[int, ...] = (2000, 2000, 4000, 8000, 16000)
    scaling_temperature_mk: float = 130.0
    scaling_sweeps: int = 10000
    glass_seed: int = 101
    resamples: int = 2000
    profile_points: int = 201

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for eng in self.engines:
            if eng not in ENGINES:
                raise ValueError(f"unknown engine {eng!r}; choose from {ENGINES}")
        if self.experiment in ("PvsT", "PvsHL", "Scaling") and not self.engines:
            raise ValueError(f"{self.experiment} needs a non-empty engine list")
        if self.experiment == "Scaling":
            bad = [e for e in self.engines if e not in STOCHASTIC_ENGINES]
            if bad:
                raise ValueError(f"scaling runs stochastic engines only, got {bad}")
            if len(self.scaling_replicas) != len(self.scaling_sizes):
                raise ValueError("scaling_replicas must align with scaling_sizes")
        if not self.temperatures_mk or not self.h_l_values or not self.scaling_sizes:
            raise ValueError("sweep grids must be non-empty")
        if self.replicas < 1 or self.jobs < 1:
            raise ValueError("replicas and jobs must be positive")

    def canonical_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def noise_params(self, temperature_mk: float) -> NoiseParams:
        return NoiseParams(
            w_ghz=self.noise_w_ghz,
            eta=self.noise_eta,
            tau_c_s=self.noise_tau_c_s,
            temperature_mk=temperature_mk,
        )


def config_from_toml(path: str, **overrides) -> ExperimentConfig:
    """Load the TOML config; keyword overrides win over file values."""
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    exp = raw.get("experiment", {})
    svmc = raw.get("svmc", {})
    pimc = raw.get("pimc", {})
    noise = raw.get("noise", {})
    scaling = raw.get("scaling", {})
    profile = raw.get("profile", {})
    kwargs: dict = {}

    def put(key, value):
        if value is not None:
            kwargs[key] = value

    put("experiment", exp.get("kind"))
    if "engines" in exp:
        kwargs["engines"] = tuple(exp["engines"])
    put("out_dir", exp.get("out_dir"))
    put("seed", exp.get("seed"))
    put("h_l", exp.get("h_l"))
    if "h_l_values" in exp:
        kwargs["h_l_values"] = tuple(exp["h_l_values"])
    if "temperatures_mk" in exp:
        kwargs["temperatures_mk"] = tuple(exp["temperatures_mk"])
    put("t_qa_us", exp.get("t_qa_us"))
    put("replicas", exp.get("replicas"))
    put("jobs", exp.get("jobs"))
    put("schedule_path", exp.get("schedule"))
    put("svmc_sweeps", svmc.get("sweeps"))
    put("svmc_proposal_width", svmc.get("proposal_width"))
    put("pimc_slices", pimc.get("trotter_slices"))
    put("pimc_sweeps", pimc.get("sweeps"))
    put("pimc_readout", pimc.get("readout"))
    put("noise_w_ghz", noise.get("W_GHz"))
    put("noise_eta", noise.get("eta"))
    put("noise_tau_c_s", noise.get("tau_c_s"))
    if "motif_sizes" in scaling:
        kwargs["scaling_sizes"] = tuple(scaling["motif_sizes"])
    if "replicas_per_size" in scaling:
        kwargs["scaling_replicas"] = tuple(scaling["replicas_per_size"])
    put("scaling_temperature_mk", scaling.get("temperature_mk"))
    put("scaling_sweeps", scaling.get("sweeps"))
    put("glass_seed", scaling.get("glass_seed"))
    put("resamples", scaling.get("resamples"))
    put("profile_points", profile.get("points"))
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if "engines" in kwargs:
        kwargs["engines"] = tuple(kwargs["engines"])
    return ExperimentConfig(**kwargs)


def resolve_schedule(config: ExperimentConfig) -> Schedule:
    if config.schedule_path:
        with open(config.schedule_path, encoding="utf-8") as fh:
            return Schedule.from_csv(fh.read())
    return default_schedule()


def motif_spec_for_size(n_qubits: int, glass_seed: int) -> MotifSpec:
    """Near-balanced black/grey split: cells = n/8, blacks = ceil(cells/2)."""
    if n_qubits % CELL_SIZE != 0 or n_qubits < 2 * CELL_SIZE:
        raise ValueError(f"motif sizes must be multiples of {CELL_SIZE} and >= {2 * CELL_SIZE}")
    cells = n_qubits // CELL_SIZE
    n_black = (cells + 1) // 2
    return MotifSpec(n_black_cells=n_black, n_grey_cells=cells - n_black, glass_seed=glass_seed)


def derive_seed(base_seed: int, *key: int) -> int:
    """Stable per-point seed, independent of scheduling order."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# engine dispatch


def _run_stochastic_point(payload: dict) -> dict:
    """Worker-safe single point; reconstructs everything from plain data."""
    instance = Instance.from_json(payload["instance"])
    schedule = Schedule(
        s=np.array(payload["schedule_s"]),
        a_ghz=np.array(payload["schedule_a"]),
        b_ghz=np.array(payload["schedule_b"]),
    )
    engine = payload["engine"]
    if engine == "SVMC":
        params = SVMCParams(
            sweeps=payload["sweeps"],
            temperature_mk=payload["temperature_mk"],
            schedule=schedule,
            proposal_width=payload["proposal_width"],
            replicas=payload["replicas"],
            seed=payload["seed"],
        )
        result = svmc_run(instance, params)
    elif engine == "PIMC":
        params = PimcParams(
            trotter_slices=payload["trotter_slices"],
            temperature_mk=payload["temperature_mk"],
            sweeps=payload["sweeps"],
            replicas=payload["replicas"],
            seed=payload["seed"],
            readout=payload["readout"],
        )
        result = pimcqa_run(instance, schedule, params)
    else:
        raise ValueError(f"not a stochastic engine: {engine}")
    return json.loads(result.to_json())


def _stochastic_payload(config, instance, schedule, engine, temperature_mk, replicas, seed):
    payload = {
        "instance": instance.to_json(),
        "schedule_s": schedule.s.tolist(),
        "schedule_a": schedule.a_ghz.tolist(),
        "schedule_b": schedule.b_ghz.tolist(),
        "engine": engine,
        "temperature_mk": temperature_mk,
        "replicas": replicas,
        "seed": seed,
    }
    if engine == "SVMC":
        payload.update(sweeps=config.svmc_sweeps, proposal_width=config.svmc_proposal_width)
    else:
        payload.update(
            sweeps=config.pimc_sweeps,
            trotter_slices=config.pimc_slices,
            readout=config.pimc_readout,
        )
    return payload


def _run_points(payloads: list[dict], jobs: int) -> list[dict | Exception]:
    """Run points with a bounded worker pool; order-stable, failures kept."""
    results: list[dict | Exception] = [None] * len(payloads)  # type: ignore[list-item]
    if jobs <= 1 or len(payloads) <= 1:
        for i, p in enumerate(payloads):
            try:
                results[i] = _run_stochastic_point(p)
            except Exception as exc:  # recorded in the manifest, run continues
                results[i] = exc
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_stochastic_point, p) for p in payloads]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except Exception as exc:
                results[i] = exc
    return results


def _rate_engine_p0(config, instance, schedule, engine, temperature_mk, profile_cache) -> float:
    key = instance.content_hash()
    if key not in profile_cache:
        profile_cache[key] = compute_profile(
            instance, schedule, s_grid=default_s_grid(config.profile_points), refine_min_gap=False
        )
    profile = profile_cache[key]
    params = config.noise_params(temperature_mk)
    kind = "niba" if engine == "NIBA" else "golden_rule"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PointerRegimeAdvisory)
        trace = evolve_populations(profile, params, t_qa_s=config.t_qa_us * 1e-6, rate_kind=kind)
    return trace.final_p0


# ---------------------------------------------------------------------------
# scaling fit


@dataclass
class ScalingFit:
    """Exponential decay fit p(n) ~ exp(-alpha n) with bootstrap error."""

    alpha: float
    alpha_err: float
    r_squared: float
    points: list[tuple[int, float, tuple[float, float]]] = field(default_factory=list)

    def to_csv(self) -> str:
        return "alpha,alpha_err,r_squared\n" f"{self.alpha:.10g},{self.alpha_err:.10g},{self.r_squared:.10g}\n"


def _weighted_line_fit(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    wmean_x = np.sum(w * x) / np.sum(w)
    wmean_y = np.sum(w * y) / np.sum(w)
    cov = np.sum(w * (x - wmean_x) * (y - wmean_y))
    var = np.sum(w * (x - wmean_x) ** 2)
    slope = cov / var
    intercept = wmean_y - slope * wmean_x
    resid = y - (slope * x + intercept)
    ss_res = np.sum(w * resid**2)
    ss_tot = np.sum(w * (y - wmean_y) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def fit_scaling(
    points: list[tuple[int, int, int]], resamples: int = 2000, seed: int = 0
) -> ScalingFit:
    """Weighted least squares of ln(mean_p) on n_q; alpha = -slope.

    ``points`` rows are (n_qubits, successes, replicas).  The bootstrap
    resamples per-size replica outcomes and refits; alpha_err is the spread
    of alpha over resamples.  Sizes with zero successes are unfittable and
    reported by name.
    """
    if len({n for n, _, _ in points}) < 3:
        raise ValueError("need at least 3 distinct sizes to fit")
    zero = [n for n, succ, _ in points if succ == 0]
    if zero:
        raise ZeroSuccessError(f"zero successes at n_q={zero}; widen replicas for those sizes")

    n_q = np.array([p[0] for p in points], dtype=float)
    succ = np.array([p[1] for p in points], dtype=float)
    reps = np.array([p[2] for p in points], dtype=float)
    p_hat = succ / reps

    def fit_once(p_vals):
        y = np.log(p_vals)
        w = reps * p_vals / np.maximum(1.0 - p_vals, 1.0 / reps)  # 1/var(ln p)
        return _weighted_line_fit(n_q, y, w)

    slope, _, r2 = fit_once(p_hat)
    rng = np.random.default_rng(seed)
    alphas = np.empty(resamples)
    floor = 0.5 / reps
    for b in range(resamples):
        resample = rng.binomial(reps.astype(int), p_hat) / reps
        resample = np.clip(resample, floor, 1.0 - floor)
        alphas[b] = -fit_once(resample)[0]
    cis = [wilson_interval(int(s), int(r)) for s, r in zip(succ, reps)]
    return ScalingFit(
        alpha=float(-slope),
        alpha_err=float(np.std(alphas)),
        r_squared=r2,
        points=[(int(n), float(p), ci) for n, p, ci in zip(n_q, p_hat, cis)],
    )


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class ManifestEntry:
    path: str
    sha256: str
    rows: int


def _write(out_dir: str, name: str, text: str, outputs: list[ManifestEntry]) -> None:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    outputs.append(ManifestEntry(path=name, sha256=digest, rows=max(0, text.count("\n") - 1)))


def _result_rows(header: str, rows: list[str]) -> str:
    return "\n".join([header] + rows) + "\n"


def _format_point(result: dict) -> tuple[float, float, float, int, int]:
    p = result["successes"] / result["replicas"]
    return p, result["ci_low"], result["ci_high"], result["successes"], result["replicas"]


def run_experiment(config: ExperimentConfig) -> dict:
    """Dispatch one experiment; returns the manifest dict (also written)."""
    os.makedirs(config.out_dir, exist_ok=True)
    schedule = resolve_schedule(config)
    outputs: list[ManifestEntry] = []
    failures: list[dict] = []
    extras: dict = {}

    if config.experiment == "PvsT":
        instance = build_probe(config.h_l)
        _sweep_experiment(
            config,
            instance_for_point=lambda _: instance,
            grid=list(config.temperatures_mk),
            grid_name="temperature_mK",
            temperature_of=lambda v: v,
            schedule=schedule,
            outputs=outputs,
            failures=failures,
            file_prefix="pvst",
        )
    elif config.experiment == "PvsHL":
        _sweep_experiment(
            config,
            instance_for_point=lambda h_l: build_probe(h_l),
            grid=list(config.h_l_values),
            grid_name="h_l",
            temperature_of=lambda _: config.temperatures_mk[0],
            schedule=schedule,
            outputs=outputs,
            failures=failures,
            file_prefix="pvshl",
        )
    elif config.experiment == "Scaling":
        extras["fits"] = _scaling_experiment(config, schedule, outputs, failures)
    elif config.experiment == "Profile":
        for h_l in dict.fromkeys([config.h_l, *config.h_l_values]):
            prof = compute_profile(
                build_probe(h_l), schedule, s_grid=default_s_grid(config.profile_points)
            )
            tag = f"{h_l:.2f}".replace(".", "p")
            _write(config.out_dir, f"profile_hl{tag}.csv", prof.to_csv(), outputs)
            _write(config.out_dir, f"polarizations_hl{tag}.csv", prof.polarizations_to_csv(), outputs)
    elif config.experiment == "Potential":
        surface = trace_minima(build_probe(config.h_l), schedule)
        _write(config.out_dir, "potential_surface.csv", surface.to_csv(), outputs)
        _write(config.out_dir, "potential_paths.csv", surface.paths_to_csv(), outputs)
        markers = ["marker,s"]
        if surface.bifurcation_s is not None:
            markers.append(f"bifurcation,{surface.bifurcation_s:.10g}")
        if surface.crossover_s is not None:
            markers.append(f"crossover,{surface.crossover_s:.10g}")
        _write(config.out_dir, "potential_markers.csv", "\n".join(markers) + "\n", outputs)
        extras["bifurcation_s"] = surface.bifurcation_s
        extras["crossover_s"] = surface.crossover_s

    manifest = {
        "schema_version": 1,
        "package_version": __version__,
        "config": config.canonical_dict(),
        "config_hash": config.config_hash(),
        "outputs": [asdict(e) for e in outputs],
        "failures": failures,
        "partial": bool(failures),
        **extras,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    with open(os.path.join(config.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return manifest


def _sweep_experiment(
    config, instance_for_point, grid, grid_name, temperature_of, schedule, outputs, failures, file_prefix
):
    header = f"{grid_name},success_probability,ci_low,ci_high,successes,replicas"
    profile_cache: dict = {}
    for e_idx, engine in enumerate(config.engines):
        rows = []
        if engine in STOCHASTIC_ENGINES:
            payloads = []
            for p_idx, value in enumerate(grid):
                payloads.append(
                    _stochastic_payload(
                        config,
                        instance_for_point(value),
                        schedule,
                        engine,
                        temperature_of(value),
                        config.replicas,
                        derive_seed(config.seed, e_idx, p_idx),
                    )
                )
            results = _run_points(payloads, config.jobs)
            for value, res in zip(grid, results):
                if isinstance(res, Exception):
                    failures.append({"engine": engine, "point": value, "error": str(res)})
                    continue
                p, lo, hi, succ, reps = _format_point(res)
                rows.append(f"{value:.10g},{p:.10g},{lo:.10g},{hi:.10g},{succ},{reps}")
        else:
            for value in grid:
                try:
                    p0 = _rate_engine_p0(
                        config, instance_for_point(value), schedule, engine, temperature_of(value), profile_cache
                    )
                    rows.append(f"{value:.10g},{p0:.10g},{p0:.10g},{p0:.10g},0,0")
                except Exception as exc:
                    failures.append({"engine": engine, "point": value, "error": str(exc)})
        _write(config.out_dir, f"{file_prefix}_{engine.lower()}.csv", _result_rows(header, rows), outputs)


def _scaling_experiment(config, schedule, outputs, failures) -> dict:
    fits = {}
    for e_idx, engine in enumerate(config.engines):
        payloads = []
        for p_idx, n_q in enumerate(config.scaling_sizes):
            glass = generate_motif_glass(motif_spec_for_size(n_q, config.glass_seed))
            payload = _stochastic_payload(
                config,
                glass,
                schedule,
                engine,
                config.scaling_temperature_mk,
                config.scaling_replicas[p_idx],
                derive_seed(config.seed, 100 + e_idx, p_idx),
            )
            if engine == "SVMC":
                payload["sweeps"] = config.scaling_sweeps
            payloads.append(payload)
        results = _run_points(payloads, config.jobs)

        rows = []
        fit_points = []
        for n_q, res in zip(config.scaling_sizes, results):
            if isinstance(res, Exception):
                failures.append({"engine": engine, "point": n_q, "error": str(res)})
                continue
            p, lo, hi, succ, reps = _format_point(res)
            rows.append(f"{n_q},{p:.10g},{lo:.10g},{hi:.10g},{succ},{reps}")
            fit_points.append((n_q, succ, reps))
        header = "n_qubits,success_probability,ci_low,ci_high,successes,replicas"
        _write(config.out_dir, f"scaling_{engine.lower()}.csv", _result_rows(header, rows), outputs)

        try:
            fit = fit_scaling(fit_points, resamples=config.resamples, seed=config.seed)
            _write(config.out_dir, f"scaling_fit_{engine.lower()}.csv", fit.to_csv(), outputs)
            fits[engine] = {"alpha": fit.alpha, "alpha_err": fit.alpha_err, "r_squared": fit.r_squared}
        except (ValueError, ZeroSuccessError) as exc:
            failures.append({"engine": engine, "point": "fit", "error": str(exc)})
    return fits
