"""annealer-lab command line interface.

Subcommands:
  run      execute an experiment described by a TOML config
  fit      exponential scaling fit on a results CSV
  profile  gap profile of a probe instance

The ANNEALER_LAB_THREADS environment variable caps the worker count.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .harness import config_from_toml, fit_scaling, run_experiment
from .model import Schedule, build_probe, default_schedule
from .spectrum import compute_profile, default_s_grid


def _capped_jobs(jobs: int | None) -> int | None:
    cap = os.environ.get("ANNEALER_LAB_THREADS")
    if cap is not None:
        limit = max(1, int(cap))
        return min(jobs or limit, limit)
    return jobs


def _cmd_run(args) -> int:
    config = config_from_toml(
        args.config,
        seed=args.seed,
        out_dir=args.out_dir,
        replicas=args.replicas,
        jobs=_capped_jobs(args.jobs),
    )
    manifest = run_experiment(config)
    print(f"wrote {len(manifest['outputs'])} files to {config.out_dir}")
    for entry in manifest["outputs"]:
        print(f"  {entry['path']}  rows={entry['rows']}")
    if manifest["partial"]:
        print(f"WARNING: {len(manifest['failures'])} point(s) failed; see manifest.json")
        return 1
    return 0


def _cmd_fit(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    needed = {"n_qubits", "successes", "replicas"}
    if not rows or not needed.issubset(rows[0]):
        print(f"error: input must carry columns {sorted(needed)}", file=sys.stderr)
        return 2
    points = [(int(r["n_qubits"]), int(r["successes"]), int(r["replicas"])) for r in rows]
    fit = fit_scaling(points, resamples=args.resamples, seed=args.seed)
    print(f"alpha = {fit.alpha:.6g} +/- {fit.alpha_err:.3g}   R^2 = {fit.r_squared:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(fit.to_csv())
        print(f"wrote {args.out}")
    return 0


def _cmd_profile(args) -> int:
    if args.schedule:
        with open(args.schedule, encoding="utf-8") as fh:
            schedule = Schedule.from_csv(fh.read())
    else:
        schedule = default_schedule()
    instance = build_probe(args.h_l)
    profile = compute_profile(
        instance, schedule, s_grid=default_s_grid(args.points), refine_min_gap=not args.no_refine
    )
    os.makedirs(args.out_dir, exist_ok=True)
    tag = f"{args.h_l:.2f}".replace(".", "p")
    main_path = os.path.join(args.out_dir, f"profile_hl{tag}.csv")
    with open(main_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(profile.to_csv())
    pol_path = os.path.join(args.out_dir, f"polarizations_hl{tag}.csv")
    with open(pol_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(profile.polarizations_to_csv())
    print(f"wrote {main_path} ({len(profile.s)} points) and {pol_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annealer-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a TOML config")
    p_run.add_argument("--config", required=True, help="path to the TOML experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out-dir", default=None, help="override the output directory")
    p_run.add_argument("--replicas", type=int, default=None, help="override replicas per point")
    p_run.add_argument("--jobs", type=int, default=None, help="worker processes for sweep points")
    p_run.set_defaults(func=_cmd_run)

    p_fit = sub.add_parser("fit", help="fit ln(p) vs n_qubits with bootstrap errors")
    p_fit.add_argument("--input", required=True, help="CSV with n_qubits,successes,replicas")
    p_fit.add_argument("--resamples", type=int, default=2000)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", default=None, help="write the fit CSV here")
    p_fit.set_defaults(func=_cmd_fit)

    p_prof = sub.add_parser("profile", help="compute a probe gap profile")
    p_prof.add_argument("--h-l", type=float, default=0.44, dest="h_l")
    p_prof.add_argument("--schedule", default=None, help="schedule CSV (default: shipped)")
    p_prof.add_argument("--out-dir", default="results")
    p_prof.add_argument("--points", type=int, default=201)
    p_prof.add_argument("--no-refine", action="store_true", help="skip min-gap grid refinement")
    p_prof.set_defaults(func=_cmd_profile)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
