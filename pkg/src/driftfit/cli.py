"""Command line entry point: ``driftfit {experiment,simulate,estimate,kernel-dump,presets}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import kernels
from .contrast import minimize_contrast
from .mc_harness import ExperimentConfig, load_preset, preset_names, run_experiment
from .sde_sim import SamplePath, simulate_path

FULL_REPLICATIONS = 5000


def _load_config(ns) -> ExperimentConfig:
    if getattr(ns, "config", None):
        return ExperimentConfig.from_json(ns.config)
    if getattr(ns, "preset", None):
        return load_preset(ns.preset)
    raise SystemExit("one of --config or --preset is required")


def cmd_experiment(ns) -> int:
    cfg = _load_config(ns)
    reps = FULL_REPLICATIONS if ns.full else ns.reps
    res = run_experiment(cfg, reps=reps, out_dir=ns.out, workers=ns.workers)
    for row in res.summary:
        print(f"{row.label}: theta1 {row.mean1:.4f} ({row.std1:.4f})  "
              f"theta2 {row.mean2:.4f} ({row.std2:.4f})  reps={row.reps} failed={row.failed}")
    if res.failures:
        print(f"{len(res.failures)} replication(s) failed; see reps.csv", file=sys.stderr)
    return 0


def cmd_simulate(ns) -> int:
    cfg = _load_config(ns)
    path = simulate_path(cfg.model.build(), cfg.model.theta, cfg.sampling.x0,
                         cfg.sampling.grid(), cfg.sampling.scheme(), seed=ns.seed)
    path.to_csv(ns.out)
    print(f"wrote {len(path)} observations ({path.n_jumps} jumps) to {ns.out}")
    return 0


def cmd_estimate(ns) -> int:
    cfg = _load_config(ns)
    path = SamplePath.from_csv(ns.path)
    model = cfg.model.build()
    est = cfg.estimator
    res = minimize_contrast(path, model, est.build_approx(model), est.contrast_config(),
                            est.theta_box, est.frozen)
    out = {"theta1": res.theta[0], "theta2": res.theta[1], "contrast": res.contrast_at_opt,
           "kept_fraction": res.kept_fraction, "converged": res.converged}
    text = json.dumps(out, indent=2)
    if ns.out:
        Path(ns.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_kernel_dump(ns) -> int:
    kern = kernels.kernel_from_args(ns)
    kernels.dump(kern, ns.out, ns.points)
    print(f"wrote {ns.points} samples of {kern.kind} kernel to {ns.out}")
    return 0


def cmd_presets(ns) -> int:
    for name in preset_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftfit",
                                description="Drift estimation for jump diffusions")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--config", help="experiment JSON file")
        g.add_argument("--preset", help="bundled preset name (see `driftfit presets`)")

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    add_config(e)
    e.add_argument("--reps", type=int, default=None, help="override the replication count")
    e.add_argument("--full", action="store_true",
                   help=f"use {FULL_REPLICATIONS} replications")
    e.add_argument("--out", default="out", help="output directory for reps.csv, summary.csv")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("simulate", help="simulate one path to a t,x CSV")
    add_config(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("estimate", help="estimate theta from a t,x CSV")
    add_config(t)
    t.add_argument("--path", required=True, help="CSV with header t,x")
    t.add_argument("--out", default=None, help="also write the JSON result here")
    t.set_defaults(func=cmd_estimate)

    k = sub.add_parser("kernel-dump", help="sample a truncation kernel to CSV")
    k.add_argument("--kind", choices=kernels.KINDS, default="phi0")
    k.add_argument("--l", type=int, default=2)
    k.add_argument("--d", type=float, default=3.0)
    k.add_argument("--points", type=int, default=2001)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_kernel_dump)

    ls = sub.add_parser("presets", help="list bundled experiment presets")
    ls.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    raise SystemExit(main())
