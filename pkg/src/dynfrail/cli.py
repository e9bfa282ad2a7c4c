"""Command-line entry point: simulate | fit | replicate | diagnose | report.

Seed, worker count and output directory resolve as flag > environment
(DYNFRAIL_SEED, DYNFRAIL_WORKERS, DYNFRAIL_OUT) > config file > default.
Failures exit with status 1 and a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import draws_survival
from .mcmc import run_chains
from .priors import MeanCHF
from .replication import (DEFAULT_SURVIVAL_TIMES, SENSITIVITY_ARMS, FitSpec, arm_spec,
                          correct_priors, run_scenario, table_rows)
from .simulate import Scenario, simulate_dataset

log = logging.getLogger("dynfrail")

DEFAULTS = {"seed": 0, "workers": 1, "out": "dynfrail_out"}
ENV = {"seed": "DYNFRAIL_SEED", "workers": "DYNFRAIL_WORKERS", "out": "DYNFRAIL_OUT"}


def resolve_setting(name: str, flag, cfg: dict, environ=os.environ):
    """Flag, then environment variable, then config file, then default."""
    if flag is not None:
        value = flag
    elif environ.get(ENV[name]):
        value = environ[ENV[name]]
    elif name in cfg:
        value = cfg[name]
    else:
        value = DEFAULTS[name]
    if name == "out":
        return Path(value).resolve()
    value = int(value)
    if name == "seed" and not 0 <= value < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if name == "workers" and value < 1:
        raise ValueError("workers must be >= 1")
    return value


def crude_rate_means(dataset) -> list[MeanCHF]:
    """Exponential prior means at each process's crude event rate."""
    d = dataset.design
    exposure = float(d.exit.sum())
    counts = d.subject_counts.sum(axis=1)
    return [MeanCHF("exponential", exposure / max(float(c), 1.0)) for c in counts]


def survival_times(cfg: dict, upper: float) -> np.ndarray:
    if "survival_times" in cfg:
        return np.asarray(cfg["survival_times"], dtype=float)
    return np.linspace(0.0, upper, 51)


def survival_payload(draws, times, marginal: bool) -> dict:
    curves = {str(p): draws_survival(draws, p, times, marginal=marginal).to_dict()
              for p in range(draws.n_types + 1)}
    return {"marginal": marginal, "covariates": "zero", "processes": curves}


def write_fit_outputs(draws, out: Path, cfg: dict, prov: dict) -> None:
    io.write_csv(out / "summary.csv", io.SUMMARY_HEADER, io.summary_rows(draws), prov)
    header, rows = io.diagnostics_rows(draws)
    io.write_csv(out / "diagnostics.csv", header, rows, prov)
    times = survival_times(cfg, float(draws.grid_times[-1]) if draws.grid_times.size else 1.0)
    io.write_json(out / "survival.json",
                  survival_payload(draws, times, cfg.get("survival_marginal", True)), prov)


# -- commands -------------------------------------------------------------------

def cmd_simulate(cfg, seed, workers, out, prov):
    scenario = Scenario.from_dict(cfg.get("scenario", {}))
    data = simulate_dataset(scenario, seed)
    io.export_dataset(data, out / "subjects.csv", out / "events.csv", prov)
    return {"subjects": len(data), "events": int(data.design.total_counts.sum())}


def cmd_fit(cfg, seed, workers, out, prov):
    if "data" not in cfg:
        raise ValueError("fit needs a data block with subjects and events paths")
    data = io.load_dataset(cfg["data"]["subjects"], cfg["data"]["events"], cfg["data"].get("n_types"))
    priors = io.model_priors(cfg, data.n_types, data.n_covariates, crude_rate_means(data))
    draws = run_chains(data, priors, io.mcmc_config(cfg, seed, workers), workers=workers)
    io.write_draws(draws, out / "draws", prov)
    write_fit_outputs(draws, out, cfg, prov)
    return {"draws": str(out / "draws"), "kept": draws.n_chains * draws.n_kept}


def cmd_replicate(cfg, seed, workers, out, prov):
    scenario = Scenario.from_dict(cfg.get("scenario", {}))
    pc = cfg.get("priors", {})
    if "mean_chf" in pc:
        priors = io.model_priors(cfg, scenario.n_types, scenario.n_covariates)
    else:
        base = correct_priors(scenario, pc.get("precision", 0.1), pc.get("beta_var", 1.0),
                              pc.get("nu_shape", 1.0), pc.get("nu_rate", 1.0),
                              pc.get("dyn_shape", 0.5), pc.get("dyn_rate", 2.0))
        priors = base
    times = np.asarray(cfg.get("survival_times", DEFAULT_SURVIVAL_TIMES), dtype=float)
    spec = FitSpec(priors, io.mcmc_config(cfg, seed, 1), times)
    rc = cfg.get("replicate", {})
    R = rc.get("R", 2)
    arms = rc.get("arms")
    specs = {"base": spec} if not arms else {a: arm_spec(spec, a) for a in arms}
    reports = {}
    for label, s in specs.items():
        rep = run_scenario(scenario, s, R, seed, workers=workers, label=label)
        reports[label] = rep
        suffix = "" if label == "base" else f"_{label}"
        rows = table_rows([rep])
        io.write_csv(out / f"replication{suffix}.csv", list(rows[0]),
                     [[_cell(v) for v in r.values()] for r in rows], prov)
        io.write_json(out / f"replication{suffix}.json", rep.to_dict(), prov)
    return {label: {"R": r.n_replicates, "failed": r.n_failed} for label, r in reports.items()}


def _cell(v):
    return f"{v:.6g}" if isinstance(v, float) else v


def _archive(cfg, args) -> Path:
    path = args.draws or cfg.get("draws")
    if not path:
        raise ValueError("no draws archive given (use --draws or the config 'draws' key)")
    return Path(path)


def cmd_diagnose(cfg, seed, workers, out, prov, args=None):
    draws = io.read_draws(_archive(cfg, args))
    header, rows = io.diagnostics_rows(draws)
    io.write_csv(out / "diagnostics.csv", header, rows, prov)
    print(",".join(header))
    for r in rows:
        print(",".join(str(v) for v in r))
    return {"diagnostics": str(out / "diagnostics.csv")}


def cmd_report(cfg, seed, workers, out, prov, args=None):
    draws = io.read_draws(_archive(cfg, args))
    write_fit_outputs(draws, out, cfg, prov)
    return {"summary": str(out / "summary.csv")}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "replicate": cmd_replicate,
            "diagnose": cmd_diagnose, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynfrail", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", type=Path, help="output directory")
        if name in ("diagnose", "report"):
            p.add_argument("--draws", type=Path, help="draws archive directory")
        if name == "fit":
            p.add_argument("--subjects", type=Path)
            p.add_argument("--events", type=Path)
        if name == "replicate":
            p.add_argument("-R", "--replicates", type=int)
            p.add_argument("--arms", nargs="+", choices=SENSITIVITY_ARMS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = io.load_config(args.config) if args.config else {"schema_version": io.SCHEMA_VERSION}
        if getattr(args, "subjects", None) or getattr(args, "events", None):
            if not (args.subjects and args.events):
                raise ValueError("--subjects and --events must be given together")
            cfg["data"] = {**cfg.get("data", {}), "subjects": str(args.subjects.resolve()),
                           "events": str(args.events.resolve())}
        if getattr(args, "replicates", None) is not None or getattr(args, "arms", None):
            rc = dict(cfg.get("replicate", {}))
            if args.replicates is not None:
                rc["R"] = args.replicates
            if args.arms:
                rc["arms"] = args.arms
            cfg["replicate"] = rc
        io.validate_config(cfg)
        seed = resolve_setting("seed", args.seed, cfg)
        workers = resolve_setting("workers", args.workers, cfg)
        out = resolve_setting("out", args.out, cfg)
        effective = {**cfg, "seed": seed, "command": args.command}
        effective.pop("out", None)
        effective.pop("workers", None)
        prov = io.provenance(effective, seed)
        out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command in ("diagnose", "report"):
            result = fn(cfg, seed, workers, out, prov, args)
        else:
            result = fn(cfg, seed, workers, out, prov)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error object
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    log.info(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
