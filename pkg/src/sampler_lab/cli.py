"""Command-line entry point: ``sampler-lab <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import analysis as an
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_experiment, summarize

SUBCOMMANDS = {
    "levy": "levy",
    "sparsity": "sparsity",
    "kl": "kl_race",
    "spectrum": "spectrum",
    "ratio": "ratio_sweep",
    "control": "levy_proposal_control",
}
ALL_ORDER = ("levy", "sparsity", "kl", "spectrum", "ratio")
OUT_ENV = "SAMPLER_LAB_OUT"


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (required unless set in the config)")
    p.add_argument("--samples", type=int, help="samples per run (L)")
    p.add_argument("--chains", type=int, help="MC3 chain count (M), geometric ladder")
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("--out", type=Path, help=f"output directory (fallback: ${OUT_ENV})")
    p.add_argument("--swap-policy", choices=["random", "neighbors"])
    p.add_argument("--full-chains", action="store_true", help="persist all chains in trace files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sampler-lab", description="Seeded sampler experiments and fits.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, kind in SUBCOMMANDS.items():
        _add_run_options(sub.add_parser(name, help=f"run the {kind} experiment"))
    p_all = sub.add_parser("all", help="run the five reproductions into one timestamped directory")
    _add_run_options(p_all)
    p_fit = sub.add_parser("fit", help="power-law exponent of a CSV column of flight distances")
    p_fit.add_argument("--input", type=Path, required=True)
    p_fit.add_argument("--column")
    p_fit.add_argument("--windows", type=int, default=10)
    p_fit.add_argument("--bins", type=int, default=50)
    p_an = sub.add_parser("analyze", help="spectral slope of a CSV time series")
    p_an.add_argument("--input", type=Path, required=True)
    p_an.add_argument("--column")
    p_an.add_argument("--blocks", type=int, default=10)
    p_an.add_argument("--max-lag", type=int, default=0, help="also print autocorrelation up to this lag")
    return parser


def resolve_config(kind: str, args) -> ExperimentConfig:
    doc = load_config(args.config) if args.config else {"experiment": kind}
    if doc.get("experiment", kind) != kind:
        raise ConfigError(f"config field experiment: {doc['experiment']!r} does not match subcommand ({kind})")
    doc["experiment"] = kind
    sampler = dict(doc.get("sampler", {}))
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.replicates is not None:
        doc["replicates"] = args.replicates
    if args.samples is not None:
        sampler["samples"] = args.samples
        if kind == "kl_race":
            cps = [t for t in doc.get("sweep", {}).get("checkpoints", [2**k for k in range(1, 11)]) if t <= args.samples]
            doc.setdefault("sweep", {})["checkpoints"] = sorted(set(cps) | {args.samples})
    if args.chains is not None:
        sampler["chains"] = args.chains
        sampler.pop("ladder", None)
    if args.swap_policy:
        sampler["swap_policy"] = "random_pairs" if args.swap_policy == "random" else "neighbors_only"
    if sampler:
        doc["sampler"] = sampler
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    if args.full_chains:
        doc["full_chains"] = True
    if "master_seed" not in doc:
        raise ConfigError("config field master_seed: no seed given; pass --seed or set master_seed")
    return ExperimentConfig.from_dict(doc)


def _out_dir(args, config: ExperimentConfig) -> Path:
    out = args.out or config.output_dir or os.environ.get(OUT_ENV)
    if not out:
        raise ConfigError(f"no output directory; pass --out, set output_dir, or set ${OUT_ENV}")
    return Path(out)


def _report(summary: dict, stream=None) -> None:
    stream = stream or sys.stdout
    for c in summary["criteria"]:
        obs = c["observed"]
        obs = f"{obs:.3f}" if isinstance(obs, float) else json.dumps(obs, default=str)
        print(f"{c['status']} {c['id']}: {c['description']} (observed {obs}, band {c['band']})", file=stream)


def _run_one(kind: str, args, out: Path | None = None) -> dict:
    config = resolve_config(kind, args)
    out = out or _out_dir(args, config)
    results = run_experiment(config, out, args.jobs)
    summary = summarize(results)
    print(f"[{kind}] {len(results)} rows -> {out}")
    _report(summary)
    return summary


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in SUBCOMMANDS:
            _run_one(SUBCOMMANDS[args.command], args)
        elif args.command == "all":
            if args.config:
                raise ConfigError("`all` takes flags only; per-experiment configs go to the single subcommands")
            root = args.out or os.environ.get(OUT_ENV)
            if not root:
                raise ConfigError(f"no output directory; pass --out or set ${OUT_ENV}")
            run_dir = Path(root) / time.strftime("run-%Y%m%d-%H%M%S")
            report = {}
            for name in ALL_ORDER:
                kind = SUBCOMMANDS[name]
                report[kind] = _run_one(kind, args, run_dir / kind)["criteria"]
            with open(run_dir / "report.json", "w") as fh:
                json.dump(report, fh, indent=1, sort_keys=True)
            n_fail = sum(c["status"] == "FAIL" for v in report.values() for c in v)
            print(f"combined report: {run_dir / 'report.json'} ({n_fail} FAIL)")
        elif args.command == "fit":
            fit = an.fit_power_law(an.read_series_csv(args.input, args.column), args.windows, args.bins)
            print(json.dumps(fit.to_json(), indent=1))
        elif args.command == "analyze":
            series = an.read_series_csv(args.input, args.column)
            out = an.spectral_slope(series, args.blocks).to_json()
            if args.max_lag:
                out["autocorrelation"] = an.autocorrelation(series, args.max_lag).tolist()
            print(json.dumps(out, indent=1))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
