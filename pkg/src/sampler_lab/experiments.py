"""Seeded, replicated reproduction runs with persisted results and band checks.

Each (cell, replicate) pair is an independent task whose random streams come
from ``SeedSequence(master_seed, spawn_key=(cell, replicate))``. The first
child stream builds the environment; each algorithm then gets its own child
keyed by its position in :data:`config.ALGORITHMS`, so rows do not depend on
which other algorithms were requested or on execution order.
"""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import analysis as an
from .config import ALGORITHMS, ExperimentConfig
from .distributions import (
    GaussianMixture,
    UnimodalGaussian,
    generate_patchy_environment,
    mean_mode_distance,
    target_from_json,
    target_to_json,
)
from .samplers import ProposalSpec, TemperatureLadder, initial_point, run_ds, run_mc3, run_rwm, write_trace_csv

log = logging.getLogger(__name__)

HUMAN_MU_BAND = (1.37, 1.98)
METRIC = {
    "levy": "mu_hat",
    "sparsity": "mu_hat",
    "levy_proposal_control": "mu_hat",
    "kl_race": "kl",
    "spectrum": "alpha_hat",
    "ratio_sweep": "alpha_hat",
}


@dataclass
class ResultSet:
    experiment: str
    rows: list
    columns: list
    config: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.rows)

    def values(self, algorithm: str, cell: int | None = None, key: str = "value") -> np.ndarray:
        return np.array(
            [
                float(r[key])
                for r in self.rows
                if r["algorithm"] == algorithm and (cell is None or int(r["cell"]) == cell)
            ]
        )

    def cells(self) -> list:
        return sorted({int(r["cell"]) for r in self.rows})

    def cell_value(self, cell: int) -> float:
        return next(float(r["cell_value"]) for r in self.rows if int(r["cell"]) == cell)

    def write_csv(self, path) -> None:
        with _atomic(path) as tmp, open(tmp, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r.get(k, "")) for k in self.columns})

    @classmethod
    def read_csv(cls, path, experiment: str) -> "ResultSet":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            return cls(experiment, rows, list(reader.fieldnames or []))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@contextlib.contextmanager
def _atomic(path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _write_json(path, obj) -> None:
    with _atomic(path) as tmp, open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_fmt)
        fh.write("\n")


# -- per-task work ---------------------------------------------------------


def _streams(master_seed: int, cell: int, rep: int):
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell, rep))
    children = ss.spawn(1 + len(ALGORITHMS))
    seed_id = int(ss.generate_state(1)[0])
    env_rng = np.random.default_rng(children[0])
    alg_rngs = {a: np.random.default_rng(children[1 + i]) for i, a in enumerate(ALGORITHMS)}
    return seed_id, env_rng, alg_rngs


def _build_target(cfg: dict, kind: str, cell_value: float, env_rng):
    t = cfg["target"]
    if kind in ("spectrum", "ratio_sweep"):
        sigma = t["sigma_target"] if kind == "spectrum" else cell_value * cfg["sampler"]["proposal_sigma"]
        return UnimodalGaussian(np.zeros(t["d"]), sigma)
    r = cell_value if kind in ("sparsity", "levy_proposal_control") else t["r"]
    env = generate_patchy_environment(t["n_modes"], r, t["d"], env_rng)
    # round-trip through the persisted form so every algorithm sees exactly the saved landscape
    return target_from_json(json.loads(json.dumps(target_to_json(env))))


def _run_algorithm(alg: str, target, cfg: dict, r_env: float, rng):
    s = cfg["sampler"]
    L = s["samples"]
    x0 = initial_point(target, s["init"] if isinstance(s["init"], str) else np.asarray(s["init"]))
    if alg == "DS":
        return run_ds(target, L, rng)
    if alg == "RwM":
        return run_rwm(target, L, x0, ProposalSpec.gaussian(s["proposal_sigma"]), rng)
    if alg == "RwM-Levy":
        lmax = s.get("levy_lmax") or 4.0 * r_env
        lmin = s["levy_lmin"] * s["proposal_sigma"]
        return run_rwm(target, L, x0, ProposalSpec.levy(s["levy_mu"], lmin, lmax), rng)
    ladder = TemperatureLadder(tuple(s["ladder"]))
    return run_mc3(
        target,
        L,
        len(ladder),
        ladder,
        ProposalSpec.gaussian(s["proposal_sigma"]),
        s["swap_policy"],
        x0,
        rng,
        keep_all_chains=cfg.get("full_chains", False),
    )


def _run_task(cfg: dict, cell: int, cell_value: float, rep: int) -> dict:
    kind = cfg["experiment"]
    seed_id, env_rng, alg_rngs = _streams(cfg["master_seed"], cell, rep)
    target = _build_target(cfg, kind, cell_value, env_rng)
    mixture = isinstance(target, GaussianMixture)
    r_env = cell_value if kind in ("sparsity", "levy_proposal_control") else cfg["target"]["r"]
    sparsity = mean_mode_distance(target) if mixture and target.n_modes > 1 else float("nan")
    a = cfg["analysis"]
    rows, plots, traces = [], {}, {}
    for alg in cfg["sampler"]["algorithms"]:
        trace = _run_algorithm(alg, target, cfg, r_env, alg_rngs[alg])
        row = {
            "experiment": kind,
            "cell": cell,
            "cell_value": float(cell_value),
            "algorithm": alg,
            "replicate": rep,
            "seed": seed_id,
            "acceptance_rate": float(trace.acceptance_rate[0]) if alg != "DS" else 1.0,
            "swap_rate": float(trace.swap_rate),
        }
        if kind in ("levy", "sparsity", "levy_proposal_control"):
            try:
                fit = an.fit_power_law(an.flight_distances(trace), a["n_windows"], a["n_bins"])
                row.update(fit.to_json())
                row["value"] = fit.mu_hat
                plots[f"powerlaw_{alg}"] = (fit.log_x, fit.log_y, fit.cell_x, fit.cell_y)
            except an.FitError as exc:
                log.warning("%s cell %d rep %d %s: %s", kind, cell, rep, alg, exc)
                row.update(value=float("nan"), r_squared=float("nan"), n_cells=0)
            row["sparsity"] = sparsity
            row["modes_visited"] = int((an.mode_visit_counts(trace, target) > 0).sum())
        elif kind == "kl_race":
            cps = cfg["sweep"]["checkpoints"]
            traj = an.kl_mode_divergence(trace, target, cps)
            for t, v in zip(traj.t, traj.kl):
                row[f"kl@{t}"] = float(v)
            row["value"] = float(traj.kl[-1])
            row["sparsity"] = sparsity
        else:
            series = trace.positions[:, 0]
            fit = an.spectral_slope(series, a["n_blocks"])
            row.update(fit.to_json())
            del row["frequencies_used"]
            row["value"] = fit.alpha_hat
            row["sample_mean"] = float(series.mean())
            row["sample_sd"] = float(series.std(ddof=1))
            plots[f"spectrum_{alg}"] = (fit.log_f, fit.log_s, fit.block_x, fit.block_y)
            counts, edges = np.histogram(series, bins=30)
            plots[f"hist_{alg}"] = (edges, counts)
        rows.append(row)
        traces[alg] = trace
    env = target_to_json(target)
    return {"cell": cell, "rep": rep, "rows": rows, "plots": plots, "traces": traces, "env": env}


# -- orchestration ---------------------------------------------------------


def _cells(config: ExperimentConfig):
    kind = config.experiment
    if kind in ("sparsity", "levy_proposal_control"):
        vals = config.sweep["r_values"]
    elif kind == "ratio_sweep":
        vals = config.sweep["ratios"]
    elif kind == "spectrum":
        vals = [config.target["sigma_target"] / config.sampler["proposal_sigma"]]
    else:
        vals = [config.target["r"]]
    if not vals:
        raise ValueError("sweep grid is empty")
    return list(enumerate(float(v) for v in vals))


def _columns(kind: str, cfg: dict) -> list:
    base = ["experiment", "cell", "cell_value", "algorithm", "replicate", "seed", "value"]
    if kind in ("levy", "sparsity", "levy_proposal_control"):
        extra = ["mu_hat", "intercept", "r_squared", "n_cells", "excluded_zeros", "sparsity", "modes_visited"]
    elif kind == "kl_race":
        extra = [f"kl@{t}" for t in sorted(cfg["sweep"]["checkpoints"])] + ["sparsity"]
    else:
        extra = ["alpha_hat", "intercept", "r_squared", "n_blocks", "sample_mean", "sample_sd"]
    return base + extra + ["acceptance_rate", "swap_rate"]


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int | None = None) -> ResultSet:
    """Run every (cell, replicate) task, persist outputs under ``out_dir`` if given."""
    cfg = config.to_dict()
    tasks = [(cell, val, rep) for cell, val in _cells(config) for rep in range(config.replicates)]
    jobs = jobs or config.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_task, cfg, c, v, r) for c, v, r in tasks]
            outputs = [f.result() for f in futs]
    else:
        outputs = [_run_task(cfg, c, v, r) for c, v, r in tasks]
    outputs.sort(key=lambda o: (o["cell"], o["rep"]))
    rows = [row for o in outputs for row in o["rows"]]
    results = ResultSet(config.experiment, rows, _columns(config.experiment, cfg), cfg)
    if out_dir is not None:
        _persist(config, results, outputs, Path(out_dir))
    return results


def _persist(config: ExperimentConfig, results: ResultSet, outputs: list, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    multi_cell = len({o["cell"] for o in outputs}) > 1
    _write_json(out / "config.json", config.to_dict())
    results.write_csv(out / "results.csv")
    for o in outputs:
        tag = f"{o['cell']}_{o['rep']}" if multi_cell else f"{o['rep']}"
        if o["env"].get("kind") == "mixture":
            _write_json(out / f"env_{tag}.json", o["env"])
        keep = config.save_traces == "all" or (config.save_traces == "first" and o["rep"] == 0)
        if not keep:
            continue
        for alg, tr in o["traces"].items():
            with _atomic(out / f"trace_{alg}_{tag}.csv") as tmp:
                write_trace_csv(tr, tmp, full_chains=config.full_chains and tr.all_chains is not None)
        for name, data in o["plots"].items():
            with _atomic(out / f"plotdata_{name}_{tag}.csv") as tmp:
                if name.startswith("hist_"):
                    edges, counts = data
                    with open(tmp, "w", newline="") as fh:
                        w = csv.writer(fh)
                        w.writerow(["bin_left", "bin_right", "count"])
                        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
                else:
                    an.write_plotdata_csv(tmp, *data)
    _write_json(out / "summary.json", summarize(results))


# -- summaries and bands ---------------------------------------------------


def _stats(v: np.ndarray) -> dict:
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"n": 0, "median": None, "q25": None, "q75": None}
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return {"n": int(v.size), "median": float(med), "q25": float(q25), "q75": float(q75)}


def _check(cid: str, description: str, observed, ok: bool, band: str) -> dict:
    return {"id": cid, "description": description, "observed": observed, "band": band, "status": "PASS" if ok else "FAIL"}


def _median(results: ResultSet, alg: str, cell: int | None = None, key: str = "value") -> float:
    v = results.values(alg, cell, key)
    v = v[np.isfinite(v)]
    return float(np.median(v)) if v.size else float("nan")


def _inside(x: float, lo: float, hi: float) -> bool:
    return bool(np.isfinite(x) and lo <= x <= hi)


def evaluate_criteria(results: ResultSet) -> list:
    """PASS/FAIL band checks for the experiment in ``results``."""
    kind = results.experiment
    algs = {r["algorithm"] for r in results.rows}
    checks = []
    if kind == "levy":
        if "MC3" in algs:
            m = _median(results, "MC3")
            checks.append(_check("C1.mc3", "median mu_hat(MC3) in (1.0, 2.2)", m, 1.0 < m < 2.2, "(1.0, 2.2)"))
        if "DS" in algs:
            m = _median(results, "DS")
            checks.append(_check("C1.ds", "median mu_hat(DS) < 1.0", m, m < 1.0, "< 1.0"))
        if "RwM" in algs:
            m, r2 = _median(results, "RwM"), _median(results, "RwM", key="r_squared")
            checks.append(
                _check("C1.rwm", "median mu_hat(RwM) < 1.0 or median r^2 < 0.8", {"mu_hat": m, "r_squared": r2},
                       m < 1.0 or r2 < 0.8, "mu_hat < 1.0 or r^2 < 0.8")
            )
    elif kind == "spectrum":
        bands = {"MC3": ("C2.mc3", 0.5, 1.5), "DS": ("C2.ds", -0.2, 0.2), "RwM": ("C2.rwm", 1.4, np.inf)}
        for alg, (cid, lo, hi) in bands.items():
            if alg in algs:
                m = _median(results, alg)
                checks.append(_check(cid, f"median alpha_hat({alg}) in [{lo}, {hi}]", m, _inside(m, lo, hi), f"[{lo}, {hi}]"))
    elif kind == "kl_race":
        if {"MC3", "RwM", "DS"} <= algs:
            mc, rw, ds = (_median(results, a) for a in ("MC3", "RwM", "DS"))
            t = max(int(k[3:]) for k in results.columns if k.startswith("kl@"))
            checks.append(_check("C3.mc3_vs_rwm", f"median KL(MC3) < median KL(RwM) at t={t}", {"MC3": mc, "RwM": rw}, mc < rw, "MC3 < RwM"))
            checks.append(_check("C3.mc3_vs_ds", f"median KL(MC3) <= 2 x median KL(DS) at t={t}", {"MC3": mc, "DS": ds}, mc <= 2 * ds, "MC3 <= 2 DS"))
    elif kind == "sparsity":
        lo, hi = HUMAN_MU_BAND
        trend_max = results.config.get("sweep", {}).get("trend_max_r", np.inf)
        cells = results.cells()
        med = {a: {c: _median(results, a, c) for c in cells} for a in algs}
        sp = {c: _median(results, "MC3" if "MC3" in algs else sorted(algs)[0], c, "sparsity") for c in cells}
        if "MC3" in algs:
            low = [c for c in cells if results.cell_value(c) <= trend_max and np.isfinite(med["MC3"][c])]
            rho = float(spearmanr([sp[c] for c in low], [med["MC3"][c] for c in low])[0]) if len(low) > 2 else float("nan")
            checks.append(_check("C4.trend", f"Spearman(sparsity, median mu_hat(MC3)) > 0 over r <= {trend_max}", rho, rho > 0, "> 0"))
            hits = [results.cell_value(c) for c in cells if _inside(med["MC3"][c], lo, hi)]
            checks.append(_check("C4.mc3_band", "some MC3 cell median in human band", {"r_in_band": hits}, bool(hits), f"[{lo}, {hi}]"))
        others = [a for a in ("RwM", "DS") if a in algs]
        if others:
            hits = {a: [results.cell_value(c) for c in cells if _inside(med[a][c], lo, hi)] for a in others}
            checks.append(_check("C4.others_outside", "no RwM or DS cell median in human band", hits, not any(hits.values()), f"outside [{lo}, {hi}]"))
    elif kind == "ratio_sweep":
        cells = results.cells()
        top = max(cells, key=results.cell_value)
        ratio = results.cell_value(top)
        bands = {"RwM": ("C5.rwm", 1.7, 2.2), "MC3": ("C5.mc3", 0.6, 1.4), "DS": ("C5.ds", -0.2, 0.2)}
        for alg, (cid, lo, hi) in bands.items():
            if alg in algs:
                m = _median(results, alg, top)
                checks.append(_check(cid, f"median alpha_hat({alg}) at ratio {ratio:g} in [{lo}, {hi}]", m, _inside(m, lo, hi), f"[{lo}, {hi}]"))
    return checks


def summarize(results: ResultSet) -> dict:
    """Median and IQR of the primary metric per (cell, algorithm), plus band checks."""
    if not results.rows:
        raise ValueError("no results to summarise")
    cells = []
    algs = list(dict.fromkeys(r["algorithm"] for r in results.rows))
    for c in results.cells():
        entry = {"cell": c, "cell_value": results.cell_value(c), "algorithms": {}}
        for alg in algs:
            st = _stats(results.values(alg, c))
            if st["n"] == 0 and not results.values(alg, c).size:
                continue
            if "sparsity" in results.columns:
                st["sparsity_median"] = _stats(results.values(alg, c, "sparsity"))["median"]
            if results.experiment == "kl_race":
                st["kl_median"] = {
                    k: _stats(results.values(alg, c, k))["median"] for k in results.columns if k.startswith("kl@")
                }
            entry["algorithms"][alg] = st
        cells.append(entry)
    return {
        "experiment": results.experiment,
        "metric": METRIC.get(results.experiment, "value"),
        "cells": cells,
        "criteria": evaluate_criteria(results),
    }


# thin named entry points, one per reproduction


def run_levy_experiment(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "levy"), out_dir, jobs)


def run_sparsity_sweep(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "sparsity"), out_dir, jobs)


def run_levy_proposal_control(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "levy_proposal_control"), out_dir, jobs)


def run_kl_race(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "kl_race"), out_dir, jobs)


def run_spectrum_experiment(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "spectrum"), out_dir, jobs)


def run_ratio_sweep(config: ExperimentConfig, out_dir=None, jobs=None) -> ResultSet:
    return run_experiment(_expect(config, "ratio_sweep"), out_dir, jobs)


def _expect(config: ExperimentConfig, kind: str) -> ExperimentConfig:
    if config.experiment != kind:
        raise ValueError(f"expected a {kind} config, got {config.experiment}")
    return config
