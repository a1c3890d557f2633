import json

import numpy as np
import pytest

from sampler_lab.analysis import kl_mode_divergence
from sampler_lab.config import ConfigError, ExperimentConfig, make_config
from sampler_lab.distributions import load_environment
from sampler_lab.experiments import (
    ResultSet,
    _run_task,
    evaluate_criteria,
    run_experiment,
    run_kl_race,
    run_levy_experiment,
    summarize,
)
from sampler_lab.samplers import read_trace_csv

SMALL = {"replicates": 2, "sampler": {"samples": 256}}


def small(kind, **extra):
    doc = {"experiment": kind, "master_seed": 3, **SMALL}
    for k, v in extra.items():
        if isinstance(v, dict):
            doc[k] = {**doc.get(k, {}), **v}
        else:
            doc[k] = v
    return ExperimentConfig.from_dict(doc)


def test_defaults_resolve():
    c = make_config("levy", master_seed=1)
    assert c.target == {"n_modes": 15, "r": 9.0, "d": 2, "sigma_target": 3.0}
    assert c.sampler["samples"] == 1024 and c.sampler["chains"] == 8
    assert c.sampler["ladder"] == [2.0**i for i in range(8)]
    assert c.replicates == 20
    s = make_config("spectrum", master_seed=1)
    assert s.sampler["chains"] == 2 and s.sampler["ladder"] == [1.0, 2.0] and s.target["d"] == 1
    r = make_config("ratio_sweep", master_seed=1)
    assert len(r.sweep["ratios"]) == 12 and r.sweep["ratios"][-1] == pytest.approx(100.0)
    assert make_config("sparsity", master_seed=1).sweep["r_values"] == [1, 2, 3, 5, 7, 9, 12, 16, 24, 40]


def test_schema_errors_name_the_field():
    with pytest.raises(ConfigError, match="sampler/samples"):
        make_config("levy", master_seed=1, sampler={"samples": 1})
    with pytest.raises(ConfigError, match="sampler/algorithms/0"):
        make_config("levy", master_seed=1, sampler={"algorithms": ["HMC"]})
    with pytest.raises(ConfigError, match="master_seed"):
        make_config("levy")
    with pytest.raises(ConfigError, match="sampler/ladder"):
        make_config("levy", master_seed=1, sampler={"ladder": [1, 2, 4], "chains": 2})
    with pytest.raises(ConfigError, match="experiment"):
        ExperimentConfig.from_dict({"experiment": "nope", "master_seed": 1})
    with pytest.raises(ConfigError, match="replicates"):
        make_config("levy", master_seed=1, replicates=0)


def test_explicit_ladder_sets_chain_count():
    c = make_config("levy", master_seed=1, sampler={"ladder": [1, 3, 9]})
    assert c.sampler["chains"] == 3


@pytest.mark.parametrize(
    "kind, cells, algs",
    [
        ("levy", 1, 3),
        ("kl_race", 1, 3),
        ("spectrum", 1, 3),
        ("ratio_sweep", 12, 3),
        ("sparsity", 10, 4),
        ("levy_proposal_control", 10, 1),
    ],
)
def test_row_counts(kind, cells, algs):
    extra = {"sweep": {"checkpoints": [16, 256]}} if kind == "kl_race" else {}
    res = run_experiment(small(kind, **extra))
    assert len(res) == 2 * cells * algs


def test_levy_outputs_and_determinism(tmp_path):
    cfg = small("levy")
    run_levy_experiment(cfg, tmp_path / "a", jobs=1)
    run_levy_experiment(cfg, tmp_path / "b", jobs=1)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for expected in ["results.csv", "summary.json", "env_0.json", "env_1.json", "trace_MC3_0.csv", "plotdata_powerlaw_MC3_0.csv", "config.json"]:
        assert expected in names
    assert "trace_MC3_1.csv" not in names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    header = (tmp_path / "a" / "plotdata_powerlaw_DS_0.csv").read_text().splitlines()[0]
    assert header == "logx,logy,cell_mean"


def test_seed_changes_results():
    a = run_experiment(small("spectrum"))
    b = run_experiment(small("spectrum", master_seed=4))
    assert [r["value"] for r in a.rows] != [r["value"] for r in b.rows]


def test_replicate_rows_independent_of_order():
    cfg = small("levy")
    full = run_experiment(cfg, jobs=1)
    d = cfg.to_dict()
    reversed_rows = [row for rep in (1, 0) for row in _run_task(d, 0, 9.0, rep)["rows"]]
    by_key = {(r["algorithm"], r["replicate"]): r for r in reversed_rows}
    for r in full.rows:
        assert by_key[(r["algorithm"], r["replicate"])] == r


def test_requested_algorithms_do_not_shift_streams():
    a = run_experiment(small("levy"))
    b = run_experiment(small("levy", sampler={"algorithms": ["MC3"]}))
    assert a.values("MC3").tolist() == b.values("MC3").tolist()


def test_parallel_matches_serial():
    cfg = small("spectrum")
    assert run_experiment(cfg, jobs=1).rows == run_experiment(cfg, jobs=2).rows


def test_kl_race_shares_the_saved_environment(tmp_path):
    cfg = small("kl_race", sweep={"checkpoints": [8, 64, 256]}, save_traces="all")
    res = run_kl_race(cfg, tmp_path)
    assert "kl@8" in res.columns and "kl@256" in res.columns
    for rep in range(2):
        env = load_environment(tmp_path / f"env_{rep}.json")
        for alg in ("DS", "RwM", "MC3"):
            pos = read_trace_csv(tmp_path / f"trace_{alg}_{rep}.csv")
            kl = kl_mode_divergence(pos, env, [256]).at(256)
            row = next(r for r in res.rows if r["algorithm"] == alg and r["replicate"] == rep)
            assert kl == row["kl@256"]


def test_spectrum_persists_plot_data(tmp_path):
    run_experiment(small("spectrum", full_chains=True), tmp_path)
    assert (tmp_path / "plotdata_spectrum_MC3_0.csv").exists()
    assert (tmp_path / "plotdata_hist_RwM_0.csv").exists()
    lines = (tmp_path / "trace_MC3_0.csv").read_text().splitlines()
    assert len(lines) == 1 + 256 * 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert {c["id"] for c in summary["criteria"]} == {"C2.mc3", "C2.ds", "C2.rwm"}


def _synthetic(values, experiment="spectrum", alg="DS"):
    rows = [
        {"experiment": experiment, "cell": 0, "cell_value": 3.0, "algorithm": alg, "replicate": i, "seed": i, "value": v}
        for i, v in enumerate(values)
    ]
    return ResultSet(experiment, rows, ["experiment", "cell", "cell_value", "algorithm", "replicate", "seed", "value"])


def test_summarize_single_replicate():
    s = summarize(_synthetic([0.42]))
    st = s["cells"][0]["algorithms"]["DS"]
    assert st["median"] == 0.42 and st["n"] == 1


def test_summarize_hand_computed():
    s = summarize(_synthetic([3.0, 1.0, 4.0, 1.0, 5.0, 9.0]))
    st = s["cells"][0]["algorithms"]["DS"]
    assert st["median"] == 3.5
    assert st["q25"] == 1.5 and st["q75"] == 4.75
    crit = s["criteria"]
    assert [c["id"] for c in crit] == ["C2.ds"]
    assert crit[0]["status"] == "FAIL"
    assert summarize(_synthetic([0.01, -0.03, 0.1]))["criteria"][0]["status"] == "PASS"
    with pytest.raises(ValueError):
        summarize(ResultSet("spectrum", [], []))


def test_sparsity_criteria_on_synthetic_rows():
    rows = []
    for cell, (r, mc3, ds) in enumerate([(1, 0.2, 0.0), (5, 0.9, 0.1), (9, 1.5, 0.2)]):
        for alg, v in (("MC3", mc3), ("DS", ds), ("RwM", 0.3)):
            rows.append({"cell": cell, "cell_value": r, "algorithm": alg, "replicate": 0, "value": v, "sparsity": 2.0 * r})
    res = ResultSet("sparsity", rows, ["cell", "value", "sparsity"], {"sweep": {"trend_max_r": 12}})
    status = {c["id"]: c["status"] for c in evaluate_criteria(res)}
    assert status == {"C4.trend": "PASS", "C4.mc3_band": "PASS", "C4.others_outside": "PASS"}


def test_wrong_runner_rejected():
    with pytest.raises(ValueError):
        run_kl_race(small("levy"))


def test_results_csv_round_trip(tmp_path):
    res = run_experiment(small("levy"))
    res.write_csv(tmp_path / "r.csv")
    back = ResultSet.read_csv(tmp_path / "r.csv", "levy")
    assert back.columns == res.columns
    assert np.allclose(back.values("MC3"), res.values("MC3"))
