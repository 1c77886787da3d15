import csv
import json

import numpy as np
import pytest

from asmfgp import bench
from asmfgp.bench import (
    COLUMNS,
    BenchConfig,
    BenchResult,
    cell_seed,
    read_results,
    run_bench,
    summarize,
    write_results,
)
from asmfgp.errors import ConfigError


def strip_clock(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    i = rows[0].index("wall_clock_s")
    return [r[:i] + r[i + 1:] for r in rows]


def tiny(**kw):
    base = dict(problems=["branin"], budgets=[12], models=["Ref", "Add"], replicates=2,
                n_starts=1, n_pool=60)
    base.update(kw)
    return BenchConfig(**base)


# --- running ---------------------------------------------------------------------

def test_cardinality(tmp_path):
    rows = run_bench(tiny(), tmp_path / "r.csv")
    assert len(rows) == 4
    with open(tmp_path / "r.csv") as fh:
        header = fh.readline().strip().split(",")
    assert tuple(header) == COLUMNS
    assert {r.model for r in rows} == {"Ref", "Add"}
    assert all(r.error == "" and r.rmse >= 0 and np.isfinite(r.score) for r in rows)


def test_repeat_runs_are_identical(tmp_path):
    run_bench(tiny(), tmp_path / "a.csv")
    run_bench(tiny(), tmp_path / "b.csv")
    assert strip_clock(tmp_path / "a.csv") == strip_clock(tmp_path / "b.csv")


def test_parallel_run_matches_serial(tmp_path):
    run_bench(tiny(), tmp_path / "a.csv", jobs=1)
    run_bench(tiny(), tmp_path / "b.csv", jobs=2)
    assert strip_clock(tmp_path / "a.csv") == strip_clock(tmp_path / "b.csv")


def test_rows_stable_under_config_reordering(tmp_path):
    a = run_bench(tiny(problems=["branin", "hartmann3"], models=["Ref", "Add"]), tmp_path / "a.csv")
    b = run_bench(tiny(problems=["hartmann3", "branin"], models=["Add", "Ref"]), tmp_path / "b.csv")
    key = lambda r: (r.problem, r.n, r.replicate, r.model, r.rmse, r.score, r.seed)
    assert sorted(map(key, a)) == sorted(map(key, b))


def test_metadata_sidecar(tmp_path):
    run_bench(tiny(), tmp_path / "r.csv")
    meta = json.load(open(tmp_path / "r.csv.meta.json"))
    assert meta["replicates"] == 2 and meta["config"]["problems"] == ["branin"]


def test_r_selected_only_for_active_subspace_models(tmp_path):
    models = ["Ref", "Iso", "AS", "MF", "ASMF", "n-MF", "n-ASMF"]
    rows = run_bench(tiny(models=models, replicates=1, budgets=[15]))
    for r in rows:
        assert r.error == ""
        if r.model in bench.AS_MODELS:
            assert isinstance(r.r_selected, int) and 1 <= r.r_selected <= 2
        else:
            assert r.r_selected is None


def test_failed_fit_becomes_error_row(monkeypatch):
    real = bench.fit_model

    def flaky(name, *args, **kwargs):
        if name == "Add":
            raise RuntimeError("boom")
        return real(name, *args, **kwargs)

    monkeypatch.setattr(bench, "fit_model", flaky)
    rows = run_bench(tiny(replicates=1))
    bad = [r for r in rows if r.model == "Add"][0]
    assert "boom" in bad.error and bad.rmse is None
    assert [r for r in rows if r.model == "Ref"][0].error == ""


def test_cell_seed_is_order_free():
    assert cell_seed(0, "branin", 50, 1) == cell_seed(0, "branin", 50, 1)
    assert len({cell_seed(0, "branin", 50, k) for k in range(20)}) == 20
    assert cell_seed(0, "branin", 50, 1) != cell_seed(1, "branin", 50, 1)


def test_reference_model_beats_trivial_predictor():
    row = run_bench(BenchConfig(problems=["gp_draw8"], budgets=[200], models=["Ref"],
                                replicates=1, n_starts=2))[0]
    assert row.error == "" and row.rmse < 1.0


# --- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"problems": []}, {"budgets": [0]}, {"budgets": [2000]}, {"models": ["GP"]},
    {"replicates": 0}, {"n_starts": 0},
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        tiny(**kw)


def test_config_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(tiny().to_dict()))
    assert BenchConfig.from_json(path) == tiny()
    path.write_text(json.dumps({"problems": ["branin"], "colour": 1}))
    with pytest.raises(ConfigError):
        BenchConfig.from_json(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        BenchConfig.from_json(path)
    with pytest.raises(ConfigError):
        BenchConfig.from_dict({"budgets": [10]})


# --- summaries -------------------------------------------------------------------

def result(model="Ref", rep=0, rmse=0.5, score=-1.0, error="", r=None):
    return BenchResult("p", 2, 10, rep, model, rmse, score, r, 0.1, 1, error)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_row_summary(tmp_path):
    write_results([result(rmse=0.25)], tmp_path / "r.csv")
    summarize(tmp_path / "r.csv", tmp_path / "s.csv")
    row = read_csv(tmp_path / "s.csv")[0]
    assert float(row["rmse_median"]) == float(row["rmse_q1"]) == float(row["rmse_q3"]) == 0.25


def test_median_of_three(tmp_path):
    rows = [result(rep=i, rmse=v) for i, v in enumerate([3.0, 1.0, 2.0])]
    write_results(rows, tmp_path / "r.csv")
    summarize(tmp_path / "r.csv", tmp_path / "s.csv")
    assert float(read_csv(tmp_path / "s.csv")[0]["rmse_median"]) == 2.0


def test_error_rows_are_excluded_and_counted(tmp_path):
    rows = [result(rep=0, rmse=1.0), result(rep=1, rmse=None, score=None, error="Boom: x")]
    write_results(rows, tmp_path / "r.csv")
    summarize(tmp_path / "r.csv", tmp_path / "s.csv")
    row = read_csv(tmp_path / "s.csv")[0]
    assert row["n_ok"] == "1" and row["n_failed"] == "1" and float(row["rmse_median"]) == 1.0


def test_score_floor_applies_to_plot_only(tmp_path):
    write_results([result(score=-12.0), result(model="AS", score=-2.0, r=3)], tmp_path / "r.csv")
    summarize(tmp_path / "r.csv", tmp_path / "s.csv", tmp_path / "plot.csv")
    raw = {r.model: r.score for r in read_results(tmp_path / "r.csv")}
    assert raw == {"Ref": -12.0, "AS": -2.0}
    plot = {(p["model"], p["metric"]): float(p["value"]) for p in read_csv(tmp_path / "plot.csv")}
    assert plot[("Ref", "score")] == -5.0 and plot[("AS", "score")] == -2.0
    summ = {s["model"]: s for s in read_csv(tmp_path / "s.csv")}
    assert float(summ["Ref"]["score_median"]) == -5.0 and float(summ["AS"]["r_median"]) == 3.0


def test_default_plot_path(tmp_path):
    write_results([result()], tmp_path / "r.csv")
    summarize(tmp_path / "r.csv", tmp_path / "s.csv")
    assert (tmp_path / "s_plot.csv").exists()


def test_schema_mismatch(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_results(tmp_path / "bad.csv")
