import itertools
import json

import numpy as np
import pytest

from mlscale.bench import (COLUMNS, FAILED, ConfigError, ExperimentConfig, ResultRow,
                           emit_results, expand_grid, format_params, read_results,
                           run_learning_curve)

SYN = {"n": 60, "p": 40, "rank": 3, "observed": 0.4, "seed": 2}


def _als_config(**kw):
    base = dict(task="complete_als", dataset="synthetic", grid=({"r": 3, "lam": 0.1},),
                ladder=(100, 200), synthetic=SYN)
    base.update(kw)
    return ExperimentConfig(**base)


def test_rows_in_ladder_then_grid_order():
    cfg = _als_config(grid=({"r": 2}, {"r": 3}))
    rows = run_learning_curve(cfg)
    assert [(r.train_size, r.params) for r in rows] == [
        (100, "r=2"), (100, "r=3"), (200, "r=2"), (200, "r=3")]
    assert all(r.metric_name == "test_rmse" and r.method == "als" for r in rows)


def test_deterministic_and_worker_invariant():
    a = run_learning_curve(_als_config())
    b = run_learning_curve(_als_config())
    c = run_learning_curve(_als_config(workers=3))
    key = lambda rows: [(r.train_size, r.params, r.metric_value) for r in rows]
    assert key(a) == key(b) == key(c)


def test_only_fit_is_timed():
    ticks = itertools.count()
    rows = run_learning_curve(_als_config(), clock=lambda: float(next(ticks)))
    # two clock reads per cell, bracketing the fit alone
    assert [r.fit_seconds for r in rows] == [1.0, 1.0]


def test_failed_cell_is_reported(tmp_path):
    pts = np.random.default_rng(0).standard_normal((40, 2))
    np.savetxt(tmp_path / "p.csv", pts, delimiter=",")
    cfg = ExperimentConfig("kmeans", str(tmp_path / "p.csv"), ({"k": 2}, {"k": 30}), (10, 36))
    rows = run_learning_curve(cfg)
    vals = [r.metric_value for r in rows]
    assert vals[1] == FAILED and rows[1].fit_seconds == 0.0
    assert all(isinstance(v, float) for v in (vals[0], vals[2], vals[3]))


def test_emit_and_read(tmp_path):
    rows = run_learning_curve(_als_config(ladder=(150,)))
    text = emit_results(rows, tmp_path / "r.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(COLUMNS) and len(lines) == 2
    emit_results(rows, tmp_path / "r.json", fmt="json")
    assert read_results(tmp_path / "r.csv") == read_results(tmp_path / "r.json") == rows
    assert json.loads((tmp_path / "r.json").read_text())[0]["train_size"] == 150
    with pytest.raises(ValueError):
        emit_results([])
    with pytest.raises(ValueError):
        emit_results(rows, fmt="xml")


def test_failed_value_round_trips(tmp_path):
    row = ResultRow("kmeans", "kmeans_p1", 5, "k=9", 0.0, "test_inertia_per_point", FAILED, 0, 1)
    emit_results([row], tmp_path / "f.csv")
    assert read_results(tmp_path / "f.csv") == [row]


def test_grid_expansion():
    assert expand_grid({"b": [1, 2], "a": 0}) == ({"a": 0, "b": 1}, {"a": 0, "b": 2})
    assert expand_grid([{"x": 1}, {"y": 2}]) == ({"x": 1}, {"y": 2})
    assert format_params({"lam": 0.1, "r": 8}) == "lam=0.1;r=8"
    with pytest.raises(ConfigError):
        expand_grid("r=8")


def test_config_validation():
    with pytest.raises(ConfigError):
        _als_config(task="pca")
    with pytest.raises(ConfigError):
        _als_config(ladder=(200, 100))
    with pytest.raises(ConfigError):
        _als_config(grid=())
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": "kmeans", "dataset": "x", "grid": {}, "ladder": [1],
                                    "color": "red"})
    with pytest.raises(ConfigError):
        run_learning_curve(_als_config(ladder=(10**6,)))


def test_toml_config(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "c.toml").write_text(
        'task = "complete_svt"\ndataset = "synthetic"\nladder = [0.5, 1.0]\n'
        '[grid]\nlam = [1.0, 3.0]\nrank_max = 5\n'
        '[synthetic]\nn = 50\np = 30\nrank = 2\nseed = 1\n')
    cfg = ExperimentConfig.from_toml(tmp_path / "d" / "c.toml")
    assert cfg.grid == ({"lam": 1.0, "rank_max": 5}, {"lam": 3.0, "rank_max": 5})
    rows = run_learning_curve(cfg.override(workers=2, seed=None))
    assert len(rows) == 4 and rows[0].method == "soft_impute_svd" and rows[0].workers == 2
    (tmp_path / "bad.toml").write_text("task = \n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(tmp_path / "bad.toml")


def test_relative_dataset_resolves_against_config(tmp_path):
    (tmp_path / "c.toml").write_text('task = "kmeans"\ndataset = "p.csv"\nladder = [5]\n'
                                     '[grid]\nk = 2\n')
    cfg = ExperimentConfig.from_toml(tmp_path / "c.toml")
    assert cfg.dataset == str(tmp_path / "p.csv")


def test_nmf_and_text_tasks(tmp_path):
    cfg = ExperimentConfig("nmf", "synthetic", ({"r": 3, "max_iter": 50},), (200,),
                           synthetic=dict(SYN, nonneg=True))
    (row,) = run_learning_curve(cfg)
    assert row.method == "nmf_multiplicative_ls_zero_fill" and np.isfinite(row.metric_value)
    corpus = "".join(f"{lab}\t{w} {w} mot{i}\n" for i in range(40)
                     for lab, w in [("a", "chien"), ("b", "voiture")])
    (tmp_path / "c.tsv").write_text(corpus)
    cfg = ExperimentConfig("textclass", str(tmp_path / "c.tsv"), ({"n_hash": 64},), (20, 60),
                           test_fraction=0.25)
    rows = run_learning_curve(cfg)
    assert [r.metric_value for r in rows] == [0.0, 0.0]
    assert rows[0].method == "ovr_logreg_batch_gradient"


@pytest.mark.slow
def test_ml100k_als_curve_non_increasing(ml100k_path):
    cfg = ExperimentConfig("complete_als", str(ml100k_path),
                           ({"r": 8, "lam": 0.01, "nonneg": True},), (30000, 60000, 90000))
    rmse = [r.metric_value for r in run_learning_curve(cfg)]
    assert all(b <= a + 0.01 for a, b in zip(rmse, rmse[1:])), rmse
