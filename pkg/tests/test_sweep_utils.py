import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import helpers.sweep_utils as sweep_utils
from helpers.config_utils import load_config, resolve_config
from helpers.learner_utils import LearnerConfig
from helpers.sweep_utils import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    aggregate,
    checkpoints,
    run_curve,
    sweep,
    sweep_tasks,
)
from helpers.training_utils import MetricRow, read_metrics, run_training


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def sweep_config(tmp_path, seeds=(0,), policies=None):
    raw = {
        "total_steps": 60,
        "eval_every": 0,
        "seeds": list(seeds),
        "output_dir": str(tmp_path),
        "learner": {"n_quantiles": 4, "batch_size": 4},
        "policy": {"kind": "roe_scalar", "k": 30},
    }
    if policies is not None:
        raw["sweep"] = {"policies": policies}
    return resolve_config(raw)


def rows_from(returns, step=1):
    return [MetricRow(0, (i + 1) * step, i, float(r), 0.0, 1.0, i + 1, 0.0) for i, r in enumerate(returns)]


#region Curves
def test_checkpoints():
    assert checkpoints(100) == [5 * i for i in range(1, 21)]
    assert checkpoints(7) == list(range(1, 8))
    assert checkpoints(0) == []


def test_run_curve_bucket_means():
    curve = run_curve(rows_from([1, 3, 5, 7]), 4, n_points=2)
    assert curve["t"].tolist() == [2, 4]
    assert curve["value"].tolist() == [2.0, 6.0]


def test_run_curve_carries_values_forward():
    # Episodes end at t = 10 and t = 40 only.
    rows = [MetricRow(0, 10, 0, 2.0, 0.0, 1.0, 1, 0.0), MetricRow(0, 40, 1, 8.0, 0.0, 1.0, 2, 0.0)]
    curve = run_curve(rows, 40, n_points=4)
    assert curve["t"].tolist() == [10, 20, 30, 40]
    assert curve["value"].tolist() == [2.0, 2.0, 2.0, 8.0]


def test_run_curve_before_first_episode_is_nan():
    curve = run_curve(rows_from([5], step=10), 10, n_points=2)
    assert math.isnan(curve["value"][0])
    assert curve["value"][1] == 5.0
#endregion


#region Tasks
def test_tasks_cover_the_grid(tmp_path):
    cfg = sweep_config(tmp_path, seeds=(0, 1, 2), policies=[
        {"kind": "epsilon_greedy"},
        {"kind": "roe_scalar", "name": "roe"},
        {"kind": "roe_scalar", "name": "roe", "k": 10},
    ])
    tasks = sweep_tasks(cfg, str(tmp_path))
    assert len(tasks) == 9
    assert sorted({name for _, name, _, _ in tasks}) == ["epsilon_greedy", "roe", "roe_2"]
    assert [seed for _, name, seed, _ in tasks if name == "roe_2"] == [0, 1, 2]
    assert all(run_cfg.policy.kind in ("epsilon_greedy", "roe_scalar") for run_cfg, _, _, _ in tasks)


def test_without_sweep_policies_the_main_policy_runs(tmp_path):
    tasks = sweep_tasks(sweep_config(tmp_path, seeds=(4,)), str(tmp_path))
    assert [(name, seed) for _, name, seed, _ in tasks] == [("roe_scalar", 4)]


def test_shipped_k_sweep_runs_one_band_per_k(tmp_path):
    cfg = load_config(CONFIG_DIR / "matrix_game_k_sweep.yaml")
    assert cfg.warmup_steps >= 1000
    assert [p.params["k"] for p in cfg.sweep_policies] == [2500, 5000, 10000, 20000]
    assert {p.kind for p in cfg.sweep_policies} == {"roe_scalar"}

    short = cfg.with_overrides(total_steps=40, warmup_steps=10, seeds=(0,),
                               learner=LearnerConfig(n_quantiles=4, batch_size=4))
    runs, summary = sweep(short, str(tmp_path))
    assert runs["policy"].tolist() == ["roe_k2500", "roe_k5000", "roe_k10000", "roe_k20000"]
    assert (runs["status"] == "ok").all()
    assert set(summary["policy"]) == set(runs["policy"])
#endregion


#region Aggregation
def test_single_run_passes_through(tmp_path):
    cfg = sweep_config(tmp_path)
    runs, summary = sweep(cfg, str(tmp_path))

    assert list(runs.columns) == RUN_COLUMNS
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert runs["status"].tolist() == ["ok"]
    assert runs["n_episodes"].tolist() == [60]

    _, episodes, _ = read_metrics(tmp_path / "roe_scalar" / "metrics_seed0.ndjson")
    curve = run_curve([MetricRow(0, e["t"], e["episode_index"], e["episode_return"], 0.0, 1.0, 0, 0.0)
                       for e in episodes], 60)
    assert summary["t"].tolist() == curve["t"].tolist()
    assert summary["n_runs"].tolist() == [1] * len(curve)
    np.testing.assert_allclose(summary["mean"], curve["value"])
    np.testing.assert_allclose(summary["p25"], curve["value"])
    np.testing.assert_allclose(summary["p75"], curve["value"])

    on_disk = pd.read_csv(tmp_path / "sweep_summary.csv")
    assert list(on_disk.columns) == SUMMARY_COLUMNS
    assert list(pd.read_csv(tmp_path / "sweep_runs.csv").columns) == RUN_COLUMNS


def test_identical_runs_collapse_the_band():
    curve = run_curve(rows_from([1, 2, 3, 4]), 4, n_points=4)
    results = [{"policy": "p", "seed": s, "status": "ok", "curve": curve} for s in range(3)]
    summary = aggregate(results)
    assert summary["n_runs"].tolist() == [3] * 4
    assert summary["mean"].tolist() == summary["p25"].tolist() == summary["p75"].tolist() == [1.0, 2.0, 3.0, 4.0]


def test_percentiles_match_raw_runs(tmp_path):
    cfg = sweep_config(tmp_path, seeds=(0, 1, 2, 3))
    _, summary = sweep(cfg, str(tmp_path))

    curves = []
    for seed in cfg.seeds:
        _, episodes, _ = read_metrics(tmp_path / "roe_scalar" / f"metrics_seed{seed}.ndjson")
        rows = [MetricRow(seed, e["t"], e["episode_index"], e["episode_return"], 0.0, 1.0, 0, 0.0) for e in episodes]
        curves.append(run_curve(rows, cfg.total_steps)["value"].to_numpy())
    stacked = np.vstack(curves)

    np.testing.assert_allclose(summary["mean"], stacked.mean(axis=0))
    np.testing.assert_allclose(summary["p25"], np.percentile(stacked, 25, axis=0))
    np.testing.assert_allclose(summary["p75"], np.percentile(stacked, 75, axis=0))


def test_failed_runs_are_recorded(tmp_path, monkeypatch):
    def flaky(cfg, seed, out_dir=None, on_episode=None):
        if seed == 1:
            raise RuntimeError("diverged")
        return run_training(cfg, seed, out_dir=out_dir, on_episode=on_episode)

    monkeypatch.setattr(sweep_utils, "run_training", flaky)
    runs, summary = sweep(sweep_config(tmp_path, seeds=(0, 1)), str(tmp_path))

    failed = runs[runs["seed"] == 1].iloc[0]
    assert failed["status"] == "failed"
    assert failed["error"] == "diverged"
    assert math.isnan(failed["final_return"])
    assert runs[runs["seed"] == 0].iloc[0]["status"] == "ok"
    assert set(summary["n_runs"]) == {1}


def test_all_failed_gives_empty_summary():
    results = [{"policy": "p", "seed": 0, "status": "failed", "curve": None}]
    summary = aggregate(results)
    assert summary.empty
    assert list(summary.columns) == SUMMARY_COLUMNS


@pytest.mark.slow
def test_worker_pool_matches_sequential(tmp_path):
    cfg = sweep_config(tmp_path, seeds=(0, 1))
    _, sequential = sweep(cfg, str(tmp_path / "seq"), jobs=1)
    _, parallel = sweep(cfg, str(tmp_path / "par"), jobs=2)
    pd.testing.assert_frame_equal(sequential, parallel)
#endregion
