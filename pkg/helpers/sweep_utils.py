import os
import logging
import traceback
from multiprocessing import Pool

import numpy as np
import pandas as pd

from constants.app_data import SWEEP_RUNS_FILE, SWEEP_SUMMARY_FILE
from helpers.config_utils import ExperimentConfig
from helpers.training_utils import final_window_mean, run_training


RUN_COLUMNS = ["policy", "seed", "status", "error", "n_episodes", "final_return"]
SUMMARY_COLUMNS = ["policy", "t", "n_runs", "mean", "p25", "p75"]
CURVE_POINTS = 20
"""
Number of shared checkpoints along the step axis used for summary curves.
"""


def checkpoints(total_steps, n_points=CURVE_POINTS):
    """Evenly spaced step checkpoints ending at total_steps."""
    if total_steps < 1:
        return []
    n_points = min(n_points, total_steps)
    return sorted({int(round(total_steps * (i + 1) / n_points)) for i in range(n_points)})


def run_curve(rows, total_steps, n_points=CURVE_POINTS) -> pd.DataFrame:
    """
    Mean episode return of the episodes ending in each checkpoint bucket.

    Buckets are (previous checkpoint, checkpoint]; an empty bucket carries
    the previous value forward.
    """
    frame = pd.DataFrame([{"t": r.t, "episode_return": r.episode_return} for r in rows], columns=["t", "episode_return"])
    points = checkpoints(total_steps, n_points)
    values, previous, last = [], 0, np.nan
    for point in points:
        bucket = frame[(frame["t"] > previous) & (frame["t"] <= point)]["episode_return"]
        if len(bucket):
            last = float(bucket.mean())
        values.append(last)
        previous = point
    return pd.DataFrame({"t": points, "value": values})


def _run_task(task):
    cfg, policy_name, seed, out_dir = task
    try:
        rows = run_training(cfg, seed, out_dir=out_dir)
        return {
            "policy": policy_name,
            "seed": seed,
            "status": "ok",
            "error": "",
            "n_episodes": len(rows),
            "final_return": final_window_mean(rows, cfg.total_steps),
            "curve": run_curve(rows, cfg.total_steps),
        }
    except Exception as e:
        logging.error(f"Sweep run {policy_name}/seed {seed} failed: {str(e)}")
        logging.error(traceback.format_exc())
        return {"policy": policy_name, "seed": seed, "status": "failed", "error": str(e),
                "n_episodes": 0, "final_return": np.nan, "curve": None}


def sweep_tasks(cfg: ExperimentConfig, out_dir):
    """(config, policy name, seed, run dir) for every point of the policy x seed grid."""
    policies = cfg.sweep_policies or (cfg.policy,)
    tasks, used = [], set()
    for policy in policies:
        name = policy.name or policy.kind
        suffix = 2
        while name in used:
            name = f"{policy.name or policy.kind}_{suffix}"
            suffix += 1
        used.add(name)
        for seed in cfg.seeds:
            run_cfg = cfg.with_overrides(policy=policy)
            tasks.append((run_cfg, name, seed, os.path.join(out_dir, name)))
    return tasks


def aggregate(results) -> pd.DataFrame:
    """Per-policy mean and 25/75 percentile bands of the surviving runs' curves."""
    curves = []
    for result in results:
        if result["status"] != "ok":
            continue
        curve = result["curve"].copy()
        curve["policy"] = result["policy"]
        curve["seed"] = result["seed"]
        curves.append(curve)
    if not curves:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    frame = pd.concat(curves, ignore_index=True)
    grouped = frame.groupby(["policy", "t"], sort=False)["value"]
    summary = pd.DataFrame({
        "n_runs": grouped.count(),
        "mean": grouped.mean(),
        "p25": grouped.quantile(0.25),
        "p75": grouped.quantile(0.75),
    }).reset_index()
    return summary[SUMMARY_COLUMNS]


def sweep(cfg: ExperimentConfig, out_dir=None, jobs=1):
    """
    Run the policy x seed grid and write the run table and the summary CSV.

    Args:
        cfg (ExperimentConfig): Config with seeds and sweep policies
        out_dir (str): Root output folder; one subfolder per policy
        jobs (int): Worker processes; 1 runs everything in this process

    Returns:
        tuple: (runs DataFrame, summary DataFrame)
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    tasks = sweep_tasks(cfg, out_dir)
    logging.info(f"Sweep '{cfg.name}': {len(tasks)} runs on {jobs} worker(s)")

    if jobs > 1:
        with Pool(jobs) as p:
            results = p.map(_run_task, tasks)
    else:
        results = [_run_task(task) for task in tasks]

    runs = pd.DataFrame([{k: r[k] for k in RUN_COLUMNS} for r in results], columns=RUN_COLUMNS)
    summary = aggregate(results)
    runs.to_csv(os.path.join(out_dir, SWEEP_RUNS_FILE), index=False, lineterminator="\n")
    summary.to_csv(os.path.join(out_dir, SWEEP_SUMMARY_FILE), index=False, lineterminator="\n")

    failed = runs[runs["status"] != "ok"]
    if len(failed):
        logging.warning(f"{len(failed)} of {len(runs)} sweep runs failed")
    logging.info(f"Sweep summary written to {os.path.join(out_dir, SWEEP_SUMMARY_FILE)}")
    return runs, summary
