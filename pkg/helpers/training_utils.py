import os
import json
import time
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from constants.app_data import CHECKPOINT_FILE, METRIC_SCHEMA_VERSION, METRICS_FILE, TRAJECTORY_FILE
from constants.defaults import FINAL_WINDOW_FRACTION
from helpers.checkpoint_utils import save_checkpoint
from helpers.config_utils import EnvConfig, ExperimentConfig
from helpers.explore_utils import WarmupPolicy
from helpers.learner_utils import QTable, greedy_action, new_run_state, train_step
from helpers.quantile_utils import NEUTRAL, RiskInterval


STREAM_NAMES = ("env", "policy", "learner", "eval")


@dataclass(frozen=True)
class MetricRow:
    run_seed: int
    t: int
    episode_index: int
    episode_return: float
    alpha: float
    beta: float
    buffer_size: int
    mean_loss: float
    epsilon: Optional[float] = None
    captures: Dict[str, int] = field(default_factory=dict)
    wall_clock_ms: Optional[int] = None

    def to_record(self):
        return {
            "type": "episode",
            "schema_version": METRIC_SCHEMA_VERSION,
            "run_seed": self.run_seed,
            "t": self.t,
            "episode_index": self.episode_index,
            "episode_return": self.episode_return,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "beta": self.beta,
            "buffer_size": self.buffer_size,
            "mean_loss": self.mean_loss,
            "captures": self.captures,
            "wall_clock_ms": self.wall_clock_ms,
        }


def rng_streams(seed) -> Dict[str, np.random.Generator]:
    """Independent generators for env, policy, learner and eval, all derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}


def _dumps(record):
    return json.dumps(record, sort_keys=False, allow_nan=False) + "\n"


def header_record(cfg: ExperimentConfig, seed):
    return {"type": "header", "schema_version": METRIC_SCHEMA_VERSION, "seed": seed, "config": cfg.to_dict()}


def evaluate(tables: List[QTable], env_cfg: EnvConfig, episodes, r: RiskInterval = NEUTRAL, seed=0):
    """
    Greedy rollouts at a fixed risk interval, without exploration or learning.

    Args:
        tables (list): One table per agent
        env_cfg (EnvConfig): Environment to build
        episodes (int): Number of episodes
        r (RiskInterval): Interval used for action scores
        seed (int): Seed of the evaluation generator

    Returns:
        tuple: (mean, sd) of the episode returns
    """
    if episodes < 1:
        raise ValueError(f"Evaluation needs at least one episode, got {episodes}")
    rng = np.random.default_rng(seed)
    env = env_cfg.make()
    returns = []
    for _ in range(episodes):
        observations = env.reset(int(rng.integers(2 ** 63)))
        total, done = 0.0, False
        while not done:
            actions = [greedy_action(table, obs, r, rng) for table, obs in zip(tables, observations)]
            result = env.step(actions)
            total += result.team_reward
            observations, done = result.observations, result.done
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


def _trajectory_line(env, fragment):
    record = {
        "t": fragment["t"],
        "actions": fragment["actions"],
        "reward": fragment["reward"],
        "done": fragment["done"],
        "captures": fragment["info"],
        "alpha": fragment["interval"].alpha,
        "beta": fragment["interval"].beta,
    }
    if hasattr(env, "rng_draws"):
        record["rng_draws_consumed"] = env.rng_draws
    return _dumps(record)


def run_training(cfg: ExperimentConfig, seed, out_dir=None, on_episode=None):
    """
    Train one seed end to end and write its metric stream and checkpoint.

    The metric file starts with the header (resolved config and seed); each
    finished episode adds one row and every eval_every steps an evaluation
    record follows, at the scheduled interval and at [0, 1].

    Returns:
        list: MetricRow objects in episode order
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    streams = rng_streams(seed)

    env = cfg.env.make()
    policy = WarmupPolicy(cfg.policy.make(), cfg.warmup_steps, cfg.warmup_source)
    state = new_run_state(env, cfg.learner, streams["env"], streams["policy"], streams["learner"])

    metrics_path = os.path.join(out_dir, METRICS_FILE.format(seed=seed))
    trajectory_path = os.path.join(out_dir, TRAJECTORY_FILE.format(seed=seed))
    logging.info(f"Run '{cfg.name}' seed {seed}: {cfg.policy.kind} on {cfg.env.kind} for {cfg.total_steps} steps")

    rows = []
    start = time.perf_counter()
    trajectory_file = open(trajectory_path, "w", encoding="utf-8", newline="\n") if cfg.dump_trajectories else None
    try:
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(_dumps(header_record(cfg, seed)))
            for t in range(cfg.total_steps):
                fragment = train_step(state, policy, t)
                if trajectory_file:
                    trajectory_file.write(_trajectory_line(env, fragment))

                if fragment["done"]:
                    logged = policy.log_fields(t)
                    interval = fragment["interval"]
                    row = MetricRow(
                        run_seed=seed,
                        t=t + 1,
                        episode_index=fragment["episode_index"],
                        episode_return=float(fragment["episode_return"]),
                        alpha=interval.alpha,
                        beta=interval.beta,
                        buffer_size=fragment["buffer_size"],
                        mean_loss=fragment["mean_loss"],
                        epsilon=logged.get("epsilon"),
                        captures=fragment["captures"],
                        wall_clock_ms=int((time.perf_counter() - start) * 1000) if cfg.record_wall_clock else None,
                    )
                    rows.append(row)
                    f.write(_dumps(row.to_record()))
                    if on_episode:
                        on_episode(row)

                if cfg.eval_every and cfg.eval_episodes and (t + 1) % cfg.eval_every == 0:
                    f.write(_dumps(evaluation_record(state.tables, cfg, policy.interval_at(t + 1), t + 1,
                                                     int(streams["eval"].integers(2 ** 63)))))
                    f.flush()
    finally:
        if trajectory_file:
            trajectory_file.close()

    checkpoint_path = os.path.join(out_dir, CHECKPOINT_FILE.format(seed=seed))
    save_checkpoint(checkpoint_path, state.tables, cfg.to_dict(), seed, policy.interval_at(cfg.total_steps))
    logging.info(f"Run '{cfg.name}' seed {seed} finished: {len(rows)} episodes, {state.updates} updates, "
                 f"{len(state.tables[0])} keys in the first table")
    return rows


def evaluation_record(tables, cfg: ExperimentConfig, r: RiskInterval, t, eval_seed):
    mean, sd = evaluate(tables, cfg.env, cfg.eval_episodes, r, eval_seed)
    neutral_mean, neutral_sd = evaluate(tables, cfg.env, cfg.eval_episodes, NEUTRAL, eval_seed)
    logging.info(f"Eval at t={t}: {mean:.3f} +/- {sd:.3f} at [{r.alpha:.3f}, {r.beta:.3f}], "
                 f"{neutral_mean:.3f} +/- {neutral_sd:.3f} risk-neutral")
    return {
        "type": "eval",
        "schema_version": METRIC_SCHEMA_VERSION,
        "t": t,
        "alpha": r.alpha,
        "beta": r.beta,
        "mean": mean,
        "sd": sd,
        "neutral_mean": neutral_mean,
        "neutral_sd": neutral_sd,
        "episodes": cfg.eval_episodes,
    }


def read_metrics(path):
    """Parse a metric file into (header, episode rows, eval rows); a torn last line is ignored."""
    header, episodes, evals = None, [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.endswith("\n"):
                break
            record = json.loads(line)
            if record["type"] == "header":
                header = record
            elif record["type"] == "episode":
                episodes.append(record)
            elif record["type"] == "eval":
                evals.append(record)
    return header, episodes, evals


def final_window_mean(rows, total_steps, fraction=None, window_steps=None):
    """
    Mean episode return over the episodes ending in the last stretch of training.

    Either `window_steps` or a `fraction` of total_steps sets the stretch.
    """
    if window_steps is None:
        window_steps = max(1, int(round(total_steps * (FINAL_WINDOW_FRACTION if fraction is None else fraction))))
    start = total_steps - window_steps
    returns = [_get(row, "episode_return") for row in rows if _get(row, "t") > start]
    if not returns:
        return float("nan")
    return float(np.mean(returns))


def _get(row, name):
    return row[name] if isinstance(row, dict) else getattr(row, name)
