import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from helpers.learner_utils import QTable, argmax_random_tie, greedy_action
from helpers.quantile_utils import (
    NEUTRAL,
    RiskInterval,
    RiskLevel,
    left_truncated_variances,
    risk_level_to_interval,
)


RISK_PRESETS: Dict[str, Dict[str, RiskInterval]] = {
    "iqn": {
        "averse": RiskInterval(0.0, 0.25),
        "neutral": RiskInterval(0.0, 1.0),
        "seeking": RiskInterval(0.75, 1.0),
    },
    "drima": {
        "averse": RiskInterval(0.0, 0.1),
        "neutral": RiskInterval(0.4, 0.5),
        "seeking": RiskInterval(0.9, 1.0),
    },
}
"""
Static risk anchors.
"iqn" holds the averse/neutral/seeking sampling ranges of the quantile
hosts; "drima" the narrow windows used with window-style hosts.
"""

AVERSE = RISK_PRESETS["iqn"]["averse"]
SEEKING = RISK_PRESETS["iqn"]["seeking"]


#region Schedules
@dataclass(frozen=True)
class EpsilonSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.05
    anneal_steps: int = 50000

    def __post_init__(self):
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise ValueError(f"Epsilon schedule needs 0 <= eps_end <= eps_start <= 1, "
                             f"got {self.eps_start} -> {self.eps_end}")
        if self.anneal_steps < 1:
            raise ValueError(f"anneal_steps must be at least 1, got {self.anneal_steps}")


@dataclass(frozen=True)
class RoeSchedule:
    """Linear risk-level schedule from omega_0 to omega_k over k steps."""
    omega_0: float = 1.0
    omega_k: float = 0.0
    k: int = 100000

    def __post_init__(self):
        RiskLevel(self.omega_0)
        RiskLevel(self.omega_k)
        if self.k < 1:
            raise ValueError(f"Schedule length k must be at least 1, got {self.k}")

    @property
    def delta(self) -> float:
        return (self.omega_0 - self.omega_k) / self.k

    def level_at(self, t) -> float:
        if t >= self.k:
            return self.omega_k
        return self.omega_0 - t * (self.omega_0 - self.omega_k) / self.k

    def interval_at(self, t) -> RiskInterval:
        return risk_level_to_interval(self.level_at(t))


@dataclass(frozen=True)
class TwoPhaseSchedule:
    """
    (alpha, beta) walks start -> (0, 1) -> (0, final_beta).

    The k steps are split between the two legs in proportion to how far
    each leg moves its parameter; the first leg keeps at least one step
    whenever start_alpha > 0.    final_beta = 1 leaves the second leg empty.
    """
    k: int = 100000
    final_beta: float = 0.25
    start_alpha: float = 0.99

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"Schedule length k must be at least 1, got {self.k}")
        RiskInterval(self.start_alpha, 1.0)
        RiskInterval(0.0, self.final_beta)

    @property
    def waypoints(self) -> Tuple[RiskInterval, RiskInterval, RiskInterval]:
        return (RiskInterval(self.start_alpha, 1.0), RiskInterval(0.0, 1.0), RiskInterval(0.0, self.final_beta))

    @property
    def phase_one_steps(self) -> int:
        total = self.start_alpha + (1.0 - self.final_beta)
        if self.start_alpha == 0:
            return 0
        return max(1, int(round(self.k * self.start_alpha / total)))

    def interval_at(self, t) -> RiskInterval:
        start, middle, final = self.waypoints
        k1 = self.phase_one_steps
        if t >= self.k:
            return final
        if t < k1:
            return RiskInterval(self.start_alpha * (1.0 - t / k1), 1.0)
        k2 = self.k - k1
        if t == k1 or k2 == 0:
            return middle
        return RiskInterval(0.0, 1.0 - (1.0 - self.final_beta) * (t - k1) / k2)


@dataclass(frozen=True)
class SteppedSchedule:
    """Fixed-width window sliding from `start` to `end` in equal increments spread over k steps."""
    start: Tuple[float, float] = (0.9, 1.0)
    end: Tuple[float, float] = (0.4, 0.5)
    increment: float = 0.1
    k: int = 100000

    def __post_init__(self):
        upper, lower = RiskInterval(*self.start), RiskInterval(*self.end)
        if abs((upper.beta - upper.alpha) - (lower.beta - lower.alpha)) > 1e-12:
            raise ValueError(f"Stepped windows must share a width, got {self.start} and {self.end}")
        if self.increment <= 0 or self.k < 1:
            raise ValueError(f"Stepped schedule needs a positive increment and k >= 1, got {self.increment}, {self.k}")

    @property
    def n_shifts(self) -> int:
        return max(1, int(round(abs(self.start[0] - self.end[0]) / self.increment)))

    def interval_at(self, t) -> RiskInterval:
        m = self.n_shifts
        i = m if t >= self.k else (t * m) // self.k
        if i == 0:
            return RiskInterval(*self.start)
        if i >= m:
            return RiskInterval(*self.end)
        alpha = self.start[0] + (self.end[0] - self.start[0]) * i / m
        beta = self.start[1] + (self.end[1] - self.start[1]) * i / m
        return RiskInterval(alpha, beta)


@dataclass(frozen=True)
class DltvConfig:
    c: float = 50.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError(f"DLTV coefficient must be nonnegative, got {self.c}")


def epsilon_at(s: EpsilonSchedule, t) -> float:
    if t >= s.anneal_steps:
        return s.eps_end
    return s.eps_start + (s.eps_end - s.eps_start) * t / s.anneal_steps


def roe_interval_at(s: RoeSchedule, t) -> RiskInterval:
    """Closed form of the risk-level recurrence omega_{t+1} = omega_t - delta, clamped at omega_k."""
    return s.interval_at(t)


def two_phase_interval_at(s: TwoPhaseSchedule, t) -> RiskInterval:
    return s.interval_at(t)
#endregion


#region Selectors
def select_epsilon_greedy(table: QTable, obs, t, s: EpsilonSchedule, rng) -> int:
    if rng.random() < epsilon_at(s, t):
        return int(rng.integers(table.n_actions))
    return greedy_action(table, obs, NEUTRAL, rng)


def dltv_scores(table: QTable, obs, t, cfg: DltvConfig) -> np.ndarray:
    """mean(d_a) + c * sqrt(log t / t) * sqrt(sigma^2_+(d_a)), with t clamped to 2."""
    t = max(t, 2)
    rows = table.peek(obs)
    bonus = cfg.c * math.sqrt(math.log(t) / t)
    return rows.mean(axis=-1) + bonus * np.sqrt(left_truncated_variances(rows))


def select_dltv(table: QTable, obs, t, cfg: DltvConfig, rng) -> int:
    return argmax_random_tie(dltv_scores(table, obs, t, cfg), rng)


def select_roe(table: QTable, obs, t, schedule, rng) -> int:
    """Greedy action at the interval the schedule gives for step t."""
    return greedy_action(table, obs, schedule.interval_at(t), rng)


def select_static_risk(table: QTable, obs, r: RiskInterval, rng) -> int:
    return greedy_action(table, obs, r, rng)
#endregion


#region Policies
class Policy:
    """
    Joint action selection for independent agents.

    One risk interval is computed per step and handed to every agent.
    """
    kind = "policy"

    def interval_at(self, t) -> RiskInterval:
        return NEUTRAL

    def learning_interval(self, t) -> RiskInterval:
        return self.interval_at(t)

    def select(self, table: QTable, obs, t, interval: RiskInterval, rng) -> int:
        raise NotImplementedError

    def act(self, tables: List[QTable], observations, t, rng):
        interval = self.interval_at(t)
        actions = [self.select(table, obs, t, interval, rng) for table, obs in zip(tables, observations)]
        return actions, interval

    def log_fields(self, t) -> dict:
        interval = self.interval_at(t)
        return {"alpha": interval.alpha, "beta": interval.beta}


class EpsilonGreedyPolicy(Policy):
    kind = "epsilon_greedy"

    def __init__(self, schedule: EpsilonSchedule):
        self.schedule = schedule

    def select(self, table, obs, t, interval, rng):
        return select_epsilon_greedy(table, obs, t, self.schedule, rng)

    def log_fields(self, t):
        return {"epsilon": epsilon_at(self.schedule, t)}


class DltvPolicy(Policy):
    kind = "dltv"

    def __init__(self, cfg: DltvConfig):
        self.cfg = cfg

    def select(self, table, obs, t, interval, rng):
        return select_dltv(table, obs, t, self.cfg, rng)


class StaticRiskPolicy(Policy):
    kind = "static_risk"

    def __init__(self, r: RiskInterval):
        self.r = r

    def interval_at(self, t):
        return self.r

    def select(self, table, obs, t, interval, rng):
        return select_static_risk(table, obs, interval, rng)


class RoePolicy(Policy):
    """Scheduled-risk optimism; works with any schedule exposing interval_at(t)."""

    def __init__(self, schedule, kind="roe_scalar"):
        self.schedule = schedule
        self.kind = kind

    def interval_at(self, t):
        return self.schedule.interval_at(t)

    def select(self, table, obs, t, interval, rng):
        return greedy_action(table, obs, interval, rng)


class WarmupPolicy(Policy):
    """
    Runs `inner` after `warmup_steps` of random (or epsilon-greedy) collection.

    The inner policy sees t - warmup_steps, so warmup consumes no schedule time.
    """

    def __init__(self, inner: Policy, warmup_steps=0, source="random", epsilon: EpsilonSchedule = None):
        if source not in ("random", "epsilon_greedy"):
            raise ValueError(f"Unknown warmup source '{source}'")
        self.inner = inner
        self.kind = inner.kind
        self.warmup_steps = warmup_steps
        self.source = source
        self.epsilon = epsilon or EpsilonSchedule()

    def in_warmup(self, t) -> bool:
        return t < self.warmup_steps

    def schedule_time(self, t) -> int:
        return max(0, t - self.warmup_steps)

    def interval_at(self, t):
        return self.inner.interval_at(self.schedule_time(t))

    def learning_interval(self, t):
        return self.inner.learning_interval(self.schedule_time(t))

    def act(self, tables, observations, t, rng):
        if not self.in_warmup(t):
            return self.inner.act(tables, observations, self.schedule_time(t), rng)
        if self.source == "random":
            actions = [int(rng.integers(table.n_actions)) for table in tables]
        else:
            actions = [select_epsilon_greedy(table, obs, t, self.epsilon, rng)
                       for table, obs in zip(tables, observations)]
        return actions, self.interval_at(t)

    def log_fields(self, t):
        return self.inner.log_fields(self.schedule_time(t))
#endregion


POLICY_DEFAULTS = {
    "epsilon_greedy": {"eps_start": 1.0, "eps_end": 0.05, "anneal_steps": 50000},
    "dltv": {"c": 50.0},
    "static_risk": {"preset": "neutral", "anchors": "iqn", "alpha": None, "beta": None},
    "roe_scalar": {"omega_0": 1.0, "omega_k": 0.0, "k": 100000},
    "roe_two_phase": {"k": 100000, "mode": "averse", "final_beta": None, "start_alpha": 0.99},
    "roe_stepped": {"k": 100000, "start": [0.9, 1.0], "end": [0.4, 0.5], "increment": 0.1},
}
"""
Parameter names and defaults of every policy kind.
Config validation rejects any parameter not listed here.
"""


def make_policy(kind: str, params: dict) -> Policy:
    """
    Build a policy from its kind and resolved parameter block.

    Args:
        kind (str): One of POLICY_DEFAULTS
        params (dict): Parameters; missing ones take the defaults

    Returns:
        Policy: The exploration policy
    """
    if kind not in POLICY_DEFAULTS:
        raise ValueError(f"Unknown policy kind '{kind}'")
    p = {**POLICY_DEFAULTS[kind], **params}

    if kind == "epsilon_greedy":
        return EpsilonGreedyPolicy(EpsilonSchedule(float(p["eps_start"]), float(p["eps_end"]), int(p["anneal_steps"])))
    if kind == "dltv":
        return DltvPolicy(DltvConfig(float(p["c"])))
    if kind == "static_risk":
        if p["alpha"] is not None or p["beta"] is not None:
            return StaticRiskPolicy(RiskInterval(float(p["alpha"] or 0.0), float(1.0 if p["beta"] is None else p["beta"])))
        if p["anchors"] not in RISK_PRESETS or p["preset"] not in RISK_PRESETS[p["anchors"]]:
            raise ValueError(f"Unknown risk preset '{p['anchors']}.{p['preset']}'")
        return StaticRiskPolicy(RISK_PRESETS[p["anchors"]][p["preset"]])
    if kind == "roe_scalar":
        return RoePolicy(RoeSchedule(float(p["omega_0"]), float(p["omega_k"]), int(p["k"])), kind)
    if kind == "roe_two_phase":
        final_beta = p["final_beta"]
        if final_beta is None:
            if p["mode"] not in ("averse", "neutral"):
                raise ValueError(f"Two-phase mode must be 'averse' or 'neutral', got '{p['mode']}'")
            final_beta = 0.25 if p["mode"] == "averse" else 1.0
        return RoePolicy(TwoPhaseSchedule(int(p["k"]), float(final_beta), float(p["start_alpha"])), kind)
    schedule = SteppedSchedule(tuple(float(v) for v in p["start"]), tuple(float(v) for v in p["end"]),
                               float(p["increment"]), int(p["k"]))
    logging.debug(f"Stepped schedule with {schedule.n_shifts} shifts over {schedule.k} steps")
    return RoePolicy(schedule, kind)
