import os
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

import yaml

from constants.app_data import CONFIG_SCHEMA_VERSION, DEFAULT_OUTPUT_DIR
from constants.defaults import (
    DEFAULT_SEEDS,
    EVAL_EPISODES,
    EVAL_EVERY,
    FULL_LENGTH_TOTAL_STEPS,
    MATRIX_TOTAL_STEPS,
    MATRIX_WARMUP_STEPS,
    PREDATOR_PREY_TOTAL_STEPS,
    PREDATOR_PREY_WARMUP_STEPS,
)
from helpers.explore_utils import POLICY_DEFAULTS, make_policy
from helpers.learner_utils import LearnerConfig
from helpers.matrix_game_utils import MatrixGameEnv, MatrixGameConfig, matrix_default_config
from helpers.predator_prey_utils import PredatorPreyConfig, PredatorPreyEnv


class ConfigError(ValueError):
    """Invalid experiment file; `key` is the dotted path of the offending entry."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = f" (key '{key}')" if key else ""
        where += f" at line {line}" if line is not None else ""
        super().__init__(f"{message}{where}")


TOP_LEVEL_KEYS = (
    "version", "name", "env", "learner", "policy", "total_steps", "warmup_steps", "warmup_source",
    "eval_every", "eval_episodes", "seeds", "output_dir", "record_wall_clock", "dump_trajectories", "sweep",
)

ENV_KINDS = ("matrix", "predator_prey")
WARMUP_SOURCES = ("random", "epsilon_greedy")


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    matrix: Optional[MatrixGameConfig] = None
    predator_prey: Optional[PredatorPreyConfig] = None

    def make(self):
        """Fresh environment for one run."""
        if self.kind == "matrix":
            return MatrixGameEnv(self.matrix)
        return PredatorPreyEnv(self.predator_prey)

    def to_dict(self):
        if self.kind == "matrix":
            return {"kind": "matrix", "matrix": self.matrix.to_dict()}
        return {"kind": "predator_prey", "predator_prey": self.predator_prey.to_dict()}


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    params: dict
    name: str = ""

    def make(self):
        return make_policy(self.kind, self.params)

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, **self.params}


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig
    learner: LearnerConfig
    policy: PolicyConfig
    total_steps: int
    warmup_steps: int
    eval_every: int
    eval_episodes: int
    seeds: Tuple[int, ...]
    output_dir: str
    version: int = CONFIG_SCHEMA_VERSION
    name: str = "experiment"
    warmup_source: str = "random"
    record_wall_clock: bool = False
    dump_trajectories: bool = False
    sweep_policies: Tuple[PolicyConfig, ...] = field(default_factory=tuple)

    def to_dict(self):
        """Resolved config as plain data, in a fixed key order."""
        return {
            "version": self.version,
            "name": self.name,
            "env": self.env.to_dict(),
            "learner": self.learner.to_dict(),
            "policy": self.policy.to_dict(),
            "total_steps": self.total_steps,
            "warmup_steps": self.warmup_steps,
            "warmup_source": self.warmup_source,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "record_wall_clock": self.record_wall_clock,
            "dump_trajectories": self.dump_trajectories,
            "sweep": {"policies": [p.to_dict() for p in self.sweep_policies]},
        }

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


#region Validation helpers
def _check_keys(block, allowed, prefix):
    if not isinstance(block, dict):
        raise ConfigError("Expected a mapping", key=prefix or None)
    for key in block:
        if key not in allowed:
            raise ConfigError("Unknown key", key=f"{prefix}.{key}" if prefix else str(key))


def _int(value, key, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"Expected an integer, got {value!r}", key=key)
    if value < minimum:
        raise ConfigError(f"Must be at least {minimum}, got {value}", key=key)
    return value


def _bool(value, key):
    if not isinstance(value, bool):
        raise ConfigError(f"Expected true or false, got {value!r}", key=key)
    return value


def _build(cls, values, key):
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), key=key) from e
#endregion


def _resolve_env(raw) -> EnvConfig:
    _check_keys(raw, ("kind", "matrix", "predator_prey"), "env")
    kind = raw.get("kind", "matrix")
    if kind not in ENV_KINDS:
        raise ConfigError(f"Unknown environment kind '{kind}', expected one of {ENV_KINDS}", key="env.kind")
    other = "predator_prey" if kind == "matrix" else "matrix"
    if raw.get(other) is not None:
        raise ConfigError(f"A {other} block does not apply to a {kind} environment", key=f"env.{other}")

    if kind == "matrix":
        block = raw.get("matrix") or {}
        _check_keys(block, ("n_agents", "n_actions", "payoff"), "env.matrix")
        default = matrix_default_config()
        game = _build(MatrixGameConfig, {
            "n_agents": _int(block.get("n_agents", default.n_agents), "env.matrix.n_agents", 1),
            "n_actions": _int(block.get("n_actions", default.n_actions), "env.matrix.n_actions", 1),
            "payoff": block.get("payoff", default.payoff.tolist()),
        }, "env.matrix.payoff")
        return EnvConfig("matrix", matrix=game)

    block = raw.get("predator_prey") or {}
    allowed = tuple(f.name for f in fields(PredatorPreyConfig))
    _check_keys(block, allowed, "env.predator_prey")
    return EnvConfig("predator_prey", predator_prey=_build(PredatorPreyConfig, dict(block), "env.predator_prey"))


def _resolve_learner(raw) -> LearnerConfig:
    raw = raw or {}
    allowed = tuple(f.name for f in fields(LearnerConfig))
    _check_keys(raw, allowed, "learner")
    return _build(LearnerConfig, dict(raw), "learner")


def _resolve_policy(raw, prefix) -> PolicyConfig:
    raw = dict(raw or {})
    kind = raw.pop("kind", "roe_scalar")
    name = raw.pop("name", kind)
    if kind not in POLICY_DEFAULTS:
        raise ConfigError(f"Unknown policy kind '{kind}', expected one of {tuple(POLICY_DEFAULTS)}", key=f"{prefix}.kind")
    _check_keys(raw, tuple(POLICY_DEFAULTS[kind]), prefix)
    params = {**POLICY_DEFAULTS[kind], **raw}
    try:
        make_policy(kind, params)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), key=prefix) from e
    return PolicyConfig(kind, params, str(name))


def resolve_config(raw: dict, full_length=False) -> ExperimentConfig:
    """
    Validate a parsed experiment file and fill in every default.

    Args:
        raw (dict): The YAML document
        full_length (bool): Use the full training length for Predator & Prey runs

    Returns:
        ExperimentConfig: The resolved config
    """
    raw = raw or {}
    _check_keys(raw, TOP_LEVEL_KEYS, "")

    version = raw.get("version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"Unsupported config version {version!r}, expected {CONFIG_SCHEMA_VERSION}", key="version")

    env = _resolve_env(raw.get("env") or {})
    is_matrix = env.kind == "matrix"

    default_total = MATRIX_TOTAL_STEPS if is_matrix else PREDATOR_PREY_TOTAL_STEPS
    total_steps = _int(raw.get("total_steps", default_total), "total_steps")
    if full_length and not is_matrix:
        total_steps = max(total_steps, FULL_LENGTH_TOTAL_STEPS)

    warmup_source = raw.get("warmup_source", "random")
    if warmup_source not in WARMUP_SOURCES:
        raise ConfigError(f"Unknown warmup source '{warmup_source}', expected one of {WARMUP_SOURCES}", key="warmup_source")

    seeds = raw.get("seeds", DEFAULT_SEEDS)
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("Expected a non-empty list of seeds", key="seeds")
    seeds = tuple(_int(s, f"seeds[{i}]") for i, s in enumerate(seeds))

    sweep = raw.get("sweep") or {}
    _check_keys(sweep, ("policies",), "sweep")
    sweep_policies = tuple(_resolve_policy(p, f"sweep.policies[{i}]") for i, p in enumerate(sweep.get("policies") or []))

    cfg = ExperimentConfig(
        version=version,
        name=str(raw.get("name", "experiment")),
        env=env,
        learner=_resolve_learner(raw.get("learner")),
        policy=_resolve_policy(raw.get("policy"), "policy"),
        total_steps=total_steps,
        warmup_steps=_int(raw.get("warmup_steps", MATRIX_WARMUP_STEPS if is_matrix else PREDATOR_PREY_WARMUP_STEPS),
                          "warmup_steps"),
        warmup_source=warmup_source,
        eval_every=_int(raw.get("eval_every", EVAL_EVERY), "eval_every"),
        eval_episodes=_int(raw.get("eval_episodes", EVAL_EPISODES), "eval_episodes"),
        seeds=seeds,
        output_dir=str(raw.get("output_dir", DEFAULT_OUTPUT_DIR)),
        record_wall_clock=_bool(raw.get("record_wall_clock", False), "record_wall_clock"),
        dump_trajectories=_bool(raw.get("dump_trajectories", False), "dump_trajectories"),
        sweep_policies=sweep_policies,
    )
    logging.info(f"Resolved config '{cfg.name}': env {env.kind}, policy {cfg.policy.kind}, "
                 f"{cfg.total_steps} steps, {len(cfg.seeds)} seed(s)")
    return cfg


def load_config(path, full_length=False) -> ExperimentConfig:
    """Read and resolve a YAML experiment file; parse failures carry the line number."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"Could not parse {path}: {getattr(e, 'problem', e)}",
                          line=mark.line + 1 if mark is not None else None) from e
    logging.info(f"Loaded config from {path}")
    return resolve_config(raw, full_length=full_length)


def dump_config(cfg: ExperimentConfig) -> str:
    """YAML text of the resolved config, keys in schema order."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def write_resolved_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_config(cfg))
    logging.info(f"Resolved config written to {path}")
