import logging
from dataclasses import dataclass
from itertools import product

import numpy as np

from helpers.predator_prey_utils import StepResult


# Single shared observation of the one-step game.
MATRIX_OBSERVATION = b"\x00"

DEFAULT_PAYOFF = [
    [8.0, -88.0, -88.0],
    [-88.0, -7.0, 5.0],
    [-88.0, 5.0, 5.0],
]
"""
Two-agent, three-action cooperative payoff.
Joint (a1, a1) pays the optimum 8, (a3, a3) the suboptimal 5, and the
per-agent means under a uniform co-player are (-56, -30, -26).
"""


@dataclass(frozen=True)
class MatrixGameConfig:
    """One-step cooperative payoff game; payoff[joint action] is the team reward."""
    n_agents: int
    n_actions: int
    payoff: np.ndarray

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        expected = (self.n_actions,) * self.n_agents
        if self.n_agents < 1 or self.n_actions < 1:
            raise ValueError(f"Matrix game needs at least one agent and one action, got "
                             f"{self.n_agents} agents, {self.n_actions} actions")
        if payoff.shape != expected:
            raise ValueError(f"Payoff shape {payoff.shape} does not match {expected}")
        if not np.all(np.isfinite(payoff)):
            raise ValueError("Payoff entries must be finite")
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)

    def to_dict(self):
        return {"n_agents": self.n_agents, "n_actions": self.n_actions, "payoff": self.payoff.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["n_agents"]), int(data["n_actions"]), np.array(data["payoff"], dtype=float))


def matrix_default_config() -> MatrixGameConfig:
    return MatrixGameConfig(2, 3, np.array(DEFAULT_PAYOFF))


MatrixGameSpec = MatrixGameConfig
matrix_default_spec = matrix_default_config


def matrix_step(game: MatrixGameConfig, joint_action):
    """
    Play the one-step game.

    Returns:
        tuple: (team reward, done) where done is always True
    """
    joint_action = tuple(int(a) for a in joint_action)
    if len(joint_action) != game.n_agents:
        raise ValueError(f"Expected {game.n_agents} actions, got {len(joint_action)}")
    for agent, action in enumerate(joint_action):
        if not (0 <= action < game.n_actions):
            raise ValueError(f"Agent {agent} chose invalid action {action}")
    return float(game.payoff[joint_action]), True


def marginal_means(game: MatrixGameConfig, agent=0) -> np.ndarray:
    """Mean reward of each of `agent`'s actions against uniformly random co-players."""
    axes = tuple(i for i in range(game.n_agents) if i != agent)
    return game.payoff.mean(axis=axes) if axes else game.payoff.copy()


def describe_game(game: MatrixGameConfig):
    """Log the optimum, the individually greedy joint action and per-agent marginals."""
    best = max(product(range(game.n_actions), repeat=game.n_agents), key=lambda joint: game.payoff[joint])
    greedy = tuple(int(np.argmax(marginal_means(game, agent))) for agent in range(game.n_agents))
    logging.info(f"Matrix game: optimum {game.payoff[best]} at {best}, "
                 f"marginal-greedy play {greedy} pays {game.payoff[greedy]}, "
                 f"marginals {marginal_means(game).tolist()}")
    return best, greedy


class MatrixGameEnv:
    """
    Episode wrapper around the payoff game with the same surface as the grid world.

    Every episode is one step; all agents see the same constant observation.
    """

    def __init__(self, game: MatrixGameConfig):
        self.game = game
        self.n_agents = game.n_agents
        self.n_actions = game.n_actions
        self.done = True

    def reset(self, episode_seed=None):
        self.done = False
        return [MATRIX_OBSERVATION] * self.n_agents

    def active_agents(self):
        return [True] * self.n_agents

    def step(self, joint_action):
        if self.done:
            raise RuntimeError("Step called on a finished episode; reset first")
        reward, self.done = matrix_step(self.game, joint_action)
        return StepResult([MATRIX_OBSERVATION] * self.n_agents, reward, True, {})
