"""
Predator & Prey grid world with the Hare variant.

Predators cooperate to capture randomly moving prey. Two predators
capturing the same prey together earn the pair reward and leave the game;
a lone capture attempt costs a penalty. Hares are cheap solo targets.

Coordinates are (row, col) with (0, 0) in the top-left corner; "up"
decreases the row.
"""
import logging
from dataclasses import dataclass, asdict, field
from typing import Dict, List

import numpy as np


# Actions
UP = 0
DOWN = 1
LEFT = 2
RIGHT = 3
STAY = 4
CAPTURE = 5
ACTIONS = [UP, DOWN, LEFT, RIGHT, STAY, CAPTURE]
ACTION_NAMES = ["up", "down", "left", "right", "stay", "capture"]
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1), STAY: (0, 0)}
NEIGHBOUR_OFFSETS = [(-1, 0), (1, 0), (0, -1), (0, 1)]

# Cell symbols
EMPTY = 0
WALL = 1
PREDATOR = 2
PREY = 3
HARE = 4
SELF = 5
SYMBOL_BYTES = np.frombuffer(b".#XoH@", dtype=np.uint8)
"""
Observation key byte for each cell symbol, indexed by symbol:
'.' empty, '#' wall or out of bounds, 'X' predator, 'o' prey, 'H' hare, '@' self.
Keys are the row-major window encoded with this map.
"""
_BYTE_TO_SYMBOL = {int(b): symbol for symbol, b in enumerate(SYMBOL_BYTES)}


@dataclass(frozen=True)
class PredatorPreyConfig:
    width: int = 10
    height: int = 10
    n_predators: int = 8
    n_prey: int = 8
    n_hares: int = 0
    pair_capture_reward: float = 10.0
    solo_capture_penalty: float = -2.0
    hare_reward: float = 1.0
    slip_prob: float = 0.1
    obs_radius: int = 2
    max_steps: int = 200
    solo_capture_removes_prey: bool = False
    hare_pair_capture: bool = False
    hares_move: bool = True

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Grid must be at least 1x1, got {self.width}x{self.height}")
        if min(self.n_predators, self.n_prey, self.n_hares) < 0:
            raise ValueError("Entity counts must be nonnegative")
        if self.n_predators + self.n_prey + self.n_hares > self.width * self.height:
            raise ValueError(f"{self.n_predators + self.n_prey + self.n_hares} entities do not fit "
                             f"on a {self.width}x{self.height} grid")
        if not (0.0 <= self.slip_prob <= 1.0):
            raise ValueError(f"slip_prob must lie in [0, 1], got {self.slip_prob}")
        if self.obs_radius < 1:
            raise ValueError(f"obs_radius must be at least 1, got {self.obs_radius}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")

    @property
    def window(self):
        return 2 * self.obs_radius + 1

    def to_dict(self):
        return asdict(self)


@dataclass
class StepResult:
    observations: List[bytes]
    team_reward: float
    done: bool
    info: Dict[str, int] = field(default_factory=dict)


def encode_observation(window: np.ndarray) -> bytes:
    """Row-major byte key of a square symbol window; injective and platform independent."""
    return SYMBOL_BYTES[np.asarray(window, dtype=np.intp)].tobytes()


def decode_observation(key: bytes) -> np.ndarray:
    size = int(round(len(key) ** 0.5))
    if size * size != len(key):
        raise ValueError(f"Observation key of length {len(key)} is not a square window")
    return np.array([_BYTE_TO_SYMBOL[b] for b in key], dtype=np.int8).reshape(size, size)


class PredatorPreyEnv:
    """
    Single-threaded Predator & Prey state machine.

    All randomness of an episode (placement, slips, prey moves) comes from
    the generator seeded by the episode seed, so a seed plus an action
    sequence pins the whole trajectory.
    """

    def __init__(self, cfg: PredatorPreyConfig):
        self.cfg = cfg
        self.n_agents = cfg.n_predators
        self.n_actions = len(ACTIONS)
        self.done = True
        self.t = 0
        self.rng_draws = 0
        self.up_attempts = 0
        self.slips = 0
        self.totals = {"pair": 0, "solo": 0, "hare": 0}

    #region State
    def reset(self, episode_seed):
        """
        Place predators, prey and hares on distinct random cells.

        Returns:
            list: One observation key per predator
        """
        cfg = self.cfg
        self.rng = np.random.default_rng(episode_seed)
        total = cfg.n_predators + cfg.n_prey + cfg.n_hares
        cells = self.rng.choice(cfg.width * cfg.height, size=total, replace=False)
        self.rng_draws = 1
        coords = [(int(c) // cfg.width, int(c) % cfg.width) for c in cells]

        self.predators = coords[:cfg.n_predators]
        self.prey = coords[cfg.n_predators:cfg.n_predators + cfg.n_prey]
        self.hares = coords[cfg.n_predators + cfg.n_prey:]
        self.predator_alive = [True] * cfg.n_predators
        self.prey_alive = [True] * cfg.n_prey
        self.hare_alive = [True] * cfg.n_hares
        self.t = 0
        self.done = False
        self.totals = {"pair": 0, "solo": 0, "hare": 0}
        self._rebuild_grid()
        return self.observations()

    def _rebuild_grid(self):
        r = self.cfg.obs_radius
        grid = np.full((self.cfg.height + 2 * r, self.cfg.width + 2 * r), WALL, dtype=np.int8)
        grid[r:r + self.cfg.height, r:r + self.cfg.width] = EMPTY
        self.grid = grid
        for pos, alive in zip(self.predators, self.predator_alive):
            if alive:
                self._set(pos, PREDATOR)
        for pos, alive in zip(self.prey, self.prey_alive):
            if alive:
                self._set(pos, PREY)
        for pos, alive in zip(self.hares, self.hare_alive):
            if alive:
                self._set(pos, HARE)

    def _set(self, pos, symbol):
        r = self.cfg.obs_radius
        self.grid[pos[0] + r, pos[1] + r] = symbol

    def _cell(self, pos):
        r = self.cfg.obs_radius
        if not (0 <= pos[0] < self.cfg.height and 0 <= pos[1] < self.cfg.width):
            return WALL
        return int(self.grid[pos[0] + r, pos[1] + r])

    def _is_free(self, pos):
        return self._cell(pos) == EMPTY

    def cell_index(self, pos):
        return pos[0] * self.cfg.width + pos[1]

    def active_agents(self):
        return list(self.predator_alive)

    def observations(self):
        """Local window around every predator, eliminated ones at their frozen position."""
        size = self.cfg.window
        keys = []
        for pos in self.predators:
            window = self.grid[pos[0]:pos[0] + size, pos[1]:pos[1] + size].copy()
            window[self.cfg.obs_radius, self.cfg.obs_radius] = SELF
            keys.append(encode_observation(window))
        return keys
    #endregion

    #region Dynamics
    def step(self, joint_action) -> StepResult:
        """
        Advance one step: predator moves, prey moves, then capture resolution.

        Args:
            joint_action: One action index per predator

        Returns:
            StepResult: observations, team reward, done flag and this step's capture counts
        """
        if self.done:
            raise RuntimeError("Step called on a finished episode; reset first")
        actions = [int(a) for a in joint_action]
        if len(actions) != self.n_agents:
            raise ValueError(f"Expected {self.n_agents} actions, got {len(actions)}")
        for agent, action in enumerate(actions):
            if action not in MOVES and action != CAPTURE:
                raise ValueError(f"Predator {agent} chose invalid action {action}")

        # Eliminated predators are immobile.
        actions = [a if alive else STAY for a, alive in zip(actions, self.predator_alive)]

        self._move_predators(actions)
        self._move_animals(self.prey, self.prey_alive, PREY)
        if self.cfg.hares_move:
            self._move_animals(self.hares, self.hare_alive, HARE)
        reward, captures = self._resolve_captures(actions)

        for key in captures:
            self.totals[key] += captures[key]
        self.t += 1
        self.done = not any(self.prey_alive) or self.t >= self.cfg.max_steps
        return StepResult(self.observations(), reward, self.done, captures)

    def _move_predators(self, actions):
        for i, action in enumerate(actions):
            if not self.predator_alive[i] or action in (STAY, CAPTURE):
                continue
            if action == UP and self.cfg.slip_prob > 0:
                self.up_attempts += 1
                self.rng_draws += 1
                if self.rng.random() < self.cfg.slip_prob:
                    self.slips += 1
                    continue
            dr, dc = MOVES[action]
            pos = self.predators[i]
            target = (pos[0] + dr, pos[1] + dc)
            if self._is_free(target):
                self._set(pos, EMPTY)
                self._set(target, PREDATOR)
                self.predators[i] = target

    def _move_animals(self, positions, alive, symbol):
        for j, pos in enumerate(positions):
            if not alive[j]:
                continue
            options = [pos] + [(pos[0] + dr, pos[1] + dc) for dr, dc in NEIGHBOUR_OFFSETS
                               if self._is_free((pos[0] + dr, pos[1] + dc))]
            self.rng_draws += 1
            target = options[int(self.rng.integers(len(options)))]
            if target != pos:
                self._set(pos, EMPTY)
                self._set(target, symbol)
                positions[j] = target

    def _adjacent(self, pos, positions, alive):
        # Lowest cell index among live targets in the 4-neighbourhood.
        neighbours = {(pos[0] + dr, pos[1] + dc) for dr, dc in NEIGHBOUR_OFFSETS}
        hits = [j for j, p in enumerate(positions) if alive[j] and p in neighbours]
        return min(hits, key=lambda j: self.cell_index(positions[j])) if hits else None

    def _resolve_captures(self, actions):
        cfg = self.cfg
        prey_claims, hare_claims = {}, {}
        for i, action in enumerate(actions):
            if action != CAPTURE or not self.predator_alive[i]:
                continue
            target = self._adjacent(self.predators[i], self.prey, self.prey_alive)
            if target is not None:
                prey_claims.setdefault(target, []).append(i)
                continue
            hare = self._adjacent(self.predators[i], self.hares, self.hare_alive)
            if hare is not None:
                hare_claims.setdefault(hare, []).append(i)

        reward = 0.0
        captures = {"pair": 0, "solo": 0, "hare": 0}
        for prey_index in sorted(prey_claims):
            captors = sorted(prey_claims[prey_index])
            if len(captors) >= 2:
                reward += cfg.pair_capture_reward
                captures["pair"] += 1
                self.prey_alive[prey_index] = False
                self._set(self.prey[prey_index], EMPTY)
                for i in captors[:2]:
                    self.predator_alive[i] = False
                    self._set(self.predators[i], EMPTY)
                extra = len(captors) - 2
            else:
                extra = 1
                if cfg.solo_capture_removes_prey:
                    self.prey_alive[prey_index] = False
                    self._set(self.prey[prey_index], EMPTY)
            reward += extra * cfg.solo_capture_penalty
            captures["solo"] += extra

        for hare_index in sorted(hare_claims):
            claimants = hare_claims[hare_index]
            paid = min(2, len(claimants)) if cfg.hare_pair_capture else 1
            reward += paid * cfg.hare_reward
            captures["hare"] += 1
            self.hare_alive[hare_index] = False
            self._set(self.hares[hare_index], EMPTY)

        if captures["pair"] or captures["solo"] or captures["hare"]:
            logging.debug(f"t={self.t} captures {captures} reward {reward}")
        return reward, captures
    #endregion

    def remaining(self):
        return {
            "predators": sum(self.predator_alive),
            "prey": sum(self.prey_alive),
            "hares": sum(self.hare_alive),
        }


def pp_reset(cfg: PredatorPreyConfig, episode_seed):
    """Build an environment for `cfg` and start an episode; returns (env, observations)."""
    env = PredatorPreyEnv(cfg)
    return env, env.reset(episode_seed)


def pp_step(env: PredatorPreyEnv, joint_action) -> StepResult:
    return env.step(joint_action)

