import copy
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from constants.defaults import TABULAR_LEARNING_RATE
from helpers.quantile_utils import (
    QuantileDistribution,
    RiskInterval,
    huber_quantile_loss_and_grad,
    project_values,
    quantile_index,
    quantile_midpoints,
    range_means,
)


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.99
    learning_rate: float = TABULAR_LEARNING_RATE
    n_quantiles: int = 32
    huber_k: float = 1.0
    target_update_period: int = 200
    batch_size: int = 32
    buffer_capacity: int = 5000
    shared_table: bool = False
    episode_sampling: bool = False
    sample_taus: bool = False

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must satisfy 0 <= gamma < 1, got {self.gamma}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.n_quantiles < 2 or self.n_quantiles % 2:
            raise ValueError(f"n_quantiles must be a positive even number, got {self.n_quantiles}")
        if self.huber_k <= 0:
            raise ValueError(f"huber_k must be positive, got {self.huber_k}")
        for name in ("target_update_period", "batch_size", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")

    def to_dict(self):
        return asdict(self)


class QTable:
    """
    Observation-keyed table of per-action quantile distributions.

    Rows are (n_actions, n_quantiles) arrays. Unseen keys read as all-zero
    distributions; `row` materialises them, `peek` never writes.
    """

    def __init__(self, n_actions, n_quantiles):
        self.n_actions = n_actions
        self.n_quantiles = n_quantiles
        self.rows: Dict[bytes, np.ndarray] = {}
        self.visits: Dict[bytes, np.ndarray] = {}
        self._zeros = np.zeros((n_actions, n_quantiles))
        self._zeros.setflags(write=False)

    def __len__(self):
        return len(self.rows)

    def __contains__(self, key):
        return key in self.rows

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return (self.n_actions == other.n_actions and self.n_quantiles == other.n_quantiles
                and self.rows.keys() == other.rows.keys()
                and all(np.array_equal(self.rows[k], other.rows[k]) for k in self.rows))

    def peek(self, key) -> np.ndarray:
        return self.rows.get(key, self._zeros)

    def row(self, key) -> np.ndarray:
        if key not in self.rows:
            self.rows[key] = np.zeros((self.n_actions, self.n_quantiles))
            self.visits[key] = np.zeros(self.n_actions, dtype=np.int64)
        return self.rows[key]

    def get(self, key, action) -> QuantileDistribution:
        return QuantileDistribution(self.peek(key)[action])

    def set(self, key, action, values):
        values = np.sort(np.asarray(values, dtype=float))
        if values.shape != (self.n_quantiles,):
            raise ValueError(f"Expected {self.n_quantiles} quantiles, got {values.shape}")
        self.row(key)[action] = values

    def copy(self) -> "QTable":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class Transition:
    observations: Tuple[bytes, ...]
    actions: Tuple[int, ...]
    reward: float
    next_observations: Tuple[bytes, ...]
    done: bool
    active: Tuple[bool, ...] = ()

    def __post_init__(self):
        n = len(self.observations)
        if len(self.actions) != n or len(self.next_observations) != n:
            raise ValueError("Transition fields must have one entry per agent")
        if not np.isfinite(self.reward):
            raise ValueError(f"Transition reward must be finite, got {self.reward}")
        if not self.active:
            object.__setattr__(self, "active", (True,) * n)


class ReplayBuffer:
    """
    FIFO store of whole episodes, sampled by transition.

    Capacity counts episodes; the episode being collected is sampleable.
    """

    def __init__(self, capacity=5000):
        if capacity < 1:
            raise ValueError(f"Replay capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self.episodes: List[List[Transition]] = []
        self._lengths: List[int] = []
        self._flat: List[Transition] = []
        self._open = False

    def __len__(self):
        return len(self._flat)

    @property
    def n_episodes(self):
        return len(self.episodes)

    def add(self, transition: Transition):
        if not self._open:
            if len(self.episodes) == self.capacity:
                del self._flat[:self._lengths.pop(0)]
                self.episodes.pop(0)
            self.episodes.append([])
            self._lengths.append(0)
            self._open = True
        self.episodes[-1].append(transition)
        self._lengths[-1] += 1
        self._flat.append(transition)

    def end_episode(self):
        self._open = False

    def sample(self, batch_size, rng, episode_sampling=False) -> List[Transition]:
        """Uniform sample over stored transitions, or over episodes when `episode_sampling`."""
        if not self._flat:
            raise ValueError("Cannot sample from an empty replay buffer")
        if episode_sampling:
            batch = []
            while len(batch) < batch_size:
                batch.extend(self.episodes[int(rng.integers(len(self.episodes)))])
            return batch[:batch_size]
        return [self._flat[i] for i in rng.integers(len(self._flat), size=batch_size).tolist()]


#region Action selection and targets
def argmax_random_tie(scores: np.ndarray, rng) -> int:
    """Argmax with ties broken uniformly through `rng`; no draw is made without a tie."""
    best = np.flatnonzero(scores == scores.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def greedy_action(table: QTable, obs, r: RiskInterval, rng) -> int:
    """argmax_a of range_mean(table[obs, a], r), ties uniform."""
    return argmax_random_tie(range_means(table.peek(obs), r), rng)


def td_targets(target_table: QTable, rewards, next_observations, dones, r: RiskInterval,
               cfg: LearnerConfig, rng) -> np.ndarray:
    """
    Batched distributional TD targets, one row of N values per transition.

    reward + gamma * project(Z_target(x', a'), r) with a' greedy at r;
    terminal transitions target the reward alone.
    """
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    targets = np.repeat(rewards[:, None], cfg.n_quantiles, axis=1)
    live = np.flatnonzero(~dones)
    if live.size == 0:
        return targets

    next_rows = np.stack([target_table.peek(next_observations[b]) for b in live])
    scores = range_means(next_rows, r)
    next_actions = [argmax_random_tie(s, rng) for s in scores]
    next_atoms = next_rows[np.arange(live.size), next_actions]

    if cfg.sample_taus:
        taus = np.sort(rng.uniform(r.alpha, r.beta, size=next_atoms.shape), axis=1)
        bootstrap = np.take_along_axis(next_atoms, quantile_index(taus, cfg.n_quantiles), axis=1)
    else:
        bootstrap = project_values(next_atoms, r)
    targets[live] += cfg.gamma * bootstrap
    return targets


def td_target(reward, next_obs, done, target_table: QTable, r: RiskInterval, cfg: LearnerConfig, rng) -> np.ndarray:
    return td_targets(target_table, [reward], [next_obs], [done], r, cfg, rng)[0]
#endregion


#region Quantile regression updates
def _qr_gradients(theta: np.ndarray, targets: np.ndarray, cfg: LearnerConfig):
    n = theta.shape[-1]
    tau = quantile_midpoints(n)[None, :, None]
    delta = targets[:, None, :] - theta[:, :, None]
    loss, grad = huber_quantile_loss_and_grad(delta, tau, cfg.huber_k)
    return grad.sum(axis=2) / n, loss.sum(axis=(1, 2)) / (n * n)


def qr_update(table: QTable, obs, action, targets, cfg: LearnerConfig) -> float:
    """
    One quantile-regression step on table[obs, action] toward `targets`.

    Returns:
        float: The pre-update loss
    """
    return float(qr_update_batch(table, [obs], [action], np.asarray(targets, dtype=float)[None, :], cfg)[0])


def qr_update_batch(table: QTable, keys, actions, targets, cfg: LearnerConfig) -> np.ndarray:
    """
    One minibatch step: every (key, action) in the batch moves once, by the
    mean gradient of its samples.

    Returns:
        np.ndarray: The pre-update loss of each sample
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 2 or targets.shape[1] != table.n_quantiles:
        raise ValueError(f"Targets must have shape (B, {table.n_quantiles}), got {targets.shape}")
    if len(keys) != targets.shape[0] or len(actions) != targets.shape[0]:
        raise ValueError("keys, actions and targets must have the same length")

    slots: Dict[Tuple[bytes, int], int] = {}
    slot_of = np.array([slots.setdefault(pair, len(slots)) for pair in zip(keys, actions)], dtype=np.int64)
    pairs = list(slots)
    rows = [table.row(key) for key, _ in pairs]
    theta = np.stack([row[action] for row, (_, action) in zip(rows, pairs)])

    grad, losses = _qr_gradients(theta[slot_of], targets, cfg)
    counts = np.bincount(slot_of, minlength=len(pairs))
    summed = np.zeros_like(theta)
    np.add.at(summed, slot_of, grad)
    updated = np.sort(theta - cfg.learning_rate * summed / counts[:, None], axis=1)

    for row, (key, action), values, count in zip(rows, pairs, updated, counts):
        row[action] = values
        table.visits[key][action] += count
    return losses


def sync_target(table: QTable) -> QTable:
    """Deep snapshot of the live table."""
    return table.copy()
#endregion


#region Training step
@dataclass
class RunState:
    """Everything one training run owns: environment, tables, replay and RNG streams."""
    env: object
    cfg: LearnerConfig
    tables: List[QTable]
    targets: List[QTable]
    buffer: ReplayBuffer
    env_rng: np.random.Generator
    policy_rng: np.random.Generator
    learner_rng: np.random.Generator
    observations: Optional[List[bytes]] = None
    updates: int = 0
    episode_index: int = 0
    episode_return: float = 0.0
    episode_losses: List[float] = field(default_factory=list)
    episode_captures: Dict[str, int] = field(default_factory=dict)


def make_tables(n_agents, n_actions, cfg: LearnerConfig):
    """Per-agent tables, or one table shared by every agent when cfg.shared_table."""
    if cfg.shared_table:
        shared = QTable(n_actions, cfg.n_quantiles)
        return [shared] * n_agents
    return [QTable(n_actions, cfg.n_quantiles) for _ in range(n_agents)]


def sync_targets(tables: List[QTable]) -> List[QTable]:
    snapshots = {}
    return [snapshots.setdefault(id(table), sync_target(table)) for table in tables]


def new_run_state(env, cfg: LearnerConfig, env_rng, policy_rng, learner_rng) -> RunState:
    tables = make_tables(env.n_agents, env.n_actions, cfg)
    return RunState(env=env, cfg=cfg, tables=tables, targets=sync_targets(tables),
                    buffer=ReplayBuffer(cfg.buffer_capacity), env_rng=env_rng,
                    policy_rng=policy_rng, learner_rng=learner_rng)


def learn_from_batch(state: RunState, batch: List[Transition], r: RiskInterval) -> float:
    """TD targets and QR updates for every agent on a sampled batch; returns the mean loss."""
    cfg = state.cfg
    losses = []
    rewards = [tr.reward for tr in batch]
    dones = [tr.done for tr in batch]
    for agent, (table, target) in enumerate(zip(state.tables, state.targets)):
        mask = [b for b, tr in enumerate(batch) if tr.active[agent]]
        if not mask:
            continue
        targets = td_targets(target, [rewards[b] for b in mask],
                             [batch[b].next_observations[agent] for b in mask],
                             [dones[b] for b in mask], r, cfg, state.learner_rng)
        losses.extend(qr_update_batch(table, [batch[b].observations[agent] for b in mask],
                                      [batch[b].actions[agent] for b in mask], targets, cfg))
    return float(np.mean(losses)) if losses else 0.0


def train_step(state: RunState, policy, t: int) -> dict:
    """
    Act, store the transition, learn on one replay batch, refresh targets.

    `policy.act(tables, observations, t, rng)` returns the joint action and
    the single risk interval every agent used; `policy.learning_interval(t)`
    is the interval used for targets.

    Returns:
        dict: step fragment with reward, loss, interval and episode-end data
    """
    env = state.env
    if state.observations is None or env.done:
        state.observations = env.reset(int(state.env_rng.integers(2 ** 63)))
        state.episode_return = 0.0
        state.episode_losses = []
        state.episode_captures = {}

    active = tuple(env.active_agents())
    actions, interval = policy.act(state.tables, state.observations, t, state.policy_rng)
    result = env.step(actions)
    state.buffer.add(Transition(tuple(state.observations), tuple(int(a) for a in actions), float(result.team_reward),
                                tuple(result.observations), bool(result.done), active))
    if result.done:
        state.buffer.end_episode()

    batch = state.buffer.sample(state.cfg.batch_size, state.learner_rng, state.cfg.episode_sampling)
    loss = learn_from_batch(state, batch, policy.learning_interval(t))
    state.updates += 1
    if state.updates % state.cfg.target_update_period == 0:
        state.targets = sync_targets(state.tables)
        logging.debug(f"Target tables synced after {state.updates} updates")

    state.observations = result.observations
    state.episode_return += result.team_reward
    state.episode_losses.append(loss)
    for key, count in result.info.items():
        state.episode_captures[key] = state.episode_captures.get(key, 0) + count

    fragment = {
        "t": t,
        "actions": list(actions),
        "reward": result.team_reward,
        "loss": loss,
        "interval": interval,
        "done": result.done,
        "info": result.info,
    }
    if result.done:
        fragment.update({
            "episode_index": state.episode_index,
            "episode_return": state.episode_return,
            "mean_loss": float(np.mean(state.episode_losses)),
            "captures": dict(state.episode_captures),
            "buffer_size": len(state.buffer),
        })
        state.episode_index += 1
    return fragment
#endregion
