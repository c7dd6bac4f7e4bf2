import json
import logging
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from helpers.quantile_utils import (
    NEUTRAL,
    QuantileDistribution,
    RiskInterval,
    project_values,
    range_means,
)


PROBABILITY_TOLERANCE = 1e-12
CONTRACTION_SLACK = 1e-9
DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITER = 10_000
RANDOM_MDP_GAMMAS = (0.5, 0.9, 0.99)

# A CDF value within this distance below a midpoint still counts as reaching it.
_CDF_SNAP = 1e-12

Policy = Union[str, Sequence[int]]
GREEDY = "greedy"


class ConvergenceError(RuntimeError):
    """Raised when fixed-point iteration runs out of iterations."""

    def __init__(self, last_distance, iterations):
        super().__init__(f"Fixed-point iteration did not converge after {iterations} iterations "
                         f"(last distance {last_distance:.3e})")
        self.last_distance = last_distance
        self.iterations = iterations


@dataclass(frozen=True)
class FiniteMDP:
    """
    Exact finite MDP with finite-support reward distributions.

    transition has shape (n_states, n_actions, n_states).
    reward_support[x][a] is a tuple of (value, prob) pairs.
    """
    transition: np.ndarray
    reward_support: Tuple[Tuple[Tuple[Tuple[float, float], ...], ...], ...]
    gamma: float

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=float)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValueError(f"Transition tensor must have shape (S, A, S), got {transition.shape}")
        if np.any(transition < 0):
            raise ValueError("Transition probabilities must be nonnegative")
        if np.any(np.abs(transition.sum(axis=2) - 1.0) > PROBABILITY_TOLERANCE):
            raise ValueError("Every transition row must sum to 1")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"Discount must satisfy 0 <= gamma < 1, got {self.gamma}")

        n_states, n_actions = transition.shape[:2]
        support = tuple(tuple(tuple((float(v), float(p)) for v, p in self.reward_support[x][a])
                              for a in range(n_actions))
                        for x in range(n_states))
        for x in range(n_states):
            for a in range(n_actions):
                probs = [p for _, p in support[x][a]]
                if not probs:
                    raise ValueError(f"Reward support at ({x}, {a}) is empty")
                if min(probs) < 0 or abs(sum(probs) - 1.0) > PROBABILITY_TOLERANCE:
                    raise ValueError(f"Reward probabilities at ({x}, {a}) must be nonnegative and sum to 1")

        transition.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward_support", support)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def expected_reward(self, x, a):
        return sum(v * p for v, p in self.reward_support[x][a])


@dataclass(frozen=True)
class QuantileTable:
    """Per-(state, action) quantile distributions, stored as one (S, A, N) array."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3:
            raise ValueError(f"Quantile table must have shape (S, A, N), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Quantile table entries must be finite")
        if np.any(np.diff(values, axis=2) < 0):
            raise ValueError("Quantile table entries must be sorted")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, n_states, n_actions, n_quantiles):
        return cls(np.zeros((n_states, n_actions, n_quantiles)))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_quantiles(self):
        return self.values.shape[2]

    def entry(self, x, a) -> QuantileDistribution:
        return QuantileDistribution(self.values[x, a])


@dataclass(frozen=True)
class RiskSchedulePlan:
    """Finite sequence of risk intervals applied one per iteration."""
    intervals: Tuple[RiskInterval, ...]

    def __post_init__(self):
        intervals = tuple(r if isinstance(r, RiskInterval) else RiskInterval(*r) for r in self.intervals)
        object.__setattr__(self, "intervals", intervals)

    def __len__(self):
        return len(self.intervals)


@dataclass
class CheckReport:
    """Result of one verification check; serialises to one NDJSON record."""
    check: str
    mdp_seed: Optional[int]
    trials: int
    passed: bool
    max_ratio: Optional[float] = None
    max_slack: Optional[float] = None
    details: List[dict] = field(default_factory=list)

    def to_record(self):
        record = asdict(self)
        record["pass"] = record.pop("passed")
        return record

    @classmethod
    def from_record(cls, record):
        record = dict(record)
        record["passed"] = record.pop("pass")
        return cls(**record)


#region Distributional Bellman operator
def quantile_projection(support, n_quantiles) -> QuantileDistribution:
    """
    Compress a finite distribution to N quantiles at the midpoints.

    theta_i = inf{y : tau_hat_i <= F(y)}, which is the W_1-optimal
    N-atom approximation.

    Args:
        support: Iterable of (value, prob) pairs, or a (values, probs) tuple of arrays
        n_quantiles (int): Number of output atoms

    Returns:
        QuantileDistribution: The compressed distribution
    """
    values, probs = _support_arrays(support)
    return QuantileDistribution(_project_support(values, probs, n_quantiles))


def _support_arrays(support):
    if isinstance(support, tuple) and len(support) == 2 and isinstance(support[0], np.ndarray):
        values, probs = support
    else:
        pairs = list(support)
        if not pairs:
            raise ValueError("Cannot project an empty support")
        values = np.array([v for v, _ in pairs], dtype=float)
        probs = np.array([p for _, p in pairs], dtype=float)
    if values.size == 0:
        raise ValueError("Cannot project an empty support")
    return values, probs


def _project_support(values, probs, n_quantiles):
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    cdf = np.cumsum(probs[order])
    taus = (2.0 * np.arange(1, n_quantiles + 1) - 1.0) / (2.0 * n_quantiles)
    idx = np.searchsorted(cdf, taus - _CDF_SNAP, side="left")
    return sorted_values[np.minimum(idx, sorted_values.size - 1)]


def _next_actions(mdp, projected, policy, r):
    if isinstance(policy, str):
        if policy != GREEDY:
            raise ValueError(f"Unknown policy mode {policy!r}")
        # Lowest index wins ties so the operator stays deterministic.
        return np.argmax(range_means(projected, r), axis=1)
    actions = np.asarray(policy, dtype=int)
    if actions.shape != (mdp.n_states,) or np.any(actions < 0) or np.any(actions >= mdp.n_actions):
        raise ValueError(f"Fixed policy must map each of {mdp.n_states} states to a valid action")
    return actions


def _backup_support(mdp, projected, next_actions, x, a):
    n = projected.shape[2]
    next_states = np.flatnonzero(mdp.transition[x, a] > 0)
    next_atoms = projected[next_states, next_actions[next_states]]            # (S', N)
    state_mass = mdp.transition[x, a, next_states][:, None] / n                # (S', 1)

    values, probs = [], []
    for reward, reward_prob in mdp.reward_support[x][a]:
        if reward_prob == 0:
            continue
        values.append((reward + mdp.gamma * next_atoms).ravel())
        probs.append(np.broadcast_to(reward_prob * state_mass, next_atoms.shape).ravel())
    return np.concatenate(values), np.concatenate(probs)


def bellman_backup(mdp: FiniteMDP, Z: QuantileTable, x, a, policy: Policy = GREEDY,
                   r: RiskInterval = NEUTRAL) -> QuantileDistribution:
    """
    One exact distributional backup at (x, a) of T composed with the risk projection.

    Next-state atoms come from the projected table; the next action is the
    fixed policy's or the argmax of range_mean at r.
    """
    projected = project_values(Z.values, r)
    next_actions = _next_actions(mdp, projected, policy, r)
    values, probs = _backup_support(mdp, projected, next_actions, x, a)
    return QuantileDistribution(_project_support(values, probs, Z.n_quantiles))


def apply_operator(mdp: FiniteMDP, Z: QuantileTable, policy: Policy = GREEDY,
                   r: RiskInterval = NEUTRAL) -> QuantileTable:
    """Apply the backup at every (state, action); entries are independent of each other."""
    _check_table_shape(mdp, Z)
    projected = project_values(Z.values, r)
    next_actions = _next_actions(mdp, projected, policy, r)
    out = np.empty_like(Z.values)
    for x in range(mdp.n_states):
        for a in range(mdp.n_actions):
            values, probs = _backup_support(mdp, projected, next_actions, x, a)
            out[x, a] = _project_support(values, probs, Z.n_quantiles)
    return QuantileTable(out)


def table_distance(Z1: QuantileTable, Z2: QuantileTable) -> float:
    """Supremum over (x, a) of the W_inf distance between entries."""
    if Z1.shape != Z2.shape:
        raise ValueError(f"Table shapes differ: {Z1.shape} vs {Z2.shape}")
    return float(np.max(np.abs(Z1.values - Z2.values)))


def fixed_point(mdp: FiniteMDP, policy: Policy = GREEDY, r: RiskInterval = NEUTRAL,
                tol: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER,
                n_quantiles: int = 32, initial: Optional[QuantileTable] = None):
    """
    Iterate the projected operator from the zero table until successive tables
    are closer than `tol`.

    Returns:
        tuple: (QuantileTable, iterations)
    """
    if tol <= 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    Z = initial if initial is not None else QuantileTable.zeros(mdp.n_states, mdp.n_actions, n_quantiles)
    distance = float("inf")
    for iteration in range(1, max_iter + 1):
        Z_next = apply_operator(mdp, Z, policy, r)
        distance = table_distance(Z_next, Z)
        Z = Z_next
        if distance < tol:
            logging.info(f"Fixed point at [{r.alpha}, {r.beta}] reached in {iteration} iterations")
            return Z, iteration
    raise ConvergenceError(distance, max_iter)


def _check_table_shape(mdp, Z):
    if Z.shape[:2] != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"Table shape {Z.shape[:2]} does not match MDP ({mdp.n_states}, {mdp.n_actions})")
#endregion


#region Random instances
def random_mdp(seed, n_states=4, n_actions=2, gamma=None, max_support=3) -> FiniteMDP:
    """
    Seeded random MDP for the property suites.

    Dirichlet(1, ..., 1) transition rows, reward supports of 1..max_support
    values uniform on [-1, 1] with Dirichlet weights, gamma drawn from
    {0.5, 0.9, 0.99} unless given.
    """
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transition = transition / transition.sum(axis=2, keepdims=True)
    support = []
    for _ in range(n_states):
        row = []
        for _ in range(n_actions):
            size = int(rng.integers(1, max_support + 1))
            values = rng.uniform(-1.0, 1.0, size=size)
            probs = rng.dirichlet(np.ones(size))
            probs[-1] = 1.0 - probs[:-1].sum()
            row.append(tuple(zip(values.tolist(), probs.tolist())))
        support.append(tuple(row))
    if gamma is None:
        gamma = float(rng.choice(RANDOM_MDP_GAMMAS))
    return FiniteMDP(transition, tuple(support), gamma)


def random_table(rng, n_states, n_actions, n_quantiles, scale=5.0) -> QuantileTable:
    return QuantileTable(np.sort(rng.normal(0.0, scale, size=(n_states, n_actions, n_quantiles)), axis=2))


def random_policy(rng, mdp):
    return rng.integers(0, mdp.n_actions, size=mdp.n_states)


def random_interval(rng) -> RiskInterval:
    alpha, beta = np.sort(rng.uniform(0.0, 1.0, size=2))
    return RiskInterval(float(alpha), float(beta))
#endregion


#region Checks
def check_nonexpansive(trials=200, n_quantiles=32, rng_seed=0) -> CheckReport:
    """
    Projection non-expansiveness: W_inf(P d1, P d2) <= W_inf(d1, d2) for
    random sorted pairs and random intervals.
    """
    rng = np.random.default_rng(rng_seed)
    max_slack = -np.inf
    violations = []
    for trial in range(trials):
        d1 = np.sort(rng.normal(0.0, 5.0, n_quantiles))
        d2 = np.sort(rng.normal(0.0, 5.0, n_quantiles))
        r = random_interval(rng) if trial % 10 else RiskInterval(*[float(rng.uniform())] * 2)
        before = float(np.max(np.abs(d1 - d2)))
        after = float(np.max(np.abs(project_values(d1, r) - project_values(d2, r))))
        slack = after - before
        max_slack = max(max_slack, slack)
        if slack > PROBABILITY_TOLERANCE:
            violations.append({"trial": trial, "alpha": r.alpha, "beta": r.beta, "slack": slack})
    return CheckReport("nonexpansive", rng_seed, trials, not violations,
                       max_slack=float(max_slack), details=violations)


def check_contraction(mdp: FiniteMDP, policy: Sequence[int], trials=200, rng_seed=0,
                      n_quantiles=8, r: Optional[RiskInterval] = None, mdp_seed=None) -> CheckReport:
    """
    d(T Z1, T Z2) <= gamma * d(Z1, Z2) + 1e-9 for random table pairs under a fixed policy.

    When r is None a fresh random interval is drawn per trial, so the check
    covers the projected operator too. Violations are reported, not raised.
    """
    if isinstance(policy, str):
        raise ValueError("Contraction is only checked for a fixed policy")
    rng = np.random.default_rng(rng_seed)
    max_ratio = 0.0
    violations = []
    for trial in range(trials):
        interval = r if r is not None else random_interval(rng)
        Z1 = random_table(rng, mdp.n_states, mdp.n_actions, n_quantiles)
        Z2 = random_table(rng, mdp.n_states, mdp.n_actions, n_quantiles)
        before = table_distance(Z1, Z2)
        after = table_distance(apply_operator(mdp, Z1, policy, interval),
                               apply_operator(mdp, Z2, policy, interval))
        if before > 0:
            max_ratio = max(max_ratio, after / before)
        if after > mdp.gamma * before + CONTRACTION_SLACK:
            violations.append({"trial": trial, "alpha": interval.alpha, "beta": interval.beta,
                               "before": before, "after": after})
    if violations:
        logging.warning(f"Contraction violated in {len(violations)} of {trials} trials (mdp seed {mdp_seed})")
    return CheckReport("contraction", mdp_seed, trials, not violations,
                       max_ratio=float(max_ratio), details=violations)


def check_fixed_point_uniqueness(mdp: FiniteMDP, policy: Sequence[int], r: RiskInterval = NEUTRAL,
                                 tol=DEFAULT_TOLERANCE, n_quantiles=8, rng_seed=0, mdp_seed=None) -> CheckReport:
    """Two fixed-point runs from different starting tables land within 2 * tol."""
    rng = np.random.default_rng(rng_seed)
    start = random_table(rng, mdp.n_states, mdp.n_actions, n_quantiles)
    Z_a, _ = fixed_point(mdp, policy, r, tol=tol, n_quantiles=n_quantiles)
    Z_b, _ = fixed_point(mdp, policy, r, tol=tol, n_quantiles=n_quantiles, initial=start)
    distance = table_distance(Z_a, Z_b)
    # Each run stops within gamma/(1-gamma) * tol of the true fixed point.
    bound = max(2.0 * tol, 2.0 * tol * mdp.gamma / (1.0 - mdp.gamma))
    return CheckReport("fixed_point_uniqueness", mdp_seed, 1, distance <= bound,
                       max_slack=float(distance - bound), details=[{"distance": distance, "bound": bound}])


def check_proposition_bound(mdp: FiniteMDP, plan: RiskSchedulePlan, Z0: QuantileTable, policy: Sequence[int],
                            tol=1e-9, fp_tol=DEFAULT_TOLERANCE, max_iter=DEFAULT_MAX_ITER,
                            mdp_seed=None) -> CheckReport:
    """
    Drift bound of scheduled iteration against the moving fixed points.

    For Z_t = (T . P_t)(Z_{t-1}) checks, at every t,
        d(Z_t, Z*_t) <= sum_{i<t} gamma^(t-i) d(Z*_i, Z*_{i+1}) + gamma^t d(Z_0, Z*_1)
    with slack for the fixed-point solver's own error.
    """
    if len(plan) == 0:
        raise ValueError("Schedule plan must not be empty")
    if isinstance(policy, str):
        raise ValueError("The drift bound is only checked for a fixed policy")
    _check_table_shape(mdp, Z0)

    gamma = mdp.gamma
    n_quantiles = Z0.n_quantiles
    cache = {}
    fixed_points = []
    for interval in plan.intervals:
        if interval not in cache:
            cache[interval], _ = fixed_point(mdp, policy, interval, tol=fp_tol, max_iter=max_iter,
                                             n_quantiles=n_quantiles)
        fixed_points.append(cache[interval])

    # Distance of a computed fixed point from the exact one.
    fp_error = fp_tol * gamma / (1.0 - gamma) if gamma > 0 else 0.0
    gaps = [table_distance(fixed_points[i], fixed_points[i + 1]) for i in range(len(plan) - 1)]
    initial_gap = table_distance(Z0, fixed_points[0])

    Z = Z0
    rows = []
    max_slack = -np.inf
    for t in range(1, len(plan) + 1):
        Z = apply_operator(mdp, Z, policy, plan.intervals[t - 1])
        lhs = table_distance(Z, fixed_points[t - 1])
        drift = sum(gamma ** (t - i) * gaps[i - 1] for i in range(1, t))
        rhs = drift + gamma ** t * initial_gap
        weight = 1.0 + gamma ** t + 2.0 * sum(gamma ** (t - i) for i in range(1, t))
        allowance = tol + weight * fp_error
        slack = lhs - rhs - allowance
        max_slack = max(max_slack, slack)
        rows.append({"t": t, "alpha": plan.intervals[t - 1].alpha, "beta": plan.intervals[t - 1].beta,
                     "lhs": lhs, "rhs": rhs, "allowance": allowance, "holds": slack <= 0})

    passed = all(row["holds"] for row in rows)
    if not passed:
        logging.warning(f"Drift bound violated (mdp seed {mdp_seed}, max slack {max_slack:.3e})")
    return CheckReport("proposition_bound", mdp_seed, len(plan), passed,
                       max_slack=float(max_slack), details=rows)
#endregion


#region Battery
def two_phase_plan(steps=12, final_beta=0.25) -> RiskSchedulePlan:
    """Seeking start [1, 1], alpha down to 0, then beta down to final_beta."""
    half = max(1, steps // 2)
    intervals = [RiskInterval(1.0 - i / half, 1.0) for i in range(half + 1)]
    intervals += [RiskInterval(0.0, 1.0 - (1.0 - final_beta) * i / half) for i in range(1, half + 1)]
    return RiskSchedulePlan(tuple(intervals))


def run_battery(seed=0, trials=200, n_mdps=20, n_bound_cases=10, n_quantiles=8):
    """
    Run every verification check over seeded random MDPs.

    Returns:
        list: CheckReport objects, in a fixed order
    """
    reports = [check_nonexpansive(trials=trials, n_quantiles=32, rng_seed=seed)]

    for k in range(n_mdps):
        mdp_seed = seed * 1000 + k
        # The first instance pins the gamma = 0 corner.
        mdp = random_mdp(mdp_seed, n_states=3 + k % 3, gamma=0.0 if k == 0 else None)
        policy = random_policy(np.random.default_rng(mdp_seed), mdp)
        reports.append(check_contraction(mdp, policy, trials=trials, rng_seed=mdp_seed,
                                         n_quantiles=n_quantiles, mdp_seed=mdp_seed))

    for k in range(n_bound_cases):
        mdp_seed = seed * 1000 + 500 + k
        mdp = random_mdp(mdp_seed, n_states=3, gamma=(0.5, 0.9)[k % 2])
        rng = np.random.default_rng(mdp_seed)
        policy = random_policy(rng, mdp)
        Z0 = random_table(rng, mdp.n_states, mdp.n_actions, n_quantiles)
        if k == 0:
            plan = RiskSchedulePlan(tuple([RiskInterval(0.25, 1.0)] * 8))
        elif k % 2:
            plan = two_phase_plan()
        else:
            plan = RiskSchedulePlan(tuple(random_interval(rng) for _ in range(8)))
        reports.append(check_proposition_bound(mdp, plan, Z0, policy, mdp_seed=mdp_seed))
        if k < 3:
            reports.append(check_fixed_point_uniqueness(mdp, policy, n_quantiles=n_quantiles,
                                                        rng_seed=mdp_seed, mdp_seed=mdp_seed))
    return reports
#endregion


def write_reports(reports: List[CheckReport], path):
    """One JSON record per report, in battery order."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for report in reports:
            f.write(json.dumps(report.to_record(), sort_keys=False) + "\n")


def read_reports(path) -> List[CheckReport]:
    with open(path, "r", encoding="utf-8") as f:
        return [CheckReport.from_record(json.loads(line)) for line in f if line.strip()]
