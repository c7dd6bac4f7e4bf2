from dataclasses import dataclass
from typing import Union

import numpy as np


# Snap applied before ceil() so tau*N values that land a few ulps above an
# integer still select the lower atom.
_INDEX_SNAP = 1e-12


@dataclass(frozen=True)
class QuantileDistribution:
    """
    A return distribution stored as N equally weighted Dirac atoms.

    The atoms are the values of the inverse CDF at the midpoints
    tau_hat_i = (2i - 1) / (2N). They are kept sorted and finite.
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise ValueError("A quantile distribution needs at least one atom")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"Quantile values must be finite, got {values}")
        if np.any(np.diff(values) < 0):
            raise ValueError(f"Quantile values must be sorted nondecreasing, got {values}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def midpoints(self) -> np.ndarray:
        return quantile_midpoints(self.n)

    def __eq__(self, other):
        if not isinstance(other, QuantileDistribution):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.all(self.values == other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"QuantileDistribution({self.values.tolist()})"


@dataclass(frozen=True)
class RiskInterval:
    """Sampling region [alpha, beta] of quantile fractions."""
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= self.beta <= 1.0):
            raise ValueError(f"Risk interval needs 0 <= alpha <= beta <= 1, got [{self.alpha}, {self.beta}]")

    def as_tuple(self):
        return (self.alpha, self.beta)


@dataclass(frozen=True)
class RiskLevel:
    """Scalar risk level w: 1 is extreme seeking, 0 neutral, -1 extreme averse."""
    w: float

    def __post_init__(self):
        if not (-1.0 <= self.w <= 1.0):
            raise ValueError(f"Risk level must lie in [-1, 1], got {self.w}")


NEUTRAL = RiskInterval(0.0, 1.0)

DistributionLike = Union[QuantileDistribution, np.ndarray]


def _as_values(d: DistributionLike) -> np.ndarray:
    if isinstance(d, QuantileDistribution):
        return d.values
    return np.asarray(d, dtype=float)


def quantile_midpoints(n: int) -> np.ndarray:
    """Return tau_hat_i = (2i - 1) / (2n) for i = 1..n."""
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def quantile_index(tau, n: int):
    """
    Zero-based atom index selected by the right-continuous inverse CDF.

    Works on scalars and arrays. tau = 0 maps to the first atom.
    """
    idx = np.ceil(np.asarray(tau, dtype=float) * n - _INDEX_SNAP).astype(int) - 1
    idx = np.clip(idx, 0, n - 1)
    if idx.ndim == 0:
        return int(idx)
    return idx


def inverse_cdf(d: DistributionLike, tau: float) -> float:
    """
    Evaluate F^{-1}(tau) = theta_ceil(tau * N).

    Args:
        d: The quantile distribution
        tau (float): Quantile fraction in [0, 1]

    Returns:
        float: The atom value at tau
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"Quantile fraction must lie in [0, 1], got {tau}")
    values = _as_values(d)
    return float(values[quantile_index(tau, values.size)])


def mean(d: DistributionLike) -> float:
    return float(np.mean(_as_values(d)))


def _interval_weights(n: int, lo: float, hi: float) -> np.ndarray:
    # Overlap of each step ((i-1)/n, i/n] with [lo, hi].
    edges = np.arange(n + 1, dtype=float) / n
    return np.clip(edges[1:], lo, hi) - np.clip(edges[:-1], lo, hi)


def range_means(values: np.ndarray, r: RiskInterval) -> np.ndarray:
    """
    Vectorised range_mean over the last axis of `values`.

    For upper intervals [alpha, 1] the result is built as
    mean + alpha * (upper_mean - lower_mean), with both partial means taken
    relative to the atom straddling alpha, so the result never drops below
    the plain mean, not even by rounding.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    alpha, beta = r.alpha, r.beta

    if alpha == beta:
        return values[..., quantile_index(alpha, n)]

    means = values.mean(axis=-1)
    if alpha == 0.0 and beta == 1.0:
        return means

    if beta == 1.0:
        pivot = values[..., quantile_index(alpha, n)][..., None]
        upper = (np.maximum(values - pivot, 0.0) * _interval_weights(n, alpha, 1.0)).sum(axis=-1) / (1.0 - alpha)
        lower = (np.maximum(pivot - values, 0.0) * _interval_weights(n, 0.0, alpha)).sum(axis=-1) / alpha
        return means + alpha * (upper + lower)

    return (values * _interval_weights(n, alpha, beta)).sum(axis=-1) / (beta - alpha)


def range_mean(d: DistributionLike, r: RiskInterval) -> float:
    """
    Exact mean of F^{-1}(tau) for tau ~ U[alpha, beta].

    The inverse CDF is piecewise constant, theta_i on ((i-1)/N, i/N], so the
    integral is a weighted sum of atoms. A degenerate interval is a point
    evaluation.
    """
    return float(range_means(_as_values(d), r))


def project_values(values: np.ndarray, r: RiskInterval) -> np.ndarray:
    """Vectorised risk projection over the last axis."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    taus = (r.beta - r.alpha) * quantile_midpoints(n) + r.alpha
    return values[..., quantile_index(taus, n)]


def project(d: DistributionLike, r: RiskInterval) -> QuantileDistribution:
    """
    Restrict a distribution to its [alpha, beta] quantile range.

    The i-th output atom is F^{-1}((beta - alpha) * tau_hat_i + alpha).
    [0, 1] is the identity.
    """
    return QuantileDistribution(project_values(_as_values(d), r))


def _check_same_n(v1: np.ndarray, v2: np.ndarray):
    if v1.shape != v2.shape:
        raise ValueError(f"Distributions must share N, got {v1.shape[-1]} and {v2.shape[-1]}")


def wasserstein_inf(d1: DistributionLike, d2: DistributionLike) -> float:
    v1, v2 = _as_values(d1), _as_values(d2)
    _check_same_n(v1, v2)
    return float(np.max(np.abs(v1 - v2)))


def wasserstein_p(d1: DistributionLike, d2: DistributionLike, p: float) -> float:
    if p < 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")
    v1, v2 = _as_values(d1), _as_values(d2)
    _check_same_n(v1, v2)
    return float(np.mean(np.abs(v1 - v2) ** p) ** (1.0 / p))


def huber(delta, k: float):
    """L_k(delta): quadratic inside [-k, k], linear outside."""
    abs_delta = np.abs(delta)
    return np.where(abs_delta <= k, 0.5 * np.square(delta) / k, abs_delta - 0.5 * k)


def huber_quantile_loss(delta, tau, k: float):
    """
    Quantile Huber loss |tau - 1{delta < 0}| * L_k(delta).

    Accepts scalars or broadcastable arrays; scalars come back as float.
    """
    if k <= 0:
        raise ValueError(f"Huber threshold must be positive, got {k}")
    delta = np.asarray(delta, dtype=float)
    weight = np.abs(np.asarray(tau, dtype=float) - (delta < 0))
    loss = weight * huber(delta, k)
    return float(loss) if np.ndim(loss) == 0 else loss


def huber_quantile_grad(delta, tau, k: float):
    """
    Derivative of the quantile Huber loss with respect to the predicted atom.

    delta = target - theta, so the sign flips relative to d/d(delta).
    At delta = 0 the subgradient 0 is returned.
    """
    if k <= 0:
        raise ValueError(f"Huber threshold must be positive, got {k}")
    delta = np.asarray(delta, dtype=float)
    weight = np.abs(np.asarray(tau, dtype=float) - (delta < 0))
    grad = -weight * np.clip(delta / k, -1.0, 1.0)
    return float(grad) if np.ndim(grad) == 0 else grad


def huber_quantile_loss_and_grad(delta, tau, k: float):
    """
    Loss and gradient of the quantile Huber loss in one pass over `delta`.

    Uses L_k(delta) = s * (delta - k * s / 2) with s = clip(delta / k, -1, 1).
    """
    if k <= 0:
        raise ValueError(f"Huber threshold must be positive, got {k}")
    delta = np.asarray(delta, dtype=float)
    weight = np.abs(np.asarray(tau, dtype=float) - (delta < 0))
    slope = np.clip(delta / k, -1.0, 1.0)
    return weight * slope * (delta - 0.5 * k * slope), -weight * slope


def left_truncated_variance(d: DistributionLike) -> float:
    """
    Upper-half variance about the median atom.

    sigma^2_+ = 1/(2N) * sum_{j=N/2}^{N} (theta_j - theta_{N/2})^2, 1-based.
    """
    values = _as_values(d)
    n = values.size
    if n % 2:
        raise ValueError(f"Left truncated variance needs an even number of quantiles, got {n}")
    upper = values[n // 2 - 1:]
    return float(np.sum(np.square(upper - values[n // 2 - 1])) / (2.0 * n))


def left_truncated_variances(values: np.ndarray) -> np.ndarray:
    """Vectorised left_truncated_variance over the last axis."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if n % 2:
        raise ValueError(f"Left truncated variance needs an even number of quantiles, got {n}")
    median = values[..., n // 2 - 1:n // 2]
    return np.sum(np.square(values[..., n // 2 - 1:] - median), axis=-1) / (2.0 * n)


def risk_level_to_interval(w: Union[RiskLevel, float]) -> RiskInterval:
    """
    Map a scalar risk level to its sampling interval.

    w >= 0 gives [w, 1]; w < 0 gives [0, 1 + w].
    """
    level = w if isinstance(w, RiskLevel) else RiskLevel(float(w))
    if level.w >= 0:
        return RiskInterval(level.w, 1.0)
    return RiskInterval(0.0, 1.0 + level.w)


def is_sorted(values) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) >= 0))


def distribution(values) -> QuantileDistribution:
    """Build a QuantileDistribution from any sequence of values."""
    return QuantileDistribution(np.asarray(values, dtype=float))
