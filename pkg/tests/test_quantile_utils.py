import math

import numpy as np
import pytest
from scipy import stats

from helpers.quantile_utils import (
    NEUTRAL,
    QuantileDistribution,
    RiskInterval,
    RiskLevel,
    distribution,
    huber_quantile_grad,
    huber_quantile_loss,
    huber_quantile_loss_and_grad,
    inverse_cdf,
    is_sorted,
    left_truncated_variance,
    left_truncated_variances,
    mean,
    project,
    quantile_midpoints,
    range_mean,
    range_means,
    risk_level_to_interval,
    wasserstein_inf,
    wasserstein_p,
)


def random_distribution(rng, n):
    return distribution(np.sort(rng.normal(0.0, 3.0, n)))


#region Types
def test_distribution_rejects_unsorted_and_non_finite():
    with pytest.raises(ValueError):
        QuantileDistribution(np.array([2.0, 1.0]))
    with pytest.raises(ValueError):
        QuantileDistribution(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        QuantileDistribution(np.array([]))


def test_distribution_values_are_read_only():
    d = distribution([1, 2, 3])
    with pytest.raises(ValueError):
        d.values[0] = 5.0


def test_midpoints():
    assert np.allclose(quantile_midpoints(4), [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(distribution([0, 1]).midpoints, [0.25, 0.75])


@pytest.mark.parametrize("alpha, beta", [(-0.1, 0.5), (0.6, 0.5), (0.0, 1.1)])
def test_invalid_interval(alpha, beta):
    with pytest.raises(ValueError):
        RiskInterval(alpha, beta)


def test_invalid_risk_level():
    with pytest.raises(ValueError):
        RiskLevel(1.5)
    with pytest.raises(ValueError):
        risk_level_to_interval(-1.01)
#endregion


#region Inverse CDF and means
@pytest.mark.parametrize("tau, expected", [(0.0, 1.0), (0.5, 2.0), (0.51, 3.0), (1.0, 4.0), (0.25, 1.0), (0.26, 2.0)])
def test_inverse_cdf_examples(tau, expected):
    assert inverse_cdf(distribution([1, 2, 3, 4]), tau) == expected


@pytest.mark.parametrize("tau", [-0.01, 1.01])
def test_inverse_cdf_domain(tau):
    with pytest.raises(ValueError):
        inverse_cdf(distribution([1, 2, 3, 4]), tau)


def test_inverse_cdf_matches_step_cdf_scan():
    rng = np.random.default_rng(3)
    for _ in range(200):
        values = np.sort(rng.normal(size=7))
        d = distribution(values)
        tau = float(rng.uniform(1e-6, 1.0))
        # inf{y : tau <= F(y)} with F jumping by 1/N at each atom
        expected = next(v for i, v in enumerate(values) if (i + 1) / 7 >= tau)
        assert inverse_cdf(d, tau) == expected


@pytest.mark.parametrize("values, expected", [([1, 1, 1, 1], 1.0), ([1, 2, 3, 4], 2.5), ([-2, 10], 4.0)])
def test_mean(values, expected):
    assert mean(distribution(values)) == expected


@pytest.mark.parametrize("values, interval, expected", [
    ([1, 2, 3, 4], (0.0, 1.0), 2.5),
    ([1, 2, 3, 4], (0.75, 1.0), 4.0),
    ([0, 10], (0.5, 1.0), 10.0),
    ([1, 2, 3, 4], (0.0, 0.5), 1.5),
    ([1, 2, 3, 4], (0.5, 0.5), 2.0),
    ([1, 2, 3, 4], (1.0, 1.0), 4.0),
    ([1, 2, 3, 4], (0.0, 0.0), 1.0),
])
def test_range_mean_examples(values, interval, expected):
    assert range_mean(distribution(values), RiskInterval(*interval)) == pytest.approx(expected, abs=1e-12)


def test_range_mean_straddling_steps():
    # [0.125, 0.625] covers 1/8 of theta_1, 1/4 of theta_2 and 1/8 of theta_3
    d = distribution([1, 2, 3, 4])
    assert range_mean(d, RiskInterval(0.125, 0.625)) == pytest.approx((1 * 0.125 + 2 * 0.25 + 3 * 0.125) / 0.5)


def test_range_mean_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(5):
        d = random_distribution(rng, 8)
        alpha, beta = np.sort(rng.uniform(size=2))
        r = RiskInterval(float(alpha), float(beta))
        taus = rng.uniform(alpha, beta, 10 ** 6)
        samples = d.values[np.clip(np.ceil(taus * 8).astype(int) - 1, 0, 7)]
        stderr = samples.std() / math.sqrt(samples.size)
        assert abs(range_mean(d, r) - samples.mean()) <= 4 * stderr + 1e-12


def test_range_means_vectorised_matches_scalar():
    rng = np.random.default_rng(5)
    table = np.sort(rng.normal(size=(6, 3, 8)), axis=-1)
    r = RiskInterval(0.3, 0.9)
    batched = range_means(table, r)
    assert batched.shape == (6, 3)
    for i in range(6):
        for a in range(3):
            assert batched[i, a] == pytest.approx(range_mean(table[i, a], r), abs=1e-12)


def test_upper_range_mean_never_below_mean():
    rng = np.random.default_rng(0)
    values = np.sort(rng.normal(0.0, 10.0, size=(100_000, 8)), axis=-1)
    alphas = rng.uniform(size=100_000)
    below = [i for i in range(100_000) if range_means(values[i], RiskInterval(float(alphas[i]), 1.0)) < mean(values[i])]
    assert below == []


def test_upper_range_mean_is_exactly_mean_at_zero():
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = np.sort(rng.normal(size=8))
        assert range_mean(v, RiskInterval(0.0, 1.0)) == mean(v)


def test_upper_range_mean_nondecreasing_in_alpha():
    rng = np.random.default_rng(2)
    alphas = np.linspace(0.0, 1.0, 101)
    for _ in range(50):
        v = np.sort(rng.normal(size=8))
        scores = [range_mean(v, RiskInterval(float(a), 1.0)) for a in alphas]
        assert np.all(np.diff(scores) >= -1e-12)
#endregion


#region Projection
@pytest.mark.parametrize("interval, expected", [
    ((0.0, 1.0), [1, 2, 3, 4]),
    ((0.5, 1.0), [3, 3, 4, 4]),
    ((0.0, 0.5), [1, 1, 2, 2]),
    ((1.0, 1.0), [4, 4, 4, 4]),
])
def test_project_examples(interval, expected):
    assert project(distribution([1, 2, 3, 4]), RiskInterval(*interval)) == distribution(expected)


def test_project_matches_composed_inverse_cdf():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = random_distribution(rng, 6)
        r = RiskInterval(*sorted(float(x) for x in rng.uniform(size=2)))
        projected = project(d, r)
        expected = [inverse_cdf(d, (r.beta - r.alpha) * tau + r.alpha) for tau in quantile_midpoints(6)]
        assert projected.values.tolist() == expected
        assert is_sorted(projected.values)


def test_project_constant_distribution():
    rng = np.random.default_rng(6)
    d = distribution([5, 5, 5, 5])
    for _ in range(20):
        r = RiskInterval(*sorted(float(x) for x in rng.uniform(size=2)))
        assert project(d, r) == d


def test_projection_is_nonexpansive():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        d1, d2 = random_distribution(rng, 8), random_distribution(rng, 8)
        r = RiskInterval(*sorted(float(x) for x in rng.uniform(size=2)))
        assert wasserstein_inf(project(d1, r), project(d2, r)) <= wasserstein_inf(d1, d2) + 1e-12


def test_neutral_projection_is_identity():
    rng = np.random.default_rng(8)
    for _ in range(50):
        d = random_distribution(rng, 32)
        assert project(d, NEUTRAL) == d
#endregion


#region Metrics
def test_wasserstein_examples():
    assert wasserstein_inf(distribution([1, 2, 3]), distribution([1, 2, 3])) == 0.0
    assert wasserstein_inf(distribution([0, 0]), distribution([1, 3])) == 3.0
    assert wasserstein_inf(distribution([1, 2, 3, 4]), distribution([2, 2, 3, 6])) == 2.0
    assert wasserstein_p(distribution([0, 0]), distribution([1, 3]), 1) == 2.0
    assert wasserstein_p(distribution([0, 0]), distribution([1, 3]), 2) == pytest.approx(math.sqrt(5))


def test_wasserstein_one_matches_scipy():
    rng = np.random.default_rng(9)
    for _ in range(20):
        d1, d2 = random_distribution(rng, 16), random_distribution(rng, 16)
        assert wasserstein_p(d1, d2, 1) == pytest.approx(stats.wasserstein_distance(d1.values, d2.values))


def test_wasserstein_errors():
    with pytest.raises(ValueError):
        wasserstein_p(distribution([0, 1]), distribution([0, 1]), 0.5)
    with pytest.raises(ValueError):
        wasserstein_inf(distribution([0, 1]), distribution([0, 1, 2]))


def test_wasserstein_metric_axioms():
    rng = np.random.default_rng(10)
    for _ in range(200):
        a, b, c = (random_distribution(rng, 8) for _ in range(3))
        for p in (1, 2, 3.5):
            assert wasserstein_p(a, a, p) == 0.0
            assert wasserstein_p(a, b, p) == pytest.approx(wasserstein_p(b, a, p))
            assert wasserstein_p(a, c, p) <= wasserstein_p(a, b, p) + wasserstein_p(b, c, p) + 1e-9
#endregion


#region Huber quantile loss
@pytest.mark.parametrize("delta, tau, expected", [(0.0, 0.7, 0.0), (2.0, 0.5, 0.75), (-0.5, 0.25, 0.09375)])
def test_huber_loss_examples(delta, tau, expected):
    assert huber_quantile_loss(delta, tau, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize("delta, tau, expected", [(0.0, 0.3, 0.0), (2.0, 0.5, -0.5), (-0.5, 0.25, 0.375)])
def test_huber_grad_examples(delta, tau, expected):
    assert huber_quantile_grad(delta, tau, 1.0) == pytest.approx(expected)


def test_huber_rejects_nonpositive_threshold():
    with pytest.raises(ValueError):
        huber_quantile_loss(1.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        huber_quantile_grad(1.0, 0.5, -1.0)


def test_huber_grad_matches_finite_differences():
    rng = np.random.default_rng(12)
    h = 1e-6
    checked = 0
    while checked < 1000:
        delta = float(rng.uniform(-5, 5))
        tau = float(rng.uniform())
        k = float(rng.uniform(0.1, 3.0))
        if abs(delta) <= 1e-3 or abs(abs(delta) - k) <= 1e-3:
            continue
        # d/dtheta with delta = target - theta
        numeric = -(huber_quantile_loss(delta + h, tau, k) - huber_quantile_loss(delta - h, tau, k)) / (2 * h)
        assert huber_quantile_grad(delta, tau, k) == pytest.approx(numeric, abs=1e-5)
        checked += 1


def test_huber_loss_nonnegative_on_arrays():
    rng = np.random.default_rng(13)
    delta = rng.normal(size=(50, 8))
    tau = rng.uniform(size=(50, 8))
    assert np.all(huber_quantile_loss(delta, tau, 1.0) >= 0)


def test_fused_huber_terms_match_separate_ones():
    rng = np.random.default_rng(14)
    delta = rng.uniform(-4, 4, size=(20, 6, 6))
    tau = quantile_midpoints(6)[None, :, None]
    for k in (0.3, 1.0, 2.5):
        loss, grad = huber_quantile_loss_and_grad(delta, tau, k)
        np.testing.assert_allclose(loss, huber_quantile_loss(delta, tau, k), atol=1e-12)
        np.testing.assert_allclose(grad, huber_quantile_grad(delta, tau, k), atol=1e-12)
    with pytest.raises(ValueError):
        huber_quantile_loss_and_grad(delta, tau, 0.0)

#endregion


#region Truncated variance and risk levels
@pytest.mark.parametrize("values, expected", [([3, 3, 3, 3], 0.0), ([0, 0, 0, 2], 0.5), ([1, 2, 3, 4], 0.625)])
def test_left_truncated_variance(values, expected):
    assert left_truncated_variance(distribution(values)) == pytest.approx(expected)


def test_left_truncated_variance_needs_even_n():
    with pytest.raises(ValueError):
        left_truncated_variance(distribution([1, 2, 3]))


def test_left_truncated_variances_vectorised():
    rows = np.array([[0, 0, 0, 2], [1, 2, 3, 4]], dtype=float)
    assert np.allclose(left_truncated_variances(rows), [0.5, 0.625])


@pytest.mark.parametrize("w, expected", [(1.0, (1.0, 1.0)), (0.5, (0.5, 1.0)), (0.0, (0.0, 1.0)),
                                         (-0.5, (0.0, 0.5)), (-1.0, (0.0, 0.0))])
def test_risk_level_mapping(w, expected):
    assert risk_level_to_interval(w).as_tuple() == expected
    assert risk_level_to_interval(RiskLevel(w)).as_tuple() == expected
#endregion
