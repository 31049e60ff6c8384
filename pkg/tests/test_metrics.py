import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prefdist import ContextDist, TabularPolicy, random_softmax_policy
from prefdist.harness import TrialResult
from prefdist.metrics import aggregate_trials, coverage_coefficient, fit_loglog_slope

N_VALUES = [2**k for k in range(5, 17)]


def brute_coverage(members, pi_star, mu, d, gamma):
    """Ratio of explicit double sums over contexts and actions, member by member."""
    def centered(p):
        lr = gamma * np.log(p.probs)
        return lr - np.sum(mu.probs * lr, axis=1, keepdims=True)

    ref = centered(pi_star)
    worst = 0.0
    for m in members:
        delta = centered(m) - ref
        num = den = 0.0
        for x in range(pi_star.num_contexts):
            for a in range(pi_star.num_actions):
                num += d.weights[x] * pi_star.probs[x, a] * delta[x, a] ** 2
                den += d.weights[x] * mu.probs[x, a] * delta[x, a] ** 2
        if den == 0:
            if num > 0:
                return math.inf
            continue
        worst = max(worst, num / den)
    return worst


def test_coverage_identity_cases(rng):
    pi_star = random_softmax_policy(3, 4, 1.0, rng)
    members = [random_softmax_policy(3, 4, 1.0, rng) for _ in range(5)]
    d = ContextDist.uniform(3)
    assert coverage_coefficient(members, pi_star, pi_star, d, 0.5) == pytest.approx(1.0, rel=1e-12)
    mu = random_softmax_policy(3, 4, 1.0, rng)
    assert coverage_coefficient([pi_star], pi_star, mu, d, 0.5) == 0.0


def test_coverage_matches_brute_force(rng):
    for _ in range(10):
        pi_star = random_softmax_policy(3, 4, 1.0, rng)
        mu = random_softmax_policy(3, 4, 1.0, rng)
        d = ContextDist(rng.dirichlet(np.ones(3)))
        members = [random_softmax_policy(3, 4, 1.0, rng) for _ in range(4)] + [pi_star]
        got = coverage_coefficient(members, pi_star, mu, d, 0.7)
        assert got == pytest.approx(brute_coverage(members, pi_star, mu, d, 0.7), rel=1e-10)


def test_coverage_infinite_when_mu_misses_the_difference():
    # mu puts no mass on action 2 of the context where the member differs.
    pi_star = TabularPolicy(np.array([[0.25, 0.25, 0.5]]))
    mu = TabularPolicy(np.array([[0.5, 0.5, 0.0]]))
    # Equal mass on actions 0 and 1 in both, so centered rewards differ only on action 2.
    member = TabularPolicy(np.array([[0.125, 0.125, 0.75]]))
    assert coverage_coefficient([member], pi_star, mu, ContextDist.uniform(1), 1.0) == math.inf


@given(st.integers(0, 2**32 - 1))
def test_coverage_superset_and_shift_invariance(seed):
    g = np.random.default_rng(seed)
    pi_star = random_softmax_policy(2, 3, 1.0, g)
    mu = random_softmax_policy(2, 3, 1.0, g)
    d = ContextDist.uniform(2)
    members = [random_softmax_policy(2, 3, 1.0, g) for _ in range(3)]
    extra = random_softmax_policy(2, 3, 1.0, g)
    base = coverage_coefficient(members, pi_star, mu, d, 0.5)
    assert coverage_coefficient(members + [extra], pi_star, mu, d, 0.5) >= base
    # A per-context constant on a member's log-probabilities is removed by renormalization
    # and centering, so rescaling unnormalized mass leaves the coefficient unchanged.
    scaled = members[0].probs * g.uniform(0.5, 2.0, size=(2, 1))
    same = TabularPolicy(scaled / scaled.sum(axis=1, keepdims=True))
    assert coverage_coefficient([same] + members[1:], pi_star, mu, d, 0.5) == pytest.approx(base, rel=1e-9)


def test_slope_exact_power_laws():
    fit = fit_loglog_slope([(n, 3.0 / n) for n in N_VALUES])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.points_used == 12
    assert fit_loglog_slope([(n, 2.0 / math.sqrt(n)) for n in N_VALUES]).slope == pytest.approx(-0.5, abs=1e-12)
    flat = fit_loglog_slope([(n, 0.01) for n in N_VALUES])
    assert flat.slope == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= flat.r_squared <= 1.0


@given(st.floats(1e-6, 1e6), st.floats(-2.0, 0.5))
def test_slope_scale_invariance(c, k):
    base = fit_loglog_slope([(n, n ** k) for n in N_VALUES])
    scaled = fit_loglog_slope([(n, c * n ** k) for n in N_VALUES])
    assert scaled.slope == pytest.approx(base.slope, abs=1e-9)
    assert scaled.intercept == pytest.approx(base.intercept + math.log(c), abs=1e-8)


def test_slope_drops_zero_errors_and_needs_two_points():
    fit = fit_loglog_slope([(32, 0.1), (64, 0.05), (128, 0.0), (256, 1e-13)])
    assert fit.points_used == 2
    with pytest.raises(ValueError):
        fit_loglog_slope([(32, 0.1), (64, 0.0)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(32, 0.1), (32, 0.2)])


def _trial(method, n, fkl, seed=0, beta=0.1):
    return TrialResult(method, n, beta, seed, fkl, fkl, 0.0)


def test_aggregate_values():
    stats = aggregate_trials([_trial("RKL", 32, 0.25)])
    assert stats[("RKL", 32)].mean == 0.25 and stats[("RKL", 32)].std == 0.0

    stats = aggregate_trials([_trial("RKL", 32, 0.1 * 3, seed=s) for s in range(7)])
    assert stats[("RKL", 32)].std == 0.0
    assert stats[("RKL", 32)].count == 7

    stats = aggregate_trials([_trial("RKL", 32, 0.1), _trial("RKL", 32, 0.3, seed=1)])
    assert stats[("RKL", 32)].mean == pytest.approx(0.2, abs=1e-15)
    assert stats[("RKL", 32)].std == pytest.approx(0.1, abs=1e-15)


def test_aggregate_groups_and_rejects_empty():
    trials = [_trial("RKL", 32, 0.1), _trial("RLHF", 32, 0.5), _trial("RKL", 64, 0.2)]
    stats = aggregate_trials(trials)
    assert set(stats) == {("RKL", 32), ("RKL", 64), ("RLHF", 32)}
    with pytest.raises(ValueError):
        aggregate_trials([])
