import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prefdist import (
    ContextDist,
    PolicyLogits,
    RewardTable,
    SupportError,
    TabularPolicy,
    centered_reward_table,
    induced_policy_from_reward,
    policy_entropy,
    policy_forward_kl,
    random_softmax_policy,
    softmax_policy,
)

finite_logits = arrays(
    np.float64,
    st.tuples(st.integers(1, 5), st.integers(1, 6)),
    elements=st.floats(-20, 20, allow_nan=False),
)


def test_softmax_zero_logits_is_uniform():
    p = softmax_policy(PolicyLogits(np.zeros((1, 3))))
    np.testing.assert_allclose(p.probs, [[1 / 3, 1 / 3, 1 / 3]], rtol=0, atol=1e-15)


@pytest.mark.parametrize("c", [-700.0, -3.5, 0.0, 2.0, 800.0])
def test_softmax_constant_row_is_uniform(c):
    p = softmax_policy(PolicyLogits(np.full((2, 4), c)))
    np.testing.assert_allclose(p.probs, 0.25, atol=1e-15)


def test_softmax_hand_value():
    p = softmax_policy(PolicyLogits(np.array([[math.log(2), 0.0]])))
    np.testing.assert_allclose(p.probs, [[2 / 3, 1 / 3]], atol=1e-15)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_softmax_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        softmax_policy(PolicyLogits(np.array([[0.0, bad]])))


@given(finite_logits, st.floats(-50, 50))
def test_softmax_rows_on_simplex_and_shift_invariant(z, c):
    p = softmax_policy(PolicyLogits(z)).probs
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    shift = np.linspace(-1, 1, z.shape[0])[:, None] * c
    q = softmax_policy(PolicyLogits(z + shift)).probs
    np.testing.assert_allclose(p, q, atol=1e-12)


def test_random_softmax_zero_std_is_exactly_uniform(rng):
    p = random_softmax_policy(3, 7, 0.0, rng)
    assert np.array_equal(p.probs, np.full((3, 7), 1 / 7))


def test_random_softmax_default_size_is_row_stochastic(rng):
    p = random_softmax_policy(10, 10, 0.1, rng)
    assert p.shape == (10, 10)
    assert np.all(p.probs > 0)
    np.testing.assert_allclose(p.probs.sum(axis=1), 1.0, atol=1e-12)


def test_random_softmax_is_deterministic_per_seed():
    a = random_softmax_policy(10, 10, 0.1, np.random.default_rng(7))
    b = random_softmax_policy(10, 10, 0.1, np.random.default_rng(7))
    assert np.array_equal(a.probs, b.probs)


@pytest.mark.parametrize("shape", [(0, 3), (3, 0)])
def test_random_softmax_rejects_empty(shape, rng):
    with pytest.raises(ValueError):
        random_softmax_policy(*shape, 0.1, rng)


def test_policy_validation():
    with pytest.raises(ValueError):
        TabularPolicy(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        TabularPolicy(np.array([[1.5, -0.5]]))
    p = TabularPolicy(np.array([[1.0, 0.0]]))
    assert p.probs[0, 1] == 0.0
    with pytest.raises(ValueError):
        p.to_logits()
    floored = TabularPolicy.from_probs([[1.0, 0.0]])
    assert floored.probs[0, 1] > 0


def test_policy_is_immutable():
    p = TabularPolicy.uniform(2, 2)
    with pytest.raises(ValueError):
        p.probs[0, 0] = 1.0


def test_forward_kl_identity_is_zero(rng):
    p = random_softmax_policy(4, 6, 1.0, rng)
    assert policy_forward_kl(p, p, ContextDist.uniform(4)) == 0.0


def test_forward_kl_hand_value():
    p = TabularPolicy(np.array([[1.0, 0.0], [0.5, 0.5]]))
    q = TabularPolicy(np.array([[0.5, 0.5], [0.9, 0.1]]))
    kl = policy_forward_kl(p, q, ContextDist.point_mass(2, 0))
    assert kl == pytest.approx(math.log(2), abs=1e-15)


def test_forward_kl_support_violation():
    p = TabularPolicy(np.array([[0.5, 0.5]]))
    q = TabularPolicy(np.array([[1.0, 0.0]]))
    with pytest.raises(SupportError):
        policy_forward_kl(p, q, ContextDist.uniform(1))


def test_forward_kl_matches_scipy_entropy(rng):
    from scipy.stats import entropy

    p = random_softmax_policy(5, 4, 1.0, rng)
    q = random_softmax_policy(5, 4, 1.0, rng)
    w = rng.dirichlet(np.ones(5))
    expected = sum(w[i] * entropy(p.probs[i], q.probs[i]) for i in range(5))
    assert policy_forward_kl(p, q, ContextDist(w)) == pytest.approx(expected, rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.0))
def test_forward_kl_nonnegative_zero_iff_equal(seed, std):
    g = np.random.default_rng(seed)
    p = random_softmax_policy(3, 4, std, g)
    q = random_softmax_policy(3, 4, std, g)
    d = ContextDist.uniform(3)
    kl = policy_forward_kl(p, q, d)
    assert kl >= 0
    if not np.allclose(p.probs, q.probs, atol=1e-6):
        assert kl > 0
    assert policy_forward_kl(q, q, d) == 0.0


def test_entropy_values():
    d = ContextDist.uniform(1)
    assert policy_entropy(TabularPolicy.uniform(1, 10), d) == pytest.approx(math.log(10), abs=1e-14)
    assert policy_entropy(TabularPolicy(np.array([[0.0, 1.0, 0.0]])), d) == 0.0
    two = TabularPolicy(np.array([[2 / 3, 1 / 3]]))
    assert policy_entropy(two, d) == pytest.approx(0.636514168294813, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 2.0))
def test_uniform_maximizes_entropy(seed, std):
    g = np.random.default_rng(seed)
    d = ContextDist.uniform(2)
    p = random_softmax_policy(2, 6, std, g)
    assert policy_entropy(p, d) <= policy_entropy(TabularPolicy.uniform(2, 6), d) + 1e-12


def test_centered_reward_uniform_is_zero():
    u = TabularPolicy.uniform(3, 4)
    r = centered_reward_table(u, u, 0.7)
    np.testing.assert_allclose(r.values, 0.0, atol=1e-15)


def test_centered_reward_hand_value():
    pi = TabularPolicy(np.array([[2 / 3, 1 / 3]]))
    r = centered_reward_table(pi, TabularPolicy.uniform(1, 2), 1.0)
    h = 0.5 * math.log(2)
    np.testing.assert_allclose(r.values, [[h, -h]], atol=1e-15)


def test_centered_reward_rejects_zero_mass():
    pi = TabularPolicy(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        centered_reward_table(pi, TabularPolicy.uniform(1, 2), 1.0)


def test_centered_reward_has_zero_mu_mean(rng):
    pi = random_softmax_policy(4, 5, 1.0, rng)
    mu = random_softmax_policy(4, 5, 1.0, rng)
    r = centered_reward_table(pi, mu, 0.3)
    np.testing.assert_allclose(np.sum(mu.probs * r.values, axis=1), 0.0, atol=1e-14)


def test_induced_policy_values(rng):
    zero = RewardTable(np.zeros((2, 3)), 0.5)
    np.testing.assert_allclose(induced_policy_from_reward(zero).probs, 1 / 3, atol=1e-15)

    r = RewardTable(np.array([[1.0, 0.0]]), 1.0)
    np.testing.assert_allclose(induced_policy_from_reward(r).probs,
                               [[0.7310585786300049, 0.2689414213699951]], atol=1e-15)

    vals = rng.normal(size=(3, 4))
    shifted = vals + rng.normal(size=(3, 1))
    a = induced_policy_from_reward(RewardTable(vals, 0.4)).probs
    b = induced_policy_from_reward(RewardTable(shifted, 0.4)).probs
    np.testing.assert_allclose(a, b, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0), st.floats(0.05, 4.0))
def test_centered_reward_round_trip(seed, std, gamma):
    g = np.random.default_rng(seed)
    pi = random_softmax_policy(3, 5, std, g)
    mu = random_softmax_policy(3, 5, 1.0, g)
    back = induced_policy_from_reward(centered_reward_table(pi, mu, gamma))
    np.testing.assert_allclose(back.probs, pi.probs, atol=1e-10)


def test_context_dist_validation():
    with pytest.raises(ValueError):
        ContextDist(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        ContextDist(np.array([1.5, -0.5]))
    assert ContextDist.uniform(4).weights.sum() == pytest.approx(1.0)


def test_reward_table_rejects_bad_gamma():
    with pytest.raises(ValueError):
        RewardTable(np.zeros((1, 2)), 0.0)
