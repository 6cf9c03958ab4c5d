import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clplab import oracle
from clplab.env import counterexample_env, random_env
from clplab.policy import SoftmaxPolicy


def brute_force_gibbs(env, alpha, w):
    """Independent oracle: direct exponentiation without log-space tricks."""
    R = env.rewards @ np.asarray(w)
    unnorm = env.ref_probs * np.exp((1 - alpha) * R / alpha)
    return unnorm / unnorm.sum(axis=1, keepdims=True)


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 1.0))
def test_gibbs_matches_brute_force(seed, alpha):
    env = random_env(3, 4, 2, seed=seed)
    w = np.array([0.3, 0.7])
    assert np.allclose(oracle.optimal_policy(env, alpha, w).probs, brute_force_gibbs(env, alpha, w), atol=1e-12)


def test_optimum_beats_random_policies(rng):
    env = random_env(3, 4, 2, seed=0)
    w = np.array([0.5, 0.5])
    v_star = oracle.optimal_value(env, 0.2, w)
    assert oracle.value(env, oracle.optimal_policy(env, 0.2, w), 0.2, w) == pytest.approx(v_star, abs=1e-12)
    for _ in range(200):
        pi = rng.dirichlet(np.ones(4), size=3)
        assert oracle.value(env, pi, 0.2, w) <= v_star + 1e-12


def test_optimal_value_by_hand():
    env = counterexample_env()
    alpha = 0.5
    R = np.array([1.0, 0.0, 0.75])
    expect = alpha * np.log(np.mean(np.exp(R)))
    assert oracle.optimal_value(env, alpha, [1.0, 0.0]) == pytest.approx(expect, abs=1e-14)


def test_counterexample_optima():
    env = counterexample_env()
    assert oracle.optimal_policy(env, 0.01, [1.0, 0.0]).probs[0, 0] > 0.999
    assert oracle.optimal_policy(env, 0.01, [0.0, 1.0]).probs[0, 1] > 0.999
    assert oracle.optimal_policy(env, 0.01, [0.5, 0.5]).probs[0, 2] > 0.999


def test_alpha_one_gives_reference():
    env = random_env(2, 3, 2, seed=1)
    assert np.allclose(oracle.optimal_policy(env, 1.0, [0.5, 0.5]).probs, env.ref_probs)


def test_rejects_bad_alpha():
    with pytest.raises(ValueError):
        oracle.optimal_policy(counterexample_env(), 0.0, [1.0, 0.0])


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.01, 1.0), conc=st.sampled_from([0.2, 1.0, 5.0]))
def test_regret_identity_property(seed, alpha, conc):
    rng = np.random.default_rng(seed)
    env = random_env(3, 4, 2, seed=seed)
    pi = rng.dirichlet(np.full(4, conc), size=3)
    lhs, rhs = oracle.regret(env, pi, alpha, rng.dirichlet(np.ones(2)))
    assert abs(lhs - rhs) <= 1e-10
    assert lhs >= -1e-12


def test_expected_rewards_and_kl():
    env = counterexample_env()
    pi = np.array([[0.0, 0.0, 1.0]])
    assert np.allclose(oracle.expected_rewards(env, pi), [0.75, 0.75])
    assert oracle.kl(env, pi) == pytest.approx(np.log(3.0))
    assert oracle.kl(env, SoftmaxPolicy(np.zeros((1, 3)))) == pytest.approx(0.0, abs=1e-15)


def test_reward_matrix_forms():
    env = random_env(2, 3, 2, seed=0)
    assert np.array_equal(oracle.reward_matrix(env, [1.0, 0.0]), env.rewards[:, :, 0])
    with pytest.raises(ValueError):
        oracle.reward_matrix(env, np.zeros((4, 4)))


def test_total_variation():
    assert oracle.total_variation([[0.5, 0.5], [1.0, 0.0]], [[0.5, 0.5], [0.0, 1.0]]) == 1.0


def test_pareto_front_oracle_points():
    pts = oracle.pareto_front_oracle(counterexample_env(), 0.01, [[0.5, 0.5], [1.0, 0.0]])
    assert len(pts) == 2
    assert pts[0].raw_rewards == pytest.approx([0.75, 0.75], abs=1e-3)
