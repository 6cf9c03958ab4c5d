import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clplab import oracle
from clplab.conditioning import (
    ParameterBundle,
    augment_features,
    condition,
    dera_policy,
    init_bundle,
    logit_ensemble,
    logit_mix,
    mix_segments,
    mute_prompt_inputs,
    rewarded_soups,
)
from clplab.env import random_env
from clplab.policy import SoftmaxPolicy, init_reference, logits, mlp2_arch, tabular_arch
from clplab.weightings import f_mix


def random_bundle(rng, scheme="full", m=2, prompt=False):
    arch = mlp2_arch(3 + (m * 5 if prompt else 0), 4, 3, scheme)
    theta_ref = init_reference(arch, rng, std=0.5)
    b = init_bundle(arch, theta_ref, m, 0.01, cond_prompt=prompt, shared=prompt)
    return b.with_flat(b.flat() + rng.normal(size=b.flat().size))


def test_augment_features_repeats_weights():
    out = augment_features(np.zeros((2, 1)), [0.25, 0.75], repeats=2)
    assert out.tolist() == [[0, 0.25, 0.25, 0.75, 0.75]] * 2


def test_init_bundle_copies_reference(rng):
    arch = mlp2_arch(2, 3, 2, "mid")
    theta_ref = init_reference(arch, rng)
    b = init_bundle(arch, theta_ref, 3)
    assert len(b.conditioned) == 3
    for c in b.conditioned:
        assert np.array_equal(c.values, theta_ref.restrict(["W1", "b1"]).values)
    assert b.unconditioned.names == ["W2", "b2"]


def test_mixing_at_alpha_min_is_weighted_average(rng):
    b = random_bundle(rng)
    w = np.array([0.3, 0.7])
    mixed = condition(b, 0.01, w)
    assert mixed.beta == 0.0
    expect = 0.3 * b.conditioned[0].values + 0.7 * b.conditioned[1].values
    assert np.allclose(mixed.theta_mixed.values, expect, atol=1e-15)


def test_mixing_at_alpha_one_is_reference(rng):
    b = random_bundle(rng, "logit")
    mixed = condition(b, 1.0, [0.5, 0.5])
    assert mixed.beta == 1.0
    assert np.array_equal(mixed.theta_mixed.restrict(["W2", "b2"]).values, b.ref_S.values)
    assert np.array_equal(mixed.theta_mixed.restrict(["W1", "b1"]).values, b.unconditioned.values)


@given(seed=st.integers(0, 10_000), alpha=st.floats(0.01, 1.0), m=st.integers(2, 4))
def test_mix_segments_formula(seed, alpha, m):
    rng = np.random.default_rng(seed)
    b = random_bundle(rng, "full", m)
    w = rng.dirichlet(np.ones(m))
    beta = f_mix(alpha, 0.01)
    expect = (1 - beta) * sum(wi * c.values for wi, c in zip(w, b.conditioned)) + beta * b.ref_S.values
    assert np.allclose(mix_segments(b, beta, w), expect, atol=1e-12)


def test_condition_validates_inputs(rng):
    b = random_bundle(rng)
    with pytest.raises(ValueError):
        condition(b, 0.001, [0.5, 0.5])
    with pytest.raises(ValueError):
        condition(b, 0.5, [0.5, 0.6])


def test_prompting_policy_depends_on_weights(rng):
    b = random_bundle(rng, prompt=True)
    feats = rng.normal(size=(2, 3))
    p1 = condition(b, 0.1, [1.0, 0.0]).policy(feats).probs
    p2 = condition(b, 0.1, [0.0, 1.0]).policy(feats).probs
    assert not np.allclose(p1, p2)


def test_mute_prompt_inputs_makes_policy_weight_free(rng):
    arch = mlp2_arch(3 + 10, 4, 3)
    theta = mute_prompt_inputs(arch, init_reference(arch, rng, std=1.0), 3)
    feats = rng.normal(size=(2, 3))
    z1 = logits(arch, theta, augment_features(feats, [1.0, 0.0]))
    z2 = logits(arch, theta, augment_features(feats, [0.2, 0.8]))
    assert np.array_equal(z1, z2)


def test_bundle_round_trip(rng):
    b = random_bundle(rng, "mid", 3)
    back = ParameterBundle.from_dict(b.to_dict())
    assert np.array_equal(back.flat(), b.flat())
    assert back.arch == b.arch and back.m == 3


def test_logit_mix_endpoints_exact(rng):
    z0, z1 = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    assert np.array_equal(logit_mix(z0, z1, 0.0), z0)
    assert np.array_equal(logit_mix(z0, z1, 1.0), z1)
    assert np.allclose(logit_mix(z0, z1, 0.25), 0.75 * z0 + 0.25 * z1)
    with pytest.raises(ValueError):
        logit_mix(z0, z1, 1.5)


def test_logit_ensemble_matches_pairwise_mix(rng):
    z0, z1 = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    assert np.allclose(logit_ensemble([z0, z1], [0.4, 0.6]), logit_mix(z0, z1, 0.6))


def test_rewarded_soups_interpolates_weights(rng):
    arch = tabular_arch(1, 3)
    e1 = arch.zeros().with_values([2.0, 0.0, 0.0])
    e2 = arch.zeros().with_values([0.0, 2.0, 0.0])
    mixed = rewarded_soups(arch, [e1, e2], [0.5, 0.5])
    assert mixed.theta_mixed.values.tolist() == [1.0, 1.0, 0.0]


def test_rewarded_soups_subset_needs_reference(rng):
    arch = mlp2_arch(2, 3, 2)
    e = [init_reference(arch, rng) for _ in range(2)]
    with pytest.raises(ValueError):
        rewarded_soups(arch, e, [0.5, 0.5], names=["W2", "b2"])
    ref = init_reference(arch, rng)
    mixed = rewarded_soups(arch, e, [0.5, 0.5], ref, names=["W2", "b2"])
    assert np.array_equal(mixed.theta_mixed["W1"], ref["W1"])


def test_dera_recovers_gibbs_optimum():
    env = random_env(3, 4, 2, seed=5)
    arch = tabular_arch(3, 4)
    w = np.array([0.4, 0.6])
    theta_ref = init_reference(arch, None, env.ref_probs)
    opt = oracle.optimal_policy(env, 0.05, w)
    theta_min = arch.zeros().with_values(opt.logp.ravel())
    for alpha in np.linspace(0.05, 1.0, 7):
        pol = SoftmaxPolicy(dera_policy(arch, theta_min, theta_ref, alpha, 0.05))
        target = oracle.optimal_policy(env, alpha, w)
        assert oracle.total_variation(pol.probs, target.probs) <= 1e-10


def test_dera_endpoints(rng):
    arch = tabular_arch(2, 3)
    tm = arch.zeros().with_values(rng.normal(size=6))
    tr = arch.zeros().with_values(rng.normal(size=6))
    assert np.array_equal(dera_policy(arch, tm, tr, 0.1, 0.1), logits(arch, tm))
    assert np.array_equal(dera_policy(arch, tm, tr, 1.0, 0.1), logits(arch, tr))
