import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clplab import oracle
from clplab.conditioning import condition, init_bundle
from clplab.env import counterexample_env, random_env
from clplab.experiments import gradient_rel_error, random_gradient_instance
from clplab.policy import grad_log_prob, init_reference, mlp2_arch, policy_of, reference_env, tabular_arch
from clplab.trainer import (
    Batch,
    DivergenceError,
    TrainConfig,
    clp_gradient,
    clp_train,
    exact_gradient,
    exact_train,
    expert_steps,
    normalize_advantages,
    sampled_gradient_mean,
    soft_train,
    train_experts,
)
from clplab.weightings import WeightingSampler


def tabular_setup(env, m=2, scheme="full"):
    arch = tabular_arch(env.num_contexts, env.num_actions, scheme)
    theta_ref = init_reference(arch, None, env.ref_probs)
    return arch, theta_ref, init_bundle(arch, theta_ref, m, 0.01)


def perturbed(bundle, rng, scale=0.5):
    return bundle.with_flat(bundle.flat() + rng.normal(scale=scale, size=bundle.flat().size))


def random_batch(rng, C, A, B=8):
    return Batch(rng.integers(0, C, B).astype(np.int64), rng.integers(0, A, B).astype(np.int64), rng.normal(size=B))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(lr_policy=0.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_normalize_advantages():
    out = normalize_advantages(np.array([1.0, 2.0, 3.0]))
    assert out.mean() == pytest.approx(0.0, abs=1e-15)
    assert out.std() == pytest.approx(1.0, abs=1e-7)
    assert np.array_equal(normalize_advantages(np.full(4, 2.5)), np.zeros(4))


def test_gradient_ratio_matches_weights(rng):
    env = random_env(3, 4, 2, seed=0)
    _, _, b = tabular_setup(env)
    b = perturbed(b, rng)
    w = np.array([0.2, 0.8])
    g = clp_gradient(b, 0.3, w, random_batch(rng, 3, 4))
    g0, g1 = g.conditioned[0].values, g.conditioned[1].values
    nz = np.abs(g0) > 1e-14
    assert nz.any()
    assert np.allclose(g0[nz] / g1[nz], 0.25, rtol=1e-12)


def test_alpha_one_gives_zero_conditioned_gradient(rng):
    env = random_env(3, 4, 2, seed=0)
    _, _, b = tabular_setup(env)
    g = clp_gradient(perturbed(b, rng), 1.0, [0.5, 0.5], random_batch(rng, 3, 4))
    for c in g.conditioned:
        assert np.all(c.values == 0.0)


def test_alpha_min_scale_is_one(rng):
    env = random_env(3, 4, 2, seed=0)
    arch = mlp2_arch(3, 4, 4, "logit")
    b = perturbed(init_bundle(arch, init_reference(arch, rng), 2, 0.01), rng)
    batch = random_batch(rng, 3, 4)
    w = np.array([0.3, 0.7])
    g = clp_gradient(b, 0.01, w, batch, env.features)
    mixed = condition(b, 0.01, w)
    assert mixed.beta == 0.0
    gamma = np.mean([adv * grad_log_prob(arch, mixed.theta_mixed, x, a, env.features).values
                     for x, a, adv in zip(batch.xs, batch.acts, batch.adv)], axis=0)
    gamma_S = mixed.theta_mixed.with_values(gamma).restrict(arch.conditioned_names).values
    for wi, c in zip(w, g.conditioned):
        assert np.allclose(c.values, wi * gamma_S, atol=1e-13)


@given(seed=st.integers(0, 100_000))
def test_clp_gradient_matches_finite_differences(seed):
    inst = random_gradient_instance(np.random.default_rng(seed))
    assert gradient_rel_error(*inst) <= 1e-4


def test_exact_gradient_vanishes_at_optimum():
    env = random_env(3, 4, 2, seed=2)
    arch = tabular_arch(3, 4)
    w = np.array([0.6, 0.4])
    opt = oracle.optimal_policy(env, 0.2, w)
    theta = arch.zeros().with_values(opt.logp.ravel())
    assert np.max(np.abs(exact_gradient(env, arch, theta, 0.2, w))) <= 1e-8


def test_exact_gradient_matches_value_finite_differences(rng):
    env = random_env(2, 3, 2, seed=4)
    arch = tabular_arch(2, 3)
    theta = arch.zeros().with_values(rng.normal(size=6))
    w = np.array([0.5, 0.5])
    g = exact_gradient(env, arch, theta, 0.3, w)
    h = 1e-6
    fd = np.zeros(6)
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        up = oracle.value(env, policy_of(arch, theta.with_values(theta.values + e)), 0.3, w)
        dn = oracle.value(env, policy_of(arch, theta.with_values(theta.values - e)), 0.3, w)
        fd[j] = (up - dn) / (2 * h)
    assert np.allclose(g, fd, atol=1e-8)


def test_sampled_gradient_unbiased():
    env = random_env(2, 3, 2, seed=6)
    arch = tabular_arch(2, 3)
    theta = arch.zeros().with_values(np.random.default_rng(1).normal(size=6))
    w = np.array([0.3, 0.7])
    exact = exact_gradient(env, arch, theta, 0.2, w)
    mean, se = sampled_gradient_mean(env, arch, theta, 0.2, w, 100_000, np.random.default_rng(2))
    assert np.all(np.abs(mean - exact) <= 3 * se + 1e-12)


def test_exact_train_monotone_and_converges():
    env = random_env(3, 4, 2, seed=7)
    arch = tabular_arch(3, 4)
    w = np.array([0.5, 0.5])
    monitor = []
    theta = exact_train(env, (arch, arch.zeros()), [(0.2, w)], TrainConfig(steps=3000, lr_policy=1.0), monitor)
    assert np.all(np.diff(monitor) >= -1e-12)
    opt = oracle.optimal_policy(env, 0.2, w)
    assert oracle.kl(env, policy_of(arch, theta), opt.logp) <= 1e-6


def test_exact_train_bundle_schedule():
    env = counterexample_env()
    _, _, b = tabular_setup(env)
    sched = [(0.01, [1.0, 0.0]), (0.01, [0.0, 1.0]), (0.01, [0.5, 0.5])]
    out = exact_train(env, b, sched, TrainConfig(steps=2000, lr_policy=0.05, optimizer="adam"))
    assert condition(out, 0.01, [0.5, 0.5]).policy().probs[0, 2] > 0.9


def test_zero_weight_isolation():
    env = random_env(3, 4, 2, seed=0)
    _, _, b = tabular_setup(env)
    for opt in ("sgd", "adam"):
        sampler = WeightingSampler([1.0, 1.0], 0.01, "inverse_cdf", fixed_w=[1.0, 0.0], seed=1)
        out, _ = clp_train(env, b, TrainConfig(steps=300, sampler=sampler, optimizer=opt, lr_policy=0.05))
        assert np.array_equal(out.conditioned[1].values, b.conditioned[1].values)
        assert not np.array_equal(out.conditioned[0].values, b.conditioned[0].values)


def test_alpha_one_run_stays_at_reference():
    env = random_env(3, 4, 2, seed=1)
    _, _, b = tabular_setup(env)
    sampler = WeightingSampler([1.0, 1.0], 0.01, "fixed", alpha_fixed=1.0, seed=0)
    out, rep = clp_train(env, b, TrainConfig(steps=200, sampler=sampler))
    pol = condition(out, 1.0, [0.5, 0.5]).policy()
    assert np.allclose(pol.probs, env.ref_probs, atol=1e-14)
    assert all(r.kl == pytest.approx(0.0, abs=1e-12) for r in rep.records)


def test_determinism_bitwise():
    env = random_env(3, 4, 2, seed=0)
    _, _, b = tabular_setup(env)
    cfg = TrainConfig(steps=200, sampler=WeightingSampler([1.0, 1.0], 0.01, seed=3), seed=4)
    o1, r1 = clp_train(env, b, cfg)
    o2, r2 = clp_train(env, b, cfg)
    assert np.array_equal(o1.flat(), o2.flat())
    assert r1.to_csv() == r2.to_csv()
    assert len(r1) == 200


def test_report_csv_columns():
    env = random_env(2, 3, 2, seed=0)
    _, _, b = tabular_setup(env)
    _, rep = clp_train(env, b, TrainConfig(steps=3, sampler=WeightingSampler([1.0, 1.0], 0.01)))
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("step,alpha,w_0,w_1,r_0,r_1,kl,objective,grad_norm")
    assert len(lines) == 4 and "np." not in lines[1]


def test_checkpoint_callback():
    env = random_env(2, 3, 2, seed=0)
    _, _, b = tabular_setup(env)
    seen = []
    cfg = TrainConfig(steps=10, sampler=WeightingSampler([1.0, 1.0], 0.01), checkpoint_every=4)
    clp_train(env, b, cfg, lambda t, bundle: seen.append(t))
    assert seen == [4, 8]


def test_divergence_guard():
    env = random_env(3, 4, 2, seed=0)
    _, _, b = tabular_setup(env)
    cfg = TrainConfig(steps=20, sampler=WeightingSampler([1.0, 1.0], 0.01), lr_policy=1e308, optimizer="adam")
    with np.errstate(over="ignore"):
        with pytest.raises(DivergenceError):
            clp_train(env, b, cfg)


def test_soft_train_reaches_oracle():
    env = random_env(2, 3, 2, seed=11)
    arch = tabular_arch(2, 3)
    theta = soft_train(env, [0.5, 0.5], 0.2, TrainConfig(steps=4000, lr_policy=0.05, seed=1), arch, arch.zeros())
    opt = oracle.optimal_policy(env, 0.2, [0.5, 0.5])
    assert oracle.kl(env, policy_of(arch, theta), opt.logp) <= 1e-3


def test_soft_train_single_reward_counterexample():
    env = counterexample_env()
    arch = tabular_arch(1, 3)
    cfg = TrainConfig(steps=3000, lr_policy=0.05, optimizer="adam", seed=0)
    theta = soft_train(env, 0, 0.01, cfg, arch, arch.zeros())
    assert policy_of(arch, theta).probs[0, 0] > 0.95


def test_soft_train_on_mlp(rng):
    env = random_env(3, 3, 2, seed=3, feature_mode="dense", feature_dim=2)
    arch = mlp2_arch(2, 8, 3)
    theta_ref = init_reference(arch, rng)
    env = reference_env(env, arch, theta_ref)
    before = oracle.value(env, policy_of(arch, theta_ref, env.features), 0.2, [0.5, 0.5])
    theta = soft_train(env, [0.5, 0.5], 0.2, TrainConfig(steps=1500, lr_policy=0.02, optimizer="adam"), arch, theta_ref)
    after = oracle.value(env, policy_of(arch, theta, env.features), 0.2, [0.5, 0.5])
    assert after > before


def test_expert_budget_split():
    assert expert_steps(20_000, 2) == [10_000, 10_000]
    assert expert_steps(10, 3) == [4, 3, 3]
    env = counterexample_env()
    arch = tabular_arch(1, 3)
    experts, reports = train_experts(env, 0.01, TrainConfig(steps=101), arch, arch.zeros(), return_reports=True)
    assert [len(r) for r in reports] == [51, 50]
    assert len(experts) == 2
