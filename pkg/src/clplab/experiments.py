"""Verification suites and reproduction pipelines shared by the CLI and tests.

Every suite returns a list of :class:`Check` records; none of them include
timings, so reports are byte-identical across runs with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import oracle
from .conditioning import ParameterBundle, init_bundle, logit_ensemble, logit_mix
from .env import BanditEnv, counterexample_env, random_env
from .evaluation import BundleSource, Front, LogitMixSource, OracleSource, SoupSource, closest_point, dominates, spread, sweep
from .policy import SoftmaxPolicy, init_reference, mlp2_arch, tabular_arch
from .theory import bound_fuzz
from .trainer import Batch, TrainConfig, batch_objective, clp_gradient, clp_train, train_experts
from .weightings import WeightingSampler, alpha_median, f_mix, inv_f_mix, sample_many, simplex_grid

SUITES = ("fmix", "gradients", "logit_identity", "regret", "bound_fuzz", "counterexample")
EXIT_CODES = {name: 10 + i for i, name in enumerate(SUITES)}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# -- KL-mixing map ----------------------------------------------------------------


def verify_fmix(seed: int = 0, alpha_min: float = 0.01, grid_points: int = 10_000,
                draws: int = 100_000) -> List[Check]:
    u = np.linspace(0.0, 1.0, grid_points)
    err = float(np.max(np.abs(f_mix(inv_f_mix(u, alpha_min), alpha_min) - u)))
    checks = [Check("round_trip", err <= 1e-12, f"max |f_mix(inv(u)) - u| = {_fmt(err)} over {grid_points} points")]
    ends = (f_mix(1.0, alpha_min), f_mix(alpha_min, alpha_min))
    checks.append(Check("endpoints", ends == (1.0, 0.0), f"f_mix(1) = {ends[0]!r}, f_mix(alpha_min) = {ends[1]!r}"))
    sampler = WeightingSampler([1.0, 1.0], alpha_min, "inverse_cdf", seed=seed)
    alphas = sample_many(sampler, draws, sampler.rng())[0]
    med = float(np.median(alphas))
    target = alpha_median(alpha_min)
    rel = abs(med - target) / target
    checks.append(Check("median", rel <= 0.01, f"sampled median {_fmt(med)} vs {_fmt(target)} (rel {_fmt(rel)})"))
    return checks


# -- gradients through the mixing map ----------------------------------------------


def random_gradient_instance(rng: np.random.Generator, kind: Optional[str] = None):
    """A random bundle, weighting and batch for gradient checks."""
    kind = kind or ("tabular", "mlp2", "mlp2", "mlp2")[int(rng.integers(4))]
    m = int(rng.integers(2, 4))
    A = int(rng.integers(2, 5))
    C = int(rng.integers(1, 4))
    alpha_min = 0.01
    prompt = False
    if kind == "tabular":
        arch = tabular_arch(C, A, ("full", "logit")[int(rng.integers(2))])
        theta_ref = arch.zeros().with_values(rng.normal(scale=0.5, size=C * A))
        feats = None
    else:
        d = int(rng.integers(1, 4))
        prompt = bool(rng.integers(2))
        repeats = int(rng.integers(1, 4))
        arch = mlp2_arch(d + (m * repeats if prompt else 0), int(rng.integers(2, 6)), A,
                         ("full", "mid", "logit")[int(rng.integers(3))])
        theta_ref = init_reference(arch, rng, std=0.5)
        feats = rng.normal(size=(C, d))
    bundle = init_bundle(arch, theta_ref, m, alpha_min, cond_prompt=prompt,
                         repeats=repeats if prompt else 5)
    flat = bundle.flat() + rng.normal(scale=0.5, size=bundle.flat().size)
    bundle = bundle.with_flat(flat)
    alpha = float(inv_f_mix(rng.random(), alpha_min))
    w = rng.dirichlet(np.ones(m))
    B = int(rng.integers(2, 9))
    batch = Batch(rng.integers(0, C, size=B).astype(np.int64), rng.integers(0, A, size=B).astype(np.int64),
                  rng.normal(size=B))
    return bundle, alpha, w, batch, feats


def finite_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function."""
    g = np.zeros_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (f(xp) - f(xm)) / (2 * step)
    return g


def gradient_rel_error(bundle: ParameterBundle, alpha, w, batch, feats, step: float = 1e-5) -> float:
    analytic = clp_gradient(bundle, alpha, w, batch, feats).flat()
    numeric = finite_difference(lambda v: batch_objective(bundle, v, alpha, w, batch, feats), bundle.flat(), step)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def verify_gradients(seed: int = 0, instances: int = 100) -> List[Check]:
    rng = np.random.default_rng(seed)
    errs = [gradient_rel_error(*random_gradient_instance(rng)) for _ in range(instances)]
    worst = max(errs)
    return [Check("clp_gradient_vs_fd", worst <= 1e-4,
                  f"max relative error {_fmt(worst)} over {instances} random instances")]


# -- closed-form identities ---------------------------------------------------------


def logit_identity_tv(env: BanditEnv, alpha: float, lam: float) -> float:
    R1 = env.rewards[:, :, 0]
    R2 = env.rewards[:, :, 1]
    z1 = oracle.optimal_policy(env, alpha, R1).logp
    z2 = oracle.optimal_policy(env, alpha, R2).logp
    mixed = SoftmaxPolicy(logit_mix(z1, z2, lam))
    target = oracle.optimal_policy(env, alpha, (1.0 - lam) * R1 + lam * R2)
    return oracle.total_variation(mixed.probs, target.probs)


def verify_logit_identity(seed: int = 0, envs: int = 50, lambdas: int = 21) -> List[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(envs):
        env = random_env(int(rng.integers(1, 5)), int(rng.integers(2, 6)), 2, seed=int(rng.integers(2**31)))
        alpha = float(rng.uniform(0.02, 1.0))
        for lam in np.linspace(0.0, 1.0, lambdas):
            worst = max(worst, logit_identity_tv(env, alpha, float(lam)))
    return [Check("logit_mixing_identity", worst <= 1e-10,
                  f"max total variation {_fmt(worst)} over {envs} envs x {lambdas} lambdas")]


def random_policy(rng: np.random.Generator, C: int, A: int) -> np.ndarray:
    return rng.dirichlet(np.ones(A) * float(rng.choice([0.3, 1.0, 3.0])), size=C)


def verify_regret(seed: int = 0, triples: int = 1000) -> List[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    negative = 0
    for _ in range(triples):
        C, A = int(rng.integers(1, 5)), int(rng.integers(2, 6))
        env = random_env(C, A, 2, seed=int(rng.integers(2**31)))
        ref = random_policy(rng, C, A)
        env = env.with_reference(np.clip(ref, 1e-6, None) / np.clip(ref, 1e-6, None).sum(axis=1, keepdims=True))
        pi = random_policy(rng, C, A)
        alpha = float(rng.uniform(0.01, 1.0))
        lhs, rhs = oracle.regret(env, pi, alpha, rng.dirichlet(np.ones(2)))
        worst = max(worst, abs(lhs - rhs))
        negative += lhs < -1e-12
    return [
        Check("regret_identity", worst <= 1e-10, f"max |lhs - rhs| = {_fmt(worst)} over {triples} triples"),
        Check("regret_nonnegative", negative == 0, f"{negative} negative regrets"),
    ]


def verify_bound_fuzz(seed: int = 0, trials: int = 1000) -> List[Check]:
    rep = bound_fuzz(trials, np.random.default_rng(seed))
    exact = bound_fuzz(50, np.random.default_rng(seed + 1), exact_experts=True)
    worst_exact = 0.0
    rng = np.random.default_rng(seed + 2)
    from .theory import random_fuzz_env, run_trial

    for _ in range(50):
        env = random_fuzz_env(rng)
        t = run_trial(env, float(rng.uniform(0.05, 0.95)), float(rng.random()), [0.0, 0.0])
        worst_exact = max(worst_exact, t.measured)
    return [
        Check("bound_violations", rep.violations == 0,
              f"{rep.violations} violations in {rep.trials} trials; max measured/bound {_fmt(rep.max_ratio)}"),
        Check("exact_experts", worst_exact <= 1e-10 and exact.violations == 0,
              f"max sub-optimality of mixed exact experts {_fmt(worst_exact)}"),
    ]


# -- counterexample reproduction ------------------------------------------------------

COUNTEREXAMPLE_ALPHA = 0.01


def near_deterministic_logits(num_actions: int, best: int, delta: float = 1e-3) -> np.ndarray:
    p = np.full(num_actions, delta)
    p[best] = 1.0 - delta * (num_actions - 1)
    return np.log(p)[None, :]


@dataclass
class CounterexampleResult:
    clp_mass: float
    rs_mass: float
    logit_mix_mass: float
    analytic_mix_mass: float
    closest_distance: float
    dominance: float
    clp_front: Front
    rs_front: Front
    oracle_front: Front
    clp_spread: float
    rs_spread: float
    oracle_spread: float
    bundle: ParameterBundle
    experts: list


def counterexample_config(seed: int = 0, steps: int = 20_000, lr: float = 0.05,
                          optimizer: str = "adam") -> TrainConfig:
    ss = np.random.SeedSequence(seed).spawn(2)
    sampler = WeightingSampler([1.0, 1.0], alpha_min=COUNTEREXAMPLE_ALPHA, alpha_mode="fixed",
                               alpha_fixed=COUNTEREXAMPLE_ALPHA, seed=int(ss[0].generate_state(1)[0]))
    return TrainConfig(steps=steps, batch_size=32, lr_policy=lr, lr_value=0.1, sampler=sampler,
                       optimizer=optimizer, seed=int(ss[1].generate_state(1)[0]))


def run_counterexample(seed: int = 0, steps: int = 20_000, lr: float = 0.05, optimizer: str = "adam",
                       points_per_edge: int = 21) -> CounterexampleResult:
    """Multi-task CLP against Rewarded Soups and logit mixing on the three-action example.

    Both methods get the same total budget: CLP trains ``steps`` steps, the
    two soup experts ``steps / 2`` each.
    """
    env = counterexample_env()
    alpha = COUNTEREXAMPLE_ALPHA
    arch = tabular_arch(1, 3)
    theta_ref = init_reference(arch, None, env.ref_probs)
    cfg = counterexample_config(seed, steps, lr, optimizer)
    bundle, _ = clp_train(env, init_bundle(arch, theta_ref, 2, alpha), cfg)
    experts = train_experts(env, alpha, cfg, arch, theta_ref)
    grid = simplex_grid(2, points_per_edge)
    mid = np.array([0.5, 0.5])
    clp_src = BundleSource(bundle, None, "clp_full")
    rs_src = SoupSource(arch, experts, None)
    mix_src = LogitMixSource([SoftmaxPolicy(e["table"]).logp for e in experts])
    analytic = logit_ensemble([near_deterministic_logits(3, 0), near_deterministic_logits(3, 1)], mid)
    clp_front = sweep(clp_src, env, alpha, grid)
    rs_front = sweep(rs_src, env, alpha, grid)
    oracle_front = sweep(OracleSource(env), env, alpha, grid)
    return CounterexampleResult(
        clp_mass=float(clp_src(alpha, mid).probs[0, 2]),
        rs_mass=float(rs_src(alpha, mid).probs[0, 2]),
        logit_mix_mass=float(mix_src(alpha, mid).probs[0, 2]),
        analytic_mix_mass=float(SoftmaxPolicy(analytic).probs[0, 2]),
        closest_distance=closest_point(clp_front, [0.75, 0.75])[1],
        dominance=dominates(clp_front, rs_front)[1],
        clp_front=clp_front,
        rs_front=rs_front,
        oracle_front=oracle_front,
        clp_spread=spread(clp_front),
        rs_spread=spread(rs_front),
        oracle_spread=spread(oracle_front),
        bundle=bundle,
        experts=experts,
    )


def verify_counterexample(seed: int = 0, steps: int = 20_000) -> List[Check]:
    r = run_counterexample(seed, steps)
    rs_near = closest_point(r.rs_front, [0.75, 0.75])[1]
    return [
        Check("clp_mass_on_action3", r.clp_mass >= 0.9, f"CLP puts {_fmt(r.clp_mass)} on action 3 at w=(0.5,0.5)"),
        Check("rs_mass_on_action3", r.rs_mass <= 0.05, f"Rewarded Soups puts {_fmt(r.rs_mass)} on action 3"),
        Check("logit_mix_mass_on_action3", max(r.logit_mix_mass, r.analytic_mix_mass) <= 0.05,
              f"logit mixing puts {_fmt(r.logit_mix_mass)} (trained experts) / "
              f"{_fmt(r.analytic_mix_mass)} (near-deterministic experts) on action 3"),
        Check("clp_front_reaches_middle", r.closest_distance <= 0.05,
              f"CLP front within L-inf {_fmt(r.closest_distance)} of (0.75, 0.75); RS within {_fmt(rs_near)}"),
        Check("clp_dominates_rs", r.dominance >= 0.9, f"CLP >= RS on {_fmt(r.dominance)} of the grid"),
        Check("spread_logged", True, f"spread oracle {_fmt(r.oracle_spread)}, CLP {_fmt(r.clp_spread)}, "
              f"RS {_fmt(r.rs_spread)} (stand-in steerability score)"),
    ]


RUNNERS = {
    "fmix": verify_fmix,
    "gradients": verify_gradients,
    "logit_identity": verify_logit_identity,
    "regret": verify_regret,
    "bound_fuzz": verify_bound_fuzz,
    "counterexample": verify_counterexample,
}


def run_suite(name: str, seed: int = 0) -> List[Check]:
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    return RUNNERS[name](seed=seed)


def format_report(results: Dict[str, List[Check]], seed: int) -> str:
    lines = [f"# clplab verify report (seed={seed})"]
    for suite, checks in results.items():
        ok = all(c.passed for c in checks)
        lines.append(f"suite {suite}: {'PASS' if ok else 'FAIL'}")
        lines.extend("  " + c.line() for c in checks)
    return "\n".join(lines) + "\n"
