"""Sensitivity of zero-shot logit mixing: coverage, the sub-optimality bound, fuzzing.

For eps-optimal experts ``pi1`` (reward R1) and ``pi2`` (reward R2), the
logit mixture ``pi_lam ∝ pi1^(1-lam) * pi2^lam`` satisfies

    V*_{R_lam} - V_{R_lam}(pi_lam)
        <= eps * (exp(eta^2 / 8) * ((1-lam) * C21^lam + lam * C12^(1-lam)) + 4 |A| / p_min)

with ``C12 = max pi2/pi1``, ``C21 = max pi1/pi2``, ``eta`` the largest
absolute logit (last action pinned to 0) and ``p_min`` the smallest action
probability of either expert.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from . import oracle
from .env import BanditEnv
from .policy import SoftmaxPolicy

INF = math.inf
VIOLATION_ATOL = 1e-12


def _probs(policy) -> np.ndarray:
    if hasattr(policy, "probs"):
        return np.asarray(policy.probs, dtype=float)
    return np.asarray(policy, dtype=float)


def concentrability(p1, p2) -> float:
    """``max_{x,y} p2(y|x) / p1(y|x)``; ``inf`` if ``p2`` puts mass where ``p1`` has none."""
    a = _probs(p1)
    b = _probs(p2)
    if a.shape != b.shape:
        raise ValueError(f"policy shapes differ: {a.shape} vs {b.shape}")
    if np.any((a == 0) & (b > 0)):
        return INF
    mask = a > 0
    return float(np.max(b[mask] / a[mask]))


def pinned_logits(policy) -> np.ndarray:
    """Log-probabilities shifted so the last action's logit is 0 in every row."""
    p = _probs(policy)
    logp = np.log(p)
    return logp - logp[:, -1:]


def max_abs_logit(*policies) -> float:
    return float(max(np.max(np.abs(pinned_logits(p))) for p in policies))


def min_prob(*policies) -> float:
    return float(min(np.min(_probs(p)) for p in policies))


@dataclass
class BoundInputs:
    eps: float
    lam: float
    C_12: float
    C_21: float
    p_min: float
    eta: float
    num_actions: int

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        for name in ("C_12", "C_21"):
            c = getattr(self, name)
            if not c >= 1.0 - 1e-12:
                raise ValueError(f"{name} must be >= 1, got {c}")
        if not 0.0 < self.p_min <= 1.0:
            raise ValueError(f"p_min must lie in (0, 1], got {self.p_min}")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if self.num_actions < 1:
            raise ValueError("num_actions must be positive")


def mixing_bound(b: BoundInputs) -> float:
    """Upper bound on the sub-optimality of the logit mixture."""
    if math.isinf(b.C_12) or math.isinf(b.C_21):
        return INF
    if b.eps == 0.0:
        return 0.0
    coverage = (1.0 - b.lam) * b.C_21 ** b.lam + b.lam * b.C_12 ** (1.0 - b.lam)
    return b.eps * (math.exp(b.eta ** 2 / 8.0) * coverage + 4.0 * b.num_actions / b.p_min)


def bound_inputs(pi1, pi2, eps: float, lam: float) -> BoundInputs:
    """Measure coverage, ``p_min`` and ``eta`` of two expert policies."""
    return BoundInputs(
        eps=eps,
        lam=lam,
        C_12=concentrability(pi1, pi2),
        C_21=concentrability(pi2, pi1),
        p_min=min_prob(pi1, pi2),
        eta=max_abs_logit(pi1, pi2),
        num_actions=_probs(pi1).shape[1],
    )


def perturbed_expert(opt_probs, delta: float) -> np.ndarray:
    """Mix an optimal policy with uniform noise at rate ``delta``."""
    p = np.asarray(opt_probs, dtype=float)
    return (1.0 - delta) * p + delta / p.shape[1]


def logit_mixture(pi1, pi2, lam: float) -> SoftmaxPolicy:
    return SoftmaxPolicy((1.0 - lam) * np.log(_probs(pi1)) + lam * np.log(_probs(pi2)))


@dataclass
class Trial:
    alpha: float
    lam: float
    deltas: List[float]
    eps: float
    measured: float
    bound: float

    @property
    def ratio(self) -> float:
        if self.bound == 0.0:
            return 0.0
        return self.measured / self.bound


def run_trial(env: BanditEnv, alpha: float, lam: float, deltas) -> Trial:
    """One soundness check on a two-reward environment."""
    if env.m != 2:
        raise ValueError("the logit-mixing bound is stated for two rewards")
    R1 = env.rewards[:, :, 0]
    R2 = env.rewards[:, :, 1]
    pi1 = perturbed_expert(oracle.optimal_policy(env, alpha, R1).probs, deltas[0])
    pi2 = perturbed_expert(oracle.optimal_policy(env, alpha, R2).probs, deltas[1])
    eps = max(0.0, oracle.regret(env, pi1, alpha, R1)[0], oracle.regret(env, pi2, alpha, R2)[0])
    mixed = logit_mixture(pi1, pi2, lam)
    measured = oracle.regret(env, mixed, alpha, (1.0 - lam) * R1 + lam * R2)[0]
    bound = mixing_bound(bound_inputs(pi1, pi2, eps, lam))
    return Trial(alpha, lam, [float(d) for d in deltas], eps, measured, bound)


def random_fuzz_env(rng: np.random.Generator, num_actions: int = 2, max_contexts: int = 3) -> BanditEnv:
    """Random two-reward environment with a random full-support reference."""
    C = int(rng.integers(1, max_contexts + 1))
    ref = rng.dirichlet(np.ones(num_actions), size=C)
    ref = np.clip(ref, 1e-3, None)
    ref /= ref.sum(axis=1, keepdims=True)
    return BanditEnv(
        rewards=rng.random((C, num_actions, 2)),
        context_dist=rng.dirichlet(np.ones(C)),
        ref_probs=ref,
        features=np.eye(C),
        name="fuzz",
    )


@dataclass
class FuzzReport:
    trials: int = 0
    violations: int = 0
    max_ratio: float = 0.0
    histogram: dict = field(default_factory=dict)
    counterexamples: List[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


HIST_EDGES = (-np.inf, -6, -5, -4, -3, -2, -1, 0, np.inf)


def _bucket(ratio: float) -> str:
    if ratio <= 0:
        return "ratio=0"
    lg = math.log10(ratio)
    for lo, hi in zip(HIST_EDGES[:-1], HIST_EDGES[1:]):
        if lo <= lg < hi:
            return f"log10 in [{lo}, {hi})"
    return f"log10 in [{HIST_EDGES[-2]}, inf)"


def bound_fuzz(
    trials: int,
    rng: np.random.Generator,
    num_actions: int = 2,
    max_contexts: int = 3,
    alpha_range=(0.05, 0.95),
    max_delta: float = 0.5,
    exact_experts: bool = False,
) -> FuzzReport:
    """Fuzz the mixing bound on random environments.

    Each trial perturbs the two single-reward optima by uniform noise, takes
    the realized ``eps`` from the regret identity, mixes logits at a random
    ``lambda`` and compares the true sub-optimality against the bound.
    ``exact_experts`` sets every perturbation rate to zero.
    """
    report = FuzzReport()
    for _ in range(trials):
        env = random_fuzz_env(rng, num_actions, max_contexts)
        alpha = float(rng.uniform(*alpha_range))
        lam = float(rng.random())
        deltas = [0.0, 0.0] if exact_experts else rng.uniform(0.0, max_delta, size=2)
        t = run_trial(env, alpha, lam, deltas)
        report.trials += 1
        ratio = t.ratio
        report.max_ratio = max(report.max_ratio, ratio)
        key = _bucket(ratio)
        report.histogram[key] = report.histogram.get(key, 0) + 1
        if t.measured > t.bound + VIOLATION_ATOL:
            report.violations += 1
            report.counterexamples.append({
                "trial": asdict(t),
                "env": {
                    "rewards": env.rewards.tolist(),
                    "context_dist": env.context_dist.tolist(),
                    "reference": env.ref_probs.tolist(),
                },
            })
    return report
