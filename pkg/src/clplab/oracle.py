"""Closed-form ground truth for finite environments.

The KL-regularized objective

    V(pi) = E_x E_{a~pi}[(1 - alpha) R(x, a) - alpha (log pi(a|x) - log ref(a|x))]

is maximized by the Gibbs policy ``pi* ∝ ref * exp((1 - alpha) R / alpha)``.
Everything here is computed by exact finite summation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .env import BanditEnv, scalarize
from .policy import SoftmaxPolicy


def reward_matrix(env: BanditEnv, R) -> np.ndarray:
    """Accept either a weight vector of length ``m`` or a ``[C, A]`` reward matrix."""
    R = np.asarray(R, dtype=float)
    if R.shape == (env.m,):
        return scalarize(env, R)
    if R.shape != (env.num_contexts, env.num_actions):
        raise ValueError(f"reward spec of shape {R.shape} fits neither weights nor a reward matrix")
    return R


def _as_probs_logp(policy) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(policy, (SoftmaxPolicy, OptimalPolicy)):
        return policy.probs, policy.logp
    p = np.asarray(policy, dtype=float)
    with np.errstate(divide="ignore"):
        return p, np.log(p)


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return float(alpha)


@dataclass
class OptimalPolicy:
    probs: np.ndarray
    logp: np.ndarray
    log_partition: np.ndarray
    alpha: float
    reward: np.ndarray

    @property
    def logits(self) -> np.ndarray:
        return self.logp

    def as_policy(self) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.logp)


def optimal_policy(env: BanditEnv, alpha: float, R, ref_probs=None) -> OptimalPolicy:
    """Gibbs optimum of the regularized objective for scalar reward ``R``."""
    alpha = _check_alpha(alpha)
    R = reward_matrix(env, R)
    ref = env.ref_probs if ref_probs is None else np.asarray(ref_probs, dtype=float)
    if np.any(ref <= 0):
        raise ValueError("reference policy needs full support")
    scale = (1.0 - alpha) / alpha
    u = np.log(ref) + scale * R
    umax = u.max(axis=1, keepdims=True)
    log_z = (umax + np.log(np.exp(u - umax).sum(axis=1, keepdims=True)))
    logp = u - log_z
    probs = np.exp(logp)
    probs /= probs.sum(axis=1, keepdims=True)
    return OptimalPolicy(probs, logp, log_z[:, 0], alpha, R)


def expected_rewards(env: BanditEnv, policy) -> np.ndarray:
    """``E_x E_{a~pi}[R_i(x, a)]`` for each reward ``i``."""
    p, _ = _as_probs_logp(policy)
    return np.einsum("x,xa,xai->i", env.context_dist, p, env.rewards)


def kl_per_context(env: BanditEnv, policy, other_logp=None) -> np.ndarray:
    """Per-context ``KL(pi || other)``; ``other`` defaults to the reference."""
    p, logp = _as_probs_logp(policy)
    q_logp = np.log(env.ref_probs) if other_logp is None else np.asarray(other_logp, dtype=float)
    with np.errstate(invalid="ignore"):
        terms = np.where(p > 0, p * (logp - q_logp), 0.0)
    return terms.sum(axis=1)


def kl(env: BanditEnv, policy, other_logp=None) -> float:
    return float(np.dot(env.context_dist, kl_per_context(env, policy, other_logp)))


def value(env: BanditEnv, policy, alpha: float, R) -> float:
    """Exact regularized value of ``policy``."""
    alpha = _check_alpha(alpha)
    R = reward_matrix(env, R)
    p, _ = _as_probs_logp(policy)
    reward = float(np.einsum("x,xa,xa->", env.context_dist, p, R))
    return (1.0 - alpha) * reward - alpha * kl(env, policy)


def optimal_value(env: BanditEnv, alpha: float, R) -> float:
    """``alpha * E_x[log Z(x)]``."""
    opt = optimal_policy(env, alpha, R)
    return float(alpha * np.dot(env.context_dist, opt.log_partition))


def regret(env: BanditEnv, policy, alpha: float, R) -> Tuple[float, float]:
    """Both sides of the regret identity.

    Returns ``(V* - V(pi), alpha * E_x KL(pi(x) || pi*(x)))``; they agree up
    to round-off.
    """
    opt = optimal_policy(env, alpha, R)
    v_star = float(alpha * np.dot(env.context_dist, opt.log_partition))
    lhs = v_star - value(env, policy, alpha, opt.reward)
    rhs = alpha * kl(env, policy, opt.logp)
    return lhs, rhs


def suboptimality(env: BanditEnv, policy, alpha: float, R) -> float:
    return regret(env, policy, alpha, R)[0]


def pareto_front_oracle(env: BanditEnv, alpha: float, w_grid):
    """Ground-truth front: the Gibbs optimum at every grid weighting."""
    from .evaluation import OracleSource, sweep

    return sweep(OracleSource(env), env, alpha, w_grid).points


def total_variation(p, q) -> float:
    """Largest per-context total-variation distance between two policies."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(0.5 * np.abs(p - q).sum(axis=-1).max())


PolicyLike = Union[SoftmaxPolicy, OptimalPolicy, np.ndarray]
