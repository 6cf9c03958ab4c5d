"""REINFORCE training of conditional bundles (multi-task) and single experts.

Per step the multi-task loop samples one weighting ``(alpha, w)``, conditions
the bundle, draws a batch of contexts and actions, and ascends

    r = (1 - alpha) * w.R(x, a) - alpha * (log pi(a|x) - log ref(a|x))

with a value baseline. The per-sample log-ratio has the exact per-context
KL as its expectation; the exact KL also enters the baseline. Advantages are
batch-normalized before multiplying the score. Gradients reach the bundle
through the mixing map: shared segments get the policy gradient unchanged,
conditioned copy ``i`` gets it scaled by ``(1 - f_mix(alpha)) * w[i]``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels_py, kernels
from .conditioning import ParameterBundle, condition
from .env import BanditEnv
from .policy import (
    Forward,
    ParameterVector,
    PolicyArchitecture,
    SoftmaxPolicy,
    forward,
    logit_vjp,
)
from .weightings import WeightingSampler, check_alpha, check_simplex, f_mix, sample as sample_weighting

OPTIMIZERS = ("sgd", "adam")


class DivergenceError(FloatingPointError):
    """Training produced non-finite parameters."""


@dataclass
class TrainConfig:
    """Training hyper-parameters.

    ``sampler`` is only used by multi-task training; single-objective runs
    take their weighting explicitly.
    """

    steps: int = 1000
    batch_size: int = 32
    lr_policy: float = 0.1
    lr_value: float = 0.1
    sampler: Optional[WeightingSampler] = None
    advantage_norm_eps: float = 1e-8
    normalize_advantage: bool = True
    optimizer: str = "sgd"
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for advantage normalization")
        if self.lr_policy <= 0 or self.lr_value <= 0:
            raise ValueError("learning rates must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class ValueBaseline:
    """Per-context, per-reward predictions of the expected raw reward."""

    v: np.ndarray

    @classmethod
    def zeros(cls, num_contexts: int, m: int) -> "ValueBaseline":
        return cls(np.zeros((num_contexts, m)))

    def predict(self, xs, w) -> np.ndarray:
        return self.v[xs] @ w

    def update(self, xs, raw, lr: float) -> None:
        """One step on the mean squared error toward the observed rewards."""
        g = np.zeros_like(self.v)
        np.add.at(g, xs, self.v[xs] - raw)
        self.v -= lr * g / len(xs)


@dataclass
class StepRecord:
    step: int
    alpha: float
    w: np.ndarray
    mean_rewards: np.ndarray
    kl: float
    objective: float
    grad_norm: float
    adv_mean: float
    adv_std: float


@dataclass
class TrainReport:
    records: List[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        if not self.records:
            return ""
        m = self.records[0].w.size
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step", "alpha"] + [f"w_{i}" for i in range(m)] + [f"r_{i}" for i in range(m)]
                    + ["kl", "objective", "grad_norm", "adv_mean", "adv_std"])
        for r in self.records:
            scalars = (r.kl, r.objective, r.grad_norm, r.adv_mean, r.adv_std)
            wr.writerow([r.step, repr(float(r.alpha))] + [repr(float(v)) for v in r.w]
                        + [repr(float(v)) for v in r.mean_rewards] + [repr(float(v)) for v in scalars])
        return buf.getvalue()


class Adam:
    def __init__(self, size: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, g: np.ndarray) -> np.ndarray:
        """Ascent direction for gradient ``g``."""
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, g):
        return self.lr * g


def _optimizer(cfg: TrainConfig, size: int):
    if cfg.optimizer == "adam":
        return Adam(size, cfg.lr_policy, cfg.adam_betas, cfg.adam_eps)
    return _Sgd(cfg.lr_policy)


def _guard(values: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"non-finite parameters at step {step}")


# -- batches and the policy-gradient core ------------------------------------------


@dataclass
class Batch:
    """Sampled contexts, actions and (already normalized) advantages."""

    xs: np.ndarray
    acts: np.ndarray
    adv: np.ndarray


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """``(A - mean) / (std + eps)``; a batch constant up to rounding maps to zeros."""
    return _kernels_py.normalize_advantages(np.asarray(adv, dtype=float), eps)


def sample_contexts(env: BanditEnv, n: int, rng: np.random.Generator) -> np.ndarray:
    dist = np.ascontiguousarray(env.context_dist[None, :])
    return kernels.sample_actions(dist, np.zeros(n, dtype=np.int64), rng.random(n))


def score_gradient(arch: PolicyArchitecture, theta: ParameterVector, fwd: Forward,
                   probs: np.ndarray, batch: Batch) -> np.ndarray:
    """Mean over the batch of ``adv * grad log pi(a | x)``, flat in theta's layout."""
    dz = kernels.score_dlogits(probs, batch.xs, batch.acts, np.ascontiguousarray(batch.adv))
    return logit_vjp(arch, theta, fwd, batch.xs, dz) / len(batch.xs)


def _rollout(arch, theta, feats, env, alpha, w, baseline, rng, cfg):
    """Sample a batch at ``theta`` and return the score gradient plus statistics."""
    fwd = forward(arch, theta, feats)
    pol = SoftmaxPolicy(fwd.logits)
    B = cfg.batch_size
    xs = sample_contexts(env, B, rng)
    u = rng.random(B)
    kl_x = kernels.kl_rows(pol.probs, pol.logp, env.ref_logp)
    acts, raw, dz, stats = kernels.rollout_batch(
        pol.probs, pol.logp, env.ref_logp, env.rewards, w, float(alpha), xs, u,
        baseline.v, kl_x, cfg.advantage_norm_eps, cfg.normalize_advantage)
    gamma = logit_vjp(arch, theta, fwd, xs, dz) / B
    kernels.baseline_update(baseline.v, xs, raw, cfg.lr_value)
    return gamma, (raw.mean(axis=0), stats[3], stats[0], stats[1], stats[2])


# -- gradient through the mixing map -------------------------------------------------


class _BundleLayout:
    """Index bookkeeping between the full parameter layout and a bundle."""

    def __init__(self, bundle: ParameterBundle):
        arch = bundle.arch
        full = arch.zeros()
        self.template = full
        S = set(arch.conditioned_names)
        s_idx, c_idx = [], []
        for name, (off, n) in full.segments.items():
            (s_idx if name in S else c_idx).append(np.arange(off, off + n))
        self.s_idx = np.concatenate(s_idx) if s_idx else np.zeros(0, dtype=int)
        self.c_idx = np.concatenate(c_idx) if c_idx else np.zeros(0, dtype=int)
        self.n_u = bundle.unconditioned.values.size
        self.n_s = bundle.ref_S.values.size
        self.copies = len(bundle.conditioned)

    def mixed_theta(self, flat: np.ndarray, bundle: ParameterBundle, beta: float, w) -> ParameterVector:
        vals = np.empty(self.template.values.size)
        vals[self.c_idx] = flat[:self.n_u]
        conds = flat[self.n_u:].reshape(self.copies, self.n_s)
        if self.copies == 1:
            avg = conds[0] * float(np.sum(w))
        else:
            avg = w @ conds
        vals[self.s_idx] = (1.0 - beta) * avg + beta * bundle.ref_S.values
        return self.template.with_values(vals)

    def pullback(self, gamma: np.ndarray, beta: float, w) -> np.ndarray:
        g_s = gamma[self.s_idx]
        if self.copies == 1:
            conds = [(1.0 - beta) * float(np.sum(w)) * g_s]
        else:
            conds = [(1.0 - beta) * wi * g_s for wi in w]
        return np.concatenate([gamma[self.c_idx]] + conds)


def clp_gradient(bundle: ParameterBundle, alpha: float, w, batch: Batch, features=None) -> ParameterBundle:
    """Bundle-shaped gradient of ``mean_b adv_b * log pi(a_b | x_b; alpha, w)``.

    Shared segments receive ``gamma[S^C]``; conditioned copy ``i`` receives
    ``(1 - f_mix(alpha)) * w[i] * gamma[S]``, where ``gamma`` is the policy
    gradient at the mixed parameters.
    """
    alpha = check_alpha(alpha, bundle.alpha_min)
    w = check_simplex(w, bundle.m)
    mixed = condition(bundle, alpha, w)
    feats = mixed.features(features) if features is not None else None
    fwd = forward(bundle.arch, mixed.theta_mixed, feats)
    pol = SoftmaxPolicy(fwd.logits)
    b = Batch(np.ascontiguousarray(batch.xs, dtype=np.int64), np.ascontiguousarray(batch.acts, dtype=np.int64),
              np.asarray(batch.adv, dtype=float))
    gamma = score_gradient(bundle.arch, mixed.theta_mixed, fwd, pol.probs, b)
    layout = _BundleLayout(bundle)
    return bundle.with_flat(layout.pullback(gamma, mixed.beta, w))


def batch_objective(bundle: ParameterBundle, flat, alpha, w, batch: Batch, features=None) -> float:
    """``mean_b adv_b * log pi(a_b | x_b)`` as a function of the bundle values."""
    b = bundle.with_flat(flat)
    mixed = condition(b, alpha, w)
    feats = mixed.features(features) if features is not None else None
    pol = SoftmaxPolicy(forward(b.arch, mixed.theta_mixed, feats).logits)
    return float(np.mean(np.asarray(batch.adv) * pol.logp[batch.xs, batch.acts]))


# -- training loops ---------------------------------------------------------------


def _features_for(bundle: ParameterBundle, env: BanditEnv, w):
    if bundle.arch.kind != "mlp2":
        return None
    return bundle.features_for(env.features, w)


def clp_train(
    env: BanditEnv,
    bundle: ParameterBundle,
    cfg: TrainConfig,
    checkpoint: Optional[Callable[[int, ParameterBundle], None]] = None,
) -> Tuple[ParameterBundle, TrainReport]:
    """Multi-task training of a conditional bundle over the weighting sampler."""
    if cfg.sampler is None:
        raise ValueError("multi-task training needs a weighting sampler")
    if cfg.sampler.m != bundle.m or env.m != bundle.m:
        raise ValueError(f"reward count mismatch: env {env.m}, sampler {cfg.sampler.m}, bundle {bundle.m}")
    if cfg.sampler.alpha_min != bundle.alpha_min:
        raise ValueError("sampler and bundle disagree on alpha_min")
    layout = _BundleLayout(bundle)
    flat = bundle.flat()
    w_rng = cfg.sampler.rng()
    rng = np.random.default_rng(cfg.seed)
    baseline = ValueBaseline.zeros(env.num_contexts, env.m)
    opt = _optimizer(cfg, flat.size)
    report = TrainReport()
    for t in range(cfg.steps):
        alpha, w = sample_weighting(cfg.sampler, w_rng)
        beta = min(max(f_mix(alpha, bundle.alpha_min), 0.0), 1.0)
        theta = layout.mixed_theta(flat, bundle, beta, w)
        feats = _features_for(bundle, env, w)
        gamma, stats = _rollout(bundle.arch, theta, feats, env, alpha, w, baseline, rng, cfg)
        g = layout.pullback(gamma, beta, w)
        flat = flat + opt.step(g)
        _guard(flat, t)
        report.records.append(StepRecord(t, alpha, w, stats[0], stats[1], stats[2],
                                         float(np.linalg.norm(g)), stats[3], stats[4]))
        if checkpoint is not None and cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0:
            checkpoint(t + 1, bundle.with_flat(flat))
    return bundle.with_flat(flat), report


def _reward_weights(env: BanditEnv, reward) -> np.ndarray:
    if isinstance(reward, (int, np.integer)):
        if not 0 <= reward < env.m:
            raise ValueError(f"reward index {reward} out of range")
        return np.eye(env.m)[int(reward)]
    return check_simplex(reward, env.m)


def soft_train(
    env: BanditEnv,
    reward: Union[int, Sequence[float]],
    alpha: float,
    cfg: TrainConfig,
    arch: PolicyArchitecture,
    theta_init: ParameterVector,
    return_report: bool = False,
):
    """Single-objective REINFORCE at a fixed ``(alpha, w)``.

    ``reward`` is a reward index or a weight vector.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    w = _reward_weights(env, reward)
    arch.check(theta_init)
    theta = theta_init.copy()
    rng = np.random.default_rng(cfg.seed)
    baseline = ValueBaseline.zeros(env.num_contexts, env.m)
    opt = _optimizer(cfg, theta.values.size)
    feats = env.features if arch.kind == "mlp2" else None
    report = TrainReport()
    vals = theta.values
    for t in range(cfg.steps):
        gamma, stats = _rollout(arch, theta, feats, env, alpha, w, baseline, rng, cfg)
        vals = vals + opt.step(gamma)
        _guard(vals, t)
        theta = theta.with_values(vals)
        if return_report:
            report.records.append(StepRecord(t, alpha, w, stats[0], stats[1], stats[2],
                                             float(np.linalg.norm(gamma)), stats[3], stats[4]))
    return (theta, report) if return_report else theta


def expert_steps(total_steps: int, m: int) -> List[int]:
    """Split a training budget evenly across ``m`` experts."""
    base, extra = divmod(total_steps, m)
    return [base + (1 if i < extra else 0) for i in range(m)]


def train_experts(
    env: BanditEnv,
    alpha: float,
    cfg: TrainConfig,
    arch: PolicyArchitecture,
    theta_ref: ParameterVector,
    return_reports: bool = False,
):
    """One single-reward expert per reward, sharing ``cfg.steps`` evenly.

    Returns the list of experts, plus their training reports when
    ``return_reports`` is set.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(env.m)
    experts, reports = [], []
    for i, (steps, ss) in enumerate(zip(expert_steps(cfg.steps, env.m), seeds)):
        sub = replace(cfg, steps=steps, seed=int(ss.generate_state(1)[0]))
        theta, rep = soft_train(env, i, alpha, sub, arch, theta_ref, return_report=True)
        experts.append(theta)
        reports.append(rep)
    return (experts, reports) if return_reports else experts


# -- exact expected gradients --------------------------------------------------------


def exact_logit_gradient(env: BanditEnv, pol: SoftmaxPolicy, alpha: float, w) -> np.ndarray:
    """``dV/dz`` for every context row: ``d(x) * pi * (g - E_pi g)``."""
    g = (1.0 - alpha) * (env.rewards @ w) - alpha * (pol.logp - env.ref_logp)
    centered = g - (pol.probs * g).sum(axis=1, keepdims=True)
    return env.context_dist[:, None] * pol.probs * centered


def exact_gradient(env: BanditEnv, arch: PolicyArchitecture, theta: ParameterVector, alpha: float, w,
                   features=None) -> np.ndarray:
    """Gradient of the exact regularized value with respect to ``theta``."""
    feats = env.features if (features is None and arch.kind == "mlp2") else features
    fwd = forward(arch, theta, feats)
    pol = SoftmaxPolicy(fwd.logits)
    dz = exact_logit_gradient(env, pol, alpha, np.asarray(w, dtype=float))
    xs = np.arange(env.num_contexts, dtype=np.int64)
    return logit_vjp(arch, theta, fwd, xs, dz)


def exact_bundle_gradient(env: BanditEnv, bundle: ParameterBundle, schedule) -> np.ndarray:
    """Gradient of the average exact value over a weighting schedule, flat in bundle layout."""
    layout = _BundleLayout(bundle)
    flat = bundle.flat()
    total = np.zeros_like(flat)
    for alpha, w in schedule:
        w = np.asarray(w, dtype=float)
        beta = min(max(f_mix(alpha, bundle.alpha_min), 0.0), 1.0)
        theta = layout.mixed_theta(flat, bundle, beta, w)
        feats = _features_for(bundle, env, w)
        gamma = exact_gradient(env, bundle.arch, theta, alpha, w, feats)
        total += layout.pullback(gamma, beta, w)
    return total / len(schedule)


def exact_train(
    env: BanditEnv,
    params: Union[ParameterBundle, Tuple[PolicyArchitecture, ParameterVector]],
    schedule,
    cfg: TrainConfig,
    monitor: Optional[List[float]] = None,
):
    """Deterministic full-gradient ascent on the exact value.

    ``params`` is a bundle (multi-task, averaged over ``schedule``) or an
    ``(arch, theta)`` pair trained at the single weighting ``schedule[0]``.
    ``monitor``, when given, receives the objective before every step.
    """
    schedule = [(float(a), np.asarray(w, dtype=float)) for a, w in schedule]
    if isinstance(params, ParameterBundle):
        flat = params.flat()
        opt = _optimizer(cfg, flat.size)
        for t in range(cfg.steps):
            b = params.with_flat(flat)
            if monitor is not None:
                monitor.append(_schedule_value(env, b, schedule))
            flat = flat + opt.step(exact_bundle_gradient(env, b, schedule))
            _guard(flat, t)
        return params.with_flat(flat)
    arch, theta = params
    alpha, w = schedule[0]
    vals = theta.values.copy()
    opt = _optimizer(cfg, vals.size)
    for t in range(cfg.steps):
        th = theta.with_values(vals)
        if monitor is not None:
            monitor.append(_theta_value(env, arch, th, alpha, w))
        vals = vals + opt.step(exact_gradient(env, arch, th, alpha, w))
        _guard(vals, t)
    return theta.with_values(vals)


def _theta_value(env, arch, theta, alpha, w, features=None) -> float:
    from .oracle import value

    feats = env.features if (features is None and arch.kind == "mlp2") else features
    pol = SoftmaxPolicy(forward(arch, theta, feats).logits)
    return value(env, pol, alpha, w)


def _schedule_value(env, bundle, schedule) -> float:
    from .oracle import value

    total = 0.0
    for alpha, w in schedule:
        mixed = condition(bundle, alpha, w)
        feats = _features_for(bundle, env, w)
        pol = SoftmaxPolicy(forward(bundle.arch, mixed.theta_mixed, feats).logits)
        total += value(env, pol, alpha, w)
    return total / len(schedule)


def sampled_gradient_mean(env: BanditEnv, arch: PolicyArchitecture, theta: ParameterVector, alpha: float, w,
                          draws: int, rng: np.random.Generator, chunk: int = 10_000):
    """Monte-Carlo mean and standard error of the unnormalized per-sample score gradient.

    Uses the raw objective (no baseline, no normalization) so its expectation
    is exactly :func:`exact_gradient`.
    """
    feats = env.features if arch.kind == "mlp2" else None
    fwd = forward(arch, theta, feats)
    pol = SoftmaxPolicy(fwd.logits)
    w = np.asarray(w, dtype=float)
    s1 = np.zeros(theta.values.size)
    s2 = np.zeros(theta.values.size)
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        xs = sample_contexts(env, n, rng)
        acts = pol.sample_batch(xs, rng)
        r = (1.0 - alpha) * (env.rewards[xs, acts] @ w) - alpha * (pol.logp[xs, acts] - env.ref_logp[xs, acts])
        dz = kernels.score_dlogits(pol.probs, xs, acts, np.ascontiguousarray(r))
        if arch.kind == "tabular":
            per = np.zeros((n, theta.values.size))
            idx = xs * arch.num_actions
            for a in range(arch.num_actions):
                per[np.arange(n), idx + a] = dz[:, a]
        else:
            per = np.stack([logit_vjp(arch, theta, fwd, xs[i:i + 1], dz[i:i + 1]) for i in range(n)])
        s1 += per.sum(axis=0)
        s2 += (per * per).sum(axis=0)
        done += n
    mean = s1 / draws
    var = np.maximum(s2 / draws - mean * mean, 0.0)
    return mean, np.sqrt(var / draws)
