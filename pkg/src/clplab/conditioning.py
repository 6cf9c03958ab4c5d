"""Turning conditional parameters plus a weighting into a concrete policy.

A :class:`ParameterBundle` stores one shared copy of the unconditioned
segments and ``m`` copies of the conditioned segments ``S``. Conditioning on
``(alpha, w)`` computes

    theta_S = (1 - beta) * sum_i w[i] * theta_S^(i) + beta * theta_ref[S],
    beta = f_mix(alpha),

and glues it to the unconditioned segments. Zero-shot baselines (logit
mixing, Rewarded Soups, DeRa) live here too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .policy import (
    LayoutError,
    ParameterVector,
    PolicyArchitecture,
    SoftmaxPolicy,
    combine,
    logits as forward_logits,
)
from .weightings import check_alpha, check_simplex, f_mix

DEFAULT_REPEATS = 5
BUNDLE_FORMAT = "clplab-bundle"
BUNDLE_VERSION = 1


def augment_features(features, w, repeats: int = DEFAULT_REPEATS) -> np.ndarray:
    """Append each reward weight ``repeats`` times to every feature row."""
    features = np.asarray(features, dtype=float)
    tail = np.repeat(np.asarray(w, dtype=float), repeats)
    return np.hstack([features, np.broadcast_to(tail, (features.shape[0], tail.size))])


def mute_prompt_inputs(arch: PolicyArchitecture, theta: ParameterVector, base_dim: int) -> ParameterVector:
    """Zero the first-layer columns that read appended weight features.

    The resulting policy ignores the prompt, so a reference built this way is
    the same for every weighting.
    """
    if arch.kind != "mlp2" or not 0 < base_dim <= arch.feature_dim:
        raise ValueError("prompt inputs only exist for mlp2 policies with appended features")
    W1 = theta["W1"].copy()
    W1[:, base_dim:] = 0.0
    vals = theta.values.copy()
    off, n = theta.segments["W1"]
    vals[off:off + n] = W1.ravel()
    return theta.with_values(vals)


@dataclass
class ParameterBundle:
    """Conditional policy parameters.

    Attributes
    ----------
    arch : PolicyArchitecture
        Architecture of the conditioned policy (its partition scheme fixes S).
    unconditioned : ParameterVector
        Segments outside S.
    conditioned : list of ParameterVector
        ``m`` copies of the S segments, one per reward. A single copy means
        the S segments are shared across rewards (used by the prompting
        baseline); mixing then reduces to ``(1 - beta) * theta_S + beta * ref``.
    ref_S : ParameterVector
        Reference values of the S segments.
    m : int
        Number of rewards.
    alpha_min : float
    cond_prompt : bool
        Append the reward weights to the context features.
    repeats : int
        Repetitions per weight when ``cond_prompt`` is set.
    """

    arch: PolicyArchitecture
    unconditioned: ParameterVector
    conditioned: List[ParameterVector]
    ref_S: ParameterVector
    m: int
    alpha_min: float = 0.01
    cond_prompt: bool = False
    repeats: int = DEFAULT_REPEATS

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("a bundle needs m >= 1")
        if len(self.conditioned) not in (1, self.m):
            raise LayoutError(f"expected 1 or {self.m} conditioned copies, got {len(self.conditioned)}")
        S = self.arch.conditioned_names
        if self.ref_S.names != S:
            raise LayoutError(f"reference S segments {self.ref_S.names} != {S}")
        for seg in self.conditioned:
            if not seg.same_layout(self.ref_S):
                raise LayoutError("conditioned segments must share the reference S layout")
        if self.unconditioned.names != self.arch.shared_names:
            raise LayoutError(f"unconditioned segments {self.unconditioned.names} != {self.arch.shared_names}")
        if self.cond_prompt and self.arch.kind != "mlp2":
            raise ValueError("prompt conditioning needs feature-based (mlp2) policies")
        check_alpha(self.alpha_min, self.alpha_min)

    @property
    def shared(self) -> bool:
        return len(self.conditioned) == 1 and self.m > 1

    def copy(self) -> "ParameterBundle":
        return ParameterBundle(self.arch, self.unconditioned.copy(), [c.copy() for c in self.conditioned],
                               self.ref_S.copy(), self.m, self.alpha_min, self.cond_prompt, self.repeats)

    def flat(self) -> np.ndarray:
        """All trainable values: unconditioned, then each conditioned copy."""
        return np.concatenate([self.unconditioned.values] + [c.values for c in self.conditioned])

    def with_flat(self, flat) -> "ParameterBundle":
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.flat().size:
            raise LayoutError("flat vector does not match the bundle size")
        n_u = self.unconditioned.values.size
        n_s = self.ref_S.values.size
        out = self.copy()
        out.unconditioned = self.unconditioned.with_values(flat[:n_u])
        out.conditioned = [c.with_values(flat[n_u + i * n_s:n_u + (i + 1) * n_s])
                           for i, c in enumerate(self.conditioned)]
        return out

    def features_for(self, base_features, w) -> np.ndarray:
        if self.cond_prompt:
            return augment_features(base_features, w, self.repeats)
        return np.asarray(base_features, dtype=float)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "architecture": self.arch.to_dict(),
            "m": self.m,
            "alpha_min": self.alpha_min,
            "cond_prompt": self.cond_prompt,
            "repeats": self.repeats,
            "unconditioned": self.unconditioned.to_dict(),
            "conditioned": [c.to_dict() for c in self.conditioned],
            "ref_S": self.ref_S.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterBundle":
        if d.get("format") != BUNDLE_FORMAT or d.get("version") != BUNDLE_VERSION:
            raise ValueError("not a bundle checkpoint of a supported version")
        return cls(
            arch=PolicyArchitecture.from_dict(d["architecture"]),
            unconditioned=ParameterVector.from_dict(d["unconditioned"]),
            conditioned=[ParameterVector.from_dict(c) for c in d["conditioned"]],
            ref_S=ParameterVector.from_dict(d["ref_S"]),
            m=d["m"],
            alpha_min=d["alpha_min"],
            cond_prompt=d["cond_prompt"],
            repeats=d["repeats"],
        )


def init_bundle(
    arch: PolicyArchitecture,
    theta_ref: ParameterVector,
    m: int,
    alpha_min: float = 0.01,
    cond_prompt: bool = False,
    repeats: int = DEFAULT_REPEATS,
    shared: bool = False,
) -> ParameterBundle:
    """Bundle with every copy initialized from the reference parameters."""
    arch.check(theta_ref)
    ref_S = theta_ref.restrict(arch.conditioned_names)
    copies = 1 if shared else m
    return ParameterBundle(
        arch=arch,
        unconditioned=theta_ref.restrict(arch.shared_names),
        conditioned=[ref_S.copy() for _ in range(copies)],
        ref_S=ref_S,
        m=m,
        alpha_min=alpha_min,
        cond_prompt=cond_prompt,
        repeats=repeats,
    )


@dataclass(frozen=True)
class MixedPolicy:
    """A bundle conditioned at one weighting; the mixed parameters are cached."""

    arch: PolicyArchitecture
    theta_mixed: ParameterVector
    alpha: Optional[float]
    w: np.ndarray
    beta: float
    cond_prompt: bool = False
    repeats: int = DEFAULT_REPEATS

    def features(self, base_features) -> np.ndarray:
        if self.cond_prompt:
            return augment_features(base_features, self.w, self.repeats)
        return np.asarray(base_features, dtype=float)

    def logits(self, base_features=None) -> np.ndarray:
        feats = None if base_features is None else self.features(base_features)
        return forward_logits(self.arch, self.theta_mixed, feats)

    def policy(self, base_features=None) -> SoftmaxPolicy:
        return SoftmaxPolicy(self.logits(base_features))


def mix_segments(bundle: ParameterBundle, beta: float, w: np.ndarray) -> np.ndarray:
    """Mixed S values ``(1 - beta) * sum_i w[i] * theta_S^(i) + beta * theta_ref[S]``."""
    if len(bundle.conditioned) == 1:
        avg = bundle.conditioned[0].values * float(w.sum())
    else:
        avg = np.zeros_like(bundle.ref_S.values)
        for wi, seg in zip(w, bundle.conditioned):
            avg += wi * seg.values
    return (1.0 - beta) * avg + beta * bundle.ref_S.values


def condition(bundle: ParameterBundle, alpha: float, w) -> MixedPolicy:
    """Condition ``bundle`` on the weighting ``(alpha, w)``."""
    alpha = check_alpha(alpha, bundle.alpha_min)
    w = check_simplex(w, bundle.m)
    beta = min(max(f_mix(alpha, bundle.alpha_min), 0.0), 1.0)
    theta_S = bundle.ref_S.with_values(mix_segments(bundle, beta, w))
    theta = combine(bundle.unconditioned, theta_S, order=bundle.arch.segment_names)
    return MixedPolicy(bundle.arch, theta, alpha, w.copy(), beta, bundle.cond_prompt, bundle.repeats)


# -- zero-shot baselines ---------------------------------------------------------


def logit_mix(z0, z1, lam: float) -> np.ndarray:
    """``(1 - lam) * z0 + lam * z1``."""
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    if z0.shape != z1.shape:
        raise ValueError(f"logit shapes differ: {z0.shape} vs {z1.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return z0.copy()
    if lam == 1.0:
        return z1.copy()
    return (1.0 - lam) * z0 + lam * z1


def logit_ensemble(expert_logits: Sequence[np.ndarray], w) -> np.ndarray:
    """Weighted sum of expert logits, the m-reward form of :func:`logit_mix`."""
    w = check_simplex(w, len(expert_logits))
    out = np.zeros_like(np.asarray(expert_logits[0], dtype=float))
    for wi, z in zip(w, expert_logits):
        out += wi * np.asarray(z, dtype=float)
    return out


def rewarded_soups(
    arch: PolicyArchitecture,
    experts: Sequence[ParameterVector],
    w,
    theta_ref: Optional[ParameterVector] = None,
    names: Optional[Sequence[str]] = None,
) -> MixedPolicy:
    """Weight-average independently trained experts over segments ``names``.

    ``names`` defaults to every segment; segments outside it come from
    ``theta_ref``.
    """
    if not experts:
        raise ValueError("need at least one expert")
    w = check_simplex(w, len(experts))
    for e in experts:
        arch.check(e)
    names = list(names) if names is not None else arch.segment_names
    if set(names) != set(arch.segment_names) and theta_ref is None:
        raise ValueError("theta_ref is required when averaging a subset of segments")
    mixed = np.zeros_like(experts[0].values)
    for wi, e in zip(w, experts):
        mixed += wi * e.values
    theta = experts[0].with_values(mixed)
    if set(names) != set(arch.segment_names):
        rest = [n for n in arch.segment_names if n not in names]
        theta = combine(theta.restrict(names), theta_ref.restrict(rest), order=arch.segment_names)
    return MixedPolicy(arch, theta, None, w.copy(), 0.0)


def dera_policy(
    arch: PolicyArchitecture,
    theta_min: ParameterVector,
    theta_ref: ParameterVector,
    alpha: float,
    alpha_min: float,
    features=None,
) -> np.ndarray:
    """Decoding-time realignment logits ``(1 - beta) z(theta_min) + beta z(theta_ref)``."""
    alpha = check_alpha(alpha, alpha_min)
    beta = min(max(f_mix(alpha, alpha_min), 0.0), 1.0)
    z_min = forward_logits(arch, theta_min, features)
    z_ref = forward_logits(arch, theta_ref, features)
    return logit_mix(z_min, z_ref, beta)
