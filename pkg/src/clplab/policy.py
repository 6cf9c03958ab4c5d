"""Softmax policies with named parameter segments.

Two architectures are supported:

``tabular``
    one free logit per ``(context, action)``; a single segment ``table``.
``mlp2``
    ``z = W2 @ tanh(W1 @ f + b1) + b2`` on context features ``f``; segments
    ``W1, b1`` (hidden layer) and ``W2, b2`` (output layer).

The partition scheme names the segment set ``S`` that gets replicated per
reward by conditioning: ``full`` (everything), ``mid`` (hidden layer) or
``logit`` (output layer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import kernels

SCHEMES = ("full", "mid", "logit")
KINDS = ("tabular", "mlp2")
CHECKPOINT_FORMAT = "clplab-params"
CHECKPOINT_VERSION = 1


class LayoutError(ValueError):
    """Parameter layout does not match what an operation expects."""


@dataclass
class ParameterVector:
    """Flat parameter array with an ordered map of named segments.

    ``segments`` maps name to ``(offset, length)``; ``shapes`` records the
    array shape each segment is viewed with.
    """

    values: np.ndarray
    segments: Dict[str, Tuple[int, int]]
    shapes: Dict[str, Tuple[int, ...]]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise LayoutError("parameter values must be a flat array")
        pos = 0
        for name, (off, n) in self.segments.items():
            if off != pos or n != int(np.prod(self.shapes[name], dtype=int)):
                raise LayoutError(f"segment {name!r} does not tile the array")
            pos += n
        if pos != self.values.size:
            raise LayoutError(f"segments cover {pos} entries, array has {self.values.size}")

    @classmethod
    def from_shapes(cls, shapes: Sequence[Tuple[str, Tuple[int, ...]]], values=None):
        segs, shp, off = {}, {}, 0
        for name, shape in shapes:
            n = int(np.prod(shape, dtype=int))
            segs[name] = (off, n)
            shp[name] = tuple(int(s) for s in shape)
            off += n
        if values is None:
            values = np.zeros(off)
        return cls(np.array(values, dtype=float), segs, shp)

    @property
    def names(self) -> List[str]:
        return list(self.segments)

    def layout(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(name, self.shapes[name]) for name in self.segments]

    def same_layout(self, other: "ParameterVector") -> bool:
        return self.layout() == other.layout()

    def __getitem__(self, name: str) -> np.ndarray:
        off, n = self.segments[name]
        return self.values[off:off + n].reshape(self.shapes[name])

    def restrict(self, names: Sequence[str]) -> "ParameterVector":
        """Copy of the segments in ``names`` (kept in layout order)."""
        missing = [n for n in names if n not in self.segments]
        if missing:
            raise LayoutError(f"unknown segments {missing}")
        keep = [(n, self.shapes[n]) for n in self.segments if n in names]
        vals = np.concatenate([self[n].ravel() for n, _ in keep]) if keep else np.zeros(0)
        return ParameterVector.from_shapes(keep, vals)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), dict(self.segments), dict(self.shapes))

    def with_values(self, values) -> "ParameterVector":
        values = np.array(values, dtype=float)
        if values.shape != self.values.shape:
            raise LayoutError(f"expected {self.values.size} values, got shape {values.shape}")
        # same layout, so skip re-validating the segment map
        out = object.__new__(ParameterVector)
        out.values, out.segments, out.shapes = values, self.segments, self.shapes
        return out

    def zeros_like(self) -> "ParameterVector":
        return self.with_values(np.zeros_like(self.values))

    def to_dict(self) -> dict:
        return {
            "segments": [[n, list(self.shapes[n])] for n in self.segments],
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterVector":
        return cls.from_shapes([(n, tuple(s)) for n, s in d["segments"]], d["values"])


def combine(*parts: ParameterVector, order: Sequence[str]) -> ParameterVector:
    """Join disjoint segment sets into one vector with segments in ``order``."""
    pieces = {}
    for p in parts:
        for name in p.segments:
            if name in pieces:
                raise LayoutError(f"segment {name!r} appears twice")
            pieces[name] = p
    if set(pieces) != set(order):
        raise LayoutError(f"segments {sorted(pieces)} do not match layout {list(order)}")
    shapes = [(n, pieces[n].shapes[n]) for n in order]
    vals = np.concatenate([pieces[n][n].ravel() for n in order])
    return ParameterVector.from_shapes(shapes, vals)


@dataclass(frozen=True)
class PolicyArchitecture:
    """Architecture descriptor.

    For ``tabular`` only ``num_contexts`` and ``num_actions`` matter; for
    ``mlp2`` it is ``feature_dim``, ``hidden_dim`` and ``num_actions``.
    """

    kind: str
    num_actions: int
    num_contexts: int = 0
    feature_dim: int = 0
    hidden_dim: int = 0
    partition_scheme: str = "full"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.partition_scheme not in SCHEMES:
            raise ValueError(f"unknown partition scheme {self.partition_scheme!r}")
        if self.num_actions < 2:
            raise ValueError("need at least two actions")
        if self.kind == "tabular":
            if self.num_contexts < 1:
                raise ValueError("tabular policy needs num_contexts >= 1")
            if self.partition_scheme == "mid":
                raise ValueError("tabular policies have no hidden layer; use 'full' or 'logit'")
        elif self.feature_dim < 1 or self.hidden_dim < 1:
            raise ValueError("mlp2 needs feature_dim >= 1 and hidden_dim >= 1")

    def shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        A = self.num_actions
        if self.kind == "tabular":
            return [("table", (self.num_contexts, A))]
        d, h = self.feature_dim, self.hidden_dim
        return [("W1", (h, d)), ("b1", (h,)), ("W2", (A, h)), ("b2", (A,))]

    @property
    def segment_names(self) -> List[str]:
        return [n for n, _ in self.shapes()]

    @property
    def conditioned_names(self) -> List[str]:
        """Segments in ``S``."""
        if self.kind == "tabular" or self.partition_scheme == "full":
            return self.segment_names
        if self.partition_scheme == "mid":
            return ["W1", "b1"]
        return ["W2", "b2"]

    @property
    def shared_names(self) -> List[str]:
        """Segments in the complement of ``S``."""
        S = set(self.conditioned_names)
        return [n for n in self.segment_names if n not in S]

    def with_scheme(self, scheme: str) -> "PolicyArchitecture":
        return PolicyArchitecture(self.kind, self.num_actions, self.num_contexts,
                                  self.feature_dim, self.hidden_dim, scheme)

    def zeros(self) -> ParameterVector:
        return ParameterVector.from_shapes(self.shapes())

    def check(self, theta: ParameterVector) -> None:
        if theta.layout() != self.shapes():
            raise LayoutError(f"parameters {theta.layout()} do not match architecture {self.shapes()}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "num_actions": self.num_actions,
            "num_contexts": self.num_contexts,
            "feature_dim": self.feature_dim,
            "hidden_dim": self.hidden_dim,
            "partition_scheme": self.partition_scheme,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyArchitecture":
        return cls(**d)


def tabular_arch(num_contexts: int, num_actions: int, scheme: str = "full") -> PolicyArchitecture:
    return PolicyArchitecture("tabular", num_actions, num_contexts=num_contexts, partition_scheme=scheme)


def mlp2_arch(feature_dim: int, hidden_dim: int, num_actions: int, scheme: str = "full") -> PolicyArchitecture:
    return PolicyArchitecture("mlp2", num_actions, feature_dim=feature_dim, hidden_dim=hidden_dim,
                              partition_scheme=scheme)


# -- forward pass ------------------------------------------------------------


@dataclass
class Forward:
    """Logits for every context plus the activations needed for backprop."""

    logits: np.ndarray
    hidden: np.ndarray = None
    features: np.ndarray = None


def forward(arch: PolicyArchitecture, theta: ParameterVector, features) -> Forward:
    arch.check(theta)
    if arch.kind == "tabular":
        return Forward(np.ascontiguousarray(theta["table"]))
    F = np.ascontiguousarray(features, dtype=float)
    if F.ndim != 2 or F.shape[1] != arch.feature_dim:
        raise LayoutError(f"features of shape {F.shape} do not match feature_dim={arch.feature_dim}")
    W1 = np.ascontiguousarray(theta["W1"])
    W2 = np.ascontiguousarray(theta["W2"])
    H, Z = kernels.mlp2_forward(W1, theta["b1"].copy(), W2, theta["b2"].copy(), F)
    return Forward(Z, H, F)


def logits(arch: PolicyArchitecture, theta: ParameterVector, features=None) -> np.ndarray:
    """Logit matrix ``[num_contexts, num_actions]``."""
    return forward(arch, theta, features).logits


def logit_vjp(arch: PolicyArchitecture, theta: ParameterVector, fwd: Forward, xs, dz) -> np.ndarray:
    """Pull logit cotangents back to parameters, summed over the batch.

    ``dz[b]`` is the cotangent of the logit row of context ``xs[b]``.
    Returns a flat array in the layout of ``theta``.
    """
    xs = np.ascontiguousarray(xs, dtype=np.int64)
    dz = np.ascontiguousarray(dz, dtype=float)
    if arch.kind == "tabular":
        return kernels.tabular_vjp(arch.num_contexts, xs, dz).ravel()
    gW1, gb1, gW2, gb2 = kernels.mlp2_vjp(np.ascontiguousarray(theta["W2"]), fwd.hidden, fwd.features, xs, dz)
    return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


# -- softmax policy ---------------------------------------------------------------


class SoftmaxPolicy:
    """Row-wise softmax over a fixed logit matrix."""

    def __init__(self, z):
        self.logits = np.ascontiguousarray(z, dtype=float)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a [contexts, actions] matrix")
        if not np.all(np.isfinite(self.logits)):
            raise FloatingPointError("non-finite logits")
        self.logp = kernels.log_softmax_rows(self.logits)
        p = np.exp(self.logp)
        self.probs = p / p.sum(axis=1, keepdims=True)

    @classmethod
    def from_probs(cls, probs) -> "SoftmaxPolicy":
        return cls(np.log(np.asarray(probs, dtype=float)))

    @property
    def num_contexts(self) -> int:
        return self.logits.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    def log_prob(self, x: int, a: int) -> float:
        return float(self.logp[x, a])

    def sample(self, x: int, rng: np.random.Generator) -> int:
        return int(self.sample_batch(np.array([x]), rng)[0])

    def sample_batch(self, xs, rng: np.random.Generator) -> np.ndarray:
        xs = np.ascontiguousarray(xs, dtype=np.int64)
        return kernels.sample_actions(self.probs, xs, rng.random(len(xs)))

    def kl_per_context(self, ref_probs) -> np.ndarray:
        return kl_rows(self.probs, self.logp, ref_probs)

    def kl_to_ref(self, ref_probs, context_dist) -> float:
        return kl_to_ref(self, ref_probs, context_dist)


def kl_rows(probs, logp, ref_probs) -> np.ndarray:
    """Per-context ``KL(pi(.|x) || ref(.|x))``; zero-probability actions contribute 0."""
    return kernels.kl_rows(probs, logp, np.ascontiguousarray(np.log(ref_probs)))


def kl_to_ref(policy: SoftmaxPolicy, ref_probs, context_dist) -> float:
    """``sum_x d(x) KL(pi(.|x) || ref(.|x))`` in nats."""
    return float(np.dot(context_dist, policy.kl_per_context(ref_probs)))


def policy_of(arch: PolicyArchitecture, theta: ParameterVector, features=None) -> SoftmaxPolicy:
    return SoftmaxPolicy(logits(arch, theta, features))


def log_prob(policy: SoftmaxPolicy, x: int, a: int) -> float:
    return policy.log_prob(x, a)


def sample(policy: SoftmaxPolicy, x: int, rng: np.random.Generator) -> int:
    return policy.sample(x, rng)


def grad_log_prob(arch: PolicyArchitecture, theta: ParameterVector, x: int, a: int, features=None) -> ParameterVector:
    """Exact gradient of ``log pi_theta(a | x)`` in the layout of ``theta``."""
    fwd = forward(arch, theta, features)
    logp = kernels.log_softmax_rows(fwd.logits)
    dz = -np.exp(logp[x])
    dz[a] += 1.0
    g = logit_vjp(arch, theta, fwd, np.array([x]), dz[None, :])
    return theta.with_values(g)


# -- initialization ------------------------------------------------------------


def init_reference(arch: PolicyArchitecture, rng: np.random.Generator, ref_probs=None, std: float = 0.1) -> ParameterVector:
    """Reference parameters.

    Tabular: ``log ref_probs`` (zero for a uniform reference). mlp2: Gaussian
    draws with standard deviation ``std``; the resulting policy becomes the
    reference via :func:`reference_env`.
    """
    if arch.kind == "tabular":
        if ref_probs is None:
            return arch.zeros()
        table = np.log(np.asarray(ref_probs, dtype=float))
        if table.shape != (arch.num_contexts, arch.num_actions):
            raise LayoutError("reference probabilities do not match the table shape")
        if np.allclose(ref_probs, ref_probs[:, :1]):
            table = np.zeros_like(table)
        return arch.zeros().with_values(table.ravel())
    theta = arch.zeros()
    return theta.with_values(rng.normal(scale=std, size=theta.values.size))


def reference_env(env, arch: PolicyArchitecture, theta_ref: ParameterVector, features=None):
    """Environment whose reference policy is exactly ``pi_{theta_ref}``."""
    feats = env.features if features is None else features
    pol = policy_of(arch, theta_ref, feats)
    return env.with_reference(pol.probs)


# -- checkpoints ---------------------------------------------------------------


def params_to_dict(arch: PolicyArchitecture, theta: ParameterVector) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": arch.to_dict(),
        **theta.to_dict(),
    }


def params_from_dict(d: dict):
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a parameter checkpoint of a supported version")
    arch = PolicyArchitecture.from_dict(d["architecture"])
    theta = ParameterVector.from_dict(d)
    arch.check(theta)
    return arch, theta
