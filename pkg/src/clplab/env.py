"""Finite multi-reward contextual bandits.

Each context plays the role of a prompt and each action the role of a full
generation. Rewards are a dense ``[num_contexts, num_actions, m]`` tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .weightings import check_simplex

ENV_FORMAT = "clplab-env"
ENV_VERSION = 1


@dataclass(frozen=True)
class BanditEnv:
    """Immutable multi-reward contextual bandit.

    Attributes
    ----------
    rewards : ndarray, shape (num_contexts, num_actions, m)
    context_dist : ndarray, shape (num_contexts,)
    ref_probs : ndarray, shape (num_contexts, num_actions)
        Reference policy with full support.
    features : ndarray, shape (num_contexts, d)
        Context features; one-hot unless built with ``feature_mode="dense"``.
    seed : int or None
        Generator seed, recorded for provenance only.
    """

    rewards: np.ndarray
    context_dist: np.ndarray
    ref_probs: np.ndarray
    features: np.ndarray
    seed: Optional[int] = None
    name: str = "custom"

    def __post_init__(self):
        rewards = np.array(self.rewards, dtype=float)
        if rewards.ndim != 3:
            raise ValueError(f"rewards must be 3-D, got shape {rewards.shape}")
        C, A, m = rewards.shape
        if C < 1 or A < 2 or m < 1:
            raise ValueError(f"need >=1 context, >=2 actions, >=1 reward; got {rewards.shape}")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        dist = np.array(self.context_dist, dtype=float)
        if dist.shape != (C,) or np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-12:
            raise ValueError("context_dist must be a probability vector over contexts")
        ref = np.array(self.ref_probs, dtype=float)
        if ref.shape != (C, A):
            raise ValueError(f"reference policy must have shape {(C, A)}, got {ref.shape}")
        if np.any(ref <= 0) or np.any(np.abs(ref.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("reference rows must be full-support probability vectors")
        feats = np.array(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] != C:
            raise ValueError(f"features must have shape ({C}, d), got {feats.shape}")
        for arr in (rewards, dist, ref, feats):
            arr.setflags(write=False)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "context_dist", dist)
        object.__setattr__(self, "ref_probs", ref)
        object.__setattr__(self, "features", feats)
        ref_logp = np.log(ref)
        ref_logp.setflags(write=False)
        object.__setattr__(self, "_ref_logp", ref_logp)

    @property
    def num_contexts(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def m(self) -> int:
        return self.rewards.shape[2]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def ref_logp(self) -> np.ndarray:
        return self._ref_logp

    def scalarize(self, w) -> np.ndarray:
        return scalarize(self, w)

    def with_reference(self, ref_probs) -> "BanditEnv":
        return BanditEnv(self.rewards, self.context_dist, ref_probs, self.features, self.seed, self.name)

    def with_features(self, features) -> "BanditEnv":
        return BanditEnv(self.rewards, self.context_dist, self.ref_probs, features, self.seed, self.name)


def scalarize(env: BanditEnv, w) -> np.ndarray:
    """Linear scalarization ``sum_i w[i] * rewards[:, :, i]``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (env.m,):
        raise ValueError(f"expected {env.m} reward weights, got shape {w.shape}")
    return env.rewards @ w


def _uniform_ref(C: int, A: int) -> np.ndarray:
    return np.full((C, A), 1.0 / A)


def dense_features(num_contexts: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(size=(num_contexts, dim))


def counterexample_env() -> BanditEnv:
    """One context, three actions, ``R1 = (1, 0, 0.75)`` and ``R2 = (0, 1, 0.75)``.

    The middle weighting is only served by the third action, which neither
    single-reward optimum ever plays.
    """
    rewards = np.array([[[1.0, 0.0], [0.0, 1.0], [0.75, 0.75]]])
    return BanditEnv(
        rewards=rewards,
        context_dist=np.ones(1),
        ref_probs=_uniform_ref(1, 3),
        features=np.eye(1),
        seed=None,
        name="counterexample",
    )


def random_env(
    num_contexts: int,
    num_actions: int,
    m: int,
    seed: int,
    feature_mode: str = "onehot",
    feature_dim: Optional[int] = None,
) -> BanditEnv:
    """I.i.d. uniform rewards, uniform context distribution and reference."""
    if num_contexts < 1 or m < 1 or num_actions < 2:
        raise ValueError("need num_contexts >= 1, num_actions >= 2, m >= 1")
    rng = np.random.default_rng(seed)
    rewards = rng.random((num_contexts, num_actions, m))
    if feature_mode == "onehot":
        feats = np.eye(num_contexts)
    elif feature_mode == "dense":
        feats = dense_features(num_contexts, feature_dim or num_contexts, rng)
    else:
        raise ValueError(f"unknown feature_mode {feature_mode!r}")
    return BanditEnv(
        rewards=rewards,
        context_dist=np.full(num_contexts, 1.0 / num_contexts),
        ref_probs=_uniform_ref(num_contexts, num_actions),
        features=feats,
        seed=seed,
        name="random",
    )


def make_env(spec: str, **kwargs) -> BanditEnv:
    """Build a builtin environment by name or load one from a file path."""
    if spec == "counterexample":
        env = counterexample_env()
        if kwargs.get("feature_mode") == "dense":
            rng = np.random.default_rng(kwargs.get("seed", 0))
            env = env.with_features(dense_features(1, kwargs.get("feature_dim") or 1, rng))
        return env
    if spec == "random":
        return random_env(
            kwargs.get("num_contexts", 4),
            kwargs.get("num_actions", 3),
            kwargs.get("m", 2),
            kwargs.get("seed", 0),
            feature_mode=kwargs.get("feature_mode", "onehot"),
            feature_dim=kwargs.get("feature_dim"),
        )
    path = Path(spec)
    if path.exists():
        return load_env(path)
    raise ValueError(f"unknown environment {spec!r} (not a builtin and no such file)")


# -- serialization ---------------------------------------------------------
# JSON floats are written with repr(), which round-trips exactly.


def env_to_dict(env: BanditEnv) -> dict:
    C, A, m = env.rewards.shape
    return {
        "format": ENV_FORMAT,
        "version": ENV_VERSION,
        "name": env.name,
        "num_contexts": C,
        "num_actions": A,
        "m": m,
        "feature_dim": env.feature_dim,
        "seed": env.seed,
        "rewards": env.rewards.reshape(-1).tolist(),
        "context_dist": env.context_dist.tolist(),
        "reference": env.ref_probs.reshape(-1).tolist(),
        "features": env.features.reshape(-1).tolist(),
    }


def env_from_dict(d: dict) -> BanditEnv:
    if d.get("format") != ENV_FORMAT:
        raise ValueError(f"not an environment file (format={d.get('format')!r})")
    if d.get("version") != ENV_VERSION:
        raise ValueError(f"unsupported environment version {d.get('version')!r}")
    C, A, m = d["num_contexts"], d["num_actions"], d["m"]
    return BanditEnv(
        rewards=np.array(d["rewards"], dtype=float).reshape(C, A, m),
        context_dist=np.array(d["context_dist"], dtype=float),
        ref_probs=np.array(d["reference"], dtype=float).reshape(C, A),
        features=np.array(d["features"], dtype=float).reshape(C, d["feature_dim"]),
        seed=d.get("seed"),
        name=d.get("name", "custom"),
    )


def save_env(env: BanditEnv, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(env_to_dict(env), indent=1) + "\n")


def load_env(path: Union[str, Path]) -> BanditEnv:
    return env_from_dict(json.loads(Path(path).read_text()))


def check_weights_for(env: BanditEnv, w) -> np.ndarray:
    return check_simplex(w, env.m)
