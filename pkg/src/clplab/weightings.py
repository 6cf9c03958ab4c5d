"""Reward/KL weightings, the KL-mixing map and the weighting sampler.

A weighting is a pair ``(alpha, w)``: ``alpha`` is the KL weight in
``[alpha_min, 1]`` and ``w`` a point on the reward simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

SIMPLEX_ATOL = 1e-12
CLAMP_BELOW = 1e-15

ALPHA_MODES = ("fixed", "inverse_cdf")


def check_alpha(alpha: float, alpha_min: float) -> float:
    if not 0.0 < alpha_min < 1.0:
        raise ValueError(f"alpha_min must lie in (0, 1), got {alpha_min}")
    # tolerate round-off coming back from inv_f_mix
    if not alpha_min * (1 - 1e-12) <= alpha <= 1.0 + 1e-12:
        raise ValueError(f"alpha={alpha} outside [alpha_min={alpha_min}, 1]")
    return float(alpha)


def check_simplex(w, m: Optional[int] = None) -> np.ndarray:
    """Return ``w`` as a float array after checking simplex membership."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"reward weights must be a non-empty vector, got shape {w.shape}")
    if m is not None and w.size != m:
        raise ValueError(f"expected {m} reward weights, got {w.size}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"reward weights {w.tolist()} are not on the simplex")
    return w


def f_mix(alpha, alpha_min: float):
    """KL-mixing coefficient ``(alpha - alpha_min) / (alpha * (1 - alpha_min))``.

    Maps ``alpha_min -> 0`` and ``1 -> 1``; strictly increasing in between.
    Accepts scalars or arrays.
    """
    if alpha_min >= 1.0:
        raise ValueError("f_mix is degenerate for alpha_min >= 1")
    if alpha_min <= 0.0:
        raise ValueError(f"alpha_min must be positive, got {alpha_min}")
    a = np.asarray(alpha, dtype=float)
    beta = (a - alpha_min) / (a * (1.0 - alpha_min))
    return float(beta) if beta.ndim == 0 else beta


def inv_f_mix(u, alpha_min: float):
    """Inverse of :func:`f_mix`: ``alpha_min / (alpha_min * u + (1 - u))``."""
    if not 0.0 < alpha_min < 1.0:
        raise ValueError(f"alpha_min must lie in (0, 1), got {alpha_min}")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("u must lie in [0, 1]")
    alpha = alpha_min / (alpha_min * u + (1.0 - u))
    return float(alpha) if alpha.ndim == 0 else alpha


def alpha_median(alpha_min: float) -> float:
    """Median of ``inv_f_mix(U)`` for uniform ``U``."""
    return 2.0 * alpha_min / (alpha_min + 1.0)


def sample_dirichlet(beta: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw from normalized Gamma variates.

    Entries below 1e-15 are clamped to zero and the vector renormalized.
    """
    beta = np.asarray(beta, dtype=float)
    g = rng.standard_gamma(beta)
    total = g.sum()
    if total <= 0.0 or not np.isfinite(total):
        # every Gamma draw underflowed, only possible for tiny concentrations
        w = np.zeros_like(beta)
        w[int(np.argmax(g))] = 1.0
        return w
    w = g / total
    w[w < CLAMP_BELOW] = 0.0
    return w / w.sum()


@dataclass
class WeightingSampler:
    """Distribution over ``(alpha, w)`` weightings.

    Parameters
    ----------
    dirichlet : sequence of float
        Dirichlet concentrations, one per reward.
    alpha_min : float
        Smallest KL weight.
    alpha_mode : {"fixed", "inverse_cdf"}
        ``fixed`` always returns ``alpha_fixed``; ``inverse_cdf`` draws
        ``alpha = inv_f_mix(U)`` so that ``f_mix(alpha)`` is uniform.
    alpha_fixed : float, optional
        Required when ``alpha_mode == "fixed"``; defaults to ``alpha_min``.
    fixed_w : sequence of float, optional
        Pins the reward weights instead of drawing them.
    seed : int
    """

    dirichlet: Sequence[float]
    alpha_min: float = 0.01
    alpha_mode: str = "inverse_cdf"
    alpha_fixed: Optional[float] = None
    fixed_w: Optional[Sequence[float]] = None
    seed: int = 0
    _beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._beta = np.asarray(self.dirichlet, dtype=float)
        if self._beta.ndim != 1 or self._beta.size == 0:
            raise ValueError("dirichlet must be a non-empty vector")
        if np.any(self._beta <= 0) or not np.all(np.isfinite(self._beta)):
            raise ValueError(f"Dirichlet parameters must be positive, got {self._beta.tolist()}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if self.alpha_mode == "fixed":
            if self.alpha_fixed is None:
                self.alpha_fixed = self.alpha_min
            check_alpha(self.alpha_fixed, self.alpha_min)
        else:
            check_alpha(self.alpha_min, self.alpha_min)
        if self.fixed_w is not None:
            self.fixed_w = check_simplex(self.fixed_w, self.m)

    @property
    def m(self) -> int:
        return int(self._beta.size)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def sample(self, rng: np.random.Generator) -> Tuple[float, np.ndarray]:
        return sample(self, rng)


def sample(sampler: WeightingSampler, rng: np.random.Generator) -> Tuple[float, np.ndarray]:
    """Draw one ``(alpha, w)``; deterministic given the generator state."""
    if sampler.fixed_w is not None:
        w = np.array(sampler.fixed_w, dtype=float)
    else:
        w = sample_dirichlet(sampler._beta, rng)
    if sampler.alpha_mode == "fixed":
        alpha = float(sampler.alpha_fixed)
    else:
        alpha = inv_f_mix(rng.random(), sampler.alpha_min)
    return alpha, w


def sample_many(sampler: WeightingSampler, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` weightings at once: alphas of shape ``(n,)`` and weights ``(n, m)``.

    Same distribution as repeated :func:`sample` calls, but the generator is
    consumed in a different order, so the draws themselves differ.
    """
    if sampler.fixed_w is not None:
        ws = np.tile(np.asarray(sampler.fixed_w, dtype=float), (n, 1))
    else:
        g = rng.standard_gamma(sampler._beta, size=(n, sampler.m))
        ws = g / g.sum(axis=1, keepdims=True)
        ws[ws < CLAMP_BELOW] = 0.0
        ws /= ws.sum(axis=1, keepdims=True)
    if sampler.alpha_mode == "fixed":
        alphas = np.full(n, float(sampler.alpha_fixed))
    else:
        alphas = inv_f_mix(rng.random(n), sampler.alpha_min)
    return alphas, ws


def simplex_grid(m: int, points_per_edge: int = 21) -> np.ndarray:
    """Evenly spaced lattice on the simplex, lexicographically sorted.

    For ``m == 2`` this gives ``points_per_edge`` weightings from ``(0, 1)``
    to ``(1, 0)``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n = points_per_edge - 1
    if m == 1:
        return np.ones((1, 1))

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for k in range(total + 1):
            for rest in compositions(total - k, parts - 1):
                yield (k,) + rest

    grid = np.array(sorted(compositions(n, m)), dtype=float) / n
    return grid


def m3_weighting_set() -> np.ndarray:
    """The 13-point weighting set used for three-reward fronts."""
    pts = {
        (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
        (0.5, 0.5, 0.0), (0.5, 0.0, 0.5), (0.0, 0.5, 0.5),
        (1 / 3, 1 / 3, 1 / 3),
        (0.6, 0.2, 0.2), (0.2, 0.6, 0.2), (0.2, 0.2, 0.6),
        (0.4, 0.4, 0.2), (0.4, 0.2, 0.4), (0.2, 0.4, 0.4),
    }
    grid = np.array(sorted(pts), dtype=float)
    return grid / grid.sum(axis=1, keepdims=True)


def default_grid(m: int, points_per_edge: int = 21) -> np.ndarray:
    return m3_weighting_set() if m == 3 else simplex_grid(m, points_per_edge)
