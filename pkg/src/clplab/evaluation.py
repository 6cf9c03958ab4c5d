"""Fronts over weighting grids, dominance verdicts and a spread metric.

All numbers are exact finite-environment expectations unless a sweep is
explicitly run in sampling mode.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import oracle
from .conditioning import (
    ParameterBundle,
    condition,
    dera_policy,
    logit_ensemble,
    rewarded_soups,
)
from .env import BanditEnv
from .policy import ParameterVector, PolicyArchitecture, SoftmaxPolicy

DEFAULT_TOL = 1e-6


@dataclass
class ParetoPoint:
    alpha: float
    w: np.ndarray
    raw_rewards: np.ndarray
    kl: float
    regularized_values: np.ndarray
    scalarized_value: float

    def check(self, atol: float = 1e-10) -> None:
        expect = (1.0 - self.alpha) * float(np.dot(self.w, self.raw_rewards)) - self.alpha * self.kl
        if abs(expect - self.scalarized_value) > atol:
            raise AssertionError(f"inconsistent point: {self.scalarized_value} vs {expect}")


@dataclass
class Front:
    method_name: str
    points: List[ParetoPoint] = field(default_factory=list)

    @property
    def raw(self) -> np.ndarray:
        return np.array([p.raw_rewards for p in self.points])

    @property
    def scalarized(self) -> np.ndarray:
        return np.array([p.scalarized_value for p in self.points])

    @property
    def weightings(self):
        return [(p.alpha, tuple(p.w)) for p in self.points]


def make_point(env: BanditEnv, policy, alpha: float, w, raw_rewards=None) -> ParetoPoint:
    w = np.asarray(w, dtype=float)
    raw = oracle.expected_rewards(env, policy) if raw_rewards is None else np.asarray(raw_rewards, float)
    kl = oracle.kl(env, policy)
    return ParetoPoint(
        alpha=float(alpha),
        w=w.copy(),
        raw_rewards=raw,
        kl=kl,
        regularized_values=(1.0 - alpha) * raw - alpha * kl,
        scalarized_value=(1.0 - alpha) * float(np.dot(w, raw)) - alpha * kl,
    )


# -- policy sources ---------------------------------------------------------------
# A source maps a weighting (alpha, w) to a policy over the environment's contexts.


class OracleSource:
    name = "oracle"

    def __init__(self, env: BanditEnv):
        self.env = env

    def __call__(self, alpha, w):
        return oracle.optimal_policy(self.env, alpha, w)


class BundleSource:
    def __init__(self, bundle: ParameterBundle, features, name: str = "clp"):
        self.bundle = bundle
        self.features = features
        self.name = name

    def __call__(self, alpha, w):
        return condition(self.bundle, alpha, w).policy(self.features)


class SoupSource:
    """Rewarded Soups: weight-average of per-reward experts."""

    def __init__(self, arch: PolicyArchitecture, experts: Sequence[ParameterVector], features,
                 theta_ref: Optional[ParameterVector] = None, name: str = "rewarded_soups"):
        self.arch = arch
        self.experts = list(experts)
        self.features = features
        self.theta_ref = theta_ref
        self.name = name

    def __call__(self, alpha, w):
        return rewarded_soups(self.arch, self.experts, w, self.theta_ref).policy(self.features)


class LogitMixSource:
    """Zero-shot logit mixing of fixed expert logits."""

    def __init__(self, expert_logits: Sequence[np.ndarray], name: str = "logit_mix"):
        self.expert_logits = [np.asarray(z, dtype=float) for z in expert_logits]
        self.name = name

    def __call__(self, alpha, w):
        return SoftmaxPolicy(logit_ensemble(self.expert_logits, w))


class DeRaSource:
    """Decoding-time realignment; varies only the KL weight."""

    def __init__(self, arch, theta_min, theta_ref, alpha_min, features, name: str = "dera"):
        self.arch = arch
        self.theta_min = theta_min
        self.theta_ref = theta_ref
        self.alpha_min = alpha_min
        self.features = features
        self.name = name

    def __call__(self, alpha, w):
        feats = self.features if self.arch.kind == "mlp2" else None
        return SoftmaxPolicy(dera_policy(self.arch, self.theta_min, self.theta_ref, alpha,
                                         self.alpha_min, feats))


def _sorted_grid(alphas, w_grid):
    alphas = sorted(float(a) for a in np.atleast_1d(alphas))
    ws = sorted(tuple(float(v) for v in w) for w in np.atleast_2d(np.asarray(w_grid, dtype=float)))
    return [(a, np.array(w)) for a in alphas for w in ws]


def sweep(
    source: Callable,
    env: BanditEnv,
    alpha_or_grid,
    w_grid,
    method_name: Optional[str] = None,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Front:
    """Evaluate ``source`` at every ``(alpha, w)`` of the grid.

    Points are ordered by ``(alpha, w)`` lexicographically regardless of the
    input order. With ``samples`` set, raw rewards are Monte-Carlo estimates
    from that many rollouts per weighting (KL stays exact).
    """
    name = method_name or getattr(source, "name", "method")
    front = Front(name)
    if samples is not None and rng is None:
        raise ValueError("sampling mode needs an rng")
    for alpha, w in _sorted_grid(alpha_or_grid, w_grid):
        pol = source(alpha, w)
        raw = None
        if samples is not None:
            raw = _sampled_rewards(env, pol, samples, rng)
        front.points.append(make_point(env, pol, alpha, w, raw))
    return front


def _sampled_rewards(env, pol, n, rng):
    xs = rng.choice(env.num_contexts, size=n, p=env.context_dist)
    probs = pol.probs
    cdf = np.cumsum(probs[xs], axis=1)
    acts = np.minimum((cdf <= rng.random(n)[:, None]).sum(axis=1), env.num_actions - 1)
    return env.rewards[xs, acts].mean(axis=0)


# -- comparisons ---------------------------------------------------------------


def _check_same_grid(a: Front, b: Front) -> None:
    if len(a.points) != len(b.points):
        raise ValueError("fronts were evaluated on different grids")
    for p, q in zip(a.points, b.points):
        if abs(p.alpha - q.alpha) > 1e-12 or p.w.shape != q.w.shape or np.max(np.abs(p.w - q.w)) > 1e-12:
            raise ValueError("fronts were evaluated on different grids")


def dominates(front_a: Front, front_b: Front, tol: float = DEFAULT_TOL):
    """Per-weighting verdict ``V_a >= V_b - tol`` and the fraction where it holds."""
    _check_same_grid(front_a, front_b)
    verdict = front_a.scalarized >= front_b.scalarized - tol
    return verdict, float(verdict.mean())


def _polyline_spread(pts: np.ndarray) -> float:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total == 0.0:
        return 0.0
    cv = float(seg.std() / seg.mean())
    return total / (1.0 + cv)


def spread(front: Front) -> float:
    """Path length of the front in raw-reward space over ``1 + CV`` of segment lengths.

    A steerability stand-in: larger means wider and more evenly spaced.
    For more than two rewards it averages over pairwise projections.
    """
    raw = front.raw
    if len(raw) < 2:
        raise ValueError("spread needs at least two points")
    m = raw.shape[1]
    if m <= 2:
        return _polyline_spread(raw)
    return float(np.mean([_polyline_spread(raw[:, [i, j]]) for i, j in combinations(range(m), 2)]))


def closest_point(front: Front, target) -> tuple:
    """Point nearest to ``target`` in raw-reward L-infinity distance."""
    d = np.abs(front.raw - np.asarray(target, dtype=float)).max(axis=1)
    k = int(np.argmin(d))
    return front.points[k], float(d[k])


# -- persistence ---------------------------------------------------------------


def csv_header(m: int) -> List[str]:
    return (["method", "alpha"] + [f"w_{i}" for i in range(m)] + [f"r_{i}" for i in range(m)]
            + ["kl"] + [f"v_{i}" for i in range(m)] + ["v_scalar"])


def _fmt(x: float) -> str:
    return repr(float(x))


def fronts_to_csv(fronts: Iterable[Front]) -> str:
    fronts = list(fronts)
    if not fronts or not fronts[0].points:
        raise ValueError("nothing to write")
    m = fronts[0].points[0].w.size
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(m))
    for f in fronts:
        for p in f.points:
            writer.writerow([f.method_name, _fmt(p.alpha)] + [_fmt(v) for v in p.w]
                            + [_fmt(v) for v in p.raw_rewards] + [_fmt(p.kl)]
                            + [_fmt(v) for v in p.regularized_values] + [_fmt(p.scalarized_value)])
    return buf.getvalue()


def write_fronts_csv(fronts: Iterable[Front], path: Union[str, Path]) -> None:
    Path(path).write_text(fronts_to_csv(fronts))


def parse_fronts_csv(text: str) -> List[Front]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty front file")
    header = rows[0]
    if header[:2] != ["method", "alpha"] or header[-1] != "v_scalar":
        raise ValueError(f"unexpected header {header}")
    m = (len(header) - 4) // 3
    if csv_header(m) != header:
        raise ValueError(f"unexpected header {header}")
    fronts: Dict[str, Front] = {}
    for row in rows[1:]:
        vals = [float(v) for v in row[1:]]
        alpha = vals[0]
        w = np.array(vals[1:1 + m])
        raw = np.array(vals[1 + m:1 + 2 * m])
        kl = vals[1 + 2 * m]
        regs = np.array(vals[2 + 2 * m:2 + 3 * m])
        fronts.setdefault(row[0], Front(row[0])).points.append(
            ParetoPoint(alpha, w, raw, kl, regs, vals[2 + 3 * m]))
    return list(fronts.values())


def read_fronts_csv(path: Union[str, Path]) -> List[Front]:
    return parse_fronts_csv(Path(path).read_text())


def plot_data(fronts: Iterable[Front]) -> dict:
    """Fronts grouped per method, one array per column, for external plotting."""
    out = {"steerability_metric": "spread (path length / (1 + CV of segment lengths)); a stand-in score"}
    for f in fronts:
        raw = f.raw
        out[f.method_name] = {
            "alpha": [p.alpha for p in f.points],
            "w": [p.w.tolist() for p in f.points],
            "raw_rewards": raw.tolist(),
            "regularized_values": [p.regularized_values.tolist() for p in f.points],
            "kl": [p.kl for p in f.points],
            "v_scalar": [p.scalarized_value for p in f.points],
            "spread": spread(f) if len(f.points) >= 2 else None,
        }
    return out


def write_plot_data(fronts: Iterable[Front], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(plot_data(fronts), indent=1) + "\n")
