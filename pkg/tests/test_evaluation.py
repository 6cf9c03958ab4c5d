import json

import numpy as np
import pytest

from clplab.env import counterexample_env, random_env
from clplab.evaluation import (
    OracleSource,
    closest_point,
    csv_header,
    dominates,
    fronts_to_csv,
    make_point,
    parse_fronts_csv,
    plot_data,
    read_fronts_csv,
    spread,
    sweep,
    write_fronts_csv,
)
from clplab.policy import SoftmaxPolicy
from clplab.weightings import m3_weighting_set, simplex_grid


def uniform_source(alpha, w):
    return SoftmaxPolicy(np.zeros((1, 3)))


def test_point_consistency():
    env = counterexample_env()
    p = make_point(env, np.array([[0.0, 0.0, 1.0]]), 0.1, [0.5, 0.5])
    p.check()
    assert p.kl == pytest.approx(np.log(3))
    assert p.scalarized_value == pytest.approx(0.9 * 0.75 - 0.1 * np.log(3))


def test_sweep_is_sorted_and_sized():
    env = counterexample_env()
    grid = simplex_grid(2, 21)[::-1]
    f = sweep(OracleSource(env), env, [0.5, 0.1], grid)
    assert len(f.points) == 42
    keys = [(p.alpha, tuple(p.w)) for p in f.points]
    assert keys == sorted(keys)


def test_oracle_dominates_everything():
    env = random_env(2, 4, 2, seed=3)
    grid = simplex_grid(2, 11)
    oracle_front = sweep(OracleSource(env), env, 0.2, grid)
    other = sweep(lambda a, w: SoftmaxPolicy(np.zeros((2, 4))), env, 0.2, grid)
    verdict, frac = dominates(oracle_front, other)
    assert frac == 1.0 and verdict.all()
    assert dominates(other, oracle_front)[1] < 1.0


def test_dominates_requires_same_grid():
    env = counterexample_env()
    a = sweep(uniform_source, env, 0.1, simplex_grid(2, 3))
    b = sweep(uniform_source, env, 0.1, simplex_grid(2, 5))
    with pytest.raises(ValueError):
        dominates(a, b)


def test_spread_of_collapsed_front_is_zero():
    env = counterexample_env()
    assert spread(sweep(uniform_source, env, 0.1, simplex_grid(2, 5))) == 0.0


def test_spread_even_segments():
    env = counterexample_env()
    f = sweep(OracleSource(env), env, 0.01, simplex_grid(2, 21))
    assert spread(f) > 0.5


def test_spread_three_rewards():
    env = random_env(2, 4, 3, seed=0)
    f = sweep(OracleSource(env), env, 0.1, m3_weighting_set())
    assert spread(f) > 0


def test_closest_point():
    env = counterexample_env()
    f = sweep(OracleSource(env), env, 0.01, simplex_grid(2, 21))
    pt, dist = closest_point(f, [0.75, 0.75])
    assert dist <= 0.01 and tuple(pt.w) == (0.5, 0.5)


def test_csv_round_trip(tmp_path):
    env = random_env(2, 3, 2, seed=0)
    fronts = [sweep(OracleSource(env), env, [0.1, 0.3], simplex_grid(2, 5), "oracle"),
              sweep(lambda a, w: SoftmaxPolicy(np.zeros((2, 3))), env, [0.1, 0.3], simplex_grid(2, 5), "ref")]
    write_fronts_csv(fronts, tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text()
    assert text.splitlines()[0].split(",") == csv_header(2)
    assert len(text.splitlines()) == 1 + 20
    back = read_fronts_csv(tmp_path / "f.csv")
    assert [f.method_name for f in back] == ["oracle", "ref"]
    for a, b in zip(fronts, back):
        assert np.array_equal(a.raw, b.raw) and np.array_equal(a.scalarized, b.scalarized)
    assert fronts_to_csv(back) == text
    assert parse_fronts_csv(text)[0].points[0].kl == fronts[0].points[0].kl


def test_csv_header_schema():
    assert csv_header(2) == ["method", "alpha", "w_0", "w_1", "r_0", "r_1", "kl", "v_0", "v_1", "v_scalar"]


def test_plot_data_groups_methods():
    env = counterexample_env()
    f = sweep(OracleSource(env), env, 0.1, simplex_grid(2, 3), "oracle")
    d = json.loads(json.dumps(plot_data([f])))
    assert "oracle" in d and "stand-in" in d["steerability_metric"]


def test_sampled_sweep_close_to_exact(rng):
    env = random_env(2, 3, 2, seed=0)
    exact = sweep(OracleSource(env), env, 0.3, [[0.5, 0.5]])
    sampled = sweep(OracleSource(env), env, 0.3, [[0.5, 0.5]], samples=100_000, rng=rng)
    assert np.allclose(exact.raw, sampled.raw, atol=0.01)
    with pytest.raises(ValueError):
        sweep(OracleSource(env), env, 0.3, [[0.5, 0.5]], samples=10)
