import json

import numpy as np
import pytest

from clplab.env import (
    BanditEnv,
    counterexample_env,
    env_from_dict,
    env_to_dict,
    load_env,
    make_env,
    random_env,
    save_env,
    scalarize,
)


def test_counterexample_rewards():
    env = counterexample_env()
    assert env.rewards.shape == (1, 3, 2)
    assert env.rewards[0, :, 0].tolist() == [1.0, 0.0, 0.75]
    assert env.rewards[0, :, 1].tolist() == [0.0, 1.0, 0.75]
    assert np.allclose(env.ref_probs, 1 / 3)


def test_counterexample_middle_weighting_prefers_action3():
    env = counterexample_env()
    r = scalarize(env, [0.5, 0.5])[0]
    assert np.argmax(r) == 2
    assert np.argmax(scalarize(env, [1.0, 0.0])[0]) == 0


def test_random_env_deterministic():
    a = random_env(4, 5, 3, seed=9)
    b = random_env(4, 5, 3, seed=9)
    assert np.array_equal(a.rewards, b.rewards)
    assert not np.array_equal(a.rewards, random_env(4, 5, 3, seed=10).rewards)


def test_random_env_shapes_and_features():
    env = random_env(3, 4, 2, seed=0, feature_mode="dense", feature_dim=7)
    assert env.rewards.shape == (3, 4, 2)
    assert env.features.shape == (3, 7)
    assert np.array_equal(random_env(3, 4, 2, seed=0).features, np.eye(3))


def test_arrays_are_read_only():
    env = random_env(2, 3, 2, seed=0)
    with pytest.raises(ValueError):
        env.rewards[0, 0, 0] = 5.0


@pytest.mark.parametrize("kwargs", [
    dict(rewards=np.zeros((1, 1, 2))),
    dict(context_dist=np.array([0.4, 0.4])),
    dict(ref_probs=np.array([[1.0, 0.0, 0.0], [0.2, 0.3, 0.5]])),
    dict(rewards=np.full((2, 3, 2), np.nan)),
])
def test_validation(kwargs):
    base = dict(rewards=np.zeros((2, 3, 2)), context_dist=np.array([0.5, 0.5]),
                ref_probs=np.full((2, 3), 1 / 3), features=np.eye(2))
    base.update(kwargs)
    with pytest.raises(ValueError):
        BanditEnv(**base)


def test_json_round_trip_is_exact(tmp_path):
    env = random_env(3, 4, 2, seed=1, feature_mode="dense", feature_dim=2)
    save_env(env, tmp_path / "e.json")
    back = load_env(tmp_path / "e.json")
    for name in ("rewards", "context_dist", "ref_probs", "features"):
        assert np.array_equal(getattr(env, name), getattr(back, name))
    assert back.seed == 1


def test_env_from_dict_rejects_other_formats():
    d = env_to_dict(counterexample_env())
    d["format"] = "something-else"
    with pytest.raises(ValueError):
        env_from_dict(d)
    d = env_to_dict(counterexample_env())
    d["version"] = 99
    with pytest.raises(ValueError):
        env_from_dict(json.loads(json.dumps(d)))


def test_make_env(tmp_path):
    assert make_env("counterexample").name == "counterexample"
    assert make_env("random", num_contexts=2, num_actions=3, m=2, seed=4).rewards.shape == (2, 3, 2)
    save_env(counterexample_env(), tmp_path / "c.json")
    assert make_env(str(tmp_path / "c.json")).num_actions == 3
    with pytest.raises(ValueError):
        make_env("no-such-env")
