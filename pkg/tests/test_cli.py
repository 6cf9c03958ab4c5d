import numpy as np
import pytest

from clplab import cli
from clplab.env import load_env, random_env, save_env
from clplab.evaluation import read_fronts_csv

CLP_CONFIG = """
[experiment]
method = clp_full
seed = 3

[env]
spec = random
num_contexts = 2
num_actions = 3

[weightings]
dirichlet = 1.0, 1.0
alpha_min = 0.01

[train]
steps = 60
batch_size = 8
lr_policy = 0.05
"""


@pytest.fixture
def config(tmp_path):
    def write(text=CLP_CONFIG, name="exp.ini"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_train_writes_run_directory(config, tmp_path):
    out = tmp_path / "run"
    assert run("train", "--config", config(), "--out", out) == 0
    assert {p.name for p in out.iterdir()} == {"checkpoint.json", "config.ini", "report.csv"}
    assert len((out / "report.csv").read_text().splitlines()) == 61


def test_train_is_byte_identical(config, tmp_path):
    cfg = config()
    run("train", "--config", cfg, "--out", tmp_path / "a")
    run("train", "--config", cfg, "--out", tmp_path / "b")
    assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()
    assert (tmp_path / "a/checkpoint.json").read_bytes() == (tmp_path / "b/checkpoint.json").read_bytes()


def test_resolved_config_reproduces_run(config, tmp_path):
    run("train", "--config", config(), "--out", tmp_path / "a")
    run("train", "--config", tmp_path / "a/config.ini", "--out", tmp_path / "b")
    assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()


def test_seed_flag_changes_run(config, tmp_path):
    run("train", "--config", config(), "--out", tmp_path / "a")
    run("train", "--config", config(), "--out", tmp_path / "b", "--seed", 4)
    assert (tmp_path / "a/report.csv").read_bytes() != (tmp_path / "b/report.csv").read_bytes()


def test_missing_dirichlet_names_the_key(config, capsys):
    assert run("train", "--config", config("[experiment]\nmethod = clp_full\n")) == cli.EXIT_CONFIG
    assert "dirichlet" in capsys.readouterr().err


@pytest.mark.parametrize("text, fragment", [
    ("[experiment]\nmethod = magic\n", "unknown method"),
    ("[experiment]\nmethod = oracle\n[train]\nstepz = 3\n", "stepz"),
    ("[experiment]\nmethod = oracle\n[bogus]\nx = 1\n", "bogus"),
    ("[experiment]\nmethod = oracle\n[train]\nsteps = many\n", "steps"),
    ("[experiment]\nmethod = dera\n", "alphas"),
    ("[experiment]\nmethod = prompting\n[weightings]\ndirichlet = 1, 1\n", "mlp2"),
    ("[experiment]\nmethod = clp_full\n[weightings]\ndirichlet = 1, 1, 1\n", "dirichlet"),
    ("[experiment]\nmethod = clp_full\n[weightings]\ndirichlet = 1, 1\n[train]\nbatch_size = 1\n", "batch_size"),
])
def test_config_errors(config, capsys, text, fragment):
    assert run("train", "--config", config(text)) == cli.EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_environment_overrides(config, tmp_path, monkeypatch):
    monkeypatch.setenv("CLPLAB__TRAIN__STEPS", "7")
    run("train", "--config", config(), "--out", tmp_path / "r")
    assert len((tmp_path / "r/report.csv").read_text().splitlines()) == 8
    assert "steps = 7" in (tmp_path / "r/config.ini").read_text()


def test_flags_beat_environment(config, monkeypatch):
    monkeypatch.setenv("CLPLAB__EXPERIMENT__SEED", "11")
    cfg = cli.load_config(config(), {"experiment": {"seed": 5}})
    assert cfg["experiment"]["seed"] == 5
    assert cli.load_config(config())["experiment"]["seed"] == 11


def test_bad_environment_override(config, monkeypatch, capsys):
    monkeypatch.setenv("CLPLAB__STEPS", "7")
    assert run("train", "--config", config()) == cli.EXIT_CONFIG


def test_rewarded_soups_splits_budget(config, tmp_path):
    text = CLP_CONFIG.replace("clp_full", "rewarded_soups").replace("steps = 60", "steps = 30")
    run("train", "--config", config(text), "--out", tmp_path / "rs")
    for i in range(2):
        assert len((tmp_path / f"rs/report_expert{i}.csv").read_text().splitlines()) == 1 + 15


@pytest.mark.parametrize("method, extra", [
    ("clp_logit", ""),
    ("prompting", "\n[policy]\nkind = mlp2\nhidden_dim = 4\n"),
    ("clp_mid", "\n[policy]\nkind = mlp2\nhidden_dim = 4\n"),
    ("dera", "\n[eval]\nalphas = 0.01, 0.1, 0.5\n"),
])
def test_train_and_sweep_each_method(config, tmp_path, method, extra):
    text = CLP_CONFIG.replace("clp_full", method) + extra
    out = tmp_path / method
    assert run("train", "--config", config(text), "--out", out) == 0
    assert run("sweep", out, "--grid", 5) == 0
    fronts = read_fronts_csv(out / f"front_{method}.csv")
    expected = 3 if method == "dera" else 5
    assert len(fronts[0].points) == expected
    for p in fronts[0].points:
        p.check(atol=1e-9)


def test_oracle_sweep_needs_no_checkpoint(tmp_path):
    out = tmp_path / "o.csv"
    assert run("sweep", "--method", "oracle", "--env", "counterexample", "--grid", 21, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 1 + 21
    assert (tmp_path / "o.plot.json").exists()


def test_sweep_csv_round_trips(config, tmp_path):
    run("train", "--config", config(), "--out", tmp_path / "r")
    run("sweep", tmp_path / "r", "--alphas", "0.05,0.5", "--out", tmp_path / "f.csv")
    text = (tmp_path / "f.csv").read_text()
    from clplab.evaluation import fronts_to_csv

    assert fronts_to_csv(read_fronts_csv(tmp_path / "f.csv")) == text
    assert len(text.splitlines()) == 1 + 2 * 21


def test_sweep_explicit_grid(tmp_path):
    out = tmp_path / "o.csv"
    run("sweep", "--method", "oracle", "--env", "counterexample", "--grid", "0.2,0.8;0.5,0.5", "--out", out)
    assert len(out.read_text().splitlines()) == 3
    assert run("sweep", "--method", "oracle", "--env", "counterexample", "--grid", "0.2,0.9") == cli.EXIT_CONFIG


def test_sweep_env_mismatch(config, tmp_path, capsys):
    run("train", "--config", config(), "--out", tmp_path / "r")
    save_env(random_env(5, 3, 2, seed=0), tmp_path / "other.json")
    assert run("sweep", tmp_path / "r", "--env", tmp_path / "other.json") == cli.EXIT_CHECKPOINT
    assert "contexts" in capsys.readouterr().err


def test_sweep_bad_checkpoint(tmp_path):
    (tmp_path / "junk.json").write_text("{}")
    assert run("sweep", tmp_path / "junk.json") == cli.EXIT_CHECKPOINT


def test_divergence_exit_code(config, tmp_path):
    text = CLP_CONFIG.replace("lr_policy = 0.05", "lr_policy = 1e308\noptimizer = adam")
    with np.errstate(over="ignore"):
        assert run("train", "--config", config(text), "--out", tmp_path / "d") == cli.EXIT_DIVERGED


def test_verify_fmix_passes_and_is_deterministic(tmp_path, capsys):
    assert run("verify", "fmix", "--out", tmp_path / "a.txt") == 0
    assert run("verify", "fmix", "--out", tmp_path / "b.txt") == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert "PASS" in capsys.readouterr().out


def test_verify_failure_code(monkeypatch):
    from clplab import experiments

    monkeypatch.setitem(experiments.RUNNERS, "regret",
                        lambda seed: [experiments.Check("forced", False, "failing on purpose")])
    assert run("verify", "regret") == experiments.EXIT_CODES["regret"]
    assert len(set(experiments.EXIT_CODES.values())) == len(experiments.SUITES)


def test_export_env(config, tmp_path):
    assert run("export-env", "--config", config(), "--out", tmp_path / "e.json") == 0
    env = load_env(tmp_path / "e.json")
    assert env.rewards.shape == (2, 3, 2)
    assert run("export-env", "--env", "counterexample", "--out", tmp_path / "c.json") == 0
    assert run("export-env", "--out", tmp_path / "x.json") == cli.EXIT_CONFIG
