"""Command-line entry point: ``clplab train | sweep | verify | export-env``.

Experiment configs are INI files. Every key can be overridden from the
environment with ``CLPLAB__<SECTION>__<KEY>`` (double underscores, case
insensitive), e.g. ``CLPLAB__TRAIN__STEPS=500``. Explicit command-line flags
win over both.

Exit codes
----------
0   success
2   invalid configuration or usage
3   training diverged (non-finite parameters)
4   unreadable checkpoint or checkpoint/environment mismatch
10+ failed verification suite (see ``experiments.EXIT_CODES``)
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import experiments
from .conditioning import ParameterBundle, augment_features, init_bundle, mute_prompt_inputs
from .env import BanditEnv, env_from_dict, env_to_dict, make_env, save_env
from .evaluation import BundleSource, DeRaSource, OracleSource, SoupSource, sweep, write_fronts_csv, write_plot_data
from .policy import (
    LayoutError,
    ParameterVector,
    PolicyArchitecture,
    init_reference,
    mlp2_arch,
    reference_env,
    tabular_arch,
)
from .trainer import DivergenceError, TrainConfig, clp_train, soft_train, train_experts
from .weightings import WeightingSampler, simplex_grid

ENV_PREFIX = "CLPLAB__"
RUN_FORMAT = "clplab-run"
RUN_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4

METHODS = ("clp_full", "clp_mid", "clp_logit", "prompting", "rewarded_soups", "dera", "oracle")
CLP_SCHEMES = {"clp_full": "full", "clp_mid": "mid", "clp_logit": "logit"}
NEEDS_DIRICHLET = ("clp_full", "clp_mid", "clp_logit", "prompting")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class CheckpointError(ValueError):
    """Checkpoint unreadable or inconsistent with the requested evaluation."""


# -- configuration -------------------------------------------------------------------

_int = int
_float = float


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> List[float]:
    parts = [p for p in s.replace(",", " ").split()]
    if not parts:
        raise ValueError("empty list")
    return [float(p) for p in parts]


def _str(s: str) -> str:
    return s.strip()


# (parser, default); a default of None means "unset".
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "experiment": {"method": (_str, None), "seed": (_int, 0), "out": (_str, "runs/default")},
    "env": {
        "spec": (_str, "counterexample"),
        "num_contexts": (_int, 4),
        "num_actions": (_int, 3),
        "m": (_int, 2),
        "feature_mode": (_str, "onehot"),
        "feature_dim": (_int, None),
        "seed": (_int, None),
    },
    "policy": {
        "kind": (_str, "tabular"),
        "hidden_dim": (_int, 8),
        "init_std": (_float, 0.1),
        "prompt_repeats": (_int, 5),
        "seed": (_int, None),
    },
    "weightings": {
        "m": (_int, None),
        "dirichlet": (_floats, None),
        "alpha_min": (_float, 0.01),
        "alpha_mode": (_str, "inverse_cdf"),
        "alpha_fixed": (_float, None),
        "weights": (_floats, None),
        "seed": (_int, None),
    },
    "train": {
        "steps": (_int, 1000),
        "batch_size": (_int, 32),
        "lr_policy": (_float, 0.1),
        "lr_value": (_float, 0.1),
        "optimizer": (_str, "sgd"),
        "advantage_norm_eps": (_float, 1e-8),
        "normalize_advantage": (_bool, True),
        "adam_beta1": (_float, 0.9),
        "adam_beta2": (_float, 0.999),
        "adam_eps": (_float, 1e-8),
        "checkpoint_every": (_int, 0),
        "seed": (_int, None),
    },
    "eval": {
        "points_per_edge": (_int, 21),
        "alphas": (_floats, None),
        "samples": (_int, None),
        "seed": (_int, None),
    },
}

# Per-module seeds derived from experiment.seed when not given explicitly.
DERIVED_SEEDS = (("env", "seed"), ("policy", "seed"), ("weightings", "seed"), ("train", "seed"), ("eval", "seed"))


@dataclass
class ExperimentConfig:
    """Fully resolved experiment configuration (section -> key -> value)."""

    values: Dict[str, Dict[str, object]]

    def __getitem__(self, section: str) -> Dict[str, object]:
        return self.values[section]

    @property
    def method(self) -> str:
        return self.values["experiment"]["method"]

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for key, val in keys.items():
                if val is not None:
                    lines.append(f"{key} = {_format_value(val)}")
            lines.append("")
        return "\n".join(lines)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _env_overrides(environ) -> Dict[str, Dict[str, str]]:
    out: Dict[str, Dict[str, str]] = {}
    for name, val in environ.items():
        if not name.upper().startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        if "__" not in rest:
            raise ConfigError(f"environment override {name} must look like {ENV_PREFIX}<SECTION>__<KEY>")
        section, key = rest.split("__", 1)
        out.setdefault(section, {})[key] = val
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Dict[str, object]]] = None,
                environ=None) -> ExperimentConfig:
    """Read, override, type-check and resolve an experiment config.

    Precedence: schema defaults < file < environment variables < ``overrides``.
    """
    raw: Dict[str, Dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            raw[section] = dict(parser[section])
    for section, keys in _env_overrides(os.environ if environ is None else environ).items():
        raw.setdefault(section, {}).update(keys)

    values: Dict[str, Dict[str, object]] = {}
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
    for section, spec in SCHEMA.items():
        values[section] = {}
        given = raw.get(section, {})
        for key in given:
            if key not in spec:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
        for key, (parse, default) in spec.items():
            if key in given and given[key].strip() != "":
                try:
                    values[section][key] = parse(given[key])
                except ValueError as exc:
                    raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
            else:
                values[section][key] = default
    for section, keys in (overrides or {}).items():
        for key, val in keys.items():
            if val is not None:
                values[section][key] = val
    cfg = ExperimentConfig(values)
    _resolve(cfg)
    return cfg


def _resolve(cfg: ExperimentConfig) -> None:
    v = cfg.values
    method = v["experiment"]["method"]
    if method is None:
        raise ConfigError("missing required key 'method' in section [experiment]")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    seeds = np.random.SeedSequence(v["experiment"]["seed"]).spawn(len(DERIVED_SEEDS))
    for (section, key), ss in zip(DERIVED_SEEDS, seeds):
        if v[section][key] is None:
            v[section][key] = int(ss.generate_state(1)[0])

    wt, pol = v["weightings"], v["policy"]
    if method in NEEDS_DIRICHLET and wt["dirichlet"] is None:
        raise ConfigError(f"method {method} requires key 'dirichlet' in section [weightings]")
    if method == "dera" and v["eval"]["alphas"] is None:
        raise ConfigError("method dera requires key 'alphas' in section [eval]")
    if method == "prompting" and pol["kind"] != "mlp2":
        raise ConfigError("method prompting requires [policy] kind = mlp2")
    if method == "clp_mid" and pol["kind"] != "mlp2":
        raise ConfigError("method clp_mid requires [policy] kind = mlp2 (tabular policies have no hidden layer)")
    if pol["kind"] not in ("tabular", "mlp2"):
        raise ConfigError(f"unknown policy kind {pol['kind']!r}")
    if wt["alpha_mode"] not in ("fixed", "inverse_cdf"):
        raise ConfigError(f"unknown alpha_mode {wt['alpha_mode']!r}")
    if wt["alpha_mode"] == "fixed" and wt["alpha_fixed"] is None and method in NEEDS_DIRICHLET:
        raise ConfigError("alpha_mode = fixed requires key 'alpha_fixed' in section [weightings]")
    if wt["m"] is not None:
        _check_reward_count(cfg, wt["m"])
    try:
        train_config(cfg, with_sampler=False)
    except ValueError as exc:
        raise ConfigError(f"invalid [train] section: {exc}") from exc
    if method in NEEDS_DIRICHLET:
        try:
            sampler(cfg)
        except ValueError as exc:
            raise ConfigError(f"invalid [weightings] section: {exc}") from exc


def _check_reward_count(cfg: ExperimentConfig, m: int) -> None:
    wt = cfg["weightings"]
    if wt["m"] is not None and wt["m"] != m:
        raise ConfigError(f"environment has {m} rewards but [weightings] m = {wt['m']}")
    for key in ("dirichlet", "weights"):
        if wt[key] is not None and len(wt[key]) != m:
            raise ConfigError(f"'{key}' in [weightings] has {len(wt[key])} entries but there are {m} rewards")


# -- builders ---------------------------------------------------------------------


def sampler(cfg: ExperimentConfig) -> WeightingSampler:
    wt = cfg["weightings"]
    return WeightingSampler(
        dirichlet=list(wt["dirichlet"]),
        alpha_min=wt["alpha_min"],
        alpha_mode=wt["alpha_mode"],
        alpha_fixed=wt["alpha_fixed"],
        seed=wt["seed"],
    )


def train_config(cfg: ExperimentConfig, with_sampler: bool = True) -> TrainConfig:
    tr = cfg["train"]
    return TrainConfig(
        steps=tr["steps"],
        batch_size=tr["batch_size"],
        lr_policy=tr["lr_policy"],
        lr_value=tr["lr_value"],
        sampler=sampler(cfg) if with_sampler and cfg.method in NEEDS_DIRICHLET else None,
        advantage_norm_eps=tr["advantage_norm_eps"],
        normalize_advantage=tr["normalize_advantage"],
        optimizer=tr["optimizer"],
        adam_betas=(tr["adam_beta1"], tr["adam_beta2"]),
        adam_eps=tr["adam_eps"],
        seed=tr["seed"],
        checkpoint_every=tr["checkpoint_every"],
    )


def build_env(cfg: ExperimentConfig) -> BanditEnv:
    e = cfg["env"]
    try:
        env = make_env(e["spec"], num_contexts=e["num_contexts"], num_actions=e["num_actions"], m=e["m"],
                       seed=e["seed"], feature_mode=e["feature_mode"], feature_dim=e["feature_dim"])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build environment: {exc}") from exc
    _check_reward_count(cfg, env.m)
    return env


def build_policy(cfg: ExperimentConfig, env: BanditEnv):
    """Architecture, reference parameters and the env re-referenced to them.

    Tabular policies start at the env's own reference. mlp2 policies draw
    random reference weights and the env's reference becomes their policy.
    """
    pol = cfg["policy"]
    method = cfg.method
    scheme = CLP_SCHEMES.get(method, "full")
    if pol["kind"] == "tabular":
        arch = tabular_arch(env.num_contexts, env.num_actions, scheme)
        return arch, init_reference(arch, None, env.ref_probs), env
    prompt = method == "prompting"
    repeats = pol["prompt_repeats"]
    d = env.feature_dim + (env.m * repeats if prompt else 0)
    arch = mlp2_arch(d, pol["hidden_dim"], env.num_actions, scheme)
    theta_ref = init_reference(arch, np.random.default_rng(pol["seed"]), std=pol["init_std"])
    feats = env.features
    if prompt:
        theta_ref = mute_prompt_inputs(arch, theta_ref, env.feature_dim)
        feats = augment_features(env.features, np.full(env.m, 1.0 / env.m), repeats)
    return arch, theta_ref, reference_env(env, arch, theta_ref, feats)


def _fixed_weights(cfg: ExperimentConfig, m: int) -> np.ndarray:
    w = cfg["weightings"]["weights"]
    return np.full(m, 1.0 / m) if w is None else np.asarray(w, dtype=float)


def _expert_alpha(cfg: ExperimentConfig) -> float:
    wt = cfg["weightings"]
    return wt["alpha_fixed"] if wt["alpha_fixed"] is not None else wt["alpha_min"]


# -- run directories ------------------------------------------------------------------


def _theta_dict(theta: ParameterVector) -> dict:
    return theta.to_dict()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def run_record(method: str, env: BanditEnv, payload: dict) -> dict:
    return {"format": RUN_FORMAT, "version": RUN_VERSION, "method": method, "env": env_to_dict(env), **payload}


def cmd_train(cfg: ExperimentConfig, out: Path) -> Path:
    """Train the configured method and persist the run directory."""
    env = build_env(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    method = cfg.method
    if method == "oracle":
        _write_json(out / "checkpoint.json", run_record(method, env, {}))
        return out
    arch, theta_ref, env = build_policy(cfg, env)
    tcfg = train_config(cfg)
    if method in NEEDS_DIRICHLET:
        bundle = init_bundle(arch, theta_ref, env.m, cfg["weightings"]["alpha_min"],
                             cond_prompt=method == "prompting", repeats=cfg["policy"]["prompt_repeats"],
                             shared=method == "prompting")
        ckdir = out / "checkpoints"

        def save_partial(step: int, b: ParameterBundle) -> None:
            ckdir.mkdir(exist_ok=True)
            _write_json(ckdir / f"step_{step:08d}.json", run_record(method, env, {"bundle": b.to_dict()}))

        bundle, report = clp_train(env, bundle, tcfg, save_partial)
        (out / "report.csv").write_text(report.to_csv())
        payload = {"bundle": bundle.to_dict()}
    elif method == "rewarded_soups":
        experts, reports = train_experts(env, _expert_alpha(cfg), tcfg, arch, theta_ref, return_reports=True)
        for i, rep in enumerate(reports):
            (out / f"report_expert{i}.csv").write_text(rep.to_csv())
        payload = {"architecture": arch.to_dict(), "theta_ref": _theta_dict(theta_ref),
                   "experts": [_theta_dict(e) for e in experts], "alpha": _expert_alpha(cfg)}
    else:  # dera
        w = _fixed_weights(cfg, env.m)
        alpha_min = cfg["weightings"]["alpha_min"]
        theta_min, report = soft_train(env, w, alpha_min, tcfg, arch, theta_ref, return_report=True)
        (out / "report.csv").write_text(report.to_csv())
        payload = {"architecture": arch.to_dict(), "theta_ref": _theta_dict(theta_ref),
                   "theta_min": _theta_dict(theta_min), "alpha_min": alpha_min, "weights": w.tolist()}
    _write_json(out / "checkpoint.json", run_record(method, env, payload))
    return out


def load_run(path: Path) -> dict:
    p = path / "checkpoint.json" if path.is_dir() else path
    try:
        d = json.loads(p.read_text())
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {p}: {exc}") from exc
    if d.get("format") != RUN_FORMAT or d.get("version") != RUN_VERSION:
        raise CheckpointError(f"{p} is not a clplab run checkpoint")
    return d


def _check_arch_env(arch: PolicyArchitecture, env: BanditEnv, prompt_dims: int = 0) -> None:
    if arch.num_actions != env.num_actions:
        raise CheckpointError(f"checkpoint has {arch.num_actions} actions, environment has {env.num_actions}")
    if arch.kind == "tabular" and arch.num_contexts != env.num_contexts:
        raise CheckpointError(f"checkpoint has {arch.num_contexts} contexts, environment has {env.num_contexts}")
    if arch.kind == "mlp2" and arch.feature_dim != env.feature_dim + prompt_dims:
        raise CheckpointError(f"checkpoint expects feature_dim {arch.feature_dim - prompt_dims}, "
                              f"environment has {env.feature_dim}")


def source_from_run(run: dict, env: Optional[BanditEnv] = None):
    """Policy source and evaluation env for a saved run."""
    method = run["method"]
    env = env_from_dict(run["env"]) if env is None else env
    try:
        if method == "oracle":
            return OracleSource(env), env
        if "bundle" in run:
            bundle = ParameterBundle.from_dict(run["bundle"])
            if bundle.m != env.m:
                raise CheckpointError(f"checkpoint has {bundle.m} rewards, environment has {env.m}")
            _check_arch_env(bundle.arch, env, bundle.m * bundle.repeats if bundle.cond_prompt else 0)
            feats = env.features if bundle.arch.kind == "mlp2" else None
            return BundleSource(bundle, feats, method), env
        arch = PolicyArchitecture.from_dict(run["architecture"])
        _check_arch_env(arch, env)
        theta_ref = ParameterVector.from_dict(run["theta_ref"])
        feats = env.features if arch.kind == "mlp2" else None
        if method == "rewarded_soups":
            experts = [ParameterVector.from_dict(e) for e in run["experts"]]
            if len(experts) != env.m:
                raise CheckpointError(f"checkpoint has {len(experts)} experts, environment has {env.m} rewards")
            return SoupSource(arch, experts, feats, theta_ref), env
        theta_min = ParameterVector.from_dict(run["theta_min"])
        return DeRaSource(arch, theta_min, theta_ref, run["alpha_min"], env.features), env
    except (KeyError, LayoutError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc


def parse_grid(spec: Optional[str], m: int, default_points: int = 21) -> np.ndarray:
    """``"21"`` means 21 points per simplex edge; ``"0.2,0.8;0.5,0.5"`` lists weightings."""
    if spec is None:
        return simplex_grid(m, default_points)
    spec = spec.strip()
    if ";" not in spec and "," not in spec:
        try:
            n = int(spec)
        except ValueError as exc:
            raise ConfigError(f"bad grid spec {spec!r}") from exc
        if n < 2:
            raise ConfigError("a grid needs at least 2 points per edge")
        return simplex_grid(m, n)
    try:
        rows = np.array([[float(x) for x in row.split(",")] for row in spec.split(";") if row.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {spec!r}") from exc
    if rows.ndim != 2 or rows.shape[1] != m:
        raise ConfigError(f"grid weightings must have {m} entries each")
    if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError("grid weightings must lie on the simplex")
    return rows


def cmd_sweep(run: dict, grid: np.ndarray, alphas, out: Path, env: Optional[BanditEnv] = None,
              samples: Optional[int] = None, seed: int = 0) -> Path:
    """Evaluate a saved run over ``alphas x grid``; writes the front CSV and plot data."""
    source, env = source_from_run(run, env)
    if run["method"] == "dera":
        grid = np.asarray([run["weights"]])
    rng = np.random.default_rng(seed) if samples is not None else None
    front = sweep(source, env, alphas, grid, run["method"], samples=samples, rng=rng)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_fronts_csv([front], out)
    write_plot_data([front], out.with_suffix(".plot.json"))
    return out


def cmd_verify(what: str, seed: int = 0, out: Optional[Path] = None) -> int:
    """Run one suite (or ``all``); print the report and return the exit code."""
    suites = experiments.SUITES if what == "all" else (what,)
    results = {name: experiments.run_suite(name, seed) for name in suites}
    text = experiments.format_report(results, seed)
    sys.stdout.write(text)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    for name, checks in results.items():
        if not all(c.passed for c in checks):
            return experiments.EXIT_CODES[name]
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clplab", description="Conditional multi-objective policies on finite bandits.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one method and write a run directory")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--method", choices=METHODS)

    s = sub.add_parser("sweep", help="evaluate a run (or the oracle) over a weighting grid")
    s.add_argument("checkpoint", nargs="?", help="run directory or checkpoint.json")
    s.add_argument("--config", help="experiment config; needed for --method oracle without a checkpoint")
    s.add_argument("--method", choices=METHODS, help="only 'oracle' is meaningful without a checkpoint")
    s.add_argument("--grid", help="points per simplex edge, or explicit weightings 'w0,w1;w0,w1'")
    s.add_argument("--alphas", help="comma-separated KL weights (default: [eval] alphas, else alpha_min)")
    s.add_argument("--env", help="evaluate on this environment instead of the checkpoint's")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("what", choices=experiments.SUITES + ("all",))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")

    e = sub.add_parser("export-env", help="write the configured environment as JSON")
    e.add_argument("--config")
    e.add_argument("--env", help="builtin name or file, instead of a config")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True)
    return p


def _cli_overrides(args) -> Dict[str, Dict[str, object]]:
    return {"experiment": {"seed": getattr(args, "seed", None), "method": getattr(args, "method", None),
                           "out": getattr(args, "out", None)}}


def _sweep(args) -> None:
    if args.checkpoint is None:
        if args.method not in (None, "oracle"):
            raise ConfigError("a checkpoint is required unless --method oracle")
        if args.config is None and args.env is None:
            raise ConfigError("sweep --method oracle needs --config or --env")
        if args.config is not None:
            cfg = load_config(args.config, {"experiment": {"method": "oracle"}})
            env = build_env(cfg)
        else:
            cfg = None
            env = _env_arg(args.env)
        run = run_record("oracle", env, {})
        default_out = Path(cfg["experiment"]["out"] if cfg else ".") / "front_oracle.csv"
    else:
        run = load_run(Path(args.checkpoint))
        cfg_path = Path(args.checkpoint) / "config.ini" if Path(args.checkpoint).is_dir() else None
        cfg = load_config(str(cfg_path), environ={}) if cfg_path and cfg_path.exists() else None
        if args.method not in (None, run["method"]):
            raise ConfigError(f"checkpoint holds method {run['method']}, not {args.method}")
        env = None
        default_out = (Path(args.checkpoint) if Path(args.checkpoint).is_dir()
                       else Path(args.checkpoint).parent) / f"front_{run['method']}.csv"
    m = run["env"]["m"]
    alphas = _alphas(args.alphas, cfg)
    points = cfg["eval"]["points_per_edge"] if cfg else 21
    grid = parse_grid(args.grid, m, points)
    if args.env is not None and args.checkpoint is not None:
        env = _env_arg(args.env)
    samples = cfg["eval"]["samples"] if cfg else None
    seed = args.seed if args.seed is not None else (cfg["eval"]["seed"] if cfg else 0)
    out = cmd_sweep(run, grid, alphas, Path(args.out) if args.out else default_out, env, samples, seed)
    print(f"wrote {out}")


def _env_arg(spec: str) -> BanditEnv:
    try:
        return make_env(spec)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build environment {spec!r}: {exc}") from exc


def _alphas(flag: Optional[str], cfg: Optional[ExperimentConfig]):
    if flag is not None:
        try:
            vals = _floats(flag)
        except ValueError as exc:
            raise ConfigError(f"bad --alphas value: {exc}") from exc
    elif cfg is not None and cfg["eval"]["alphas"] is not None:
        vals = cfg["eval"]["alphas"]
    else:
        vals = [cfg["weightings"]["alpha_min"] if cfg else 0.01]
    if any(not 0.0 < a <= 1.0 for a in vals):
        raise ConfigError("every alpha must lie in (0, 1]")
    return vals


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_config(args.config, _cli_overrides(args))
            out = cmd_train(cfg, Path(cfg["experiment"]["out"]))
            print(f"wrote {out}")
        elif args.command == "sweep":
            _sweep(args)
        elif args.command == "verify":
            return cmd_verify(args.what, args.seed, Path(args.out) if args.out else None)
        else:
            if args.config is not None:
                env = build_env(load_config(args.config, {"experiment": {"method": "oracle", "seed": args.seed}}))
            elif args.env is not None:
                env = _env_arg(args.env)
            else:
                raise ConfigError("export-env needs --config or --env")
            save_env(env, args.out)
            print(f"wrote {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
