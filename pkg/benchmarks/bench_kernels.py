"""Compare the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 2000] [--steps 5000]

Prints per-call timings for each kernel on batch-sized inputs, then the
throughput of a short end-to-end training run under each backend (run in a
subprocess, since the backend is fixed at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from clplab import kernels

TRAIN_SNIPPET = """
import time
from clplab.env import random_env
from clplab.kernels import BACKEND
from clplab.policy import tabular_arch
from clplab.trainer import TrainConfig, soft_train
env = random_env(8, 6, 2, seed=0)
arch = tabular_arch(8, 6)
cfg = TrainConfig(steps={steps}, batch_size=32, lr_policy=0.05, seed=0)
t = time.perf_counter()
soft_train(env, [0.5, 0.5], 0.1, cfg, arch, arch.zeros())
dt = time.perf_counter() - t
print(BACKEND, dt)
"""


def make_inputs(rng, C=16, A=8, m=2, B=32, d=6, h=16):
    z = rng.normal(size=(C, A))
    logp = kernels.get_backend("python").log_softmax_rows(z)
    probs = np.exp(logp)
    ref_logp = np.full((C, A), -np.log(A))
    xs = rng.integers(0, C, size=B).astype(np.int64)
    return {
        "z": z,
        "probs": probs,
        "logp": logp,
        "ref_logp": ref_logp,
        "rewards": rng.random((C, A, m)),
        "w": np.full(m, 1.0 / m),
        "xs": xs,
        "acts": rng.integers(0, A, size=B).astype(np.int64),
        "u": rng.random(B),
        "coef": rng.normal(size=B),
        "dz": rng.normal(size=(B, A)),
        "V": np.zeros((C, m)),
        "raw": rng.random((B, m)),
        "W1": rng.normal(size=(h, d)),
        "b1": rng.normal(size=h),
        "W2": rng.normal(size=(A, h)),
        "b2": rng.normal(size=A),
        "F": rng.normal(size=(C, d)),
        "C": C,
    }


def cases(k, x):
    kl_x = k.kl_rows(x["probs"], x["logp"], x["ref_logp"])
    H, _ = k.mlp2_forward(x["W1"], x["b1"], x["W2"], x["b2"], x["F"])
    V = x["V"].copy()
    return {
        "log_softmax_rows": lambda: k.log_softmax_rows(x["z"]),
        "sample_actions": lambda: k.sample_actions(x["probs"], x["xs"], x["u"]),
        "score_dlogits": lambda: k.score_dlogits(x["probs"], x["xs"], x["acts"], x["coef"]),
        "tabular_vjp": lambda: k.tabular_vjp(x["C"], x["xs"], x["dz"]),
        "mlp2_forward": lambda: k.mlp2_forward(x["W1"], x["b1"], x["W2"], x["b2"], x["F"]),
        "mlp2_vjp": lambda: k.mlp2_vjp(x["W2"], H, x["F"], x["xs"], x["dz"]),
        "kl_rows": lambda: k.kl_rows(x["probs"], x["logp"], x["ref_logp"]),
        "rollout_batch": lambda: k.rollout_batch(x["probs"], x["logp"], x["ref_logp"], x["rewards"], x["w"], 0.1,
                                                 x["xs"], x["u"], x["V"], kl_x, 1e-8, True),
        "baseline_update": lambda: k.baseline_update(V, x["xs"], x["raw"], 0.1),
    }


def bench_kernels(repeat):
    x = make_inputs(np.random.default_rng(0))
    backends = kernels.available_backends()
    table = {b: {name: min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6
                 for name, fn in cases(kernels.get_backend(b), x).items()} for b in backends}
    header = f"{'kernel':<18}" + "".join(f"{b + ' (us)':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in table[backends[0]]:
        row = f"{name:<18}" + "".join(f"{table[b][name]:>16.2f}" for b in backends)
        if len(backends) == 2:
            row += f"{table['python'][name] / table['cython'][name]:>9.1f}x"
        print(row)


def bench_training(steps):
    print(f"\nend-to-end soft_train, {steps} steps")
    for pure in ("0", "1"):
        env = dict(os.environ, CLPLAB_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(steps=steps)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        backend, dt = out[0], float(out[1])
        print(f"  {backend:<8} {dt:7.2f} s  ({dt / steps * 1e6:6.1f} us/step)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=5000)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(kernels.available_backends())}\n")
    bench_kernels(args.repeat)
    bench_training(args.steps)


if __name__ == "__main__":
    main()
