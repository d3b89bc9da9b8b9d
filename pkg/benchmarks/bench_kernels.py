#!/usr/bin/env python3
"""Compare the compiled kernels with the pure-numpy fallback.

Per-op timings cover the shapes the training loop actually produces
(stacked Monte Carlo rows through a two-hidden-layer network), and an
optional end-to-end mode times a short training run under each backend
by re-invoking the interpreter with EBSURV_BACKEND set.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --end-to-end
"""

import argparse
import importlib
import subprocess
import sys
import time

import numpy as np

from ebsurv import _kernels_py


def _load_compiled():
    try:
        return importlib.import_module("ebsurv._kernels")
    except ImportError:
        return None


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def op_cases(rng, rows: int, width: int):
    """(name, builder) pairs; builder returns a no-arg callable per module."""
    x = rng.standard_normal((rows, width))
    w = rng.standard_normal((width, width))
    b = rng.standard_normal(width)
    g = rng.standard_normal((rows, width))
    wide = rng.standard_normal((rows, 64))
    return [
        ("matmul", lambda K: lambda: K.matmul(x, w, False, False)),
        ("matmul_tn", lambda K: lambda: K.matmul(x, g, True, False)),
        ("affine", lambda K: lambda: K.affine(x, w, b)),
        ("relu", lambda K: lambda: K.relu(x)),
        ("relu_backward", lambda K: lambda: K.relu_backward(g, x)),
        ("col_sum", lambda K: lambda: K.col_sum(g)),
        ("logsumexp_rows", lambda K: lambda: K.logsumexp_rows(wide)),
        ("softmax_rows", lambda K: lambda: K.softmax_rows(wide, K.logsumexp_rows(wide))),
    ]


def run_micro(rows: int, width: int, repeats: int) -> int:
    compiled = _load_compiled()
    rng = np.random.default_rng(0)
    print(f"shapes: {rows} rows, width {width}; best of {repeats}")
    print(f"{'op':<16} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>9}")
    for name, build in op_cases(rng, rows, width):
        t_py = _time(build(_kernels_py), repeats) * 1e3
        if compiled is None:
            print(f"{name:<16} {t_py:>12.3f} {'missing':>14} {'-':>9}")
            continue
        t_cy = _time(build(compiled), repeats) * 1e3
        ratio = t_py / t_cy if t_cy > 0 else float("inf")
        print(f"{name:<16} {t_py:>12.3f} {t_cy:>14.3f} {ratio:>8.2f}x")
    if compiled is None:
        print("compiled extension not built; showing fallback only")
        return 1
    return 0


_TRAIN_SNIPPET = """
import ebsurv as es
data = es.gen_sim_dataset(es.SimConfig(400, seed=1))
tr, va, te = es.split_dataset(data, seed=2)
model = es.initialize_energy_model(2, tr.max_tau, nodes_per_layer=64, seed=0)
cfg = es.TrainConfig(n_samples=50, learning_rate=0.02, batch_size=64,
                     max_epochs=10, patience=10, seed=0)
es.train(tr, va, model, cfg)
print(es.active_backend())
"""


def run_end_to_end() -> int:
    for backend in ("numpy", "cython"):
        env = {"EBSURV_BACKEND": backend}
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-c", _TRAIN_SNIPPET],
            capture_output=True, text=True, env={**__import__("os").environ, **env},
        )
        elapsed = time.perf_counter() - start
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}")
            return 1
        active = proc.stdout.strip().splitlines()[-1]
        print(f"train 10 epochs, backend {active:<7} {elapsed:8.2f} s")
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a short training run per backend")
    args = parser.parse_args()
    status = run_micro(args.rows, args.width, args.repeats)
    if args.end_to_end:
        status = max(status, run_end_to_end())
    return status


if __name__ == "__main__":
    sys.exit(main())
