"""Compare the compiled and NumPy aggregation kernels.

Runs the raw kernels on a message-passing sized workload, then one training
epoch end to end under each backend (the fallback in a subprocess, since
the backend is fixed at import).

    python benchmarks/bench_kernels.py
"""
import os
import subprocess
import sys
import timeit

import numpy as np

from graphdive import kernels

EPOCH_SNIPPET = """
import time
from graphdive.config import TrainConfig
from graphdive.kernels import BACKEND
from graphdive.synth import SynthSpec, synth_generate
from graphdive.training import train
ds = synth_generate(SynthSpec(n=1000, seed=0))
cfg = TrainConfig(variant="post", M=3, d=32, K=5, epochs=3, batch_size=64)
t = time.perf_counter()
train(cfg, ds)
print(f"{BACKEND}\\t{(time.perf_counter() - t) / 3:.3f}")
"""


def bench_raw(E=4000, n=1800, d=64, repeat=50):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(E, d))
    idx = rng.integers(0, n, size=E).astype(np.intp)
    rows = []
    for name, fn in [("segment_sum", kernels.segment_sum), ("py_segment_sum", kernels.py_segment_sum)]:
        t = min(timeit.repeat(lambda: fn(vals, idx, n), number=repeat, repeat=3)) / repeat
        rows.append((name, t))
    h = rng.normal(size=(n, d))
    for name, fn in [("gather_rows", kernels.gather_rows), ("py_gather_rows", kernels.py_gather_rows)]:
        t = min(timeit.repeat(lambda: fn(h, idx), number=repeat, repeat=3)) / repeat
        rows.append((name, t))
    same = np.array_equal(kernels.segment_sum(vals, idx, n), kernels.py_segment_sum(vals, idx, n))
    return rows, same


def bench_epoch(backend):
    env = dict(os.environ, GRAPHDIVE_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip().split("\t")


def main():
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    rows, same = bench_raw()
    print("kernel\tseconds/call")
    for name, t in rows:
        print(f"{name}\t{t * 1e6:.1f}us")
    print(f"bit-identical segment sums: {same}")
    print("backend\tseconds/epoch (n=1000, d=32, K=5, post, M=3)")
    for backend in ("cython", "python"):
        print("\t".join(bench_epoch(backend)))


if __name__ == "__main__":
    main()
