"""Time the sampling and ranking kernels with numba against the pure-numpy path.

Each path runs in its own interpreter because the backend is fixed at import
time by ``TRANSREC_DISABLE_NUMBA``. Usage::

    python benchmarks/bench_kernels.py [--rows 100000] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from transrec import _accel
from transrec.kernels import rank_kernel
from transrec.sampling import NegativeSampler, SamplerConfig, build_popularity

rows, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
n_items = 12_000
sampler = NegativeSampler(build_popularity(rng.zipf(1.3, size=n_items).clip(max=5000)), SamplerConfig())
excl = rng.integers(1, n_items + 1, size=rows)
scores = rng.normal(size=(2048, n_items + 1))
targets = rng.integers(1, n_items + 1, size=2048)

cases = {
    "quad weak": lambda: sampler.quad(excl, np.random.default_rng(1), transitivity="weak"),
    "quad strict": lambda: sampler.quad(excl, np.random.default_rng(1), transitivity="strict"),
    "quad disjoint": lambda: sampler.quad(excl, np.random.default_rng(1), transitivity="disjoint"),
    "sets 50/50": lambda: sampler.sets(excl[: rows // 50], np.random.default_rng(1)),
    "rank 2048x12k": lambda: rank_kernel(scores, targets),
}
out = {}
for name, fn in cases.items():
    fn()  # warm-up (compilation on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps({"numba": _accel.NUMBA_ENABLED, "times": out}))
"""


def run(disable, rows, repeat):
    env = dict(os.environ)
    env.pop("TRANSREC_DISABLE_NUMBA", None)
    if disable:
        env["TRANSREC_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(rows), str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.rows, args.repeat)
    slow = run(True, args.rows, args.repeat)
    if not fast["numba"]:
        print("numba is not importable; both columns use the fallback")
    print(f"{'kernel':16s}{'numba s':>12s}{'numpy s':>12s}{'speedup':>10s}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:16s}{t_fast:12.4f}{t_slow:12.4f}{t_slow / t_fast:10.1f}x")


if __name__ == "__main__":
    main()
