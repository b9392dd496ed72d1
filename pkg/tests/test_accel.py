"""The numba kernels and the interpreted fallback must agree bit for bit."""

import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import hashlib, numpy as np
from transrec import _accel
from transrec.sampling import NegativeSampler, SamplerConfig, build_popularity
from transrec.kernels import rank_kernel
rng = np.random.default_rng(0)
counts = rng.zipf(1.3, size=300).clip(max=1000)
h = hashlib.sha256()
for mode in ("pop", "niche"):
    for tr in ("weak", "strict", "disjoint"):
        s = NegativeSampler(build_popularity(counts), SamplerConfig(mode=mode, transitivity=tr))
        excl = [rng.integers(1, 301, size=rng.integers(1, 30)) for _ in range(2000)]
        for a in s.quad(excl, np.random.default_rng(1)):
            h.update(a.tobytes())
    nj, nk = s.sets(excl[:500], np.random.default_rng(2), n_j=20, n_k=20, mode=mode)
    h.update(nj.tobytes()); h.update(nk.tobytes())
scores = np.round(rng.normal(size=(64, 301)), 2)
h.update(rank_kernel(scores, rng.integers(1, 301, size=64)).tobytes())
print(_accel.NUMBA_ENABLED, h.hexdigest())
"""


def _run(disable: bool):
    env = dict(os.environ)
    env.pop("TRANSREC_DISABLE_NUMBA", None)
    if disable:
        env["TRANSREC_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split()


def test_numba_and_fallback_agree():
    pytest.importorskip("numba")
    jit_flag, jit_hash = _run(False)
    py_flag, py_hash = _run(True)
    assert (jit_flag, py_flag) == ("True", "False")
    assert jit_hash == py_hash
