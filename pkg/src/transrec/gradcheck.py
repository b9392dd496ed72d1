"""Central finite-difference checks for the losses and the encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from . import losses

LOSS_TOL = 1e-6
ENCODER_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.rel_error <= self.tol)


def rel_error(analytic, numeric) -> float:
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for idx in range(flat.size):
        old = flat[idx]
        flat[idx] = old + h
        up = f()
        flat[idx] = old - h
        down = f()
        flat[idx] = old
        gflat[idx] = (up - down) / (2 * h)
    return g


def _loss_inputs(name, rng, batch, n_j, n_k):
    s_i = rng.normal(size=batch)
    if name in ("bpr", "bce"):
        return (s_i, rng.normal(size=batch))
    if name in ("trans_bpr", "trans_bce"):
        return (s_i, rng.normal(size=batch), rng.normal(size=batch))
    if name == "ssm":
        return (s_i, rng.normal(size=(batch, n_j + n_k)))
    return (s_i, rng.normal(size=(batch, n_j)), rng.normal(size=(batch, n_k)))


def check_losses(seed: int = 0, batch: int = 6, n_j: int = 4, n_k: int = 3, gamma: float = 1.3) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name in losses.LOSSES:
        fn = getattr(losses, name)
        kw = {"gamma": gamma} if name in losses.TRANSITIVE_LOSSES else {}
        inputs = [np.asarray(x, dtype=np.float64) for x in _loss_inputs(name, rng, batch, n_j, n_k)]
        _, grads = losses.with_grads(fn, *inputs, **kw)
        errs = []
        for x, g in zip(inputs, grads):
            num = numeric_grad(lambda: fn(*inputs, **kw).value, x)
            errs.append(rel_error(g, num))
        out.append(CheckResult(name, max(errs), LOSS_TOL))
    return out


def check_encoder(seed: int = 0, n_items: int = 7, dim: int = 4, max_len: int = 4, layers: int = 1) -> list[CheckResult]:
    """Gradient of a masked TransBPR loss w.r.t. every encoder parameter."""
    cfg = enc.EncoderConfig(n_items=n_items, max_len=max_len, dim=dim, layers=layers, heads=1,
                            dropout=0.0, dtype="float64")
    rng = np.random.default_rng(seed)
    params = enc.init(cfg, seed)
    # Larger weights than the 0.02 init so that every path carries signal.
    for name, p in params.items():
        if p.data.ndim == 2:
            p.data[:] = rng.normal(scale=0.5, size=p.shape)
    params["item_emb"].data[0] = 0.0
    seqs = [[1, 2, 3, 4, 5], [6, 2, 7], [3, 5]]
    inputs, targets = enc.sequence_batch(seqs, max_len)
    mask = targets != 0
    j = rng.integers(1, n_items + 1, size=targets.shape)
    k = rng.integers(1, n_items + 1, size=targets.shape)

    def loss():
        h = enc.encode(params, inputs, cfg)
        table = params["item_emb"]
        s = [enc.score(h, ids, table) for ids in (targets, j, k)]
        return losses.trans_bpr(*s, gamma=0.7, mask=mask).total

    total = loss()
    total.backward()
    out = []
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        num = numeric_grad(lambda: loss().item(), p.data)
        if name == "item_emb":  # padding row is not a free parameter
            analytic, num = analytic[1:], num[1:]
        out.append(CheckResult(f"encoder.{name}", rel_error(analytic, num), ENCODER_TOL))
    return out


def run_all(seed: int = 0) -> list[CheckResult]:
    return check_losses(seed) + check_encoder(seed)
