"""Ranking losses and their transitive extensions.

Every loss maps score tensors to a :class:`LossReport` whose ``total`` is the
mean per-example loss. Transitive losses also report the two components
separately so training can log them:

    total = original + gamma * preference

Scores may be given as numpy arrays or :class:`~transrec.tensor.Tensor`.
An optional boolean ``mask`` (same shape as ``s_i``) restricts the mean to
valid examples, e.g. non-padding positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOSSES = ("bpr", "bce", "ssm", "trans_bpr", "trans_bce", "trans_ssm")
SET_LOSSES = ("ssm", "trans_ssm")
TRANSITIVE_LOSSES = ("trans_bpr", "trans_bce", "trans_ssm")
GAMMA_GRID = (0.5, 1.0, 1.5)


@dataclass
class LossReport:
    total: Tensor
    terms: dict = field(default_factory=dict)
    count: int = 0

    @property
    def value(self) -> float:
        return self.total.item()


def _mean(per_example: Tensor, mask) -> tuple[Tensor, int]:
    if mask is None:
        return per_example.mean(), per_example.size
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != per_example.shape:
        raise ValueError(f"mask shape {mask.shape} does not match scores {per_example.shape}")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("mask selects no examples")
    return (per_example * mask.astype(per_example.dtype)).sum() * (1.0 / n), n


def _scalar(t: Tensor) -> float:
    return float(t.data)


def _same_shape(*xs):
    shape = xs[0].shape
    for x in xs[1:]:
        if x.shape != shape:
            raise ValueError(f"score shapes differ: {shape} vs {x.shape}")


def _check_set(s_i: Tensor, s_set: Tensor):
    if s_set.ndim != s_i.ndim + 1 or s_set.shape[:-1] != s_i.shape:
        raise ValueError(f"negative set scores {s_set.shape} must be {s_i.shape} + (n,)")
    if s_set.shape[-1] < 1:
        raise ValueError("negative set is empty")


def _report(original: Tensor, preference: Tensor | None, gamma: float, mask) -> LossReport:
    orig_mean, n = _mean(original, mask)
    if preference is None:
        return LossReport(orig_mean, {"original": _scalar(orig_mean)}, n)
    pref_mean, _ = _mean(preference, mask)
    total = orig_mean + pref_mean * gamma
    return LossReport(total, {"original": _scalar(orig_mean), "preference": _scalar(pref_mean)}, n)


def _gamma(gamma):
    gamma = float(gamma)
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    return gamma


# -- per-example terms ---------------------------------------------------------


def _pairwise(hi: Tensor, lo: Tensor) -> Tensor:
    return -T.log_sigmoid(hi - lo)


def _pointwise(pos: Tensor, neg: Tensor) -> Tensor:
    # -log sigma(pos) - log(1 - sigma(neg)) = softplus(-pos) + softplus(neg)
    return T.softplus(-pos) + T.softplus(neg)


def _setwise(s_pos: Tensor, s_set: Tensor) -> Tensor:
    logits = T.concat([T.reshape(s_pos, s_pos.shape + (1,)), s_set], axis=-1)
    return T.softmax_ce_over_set(logits, 0)


# -- public losses --------------------------------------------------------------


def bpr(s_i, s_j, mask=None) -> LossReport:
    s_i, s_j = T._lift(s_i), T._lift(s_j)
    _same_shape(s_i, s_j)
    return _report(_pairwise(s_i, s_j), None, 0.0, mask)


def bce(s_i, s_j, mask=None) -> LossReport:
    s_i, s_j = T._lift(s_i), T._lift(s_j)
    _same_shape(s_i, s_j)
    return _report(_pointwise(s_i, s_j), None, 0.0, mask)


def ssm(s_i, s_neg, mask=None) -> LossReport:
    """Sampled softmax: ``s_neg`` has shape ``s_i.shape + (n,)``."""
    s_i, s_neg = T._lift(s_i), T._lift(s_neg)
    _check_set(s_i, s_neg)
    return _report(_setwise(s_i, s_neg), None, 0.0, mask)


def trans_bpr(s_i, s_j, s_k, gamma=1.0, mask=None) -> LossReport:
    s_i, s_j, s_k = T._lift(s_i), T._lift(s_j), T._lift(s_k)
    _same_shape(s_i, s_j, s_k)
    gamma = _gamma(gamma)
    return _report(_pairwise(s_i, s_j), _pairwise(s_j, s_k), gamma, mask)


def trans_bce(s_i, s_j, s_k, gamma=1.0, mask=None) -> LossReport:
    s_i, s_j, s_k = T._lift(s_i), T._lift(s_j), T._lift(s_k)
    _same_shape(s_i, s_j, s_k)
    gamma = _gamma(gamma)
    return _report(_pointwise(s_i, s_j), _pointwise(s_j, s_k), gamma, mask)


def trans_ssm(s_i, s_nj, s_nk, gamma=1.0, mask=None) -> LossReport:
    """Softmax of the positive against ``N_j`` plus gamma times the mean, over
    each ``j`` in ``N_j``, of the softmax of ``j`` against ``N_k``.

    ``s_nj`` has shape ``s_i.shape + (n_j,)`` and ``s_nk`` ``s_i.shape + (n_k,)``.
    """
    s_i, s_nj, s_nk = T._lift(s_i), T._lift(s_nj), T._lift(s_nk)
    _check_set(s_i, s_nj)
    _check_set(s_i, s_nk)
    gamma = _gamma(gamma)
    # -log(e^{s_j} / (e^{s_j} + sum_k e^{s_k})) = softplus(logsumexp(S_k) - s_j)
    lse_k = T.logsumexp(s_nk, axis=-1, keepdims=True)
    per_j = T.softplus(lse_k - s_nj)
    preference = T.mean(per_j, axis=-1)
    return _report(_setwise(s_i, s_nj), preference, gamma, mask)


def compute(name: str, scores: dict, gamma: float = 1.0, mask=None) -> LossReport:
    """Dispatch by loss name. ``scores`` holds ``i`` and ``j``/``k`` (quad) or ``nj``/``nk`` (set)."""
    if name == "bpr":
        return bpr(scores["i"], scores["j"], mask)
    if name == "bce":
        return bce(scores["i"], scores["j"], mask)
    if name == "ssm":
        return ssm(scores["i"], scores["nj"], mask)
    if name == "trans_bpr":
        return trans_bpr(scores["i"], scores["j"], scores["k"], gamma, mask)
    if name == "trans_bce":
        return trans_bce(scores["i"], scores["j"], scores["k"], gamma, mask)
    if name == "trans_ssm":
        return trans_ssm(scores["i"], scores["nj"], scores["nk"], gamma, mask)
    raise ValueError(f"unknown loss {name!r}; expected one of {LOSSES}")


def with_grads(fn, *scores, **kwargs):
    """Evaluate ``fn`` on float64 copies of ``scores`` and return (report, [d total / d score]).

    Convenience for analysis and checks on raw arrays.
    """
    leaves = [Tensor(np.array(s, dtype=np.float64), requires_grad=True) for s in scores]
    report = fn(*leaves, **kwargs)
    report.total.backward()
    return report, [leaf.grad for leaf in leaves]
