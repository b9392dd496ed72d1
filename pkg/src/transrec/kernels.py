"""Hot inner loops: alias draws with exclusion, quad/set negative batches, ranking.

Sampling kernels consume a pre-drawn buffer of uniforms instead of owning an
RNG. This keeps the numba and interpreted paths bit-identical and lets the
caller regrow the buffer deterministically when a kernel runs out of draws.

Kernel status codes (returned instead of a cursor):
    -1  uniform buffer exhausted, caller must retry with a larger buffer
    -2  exclusion saturates a distribution's support
    -3  strict ordering could not be satisfied
"""

import numpy as np

from ._accel import NUMBA_ENABLED, jit, jit_parallel, prange

BUFFER_EXHAUSTED = -1
SUPPORT_EXHAUSTED = -2
ORDER_UNSATISFIED = -3


@jit
def alias_draw(prob, alias, items, u):
    n = prob.shape[0]
    x = u * n
    idx = int(x)
    if idx >= n:
        idx = n - 1
    if x - idx < prob[idx]:
        return items[idx]
    return items[alias[idx]]


@jit
def exact_draw(weights, items, mark, stamp, avoid, u):
    # inverse-CDF draw over the non-excluded part of the support; -1 if empty
    total = 0.0
    for t in range(items.shape[0]):
        it = items[t]
        if mark[it] != stamp and it != avoid:
            total += weights[t]
    if total <= 0.0:
        return -1
    target = u * total
    acc = 0.0
    last = -1
    for t in range(items.shape[0]):
        it = items[t]
        if mark[it] != stamp and it != avoid and weights[t] > 0.0:
            acc += weights[t]
            last = it
            if target < acc:
                return it
    return last


@jit
def _draw_excluding(prob, alias, items, weights, mark, stamp, avoid, max_retries, u, c):
    """Rejection draw; falls back to an exact draw after ``max_retries`` misses.

    Returns (item, cursor); item < 0 signals a status code.
    """
    nu = u.shape[0]
    for _ in range(max_retries):
        if c >= nu:
            return BUFFER_EXHAUSTED, c
        cand = alias_draw(prob, alias, items, u[c])
        c += 1
        if mark[cand] != stamp and cand != avoid:
            return cand, c
    if c >= nu:
        return BUFFER_EXHAUSTED, c
    cand = exact_draw(weights, items, mark, stamp, avoid, u[c])
    c += 1
    if cand < 0:
        return SUPPORT_EXHAUSTED, c
    return cand, c


@jit
def quad_kernel(excl_ptr, excl_idx, n_items,
                jp, ja, ji, jw, kp, ka, ki, kw,
                f, order, k_first, max_retries, max_rounds, u, out_j, out_k):
    """Fill ``out_j``/``out_k`` row by row. ``order`` is +1 (f(j) > f(k)), -1, or 0 (weak).

    The side drawn first keeps its distribution's exact marginal, so callers
    put the popularity-weighted side first (``k_first`` for niche mode).
    """
    rows = excl_ptr.shape[0] - 1
    mark = np.zeros(n_items + 1, dtype=np.int64)
    c = 0
    for r in range(rows):
        stamp = r + 1
        for p in range(excl_ptr[r], excl_ptr[r + 1]):
            mark[excl_idx[p]] = stamp
        done = False
        for _ in range(max_rounds):
            j = -1
            k = -1
            for _ in range(max_retries):
                if k_first:
                    k, c = _draw_excluding(kp, ka, ki, kw, mark, stamp, -1, max_retries, u, c)
                    if k < 0:
                        return k
                    j, c = _draw_excluding(jp, ja, ji, jw, mark, stamp, k, max_retries, u, c)
                    if j < 0:
                        return j
                else:
                    j, c = _draw_excluding(jp, ja, ji, jw, mark, stamp, -1, max_retries, u, c)
                    if j < 0:
                        return j
                    k, c = _draw_excluding(kp, ka, ki, kw, mark, stamp, j, max_retries, u, c)
                    if k < 0:
                        return k
                if order == 0 or (order > 0 and f[j] > f[k]) or (order < 0 and f[j] < f[k]):
                    done = True
                    break
            if done:
                break
            if (order > 0 and f[k] > f[j]) or (order < 0 and f[k] < f[j]):
                j, k = k, j
                done = True
                break
        if not done:
            return ORDER_UNSATISFIED
        out_j[r] = j
        out_k[r] = k
    return c


@jit
def set_kernel(excl_ptr, excl_idx, n_items,
               jp, ja, ji, jw, kp, ka, ki, kw,
               k_first, max_retries, u, out_j, out_k):
    """Per row: ``out_j.shape[1]`` and ``out_k.shape[1]`` distinct, non-excluded items,
    the ``k`` side first when ``k_first``."""
    rows = excl_ptr.shape[0] - 1
    n_j = out_j.shape[1]
    n_k = out_k.shape[1]
    mark = np.zeros(n_items + 1, dtype=np.int64)
    c = 0
    for r in range(rows):
        stamp = r + 1
        for p in range(excl_ptr[r], excl_ptr[r + 1]):
            mark[excl_idx[p]] = stamp
        for side in range(2):
            use_k = (side == 0) == bool(k_first)
            if use_k:
                for t in range(n_k):
                    it, c = _draw_excluding(kp, ka, ki, kw, mark, stamp, -1, max_retries, u, c)
                    if it < 0:
                        return it
                    mark[it] = stamp
                    out_k[r, t] = it
            else:
                for t in range(n_j):
                    it, c = _draw_excluding(jp, ja, ji, jw, mark, stamp, -1, max_retries, u, c)
                    if it < 0:
                        return it
                    mark[it] = stamp
                    out_j[r, t] = it
    return c


@jit_parallel
def _rank_kernel_jit(scores, targets):
    b, width = scores.shape
    ranks = np.empty(b, dtype=np.int64)
    for r in prange(b):
        t = targets[r]
        st = scores[r, t]
        cnt = 0
        for i in range(1, width):
            s = scores[r, i]
            if s > st or (s == st and i < t):
                cnt += 1
        ranks[r] = cnt + 1
    return ranks


def _rank_kernel_numpy(scores, targets):
    rows = np.arange(scores.shape[0])
    st = scores[rows, targets][:, None]
    body = scores[:, 1:]
    ids = np.arange(1, scores.shape[1])[None, :]
    better = (body > st) | ((body == st) & (ids < targets[:, None]))
    return better.sum(axis=1).astype(np.int64) + 1


def rank_kernel(scores, targets):
    """1-indexed rank of ``targets[r]`` among columns 1.. of ``scores[r]`` (column 0 is padding).

    Ties are broken by item id: an equal-scored item with a smaller id ranks ahead.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    if NUMBA_ENABLED:
        return _rank_kernel_jit(scores, targets)
    return _rank_kernel_numpy(scores, targets)
