"""Negative sampling: popularity/uniform distributions and transitive batches.

A quad row carries a positive ``i`` and two negatives where ``j`` is meant to
be preferred over ``k``. Under *weak* transitivity the two negatives simply
come from different distributions; *strict* rejects pairs that violate the
popularity order; *disjoint* draws them from non-overlapping popularity
halves of the catalog.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

MODES = ("pop", "niche")
TRANSITIVITIES = ("weak", "strict", "disjoint")


class SamplerError(RuntimeError):
    pass


class SamplerExhausted(SamplerError):
    """Exclusions leave no admissible item in a distribution's support."""


class StrictOrderError(SamplerError):
    """No pair in the two supports satisfies the required popularity order."""


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "pop"
    transitivity: str = "weak"
    alpha: float = 1.0
    n_j: int = 50
    n_k: int = 50
    exclude_history: bool = False
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"sampler.mode must be one of {MODES}, got {self.mode!r}")
        if self.transitivity not in TRANSITIVITIES:
            raise ValueError(f"sampler.transitivity must be one of {TRANSITIVITIES}, got {self.transitivity!r}")
        if self.alpha < 0:
            raise ValueError("sampler.alpha must be >= 0")
        if self.n_j < 1 or self.n_k < 1:
            raise ValueError("sampler.n_j and sampler.n_k must be >= 1")
        if self.max_retries < 1:
            raise ValueError("sampler.max_retries must be >= 1")


class AliasTable:
    """Vose alias table over an explicit item list."""

    def __init__(self, items, weights):
        items = np.asarray(items, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if items.shape != weights.shape or items.size == 0:
            raise SamplerError("alias table needs matching, non-empty items and weights")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise SamplerError("weights must be finite and non-negative")
        total = weights.sum()
        if total <= 0:
            raise SamplerError("weights sum to zero")
        n = items.size
        self.items = items
        self.weights = weights / total
        scaled = self.weights * n
        prob = np.ones(n, dtype=np.float64)
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias

    def __len__(self):
        return self.items.size

    @property
    def arrays(self):
        return self.prob, self.alias, self.items, self.weights

    def draw(self, u: float) -> int:
        return int(kernels.alias_draw(self.prob, self.alias, self.items, u))

    def item_probabilities(self, n_items: int) -> np.ndarray:
        """Probabilities indexed by item id (length ``n_items + 1``)."""
        p = np.zeros(n_items + 1)
        np.add.at(p, self.items, self.weights)
        return p


@dataclass
class PopularityDist:
    """Popularity-weighted distribution. ``weights`` and ``f`` are indexed by item id; index 0 is padding."""

    weights: np.ndarray
    f: np.ndarray
    alpha: float
    table: AliasTable

    @property
    def n_items(self) -> int:
        return self.weights.size - 1


def uniform_table(items) -> AliasTable:
    items = np.asarray(items, dtype=np.int64)
    return AliasTable(items, np.ones(items.size))


def build_popularity(counts, alpha: float = 1.0) -> PopularityDist:
    """Distribution with weight(i) proportional to count(i)**alpha.

    ``counts`` lists train counts for items ``1..N`` in order. Items with a
    zero count get zero weight for every alpha.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise SamplerError("counts must be a 1-d array of non-negative values")
    if alpha < 0:
        raise SamplerError("alpha must be >= 0")
    if not np.any(counts > 0):
        raise SamplerError("popularity needs at least one positive count")
    raw = np.where(counts > 0, np.power(counts, alpha, where=counts > 0, out=np.zeros_like(counts)), 0.0)
    weights = np.concatenate([[0.0], raw / raw.sum()])
    support = np.flatnonzero(weights > 0)
    return PopularityDist(
        weights=weights,
        f=np.concatenate([[0.0], counts]),
        alpha=float(alpha),
        table=AliasTable(support, weights[support]),
    )


def popularity_from_split(split, alpha: float = 1.0) -> PopularityDist:
    return build_popularity(np.asarray(split.item_counts)[1:], alpha)


def sample(dist, rng: np.random.Generator, exclude=(), max_retries: int = 100) -> int:
    """Draw one item from ``dist`` (a PopularityDist or AliasTable) avoiding ``exclude``."""
    table = dist.table if isinstance(dist, PopularityDist) else dist
    exclude = set(int(x) for x in exclude)
    for _ in range(max_retries):
        item = table.draw(rng.random())
        if item not in exclude:
            return item
    allowed = np.array([it not in exclude for it in table.items.tolist()])
    w = table.weights * allowed
    if w.sum() <= 0:
        raise SamplerExhausted(f"exclusion covers the whole support after {max_retries} retries")
    return int(table.items[rng.choice(table.items.size, p=w / w.sum())])


def disjoint_halves(counts) -> tuple[np.ndarray, np.ndarray]:
    """Split items ``1..N`` into (top, bottom) halves by count, ties by ascending id.

    ``counts`` is indexed by item id (index 0 ignored). The top half holds
    ``N // 2`` items.
    """
    counts = np.asarray(counts)
    ids = np.arange(1, counts.size)
    if ids.size < 2:
        raise SamplerError("disjoint split needs at least two items")
    order = np.lexsort((ids, -counts[1:]))
    ranked = ids[order]
    half = ids.size // 2
    return ranked[:half], ranked[half:]


def _csr(groups) -> tuple[np.ndarray, np.ndarray]:
    """Exclusion sets as (ptr, idx). A 1-d int array means one item per row."""
    if isinstance(groups, np.ndarray) and groups.dtype.kind in "iu" and groups.ndim in (1, 2):
        rows = groups.shape[0]
        width = 1 if groups.ndim == 1 else groups.shape[1]
        return np.arange(0, rows * width + 1, width, dtype=np.int64), groups.astype(np.int64).ravel()
    lens = np.fromiter((len(g) for g in groups), dtype=np.int64, count=len(groups))
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    np.cumsum(lens, out=ptr[1:])
    idx = np.concatenate([np.asarray(g, dtype=np.int64) for g in groups]) if ptr[-1] else np.zeros(0, np.int64)
    return ptr, idx


def _run(kernel, rng, estimate, args):
    """Run a sampling kernel on a deterministic uniform buffer, growing it on demand."""
    seed = int(rng.integers(0, 2**63 - 1))
    size = max(64, int(estimate))
    while True:
        u = np.random.default_rng(seed).random(size)
        status = kernel(*_splice(args, u))
        if status == kernels.BUFFER_EXHAUSTED:
            size *= 4
            continue
        if status == kernels.SUPPORT_EXHAUSTED:
            raise SamplerExhausted("exclusions saturate a sampling distribution's support")
        if status == kernels.ORDER_UNSATISFIED:
            raise StrictOrderError("could not draw a pair satisfying the popularity order")
        return


def _splice(args, u):
    # ``None`` marks where the uniform buffer goes
    return tuple(u if a is None else a for a in args)


class NegativeSampler:
    """Split-bound sampler producing negatives for arbitrary exclusion sets.

    Each call consumes one integer from ``rng`` to seed its uniform buffer, so
    identical seeds and inputs give identical negatives on both the numba and
    the interpreted kernel path.
    """

    def __init__(self, dist_pop: PopularityDist, config: SamplerConfig = SamplerConfig()):
        self.config = config
        self.pop = dist_pop
        self.f = dist_pop.f
        self.n_items = dist_pop.n_items
        self.unif = uniform_table(np.arange(1, self.n_items + 1))
        self._halves = None

    @classmethod
    def from_split(cls, split, config: SamplerConfig = SamplerConfig()):
        return cls(popularity_from_split(split, config.alpha), config)

    # -- distribution pairs -------------------------------------------------

    def _pair(self, mode: str, transitivity: str):
        if transitivity == "disjoint":
            if self._halves is None:
                top, bottom = disjoint_halves(self.f)
                top_w = self.pop.weights[top]
                if top_w.sum() <= 0:
                    raise StrictOrderError("top popularity half has zero mass")
                self._halves = (AliasTable(top, top_w), uniform_table(bottom))
            hot, cold = self._halves
            return (hot, cold) if mode == "pop" else (cold, hot)
        return (self.pop.table, self.unif) if mode == "pop" else (self.unif, self.pop.table)

    def _check_order(self, jt: AliasTable, kt: AliasTable, order: int):
        fj = self.f[jt.items[jt.weights > 0]]
        fk = self.f[kt.items[kt.weights > 0]]
        ok = fj.max() > fk.min() if order > 0 else fj.min() < fk.max()
        if not ok:
            raise StrictOrderError("no pair of items satisfies the required popularity order")

    # -- batch draws ----------------------------------------------------------

    def quad(self, exclude, rng, mode=None, transitivity=None):
        """Return (j, k) arrays, one pair per exclusion set."""
        mode = mode or self.config.mode
        transitivity = transitivity or self.config.transitivity
        jt, kt = self._pair(mode, transitivity)
        order = 0
        if transitivity != "weak":
            order = 1 if mode == "pop" else -1
            self._check_order(jt, kt, order)
        ptr, idx = _csr(exclude)
        rows = ptr.size - 1
        out_j = np.zeros(rows, dtype=np.int64)
        out_k = np.zeros(rows, dtype=np.int64)
        r = self.config.max_retries
        args = (ptr, idx, self.n_items, *jt.arrays, *kt.arrays, self.f, order, mode == "niche", r, r, None,
                out_j, out_k)
        _run(kernels.quad_kernel, rng, rows * (4 if order == 0 else 16) + 64, args)
        return out_j, out_k

    def sets(self, exclude, rng, n_j=None, n_k=None, mode=None):
        """Return (N_j, N_k) matrices of shape (rows, n_j) and (rows, n_k)."""
        mode = mode or self.config.mode
        n_j = self.config.n_j if n_j is None else n_j
        n_k = self.config.n_k if n_k is None else n_k
        if n_j + n_k + 1 > self.n_items:
            raise SamplerError(f"catalog of {self.n_items} items is too small for {n_j}+{n_k} negatives")
        jt, kt = self._pair(mode, "weak")
        return self._sets(exclude, rng, jt, kt, n_j, n_k, mode == "niche")

    def uniform(self, exclude, rng, n: int = 1):
        """``n`` distinct uniform negatives per exclusion set, shape (rows, n)."""
        out, _ = self._sets(exclude, rng, self.unif, self.unif, n, 0)
        return out

    def _sets(self, exclude, rng, jt, kt, n_j, n_k, k_first=False):
        ptr, idx = _csr(exclude)
        rows = ptr.size - 1
        out_j = np.zeros((rows, n_j), dtype=np.int64)
        out_k = np.zeros((rows, n_k), dtype=np.int64)
        r = self.config.max_retries
        args = (ptr, idx, self.n_items, *jt.arrays, *kt.arrays, k_first, r, None, out_j, out_k)
        _run(kernels.set_kernel, rng, rows * (n_j + n_k) * 2 + 64, args)
        return out_j, out_k


# ---------------------------------------------------------------------------
# Batch builders over a split


@dataclass
class QuadBatch:
    users: np.ndarray
    prefixes: list
    positives: np.ndarray
    j: np.ndarray
    k: np.ndarray

    def __len__(self):
        return self.positives.size


@dataclass
class SetBatch:
    users: np.ndarray
    prefixes: list
    positives: np.ndarray
    neg_j: np.ndarray
    neg_k: np.ndarray

    def __len__(self):
        return self.positives.size


def _draw_targets(split, batch_size, rng):
    if batch_size < 1:
        raise SamplerError("batch_size must be >= 1")
    owners = [(u, t) for u, seq in enumerate(split.train) for t in range(1, len(seq))]
    if not owners:
        raise SamplerError("split has no training targets (every train sequence has length 1)")
    pick = rng.integers(0, len(owners), size=batch_size)
    users = np.empty(batch_size, dtype=np.int64)
    prefixes, positives = [], np.empty(batch_size, dtype=np.int64)
    for r, p in enumerate(pick):
        u, t = owners[p]
        seq = split.train[u]
        users[r] = u
        prefixes.append(np.asarray(seq[:t], dtype=np.int64))
        positives[r] = seq[t]
    return users, prefixes, positives


def _exclusions(prefixes, positives, exclude_history):
    if exclude_history:
        return [np.union1d(p, [i]) for p, i in zip(prefixes, positives)]
    return [np.array([i]) for i in positives]


def _quad(split, dist_pop, mode, batch_size, rng, transitivity, exclude_history, max_retries):
    config = SamplerConfig(mode=mode, transitivity=transitivity, alpha=dist_pop.alpha,
                           exclude_history=exclude_history, max_retries=max_retries)
    sampler = NegativeSampler(dist_pop, config)
    users, prefixes, positives = _draw_targets(split, batch_size, rng)
    j, k = sampler.quad(_exclusions(prefixes, positives, exclude_history), rng)
    return QuadBatch(users, prefixes, positives, j, k)


def quad_weak(split, dist_pop, mode="pop", batch_size=256, rng=None, exclude_history=False, max_retries=100):
    """Rows with ``j ~ p_pop, k ~ p_unif`` (pop) or the mirror (niche); pairs may violate the order."""
    rng = rng if rng is not None else np.random.default_rng()
    return _quad(split, dist_pop, mode, batch_size, rng, "weak", exclude_history, max_retries)


def quad_strict(split, dist_pop, mode="pop", batch_size=256, rng=None, exclude_history=False, max_retries=100):
    """Like :func:`quad_weak` but every row satisfies ``f(j) > f(k)`` (pop) or ``f(j) < f(k)`` (niche)."""
    rng = rng if rng is not None else np.random.default_rng()
    return _quad(split, dist_pop, mode, batch_size, rng, "strict", exclude_history, max_retries)


def quad_disjoint(split, dist_pop, mode="pop", batch_size=256, rng=None, exclude_history=False, max_retries=100):
    rng = rng if rng is not None else np.random.default_rng()
    return _quad(split, dist_pop, mode, batch_size, rng, "disjoint", exclude_history, max_retries)


def set_weak(split, dist_pop, mode="pop", batch_size=256, n_j=50, n_k=50, rng=None,
             exclude_history=False, max_retries=100):
    rng = rng if rng is not None else np.random.default_rng()
    config = SamplerConfig(mode=mode, alpha=dist_pop.alpha, n_j=n_j, n_k=n_k,
                           exclude_history=exclude_history, max_retries=max_retries)
    sampler = NegativeSampler(dist_pop, config)
    users, prefixes, positives = _draw_targets(split, batch_size, rng)
    nj, nk = sampler.sets(_exclusions(prefixes, positives, exclude_history), rng)
    return SetBatch(users, prefixes, positives, nj, nk)


def worker_streams(seed: int, n_workers: int) -> list[np.random.Generator]:
    """Independent generators, one per worker index."""
    children = np.random.SeedSequence([seed, 0x5A]).spawn(n_workers)
    return [np.random.default_rng(c) for c in children]
