"""Full-pool ranking metrics and the popularity / loss-term analyses."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .kernels import rank_kernel
from .tensor import no_grad


@dataclass
class MetricReport:
    hr: float
    ndcg: float
    k: int
    n_users: int

    def to_dict(self) -> dict:
        return {"hr": self.hr, "ndcg": self.ndcg, "k": self.k, "n_users": self.n_users}


@dataclass
class BucketReport:
    bucket_items: list  # item ids per bucket, most popular bucket first
    means: np.ndarray
    stderrs: np.ndarray
    n_users: int

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.bucket_items]

    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.means) <= 0))

    def non_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.means) >= 0))

    def flat(self, z: float = 3.0) -> bool:
        """True when every pair of bucket means differs by less than ``z`` standard errors."""
        for a in range(self.means.size):
            for b in range(a + 1, self.means.size):
                se = math.hypot(self.stderrs[a], self.stderrs[b])
                if abs(self.means[a] - self.means[b]) >= z * se:
                    return False
        return True

    def to_csv(self, path, digest: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if digest:
                fh.write(f"# config_digest={digest}\n")
            w = csv.writer(fh)
            w.writerow(["bucket_index", "item_count", "mean_score"])
            for b, (items, m) in enumerate(zip(self.bucket_items, self.means)):
                w.writerow([b, len(items), repr(float(m))])


def metrics(ranks, k: int = 10) -> MetricReport:
    """HR@k and NDCG@k for one relevant item per user."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("no ranks to evaluate")
    if ranks.min() < 1:
        raise ValueError("ranks are 1-indexed")
    hit = ranks <= k
    gain = np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0)
    return MetricReport(hr=float(hit.mean()), ndcg=float(gain.mean()), k=k, n_users=int(ranks.size))


def last_states(params, config, histories) -> np.ndarray:
    """Encoded state at the most recent position of each history, shape (B, d)."""
    mat = enc.pad_histories(histories, config.max_len)
    with no_grad():
        h = enc.encode(params, mat, config, train_mode=False)
    return h.data[:, -1, :]


def all_scores(params, config, histories) -> np.ndarray:
    """Scores of every id 0..N for each history; column 0 is padding."""
    states = last_states(params, config, histories)
    return states @ params["item_emb"].data.T


def ranks_for(params, config, histories, targets, exclude=None, chunk_size: int = 256) -> np.ndarray:
    """1-indexed rank of each target over the whole catalog, ties by smaller id first.

    ``exclude`` optionally lists, per user, items removed from the pool
    (the target itself is never removed).
    """
    targets = np.asarray(targets, dtype=np.int64)
    out = np.empty(targets.size, dtype=np.int64)
    for start in range(0, targets.size, chunk_size):
        stop = min(start + chunk_size, targets.size)
        s = all_scores(params, config, histories[start:stop]).astype(np.float64)
        if exclude is not None:
            for r in range(stop - start):
                ex = np.asarray(exclude[start + r], dtype=np.int64)
                ex = ex[ex != targets[start + r]]
                s[r, ex] = -np.inf
        out[start:stop] = rank_kernel(s, targets[start:stop])
    return out


def rank_of_target(params, config, history, target: int, exclude=None) -> int:
    if not 1 <= target <= config.n_items:
        raise ValueError(f"target {target} outside 1..{config.n_items}")
    return int(ranks_for(params, config, [history], [target], None if exclude is None else [exclude])[0])


def eval_inputs(split, which: str):
    """(histories, targets, seen) for the validation or test protocol."""
    if which == "valid":
        histories = [list(s) for s in split.train]
        targets = list(split.valid)
    elif which == "test":
        histories = [list(s) + [v] for s, v in zip(split.train, split.valid)]
        targets = list(split.test)
    else:
        raise ValueError("which must be 'valid' or 'test'")
    return histories, np.asarray(targets, dtype=np.int64)


def evaluate(params, config, split, which: str = "valid", k: int = 10, exclude_history: bool = False,
             chunk_size: int = 256) -> MetricReport:
    histories, targets = eval_inputs(split, which)
    exclude = histories if exclude_history else None
    return metrics(ranks_for(params, config, histories, targets, exclude, chunk_size), k)


def popularity_buckets(item_counts, n_buckets: int = 5) -> list[np.ndarray]:
    """Items 1..N sorted by train count (descending, ties by id) cut into equal buckets."""
    counts = np.asarray(item_counts)
    ids = np.arange(1, counts.size)
    if ids.size < n_buckets:
        raise ValueError(f"need at least {n_buckets} items for {n_buckets} buckets")
    ranked = ids[np.lexsort((ids, -counts[1:]))]
    return [b.copy() for b in np.array_split(ranked, n_buckets)]


def bucket_scores(params, config, split, n_buckets: int = 5, chunk_size: int = 256) -> BucketReport:
    """Mean score per popularity bucket over all test users and bucket items.

    Each item's score is first averaged over users; a bucket's standard error
    is the spread of those item means, since item embeddings are the random
    quantity that differs between buckets.
    """
    buckets = popularity_buckets(split.item_counts, n_buckets)
    histories, _ = eval_inputs(split, "test")
    totals = np.zeros(config.vocab)
    for start in range(0, len(histories), chunk_size):
        totals += all_scores(params, config, histories[start:start + chunk_size]).sum(axis=0)
    item_means = totals / len(histories)
    means = np.array([item_means[b].mean() for b in buckets])
    stderrs = np.array([item_means[b].std(ddof=1) / math.sqrt(b.size) if b.size > 1 else 0.0 for b in buckets])
    return BucketReport(buckets, means, stderrs, len(histories))


# ---------------------------------------------------------------------------
# Loss-term trajectories


@dataclass
class TrajectorySummary:
    scheme: str
    final_preference: float
    slope: float
    n_steps: int


def compare_trajectories(logs: dict, final_fraction: float = 0.1) -> list[TrajectorySummary]:
    """Per scheme: preference term averaged over the last ``final_fraction`` of
    steps and the least-squares slope of the preference term against step.
    """
    if not logs:
        raise ValueError("no trajectories given")
    ranges = {name: (tuple(log.steps[:1]), tuple(log.steps[-1:]), len(log)) for name, log in logs.items()}
    if len(set(ranges.values())) != 1:
        raise ValueError(f"trajectories cover different step ranges: {ranges}")
    out = []
    for name, log in logs.items():
        steps = np.asarray(log.steps, dtype=np.float64)
        pref = np.asarray(log.preference, dtype=np.float64)
        if steps.size == 0 or np.isnan(pref).all():
            raise ValueError(f"trajectory {name!r} has no preference term")
        tail = max(1, int(math.ceil(final_fraction * steps.size)))
        final = float(np.nanmean(pref[-tail:]))
        ok = ~np.isnan(pref)
        slope = float(np.polyfit(steps[ok], pref[ok], 1)[0]) if ok.sum() > 1 else 0.0
        out.append(TrajectorySummary(name, final, slope, int(steps.size)))
    return out


def write_trajectory_summary(rows, path, digest: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if digest:
            fh.write(f"# config_digest={digest}\n")
        w = csv.writer(fh)
        w.writerow(["scheme", "final_preference", "slope", "n_steps"])
        for r in rows:
            w.writerow([r.scheme, repr(r.final_preference), repr(r.slope), r.n_steps])


def write_metrics(report: MetricReport, path, digest: str | None = None, extra: dict | None = None) -> None:
    payload = {**report.to_dict(), "config_digest": digest, **(extra or {})}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "MetricReport", "BucketReport", "TrajectorySummary", "metrics", "rank_of_target", "ranks_for",
    "evaluate", "bucket_scores", "popularity_buckets", "compare_trajectories",
    "write_trajectory_summary", "write_metrics",
]
