"""Interaction ingestion, k-core filtering, id maps and leave-one-out splits."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    pass


class RawInteraction(NamedTuple):
    user_key: str
    item_key: str
    timestamp: int


@dataclass
class InteractionLog:
    """Dense-id view of an interaction log. Item id 0 is reserved for padding."""

    user_keys: list[str]
    item_keys: list[str]  # item_keys[k] is the original key of dense item k + 1
    sequences: list[list[int]]  # per user, items ordered by timestamp
    timestamps: list[list[int]]
    item_counts: np.ndarray  # length N + 1, index 0 unused

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def n_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    def events(self):
        for u, (seq, ts) in enumerate(zip(self.sequences, self.timestamps)):
            for item, t in zip(seq, ts):
                yield u, item, t


@dataclass
class SplitDataset:
    user_keys: list[str]
    item_keys: list[str]
    train: list[list[int]]
    valid: list[int]
    test: list[int]
    item_counts: np.ndarray  # train-only counts, length N + 1
    dropped_users: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.train)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    def to_manifest(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "train": self.train,
            "valid": self.valid,
            "test": self.test,
            "item_counts": self.item_counts.tolist(),
            "dropped_users": self.dropped_users,
            "meta": self.meta,
        }

    @classmethod
    def from_manifest(cls, manifest: dict, user_keys=None, item_keys=None) -> "SplitDataset":
        n_items = manifest["n_items"]
        return cls(
            user_keys=user_keys or [str(u) for u in range(manifest["n_users"])],
            item_keys=item_keys or [str(i) for i in range(1, n_items + 1)],
            train=[list(s) for s in manifest["train"]],
            valid=list(manifest["valid"]),
            test=list(manifest["test"]),
            item_counts=np.asarray(manifest["item_counts"], dtype=np.int64),
            dropped_users=manifest.get("dropped_users", 0),
            meta=manifest.get("meta", {}),
        )


def parse_tsv(path) -> list[RawInteraction]:
    """Read ``user<TAB>item<TAB>timestamp`` lines. Blank lines and ``#`` lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            user, item, ts = parts[0], parts[1], parts[2]
            if not user or not item:
                raise CorpusError(f"{path}:{lineno}: empty user or item key")
            try:
                t = int(ts)
            except ValueError:
                try:
                    tf = float(ts)
                except ValueError:
                    raise CorpusError(f"{path}:{lineno}: malformed timestamp {ts!r}") from None
                if not np.isfinite(tf) or tf != int(tf):
                    raise CorpusError(f"{path}:{lineno}: malformed timestamp {ts!r}")
                t = int(tf)
            out.append(RawInteraction(user, item, t))
    return out


def write_tsv(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(f"{e.user_key}\t{e.item_key}\t{e.timestamp}\n")


def k_core_filter(events: list[RawInteraction], k: int) -> list[RawInteraction]:
    """Drop users and items with fewer than ``k`` events until nothing changes."""
    if k < 1:
        raise CorpusError("k must be >= 1")
    current = list(events)
    while True:
        users = Counter(e.user_key for e in current)
        items = Counter(e.item_key for e in current)
        kept = [e for e in current if users[e.user_key] >= k and items[e.item_key] >= k]
        if len(kept) == len(current):
            return kept
        current = kept


def build_log(events: list[RawInteraction]) -> InteractionLog:
    if not events:
        raise CorpusError("cannot build a log from zero events")
    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    per_user: list[list[tuple[int, int, int]]] = []
    for order, e in enumerate(events):
        u = user_ids.get(e.user_key)
        if u is None:
            u = user_ids[e.user_key] = len(user_ids)
            per_user.append([])
        i = item_ids.get(e.item_key)
        if i is None:
            i = item_ids[e.item_key] = len(item_ids) + 1
        per_user[u].append((e.timestamp, order, i))
    sequences, timestamps = [], []
    counts = np.zeros(len(item_ids) + 1, dtype=np.int64)
    for rows in per_user:
        rows.sort()  # (timestamp, input order) gives a stable tie-break
        sequences.append([r[2] for r in rows])
        timestamps.append([r[0] for r in rows])
        for r in rows:
            counts[r[2]] += 1
    return InteractionLog(
        user_keys=list(user_ids),
        item_keys=list(item_ids),
        sequences=sequences,
        timestamps=timestamps,
        item_counts=counts,
    )


def leave_one_out(log: InteractionLog) -> SplitDataset:
    """Last event is the test item, second-to-last validation, the rest training.

    Users with fewer than three events are dropped; the count is logged and
    stored in ``dropped_users``.
    """
    user_keys, train, valid, test = [], [], [], []
    dropped = 0
    for key, seq in zip(log.user_keys, log.sequences):
        if len(seq) < 3:
            dropped += 1
            continue
        user_keys.append(key)
        train.append(list(seq[:-2]))
        valid.append(seq[-2])
        test.append(seq[-1])
    if dropped:
        logger.warning("leave_one_out: dropped %d users with fewer than 3 events", dropped)
    counts = np.zeros(log.n_items + 1, dtype=np.int64)
    for seq in train:
        np.add.at(counts, np.asarray(seq, dtype=np.int64), 1)
    return SplitDataset(
        user_keys=user_keys,
        item_keys=list(log.item_keys),
        train=train,
        valid=valid,
        test=test,
        item_counts=counts,
        dropped_users=dropped,
    )


def table_stats(n_events: int, n_users: int, n_items: int) -> dict:
    density = n_events / (n_users * n_items) if n_users and n_items else 0.0
    return {"interactions": n_events, "users": n_users, "items": n_items, "density": density}


def write_split(split: SplitDataset, out_dir) -> dict[str, Path]:
    """Write ``split.json``, ``item_map.tsv``, ``user_map.tsv`` and ``popularity.tsv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "split": out / "split.json",
        "item_map": out / "item_map.tsv",
        "user_map": out / "user_map.tsv",
        "popularity": out / "popularity.tsv",
    }
    paths["split"].write_text(json.dumps(split.to_manifest()), encoding="utf-8")
    with open(paths["item_map"], "w", encoding="utf-8") as fh:
        for i, key in enumerate(split.item_keys, start=1):
            fh.write(f"{i}\t{key}\n")
    with open(paths["user_map"], "w", encoding="utf-8") as fh:
        for u, key in enumerate(split.user_keys):
            fh.write(f"{u}\t{key}\n")
    with open(paths["popularity"], "w", encoding="utf-8") as fh:
        for i in range(1, split.n_items + 1):
            fh.write(f"{i}\t{int(split.item_counts[i])}\n")
    return paths


def _read_map(path) -> list[str]:
    keys = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                keys.append(line.rstrip("\n").split("\t", 1)[1])
    return keys


def load_split(path) -> SplitDataset:
    """Load a split from ``split.json`` or the directory that holds it."""
    path = Path(path)
    if path.is_dir():
        path = path / "split.json"
    manifest = json.loads(path.read_text(encoding="utf-8"))
    user_map = path.parent / "user_map.tsv"
    item_map = path.parent / "item_map.tsv"
    return SplitDataset.from_manifest(
        manifest,
        user_keys=_read_map(user_map) if user_map.exists() else None,
        item_keys=_read_map(item_map) if item_map.exists() else None,
    )
