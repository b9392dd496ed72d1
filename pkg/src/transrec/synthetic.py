"""Synthetic interaction logs with a planted popularity hierarchy.

Item ``i{r}`` has popularity rank ``r`` (1 = most popular). Each user's
sequence mixes two processes: with probability ``follow`` the next item is
one of a few fixed successors of the previous one (sequential signal),
otherwise it is drawn from a Zipf law over popularity ranks.
"""

from __future__ import annotations

import numpy as np

from .corpus import RawInteraction

# Defaults used by the desk-scale acceptance runs: a head-heavy catalog where
# uniform negatives are mostly easy tail items.
DESK_CORPUS = dict(n_users=500, n_items=200, min_len=5, max_len=15, zipf=1.5,
                   follow=0.6, window=3, successors=2)


def planted_corpus(n_users: int = 500, n_items: int = 200, min_len: int = 5, max_len: int = 15,
                   zipf: float = 1.5, follow: float = 0.6, window: int = 3, successors: int = 2,
                   seed: int = 0) -> list[RawInteraction]:
    """Events for ``n_users`` users over ``n_items`` items, in timestamp order.

    Each item gets ``successors`` candidate next items among the ``window``
    items nearest in popularity rank. User ``u`` opens with item
    ``u mod n_items + 1`` so every item occurs at least once when
    ``n_users >= n_items``.
    """
    if n_items < 3 or n_users < 1 or not 1 <= min_len <= max_len:
        raise ValueError("need n_items >= 3, n_users >= 1 and 1 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, n_items + 1)
    pop = ranks ** -float(zipf)
    pop /= pop.sum()
    offsets = rng.integers(1, window + 1, size=(n_items, successors)) * rng.choice([-1, 1], size=(n_items, successors))
    succ = np.clip(ranks[:, None] + offsets, 1, n_items)
    succ = np.where(succ == ranks[:, None], np.where(ranks[:, None] < n_items, ranks[:, None] + 1, ranks[:, None] - 1), succ)
    events = []
    t = 0
    for u in range(n_users):
        length = int(rng.integers(min_len, max_len + 1))
        item = u % n_items + 1
        for _ in range(length):
            events.append(RawInteraction(f"u{u}", f"i{item}", t))
            t += 1
            if rng.random() < follow:
                item = int(succ[item - 1, rng.integers(successors)])
            else:
                item = int(rng.choice(ranks, p=pop))
    return events
