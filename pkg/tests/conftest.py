import numpy as np
import pytest

from transrec.corpus import SplitDataset

ACCEPTANCE_LINES: list[str] = []


def make_split(train, valid=None, test=None, n_items=None):
    """SplitDataset straight from id lists (valid/test default to item 1)."""
    n_items = n_items or max(max(s) for s in train)
    counts = np.zeros(n_items + 1, dtype=np.int64)
    for s in train:
        np.add.at(counts, np.asarray(s), 1)
    n = len(train)
    return SplitDataset(
        user_keys=[f"u{u}" for u in range(n)],
        item_keys=[f"i{i}" for i in range(1, n_items + 1)],
        train=[list(s) for s in train],
        valid=list(valid or [1] * n),
        test=list(test or [1] * n),
        item_counts=counts,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
