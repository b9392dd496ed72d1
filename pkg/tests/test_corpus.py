import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transrec import corpus
from transrec.corpus import CorpusError, RawInteraction


def _write(tmp_path, text, name="log.tsv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_single_line(tmp_path):
    assert corpus.parse_tsv(_write(tmp_path, "u1\ti9\t100\n")) == [RawInteraction("u1", "i9", 100)]


def test_parse_empty_file(tmp_path):
    assert corpus.parse_tsv(_write(tmp_path, "")) == []


def test_parse_skips_header_and_blank_lines(tmp_path):
    events = corpus.parse_tsv(_write(tmp_path, "# user\titem\tts\n\nu1\ti1\t5\n"))
    assert events == [RawInteraction("u1", "i1", 5)]


def test_parse_bad_timestamp_names_file_and_line(tmp_path):
    path = _write(tmp_path, "u1\ti9\tabc\n")
    with pytest.raises(CorpusError, match=r"log\.tsv:1"):
        corpus.parse_tsv(path)


def test_parse_too_few_fields(tmp_path):
    with pytest.raises(CorpusError, match=":2"):
        corpus.parse_tsv(_write(tmp_path, "u1\ti1\t1\nu2\ti2\n"))


def test_k1_is_noop():
    events = [RawInteraction("a", "x", 1), RawInteraction("b", "y", 2)]
    assert corpus.k_core_filter(events, 1) == events


def test_k2_single_user_three_singletons_is_empty():
    events = [RawInteraction("u", f"i{i}", i) for i in range(3)]
    assert corpus.k_core_filter(events, 2) == []


def test_k2_two_users_sharing_five_items_keeps_all():
    events = [RawInteraction(u, f"i{i}", i) for u in ("a", "b") for i in range(5)]
    assert len(corpus.k_core_filter(events, 2)) == 10


def test_k_core_cascades():
    # dropping item z leaves user b with one event, which then drops item y
    events = [RawInteraction("a", "x", 1), RawInteraction("a", "y", 2), RawInteraction("c", "x", 3),
              RawInteraction("c", "y", 4), RawInteraction("b", "y", 5), RawInteraction("b", "z", 6)]
    kept = corpus.k_core_filter(events, 2)
    assert {e.user_key for e in kept} == {"a", "c"}


events_strategy = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 8), st.integers(0, 50)).map(
        lambda t: RawInteraction(f"u{t[0]}", f"i{t[1]}", t[2])),
    max_size=80,
)


@given(events_strategy, st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_k_core_idempotent_and_bounded(events, k):
    once = corpus.k_core_filter(events, k)
    assert corpus.k_core_filter(once, k) == once
    users, items = {}, {}
    for e in once:
        users[e.user_key] = users.get(e.user_key, 0) + 1
        items[e.item_key] = items.get(e.item_key, 0) + 1
    assert all(c >= k for c in users.values()) and all(c >= k for c in items.values())


def test_build_log_single_event():
    log = corpus.build_log([RawInteraction("u1", "i9", 100)])
    assert (log.n_users, log.n_items) == (1, 1)
    assert list(log.events()) == [(0, 1, 100)]


def test_build_log_sorts_by_time_with_stable_ties():
    events = [RawInteraction("u", "c", 3), RawInteraction("u", "a", 1), RawInteraction("u", "b", 1)]
    log = corpus.build_log(events)
    assert [log.item_keys[i - 1] for i in log.sequences[0]] == ["a", "b", "c"]
    assert log.timestamps[0] == [1, 1, 3]


def test_build_log_empty_raises():
    with pytest.raises(CorpusError):
        corpus.build_log([])


def _log_of(*seqs):
    events = [RawInteraction(f"u{u}", f"i{i}", t) for u, s in enumerate(seqs) for t, i in enumerate(s)]
    return corpus.build_log(events)


def test_leave_one_out_four_and_three():
    split = corpus.leave_one_out(_log_of(["a", "b", "c", "d"], ["a", "b", "c"]))
    ids = {k[1:]: i for i, k in enumerate(split.item_keys, start=1)}
    assert split.train[0] == [ids["a"], ids["b"]] and split.valid[0] == ids["c"] and split.test[0] == ids["d"]
    assert split.train[1] == [ids["a"]] and split.valid[1] == ids["b"] and split.test[1] == ids["c"]


def test_leave_one_out_drops_short_users(caplog):
    with caplog.at_level(logging.WARNING):
        split = corpus.leave_one_out(_log_of(["a", "b"], ["a", "b", "c"]))
    assert split.dropped_users == 1 and split.n_users == 1
    assert "dropped 1" in caplog.text


@given(st.lists(st.lists(st.integers(0, 9), min_size=1, max_size=12), min_size=1, max_size=8))
@settings(max_examples=60, deadline=None)
def test_split_partitions_each_sequence(seqs):
    log = _log_of(*[[f"x{i}" for i in s] for s in seqs])
    split = corpus.leave_one_out(log)
    kept = [s for s in log.sequences if len(s) >= 3]
    for s, tr, v, te in zip(kept, split.train, split.valid, split.test):
        assert tr + [v, te] == s
    assert split.item_counts.sum() == sum(len(t) for t in split.train)


def test_density_of_table_counts():
    stats = corpus.table_stats(198_502, 22_363, 12_101)
    assert stats["density"] == pytest.approx(198_502 / (22_363 * 12_101))
    assert round(stats["density"], 5) == 0.00073


def test_write_and_load_round_trip(tmp_path):
    split = corpus.leave_one_out(_log_of(["a", "b", "c", "d"], ["b", "c", "a"], ["c", "a", "b", "a"]))
    paths = corpus.write_split(split, tmp_path / "out")
    back = corpus.load_split(tmp_path / "out")
    assert back.train == split.train and back.valid == split.valid and back.test == split.test
    assert back.item_keys == split.item_keys and back.user_keys == split.user_keys
    np.testing.assert_array_equal(back.item_counts, split.item_counts)
    lines = paths["item_map"].read_text().splitlines()
    assert lines[0].split("\t") == ["1", split.item_keys[0]]
