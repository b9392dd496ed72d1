import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transrec import encoder as enc
from transrec import evaluation as ev
from transrec.kernels import rank_kernel
from transrec.trainer import TrajectoryLog

from conftest import make_split


def brute_rank(scores, target):
    # sort by (-score, id) and find the target
    order = sorted(range(1, scores.size), key=lambda i: (-scores[i], i))
    return order.index(target) + 1


def test_rank_highest_is_one():
    s = np.array([[0.0, 0.1, 0.9, 0.2]])
    assert rank_kernel(s, np.array([2]))[0] == 1


def test_rank_ties_by_id():
    s = np.zeros((2, 6))
    assert rank_kernel(s, np.array([1, 5])).tolist() == [1, 5]


def test_rank_matches_brute_force(rng):
    for _ in range(200):
        n = int(rng.integers(2, 1001))
        s = np.round(rng.normal(size=(1, n + 1)), 1)  # rounding forces ties
        t = int(rng.integers(1, n + 1))
        assert rank_kernel(s, np.array([t]))[0] == brute_rank(s[0], t)


def test_rank_of_target_with_hand_set_embeddings():
    cfg = enc.EncoderConfig(n_items=5, max_len=3, dim=4, layers=1, dropout=0.0)
    params = enc.init(cfg, 0)
    params["item_emb"].data[1:] = np.random.default_rng(0).normal(size=(5, 4))
    scores = ev.all_scores(params, cfg, [[1, 2]])[0]
    for t in range(1, 6):
        assert ev.rank_of_target(params, cfg, [1, 2], t) == brute_rank(scores, t)


def test_rank_of_target_bad_id():
    cfg = enc.EncoderConfig(n_items=5, max_len=3, dim=4, layers=1)
    with pytest.raises(ValueError):
        ev.rank_of_target(enc.init(cfg), cfg, [1], 6)


def test_metric_closed_forms():
    assert ev.metrics([1, 1, 1]).to_dict() == {"hr": 1.0, "ndcg": 1.0, "k": 10, "n_users": 3}
    r = ev.metrics([2])
    assert r.hr == 1.0 and r.ndcg == pytest.approx(0.630930, abs=1e-6)
    r = ev.metrics([11], k=10)
    assert r.hr == 0.0 and r.ndcg == 0.0


@given(st.lists(st.integers(1, 50), min_size=1, max_size=30), st.integers(1, 20))
@settings(max_examples=60, deadline=None)
def test_metric_bounds(ranks, k):
    r = ev.metrics(ranks, k)
    assert 0 <= r.ndcg <= r.hr <= 1


def test_exclude_history_only_moves_target_up():
    cfg = enc.EncoderConfig(n_items=30, max_len=5, dim=8, layers=1, dropout=0.0)
    params = enc.init(cfg, 1)
    params["item_emb"].data[1:] = np.random.default_rng(1).normal(size=(30, 8))
    split = make_split([[1, 2, 3, 4], [5, 6, 7], [8, 9, 10, 11]], valid=[12, 13, 2], test=[3, 5, 9], n_items=30)
    hist, targets = ev.eval_inputs(split, "test")
    plain = ev.ranks_for(params, cfg, hist, targets)
    excl = ev.ranks_for(params, cfg, hist, targets, exclude=hist)
    assert np.all(excl <= plain)


def test_test_protocol_appends_validation_item():
    split = make_split([[1, 2]], valid=[3], test=[4], n_items=4)
    hist, targets = ev.eval_inputs(split, "test")
    assert hist == [[1, 2, 3]] and targets.tolist() == [4]


def test_popularity_buckets_order_and_sizes():
    counts = np.array([0, 5, 9, 9, 1, 3, 7, 2, 0, 4, 6, 8])
    buckets = ev.popularity_buckets(counts, 5)
    assert [b.size for b in buckets] == [3, 2, 2, 2, 2]
    assert buckets[0].tolist() == [2, 3, 11]
    flat = np.concatenate(buckets)
    assert np.all(np.diff(counts[flat]) <= 0)


def test_untrained_buckets_are_flat():
    rng = np.random.default_rng(0)
    seqs = [list(rng.zipf(1.5, size=8).clip(max=100)) for _ in range(300)]
    split = make_split(seqs, valid=[1] * 300, test=[2] * 300, n_items=100)
    cfg = enc.EncoderConfig(n_items=100, max_len=10, dim=16, layers=1)
    report = ev.bucket_scores(enc.init(cfg, 0), cfg, split)
    assert report.flat(3.0), (report.means, report.stderrs)


def test_bucket_csv(tmp_path):
    report = ev.BucketReport([np.array([1, 2]), np.array([3])], np.array([0.5, -0.5]), np.zeros(2), 4)
    report.to_csv(tmp_path / "b.csv", digest="xyz")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[:3] == ["# config_digest=xyz", "bucket_index,item_count,mean_score", "0,2,0.5"]
    assert report.non_increasing() and not report.non_decreasing()


def _log(slope, n=200, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    log = TrajectoryLog()
    for s in range(1, n + 1):
        pref = 500.0 + slope * s + noise * rng.normal()
        log.append(s, pref, 0.0, pref, 0.0)
    return log


def test_trajectory_slopes_recovered():
    rows = ev.compare_trajectories({"a": _log(-1.0, noise=2.0), "b": _log(-2.0, noise=2.0, seed=1)})
    assert rows[0].slope == pytest.approx(-1.0, rel=0.05)
    assert rows[1].slope == pytest.approx(-2.0, rel=0.05)
    # final 10% of 200 steps = steps 181..200
    assert rows[1].final_preference == pytest.approx(500 - 2 * 190.5, abs=2.0)


def test_identical_logs_identical_summaries():
    a, b = ev.compare_trajectories({"x": _log(-1.0), "y": _log(-1.0)})
    assert (a.final_preference, a.slope) == (b.final_preference, b.slope)


def test_mismatched_step_ranges():
    with pytest.raises(ValueError):
        ev.compare_trajectories({"x": _log(-1.0, n=10), "y": _log(-1.0, n=12)})


def test_write_metrics(tmp_path):
    ev.write_metrics(ev.metrics([1, 3]), tmp_path / "m.json", "d", {"split": "test"})
    import json
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["config_digest"] == "d" and data["n_users"] == 2 and data["split"] == "test"
