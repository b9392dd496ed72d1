import math

import numpy as np
import pytest

from transrec import encoder as enc
from transrec import tensor as T
from transrec.gradcheck import ENCODER_TOL, check_encoder, numeric_grad, rel_error

from conftest import make_split


def tiny(**kw):
    base = dict(n_items=9, max_len=5, dim=8, layers=2, heads=2, dropout=0.0, dtype="float64")
    base.update(kw)
    return enc.EncoderConfig(**base)


def test_init_deterministic_and_padding_zero():
    a, b = enc.init(tiny(), 3), enc.init(tiny(), 3)
    for name in a:
        np.testing.assert_array_equal(a[name].data, b[name].data)
    assert not a["item_emb"].data[0].any()


def test_init_variance():
    cfg = enc.EncoderConfig(n_items=999, dim=16)
    table = enc.init(cfg, 0)["item_emb"].data[1:]
    assert table.size >= 10_000
    assert 0.5 * 0.02 ** 2 <= table.var() <= 1.5 * 0.02 ** 2
    assert np.abs(table).max() <= 2 * 0.02


def test_invalid_configs():
    with pytest.raises(ValueError):
        enc.EncoderConfig(n_items=5, dim=6, heads=4)
    with pytest.raises(ValueError):
        enc.EncoderConfig(n_items=0)


def _encode(params, cfg, ids):
    return enc.encode(params, np.asarray(ids), cfg).data


def test_padding_content_is_ignored():
    cfg = tiny()
    params = enc.init(cfg, 1)
    base = _encode(params, cfg, [[0, 0, 0, 0, 4]])
    # scribble on the padding row and position slots it would use
    params["item_emb"].data[0] = 7.0
    params["pos_emb"].data[:4] += 3.0
    np.testing.assert_allclose(_encode(params, cfg, [[0, 0, 0, 0, 4]])[0, -1], base[0, -1], atol=1e-12)


def test_causality():
    cfg = tiny()
    params = enc.init(cfg, 2)
    a = _encode(params, cfg, [[1, 2, 3, 4, 5]])
    b = _encode(params, cfg, [[1, 2, 5, 3, 4]])
    np.testing.assert_array_equal(a[0, :2], b[0, :2])


def test_out_of_range_ids():
    cfg = tiny()
    with pytest.raises(IndexError):
        enc.encode(enc.init(cfg), np.array([[0, 0, 0, 0, 10]]), cfg)


def _ln(v, g, b, eps=1e-8):
    m = sum(v) / len(v)
    var = sum((x - m) ** 2 for x in v) / len(v)
    return [(x - m) / math.sqrt(var + eps) * gg + bb for x, gg, bb in zip(v, g, b)]


def _vecmat(v, w):
    return [sum(v[a] * w[a][c] for a in range(len(v))) for c in range(len(w[0]))]


def test_hand_computation_two_positions():
    """B=1, max_len=2, d=2, one layer: scalar-by-scalar evaluation of the same layout."""
    cfg = enc.EncoderConfig(n_items=3, max_len=2, dim=2, layers=1, heads=1, dropout=0.0, dtype="float64")
    rng = np.random.default_rng(5)
    params = enc.init(cfg, 0)
    for p in params.values():
        p.data[:] = rng.normal(size=p.shape)
    params["item_emb"].data[0] = 0
    P = {k: v.data.tolist() for k, v in params.items()}
    ids = [2, 3]

    x = [[P["item_emb"][ids[t]][c] + P["pos_emb"][t][c] for c in range(2)] for t in range(2)]
    q = [_vecmat(x[t], P["block0.wq"]) for t in range(2)]
    k = [_vecmat(x[t], P["block0.wk"]) for t in range(2)]
    v = [_vecmat(x[t], P["block0.wv"]) for t in range(2)]
    out = []
    for t in range(2):
        logits = [sum(q[t][c] * k[s][c] for c in range(2)) / math.sqrt(2) for s in range(t + 1)]
        mx = max(logits)
        w = [math.exp(z - mx) for z in logits]
        w = [z / sum(w) for z in w]
        att = [sum(w[s] * v[s][c] for s in range(t + 1)) for c in range(2)]
        o = _vecmat(att, P["block0.wo"])
        h = _ln([x[t][c] + o[c] for c in range(2)], P["block0.ln1_g"], P["block0.ln1_b"])
        f = [max(0.0, z + b) for z, b in zip(_vecmat(h, P["block0.ffn_w1"]), P["block0.ffn_b1"])]
        f = [z + b for z, b in zip(_vecmat(f, P["block0.ffn_w2"]), P["block0.ffn_b2"])]
        h = _ln([h[c] + f[c] for c in range(2)], P["block0.ln2_g"], P["block0.ln2_b"])
        out.append(_ln(h, P["final_g"], P["final_b"]))
    np.testing.assert_allclose(_encode(params, cfg, [ids])[0], out, rtol=1e-9, atol=1e-9)


def test_score_values():
    table = T.Tensor(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    h = T.Tensor(np.array([[1.0, 0.0]]))
    assert enc.score(h, np.array([2]), table).data.tolist() == [0.0]
    assert enc.score(h, np.array([1]), table).data.tolist() == [1.0]
    assert enc.score(h, np.array([[1, 2]]), table).data.tolist() == [[1.0, 0.0]]


def test_score_grad(rng):
    h = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    table = T.Tensor(rng.normal(size=(6, 4)), requires_grad=True)
    ids = np.array([1, 5, 5])
    f = lambda: T.tsum(enc.score(h, ids, table) * np.array([1.0, -2.0, 0.5]))  # noqa: E731
    f().backward()
    for t in (h, table):
        assert rel_error(t.grad, numeric_grad(lambda: f().item(), t.data)) <= 1e-5


def test_training_targets():
    split = make_split([[1, 2, 3], [4]])
    pairs = enc.training_targets(split, 50)
    assert [(p.tolist(), i) for p, i in pairs] == [([1], 2), ([1, 2], 3)]


def test_training_targets_truncate():
    split = make_split([list(range(1, 61))])
    prefix, target = enc.training_targets(split, 50)[-1]
    assert target == 60 and prefix.tolist() == list(range(10, 60))


def test_sequence_batch_covers_training_targets():
    split = make_split([[1, 2, 3, 4], [5, 6], [7]])
    inputs, targets = enc.sequence_batch(split.train, 4)
    got = set()
    for r in range(inputs.shape[0]):
        for c in range(inputs.shape[1]):
            if targets[r, c]:
                hist = inputs[r, : c + 1]
                got.add((tuple(hist[hist != 0]), int(targets[r, c])))
    want = {(tuple(p.tolist()), i) for p, i in enc.training_targets(split, 4)}
    assert got == want


def test_full_encoder_gradient_check():
    results = check_encoder()
    assert all(r.rel_error <= ENCODER_TOL for r in results), results


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_checkpoint_round_trip(tmp_path, dtype):
    cfg = tiny(dtype=dtype)
    params = enc.init(cfg, 4)
    enc.save_checkpoint(tmp_path / "m.ckpt", params, cfg, {"digest": "abc"})
    back, cfg2, header = enc.load_checkpoint(tmp_path / "m.ckpt")
    assert cfg2 == cfg and header["digest"] == "abc"
    for name in params:
        assert back[name].data.dtype == params[name].data.dtype
        np.testing.assert_array_equal(back[name].data, params[name].data)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw.startswith(b"TRECCKPT1")


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        enc.load_checkpoint(tmp_path / "bad")
