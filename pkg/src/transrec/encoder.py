"""Causal self-attention sequence encoder (SASRec layout) and checkpoints.

Histories are left-padded id matrices; id 0 is padding. The item table is
shared between history encoding and candidate scoring, so a score is the
inner product between an encoded position and an item row.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHECKPOINT_MAGIC = b"TRECCKPT1"
INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    n_items: int
    max_len: int = 50
    dim: int = 64
    layers: int = 2
    heads: int = 1
    dropout: float = 0.2
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.dim < 1 or self.layers < 1 or self.heads < 1:
            raise ValueError("dim, layers and heads must be >= 1")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def vocab(self) -> int:
        return self.n_items + 1


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple]:
    d = config.dim
    shapes = {"item_emb": (config.vocab, d), "pos_emb": (config.max_len, d)}
    for l in range(config.layers):
        p = f"block{l}."
        shapes.update({
            p + "wq": (d, d), p + "wk": (d, d), p + "wv": (d, d), p + "wo": (d, d),
            p + "ln1_g": (d,), p + "ln1_b": (d,),
            p + "ffn_w1": (d, d), p + "ffn_b1": (d,),
            p + "ffn_w2": (d, d), p + "ffn_b2": (d,),
            p + "ln2_g": (d,), p + "ln2_b": (d,),
        })
    shapes["final_g"] = (d,)
    shapes["final_b"] = (d,)
    return shapes


def _truncated_normal(rng, shape, std):
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init(config: EncoderConfig, seed: int = 0) -> dict[str, Tensor]:
    """Weights ~ N(0, 0.02^2) truncated at 2 sigma, gains 1, biases 0, padding row 0."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            arr = np.ones(shape)
        elif leaf.endswith(("_b", "_b1", "_b2")):
            arr = np.zeros(shape)
        else:
            arr = _truncated_normal(rng, shape, INIT_STD)
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    params["item_emb"].data[0] = 0.0
    return params


def pad_histories(histories, max_len: int) -> np.ndarray:
    """Left-pad (and left-truncate) variable-length histories into a (B, max_len) matrix."""
    out = np.zeros((len(histories), max_len), dtype=np.int64)
    for r, h in enumerate(histories):
        h = np.asarray(h, dtype=np.int64)[-max_len:]
        if h.size:
            out[r, max_len - h.size:] = h
    return out


def encode(params: dict[str, Tensor], histories, config: EncoderConfig,
           train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Encode a (B, L) left-padded id matrix into (B, L, d) position states.

    Position ``t`` only attends to non-padding positions ``<= t``.
    """
    ids = np.asarray(histories)
    if ids.ndim != 2:
        raise ValueError("histories must be a (batch, length) id matrix")
    b, length = ids.shape
    if length > config.max_len:
        raise ValueError(f"history length {length} exceeds max_len {config.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() > config.n_items):
        raise IndexError(f"item id out of range 0..{config.n_items}")
    p = config.dropout if train_mode else 0.0
    keep = ids != 0
    keep_f = keep[..., None].astype(config.dtype)

    x = T.gather_rows(params["item_emb"], ids) + params["pos_emb"][config.max_len - length:]
    x = T.dropout(x, p, rng, train_mode)
    x = x * keep_f

    h, dh = config.heads, config.dim // config.heads
    attend = np.tril(np.ones((length, length), dtype=bool))[None, None] & keep[:, None, None, :]
    scale = 1.0 / np.sqrt(dh)
    for l in range(config.layers):
        w = lambda n: params[f"block{l}.{n}"]  # noqa: E731

        def heads(t):
            return T.transpose(T.reshape(t, (b, length, h, dh)), (0, 2, 1, 3))

        q, k, v = heads(x @ w("wq")), heads(x @ w("wk")), heads(x @ w("wv"))
        att = T.softmax((q @ T.swap_last(k)) * scale, mask=attend)
        att = T.dropout(att, p, rng, train_mode)
        o = T.reshape(T.transpose(att @ v, (0, 2, 1, 3)), (b, length, config.dim)) @ w("wo")
        o = T.dropout(o, p, rng, train_mode)
        x = T.layer_norm(x + o, w("ln1_g"), w("ln1_b"))

        f = T.relu(x @ w("ffn_w1") + w("ffn_b1"))
        f = T.dropout(f, p, rng, train_mode)
        f = f @ w("ffn_w2") + w("ffn_b2")
        f = T.dropout(f, p, rng, train_mode)
        x = T.layer_norm(x + f, w("ln2_g"), w("ln2_b"))
        x = x * keep_f
    return T.layer_norm(x, params["final_g"], params["final_b"])


def score(user_repr, item_ids, table) -> Tensor:
    """Inner-product scores between user states and item rows of ``table``.

    * ``item_ids.shape == user_repr.shape[:-1]``: one score per state (pairs).
    * ``user_repr`` (B, ..., d) and ``item_ids`` (B, n): each state of row b is
      scored against that row's ``n`` items, giving (B, ..., n).
    * ``item_ids`` 1-d: every state against the same items, giving (..., n).
    """
    h = T._lift(user_repr)
    ids = np.asarray(item_ids, dtype=np.int64)
    if ids.shape == h.shape[:-1]:
        e = T.gather_rows(table, ids)
        return T.tsum(h * e, axis=-1)
    if ids.ndim == 1:
        e = T.gather_rows(table, ids)
        return h @ T.swap_last(e)
    if ids.ndim == 2 and h.ndim >= 2 and ids.shape[0] == h.shape[0]:
        e = T.gather_rows(table, ids)  # (B, n, d)
        if h.ndim == 2:
            return T.reshape(T.reshape(h, (h.shape[0], 1, h.shape[1])) @ T.swap_last(e),
                             (h.shape[0], ids.shape[1]))
        return h @ T.swap_last(e)
    raise ValueError(f"cannot score states of shape {h.shape} against ids of shape {ids.shape}")


def training_targets(split, max_len: int) -> list[tuple[np.ndarray, int]]:
    """Every (history prefix, next item) pair in the train sequences, prefixes capped at ``max_len``."""
    pairs = []
    for seq in split.train:
        seq = np.asarray(seq, dtype=np.int64)
        for t in range(1, seq.size):
            pairs.append((seq[max(0, t - max_len):t], int(seq[t])))
    return pairs


def sequence_batch(train_seqs, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and aligned next-item targets for whole sequences.

    Position t of ``inputs`` holds the history ending at t; ``targets[t]`` is
    the item that followed it (0 where there is none). Together the rows
    cover the same (prefix, positive) pairs as :func:`training_targets`.
    """
    inputs = pad_histories([np.asarray(s)[:-1] for s in train_seqs], max_len)
    targets = pad_histories([np.asarray(s)[1:] for s in train_seqs], max_len)
    return inputs, targets


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params: dict[str, Tensor], config: EncoderConfig, extra: dict | None = None) -> None:
    """``TRECCKPT1`` + uint32 header length + JSON header + little-endian raw arrays.

    Arrays are written as 32-bit floats unless the parameters are 64-bit, in
    which case they are stored as 64-bit (recorded per array in the header).
    """
    manifest = []
    for name, t in params.items():
        dt = "<f8" if t.dtype == np.float64 else "<f4"
        manifest.append({"name": name, "shape": list(t.shape), "dtype": dt})
    header = {"config": asdict(config), "params": manifest, **(extra or {})}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for entry in manifest:
            fh.write(np.ascontiguousarray(params[entry["name"]].data, dtype=entry["dtype"]).tobytes())


def load_checkpoint(path) -> tuple[dict[str, Tensor], EncoderConfig, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a transrec checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    header = json.loads(raw[pos:pos + n].decode("utf-8"))
    pos += n
    config = EncoderConfig(**header["config"])
    params = {}
    for entry in header["params"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(entry["shape"])
        pos += count * dt.itemsize
        params[entry["name"]] = Tensor(arr.astype(config.dtype), requires_grad=True, name=entry["name"])
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return params, config, header
