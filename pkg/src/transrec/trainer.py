"""Optimization loop: sampling, encoding, loss, Adam, logging and checkpointing."""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoder as enc
from . import losses
from .sampling import NegativeSampler, SamplerConfig, popularity_from_split

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.0003
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    eval_every: int = 1
    early_stop_patience: int = 20
    optimizer: str = "adam"
    max_steps: int = 0  # 0 means no cap
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.eval_every < 1:
            raise ConfigError("batch_size and eval_every must be >= 1, epochs >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer must be adam or sgd")


@dataclass(frozen=True)
class LossConfig:
    name: str = "bpr"
    gamma: float = 1.0

    def __post_init__(self):
        if self.name not in losses.LOSSES:
            raise ConfigError(f"loss.name must be one of {losses.LOSSES}, got {self.name!r}")
        if not self.gamma >= 0:
            raise ConfigError("loss.gamma must be >= 0")


def sampler_kind(loss_name: str) -> str:
    return "set" if loss_name in losses.SET_LOSSES else "quad"


def check_compatible(loss: LossConfig, sampler: SamplerConfig, kind: str = "auto", n_items: int | None = None):
    """Raise ConfigError for loss/sampler pairs that cannot train together."""
    needed = sampler_kind(loss.name)
    if kind not in ("auto", "quad", "set"):
        raise ConfigError(f"sampler.kind must be auto, quad or set, got {kind!r}")
    if kind != "auto" and kind != needed:
        raise ConfigError(f"loss {loss.name} needs a {needed} sampler, got {kind}")
    if loss.name == "trans_ssm" and sampler.transitivity != "weak":
        raise ConfigError("trans_ssm supports only weak transitivity")
    if n_items is not None:
        if needed == "set" and sampler.n_j + sampler.n_k + 1 > n_items:
            raise ConfigError(f"{sampler.n_j}+{sampler.n_k} set negatives do not fit a catalog of {n_items} items")
        if loss.name in ("trans_bpr", "trans_bce") and n_items < 3:
            raise ConfigError("transitive quads need at least 3 items")
        if n_items < 2:
            raise ConfigError("training needs at least 2 items")


def streams(seed: int, *names: str) -> dict[str, np.random.Generator]:
    """Named, independent generators derived from one root seed."""
    return {n: np.random.default_rng([int(seed), zlib.crc32(n.encode())]) for n in names}


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    skipped: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> bool:
    """One bias-corrected Adam (or plain SGD) update in place.

    Returns False and leaves everything untouched when any gradient is
    non-finite. The padding row of ``item_emb`` is re-zeroed afterwards.
    """
    for g in grads.values():
        if g is not None and not np.all(np.isfinite(g)):
            state.skipped += 1
            logger.warning("skipping step with non-finite gradient (%d skipped so far)", state.skipped)
            return False
    state.t += 1
    t = state.t
    lr = config.learning_rate
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        if config.optimizer == "sgd":
            p.data -= (lr * g).astype(p.dtype)
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        p.data -= ((lr / bc1) * m / (np.sqrt(v / bc2) + config.eps)).astype(p.dtype)
    if "item_emb" in params:
        params["item_emb"].data[0] = 0.0
    return True


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class TrajectoryLog:
    steps: list = field(default_factory=list)
    total: list = field(default_factory=list)
    original: list = field(default_factory=list)
    preference: list = field(default_factory=list)
    wall: list = field(default_factory=list)

    def append(self, step, total, original, preference, wall):
        self.steps.append(int(step))
        self.total.append(float(total))
        self.original.append(float(original))
        self.preference.append(float("nan") if preference is None else float(preference))
        self.wall.append(float(wall))

    def __len__(self):
        return len(self.steps)

    def to_csv(self, path, digest: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if digest:
                fh.write(f"# config_digest={digest}\n")
            w = csv.writer(fh)
            w.writerow(["step", "total", "original", "preference"])
            for s, a, b, c in zip(self.steps, self.total, self.original, self.preference):
                w.writerow([s, repr(a), repr(b), "" if math.isnan(c) else repr(c)])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            rows = csv.DictReader(line for line in fh if not line.startswith("#"))
            for row in rows:
                pref = row["preference"]
                log.append(row["step"], row["total"], row["original"], float(pref) if pref else None, 0.0)
        return log


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    params: dict
    best_params: dict
    log: TrajectoryLog
    best_checkpoint: Path | None
    best_metrics: object = None
    best_epoch: int = -1
    eval_history: list = field(default_factory=list)
    skipped_steps: int = 0


def _copy_params(params):
    return {k: enc.Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in params.items()}


class BatchBuilder:
    """Turns a chunk of user sequences into score inputs for the configured loss."""

    def __init__(self, split, enc_config, sampler: NegativeSampler, loss: LossConfig):
        self.split = split
        self.cfg = enc_config
        self.sampler = sampler
        self.loss = loss
        self.kind = sampler_kind(loss.name)

    def build(self, users, rng):
        seqs = [self.split.train[u] for u in users]
        inputs, targets = enc.sequence_batch(seqs, self.cfg.max_len)
        mask = targets != 0
        batch = {"inputs": inputs, "targets": targets, "mask": mask}
        excl_hist = self.sampler.config.exclude_history
        if self.kind == "quad":
            pos = targets[mask]
            if excl_hist:
                rows, cols = np.nonzero(mask)
                exclude = [np.append(inputs[r, : c + 1][inputs[r, : c + 1] != 0], t)
                           for r, c, t in zip(rows, cols, pos)]
            else:
                exclude = pos
            if self.loss.name in losses.TRANSITIVE_LOSSES:
                j, k = self.sampler.quad(exclude, rng)
            else:
                j, k = self.sampler.uniform(exclude, rng, 1)[:, 0], None
            batch["j"] = np.zeros_like(targets)
            batch["j"][mask] = j
            if k is not None:
                batch["k"] = np.zeros_like(targets)
                batch["k"][mask] = k
        else:
            exclude = []
            for r in range(len(users)):
                ex = targets[r][mask[r]]
                if excl_hist:
                    ex = np.concatenate([ex, inputs[r][inputs[r] != 0]])
                exclude.append(np.unique(ex))
            cfg = self.sampler.config
            if self.loss.name == "trans_ssm":
                batch["nj"], batch["nk"] = self.sampler.sets(exclude, rng)
            else:
                batch["nj"] = self.sampler.uniform(exclude, rng, cfg.n_j + cfg.n_k)
        return batch


def batch_scores(params, enc_config, batch, train_mode=True, rng=None):
    h = enc.encode(params, batch["inputs"], enc_config, train_mode, rng)
    table = params["item_emb"]
    scores = {"i": enc.score(h, batch["targets"], table)}
    for key in ("j", "k", "nj", "nk"):
        if key in batch:
            scores[key] = enc.score(h, batch[key], table)
    return scores


def train(split, encoder_config, train_config: TrainConfig, sampler_config: SamplerConfig,
          loss_config: LossConfig, out_dir=None, sampler_kind_override: str = "auto",
          eval_k: int = 10, eval_exclude_history: bool = False, digest: str | None = None,
          evaluate_fn=None) -> TrainResult:
    """Train the encoder on ``split`` with the configured loss and sampler.

    Validation NDCG@k is computed every ``eval_every`` epochs; the best
    parameters are kept (and checkpointed when ``out_dir`` is given) and
    training stops after ``early_stop_patience`` evaluations without gain.
    """
    from . import evaluation

    check_compatible(loss_config, sampler_config, sampler_kind_override, split.n_items)
    users = np.array([u for u, s in enumerate(split.train) if len(s) >= 2], dtype=np.int64)
    if users.size == 0:
        raise ConfigError("no user has a training sequence of length >= 2")

    rngs = streams(train_config.seed, "init", "sampler", "dropout", "shuffle")
    if sampler_config.seed:
        rngs["sampler"] = np.random.default_rng([int(sampler_config.seed), zlib.crc32(b"sampler")])
    params = enc.init(encoder_config, int(rngs["init"].integers(0, 2**31 - 1)))
    sampler = NegativeSampler(popularity_from_split(split, sampler_config.alpha), sampler_config)
    builder = BatchBuilder(split, encoder_config, sampler, loss_config)
    state = AdamState()
    log = TrajectoryLog()
    evaluate_fn = evaluate_fn or (lambda p: evaluation.evaluate(
        p, encoder_config, split, "valid", k=eval_k, exclude_history=eval_exclude_history))

    out_path = Path(out_dir) if out_dir is not None else None
    best_path = out_path / "best.ckpt" if out_path is not None else None
    best_ndcg, best_metrics, best_epoch = -1.0, None, -1
    best_params = _copy_params(params)
    bad_evals = 0
    history = []
    step = 0
    t0 = time.perf_counter()
    done = False
    for epoch in range(train_config.epochs):
        order = rngs["shuffle"].permutation(users)
        for start in range(0, order.size, train_config.batch_size):
            chunk = order[start:start + train_config.batch_size]
            batch = builder.build(chunk, rngs["sampler"])
            scores = batch_scores(params, encoder_config, batch, True, rngs["dropout"])
            report = losses.compute(loss_config.name, scores, loss_config.gamma, batch["mask"])
            report.total.backward()
            grads = {k: p.grad for k, p in params.items()}
            for p in params.values():
                p.grad = None
            adam_step(params, grads, state, train_config)
            step += 1
            log.append(step, report.value, report.terms["original"], report.terms.get("preference"),
                       time.perf_counter() - t0)
            if train_config.max_steps and step >= train_config.max_steps:
                done = True
                break
        if (epoch + 1) % train_config.eval_every == 0 or done or epoch == train_config.epochs - 1:
            metrics = evaluate_fn(params)
            history.append((epoch + 1, step, metrics))
            if metrics.ndcg > best_ndcg:
                best_ndcg, best_metrics, best_epoch = metrics.ndcg, metrics, epoch + 1
                best_params = _copy_params(params)
                bad_evals = 0
                if best_path is not None:
                    enc.save_checkpoint(best_path, best_params, encoder_config,
                                        {"digest": digest, "epoch": epoch + 1, "step": step})
            else:
                bad_evals += 1
                if train_config.early_stop_patience and bad_evals >= train_config.early_stop_patience:
                    logger.info("early stop at epoch %d", epoch + 1)
                    done = True
        if done:
            break
    if best_metrics is None and best_path is not None:
        enc.save_checkpoint(best_path, best_params, encoder_config, {"digest": digest, "epoch": 0, "step": 0})
    return TrainResult(params, best_params, log, best_path, best_metrics, best_epoch, history, state.skipped)
