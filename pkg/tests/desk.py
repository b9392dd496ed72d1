"""Shared desk-scale training runs on the planted-popularity corpus."""

from functools import lru_cache

from transrec.corpus import build_log, leave_one_out
from transrec.encoder import EncoderConfig
from transrec.evaluation import bucket_scores, evaluate
from transrec.sampling import SamplerConfig
from transrec.synthetic import DESK_CORPUS, planted_corpus
from transrec.trainer import LossConfig, TrainConfig, train

SEEDS = (0, 1, 2)
MAX_LEN = 15
DIM = 32
SET_SIZE = 5  # n_j = n_k at desk scale


@lru_cache(maxsize=None)
def split_for(seed):
    return leave_one_out(build_log(planted_corpus(seed=seed, **DESK_CORPUS)))


def encoder_config(split, dtype="float32"):
    return EncoderConfig(n_items=split.n_items, max_len=MAX_LEN, dim=DIM, layers=2, dropout=0.2, dtype=dtype)


def train_config(seed, epochs=100):
    return TrainConfig(batch_size=128, learning_rate=1e-3, epochs=epochs, eval_every=5,
                       early_stop_patience=6, seed=seed)


@lru_cache(maxsize=None)
def run(loss, mode, seed, gamma=1.0, transitivity="weak"):
    """Returns (test NDCG@10, BucketReport, TrainResult)."""
    split = split_for(seed)
    cfg = encoder_config(split)
    result = train(split, cfg, train_config(seed),
                   SamplerConfig(mode=mode, transitivity=transitivity, n_j=SET_SIZE, n_k=SET_SIZE),
                   LossConfig(loss, gamma))
    test = evaluate(result.best_params, cfg, split, "test", k=10)
    return test.ndcg, bucket_scores(result.best_params, cfg, split), result
