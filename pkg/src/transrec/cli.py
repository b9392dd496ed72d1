"""``transrec`` command line: prepare, train, evaluate, analyze."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus, evaluation, gradcheck
from . import encoder as enc
from ._accel import set_threads
from .config import DEFAULTS, ExperimentConfig, parse_overrides
from .trainer import ConfigError, TrajectoryLog, check_compatible, train


class CliError(Exception):
    pass


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


# -- prepare ------------------------------------------------------------------


def cmd_prepare(input_tsv, out_dir, k_core: int = 5, out=None) -> dict:
    out = out or sys.stdout
    events = corpus.parse_tsv(_require(input_tsv, "input TSV"))
    raw = corpus.table_stats(len(events), len({e.user_key for e in events}), len({e.item_key for e in events}))
    if k_core > 1:
        events = corpus.k_core_filter(events, k_core)
    if not events:
        raise CliError(f"no events left after {k_core}-core filtering")
    log = corpus.build_log(events)
    split = corpus.leave_one_out(log)
    corpus.write_split(split, out_dir)
    stats = corpus.table_stats(log.n_events, log.n_users, log.n_items)
    print(f"{'':14s}{'interactions':>14s}{'users':>10s}{'items':>10s}{'density':>12s}", file=out)
    for label, s in (("raw", raw), (f"{k_core}-core", stats)):
        print(f"{label:14s}{s['interactions']:>14,d}{s['users']:>10,d}{s['items']:>10,d}{s['density']:>12.5f}", file=out)
    if split.dropped_users:
        print(f"dropped {split.dropped_users} users with fewer than 3 events", file=out)
    return stats


# -- train / evaluate -----------------------------------------------------------


def cmd_train(config: ExperimentConfig, out=None) -> dict:
    out = out or sys.stdout
    if not config["data"] or not config["out"]:
        raise CliError("train needs data=<prepared split dir> and out=<output dir>")
    # Cheap checks first so a bad pairing fails before the data is read.
    loss_cfg, sampler_cfg, train_cfg = config.loss(), config.sampler(), config.train()
    check_compatible(loss_cfg, sampler_cfg, config["sampler.kind"])
    split = corpus.load_split(_require(config["data"], "prepared split"))
    enc_cfg = config.encoder(split.n_items)
    check_compatible(loss_cfg, sampler_cfg, config["sampler.kind"], split.n_items)

    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config.digest
    (out_dir / "config.txt").write_text(config.to_text(), encoding="utf-8")
    result = train(split, enc_cfg, train_cfg, sampler_cfg, loss_cfg, out_dir=out_dir,
                   sampler_kind_override=config["sampler.kind"], eval_k=config["eval.k"],
                   eval_exclude_history=config["eval.exclude_history"], digest=digest)
    result.log.to_csv(out_dir / "trajectory.csv", digest)
    test = evaluation.evaluate(result.best_params, enc_cfg, split, "test", k=config["eval.k"],
                               exclude_history=config["eval.exclude_history"],
                               chunk_size=config["eval.chunk_size"])
    extra = {"split": "test", "best_epoch": result.best_epoch, "skipped_steps": result.skipped_steps,
             "valid_ndcg": None if result.best_metrics is None else result.best_metrics.ndcg}
    evaluation.write_metrics(test, out_dir / "metrics.json", digest, extra)
    print(f"test HR@{test.k}={test.hr:.4f} NDCG@{test.k}={test.ndcg:.4f} "
          f"(best epoch {result.best_epoch}, digest {digest})", file=out)
    return test.to_dict()


def _load_model(checkpoint, data):
    params, cfg, header = enc.load_checkpoint(_require(checkpoint, "checkpoint"))
    split = corpus.load_split(_require(data, "prepared split"))
    if cfg.n_items != split.n_items:
        raise CliError(f"checkpoint has {cfg.n_items} items but the split has {split.n_items}")
    return params, cfg, header, split


def cmd_evaluate(checkpoint, data, which="test", k=10, exclude_history=False, out_path=None,
                 chunk_size=256, out=None) -> dict:
    out = out or sys.stdout
    params, cfg, header, split = _load_model(checkpoint, data)
    report = evaluation.evaluate(params, cfg, split, which, k, exclude_history, chunk_size)
    if out_path:
        evaluation.write_metrics(report, out_path, header.get("digest"), {"split": which})
    print(json.dumps({**report.to_dict(), "split": which}), file=out)
    return report.to_dict()


# -- analyze --------------------------------------------------------------------


def analyze_buckets(checkpoint, data, out_path, n_buckets=5, out=None):
    out = out or sys.stdout
    params, cfg, header, split = _load_model(checkpoint, data)
    report = evaluation.bucket_scores(params, cfg, split, n_buckets)
    report.to_csv(out_path, header.get("digest"))
    shape = "non-increasing" if report.non_increasing() else "non-decreasing" if report.non_decreasing() else "mixed"
    for b, (m, se) in enumerate(zip(report.means, report.stderrs)):
        print(f"bucket {b}: {report.sizes[b]:4d} items  mean {m:+.4f} +- {se:.4f}", file=out)
    print(f"shape: {shape}", file=out)
    return report


def analyze_terms(logs, out_path, names=None, out=None):
    out = out or sys.stdout
    paths = [_require(p, "trajectory CSV") for p in logs]
    if names is None:
        names = [p.stem for p in paths]
        if len(set(names)) != len(names):
            names = [p.parent.name or p.stem for p in paths]
    if len(set(names)) != len(names):
        raise CliError("trajectory names collide; pass --names")
    digests = {_digest_of(p) for p in paths} - {None}
    rows = evaluation.compare_trajectories({n: TrajectoryLog.from_csv(p) for n, p in zip(names, paths)})
    evaluation.write_trajectory_summary(rows, out_path, ",".join(sorted(digests)) or None)
    for r in rows:
        print(f"{r.scheme}: final preference {r.final_preference:.5f}, slope {r.slope:.3e}", file=out)
    return rows


def _digest_of(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first.strip().split("=", 1)[1] if first.startswith("# config_digest=") else None


def analyze_gradcheck(out_path=None, seed=0, out=None) -> bool:
    out = out or sys.stdout
    results = gradcheck.run_all(seed)
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name} rel_err={r.rel_error:.3e} tol={r.tol:g}" for r in results]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    out.write(text)
    return all(r.passed for r in results)


# -- entry point ------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transrec", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker threads for parallel kernels (env TRANSREC_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="k-core filter and leave-one-out split a TSV log")
    sp.add_argument("input", help="user<TAB>item<TAB>timestamp file")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--k-core", type=int, default=DEFAULTS["corpus.k_core"])

    st = sub.add_parser("train", help="train with key=value overrides",
                        description="Config keys: " + ", ".join(DEFAULTS))
    st.add_argument("--config", help="flat key=value config file")
    st.add_argument("overrides", nargs="*", help="key=value (or --key=value)")

    se = sub.add_parser("evaluate", help="HR/NDCG of a checkpoint on the valid or test split")
    se.add_argument("--checkpoint", required=True)
    se.add_argument("--data", required=True)
    se.add_argument("--split", choices=("valid", "test"), default="test")
    se.add_argument("--k", type=int, default=10)
    se.add_argument("--exclude-history", action="store_true")
    se.add_argument("--chunk-size", type=int, default=256)
    se.add_argument("--out", help="write metrics JSON here")

    sa = sub.add_parser("analyze", help="popularity buckets, loss-term summaries, gradient checks")
    asub = sa.add_subparsers(dest="kind", required=True)
    ab = asub.add_parser("buckets")
    ab.add_argument("--checkpoint", required=True)
    ab.add_argument("--data", required=True)
    ab.add_argument("--buckets", type=int, default=5)
    ab.add_argument("--out", default="buckets.csv")
    at = asub.add_parser("terms")
    at.add_argument("logs", nargs="+", help="trajectory CSVs")
    at.add_argument("--names", help="comma-separated scheme names, one per log")
    at.add_argument("--out", default="trajectory_summary.csv")
    ag = asub.add_parser("gradcheck")
    ag.add_argument("--seed", type=int, default=0)
    ag.add_argument("--out")

    sy = sub.add_parser("synth", help="write a synthetic TSV with a planted popularity hierarchy")
    sy.add_argument("out")
    sy.add_argument("--users", type=int, default=500)
    sy.add_argument("--items", type=int, default=200)
    sy.add_argument("--seed", type=int, default=0)
    return p


def _split_argv(argv):
    # argparse would treat --key=value overrides as unknown options.
    if "train" not in argv:
        return argv, []
    at = argv.index("train")
    head, tail = argv[: at + 1], argv[at + 1:]
    keep, overrides = [], []
    it = iter(tail)
    for a in it:
        if a == "--config":
            keep += [a, next(it, "")]
        elif a.startswith("--config=") or a in ("-h", "--help"):
            keep.append(a)
        elif a.startswith("--") or "=" in a:
            overrides.append(a)
        else:
            keep.append(a)
    return head + keep, overrides


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    argv, overrides = _split_argv(argv)
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = args.threads if args.threads is not None else os.environ.get("TRANSREC_THREADS")
    try:
        set_threads(threads)
        if args.command == "prepare":
            cmd_prepare(args.input, args.out, args.k_core)
        elif args.command == "train":
            cfg = ExperimentConfig.from_file(_require(args.config, "config file")) if args.config else ExperimentConfig()
            cfg = cfg.with_overrides(parse_overrides(overrides + list(args.overrides)))
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(args.checkpoint, args.data, args.split, args.k, args.exclude_history, args.out,
                         args.chunk_size)
        elif args.command == "analyze":
            if args.kind == "buckets":
                analyze_buckets(args.checkpoint, args.data, args.out, args.buckets)
            elif args.kind == "terms":
                names = args.names.split(",") if args.names else None
                if names is not None and len(names) != len(args.logs):
                    raise CliError("--names needs one name per log")
                analyze_terms(args.logs, args.out, names)
            elif not analyze_gradcheck(args.out, args.seed):
                print("gradient check failed", file=sys.stderr)
                return 1
        elif args.command == "synth":
            from .synthetic import planted_corpus
            corpus.write_tsv(planted_corpus(n_users=args.users, n_items=args.items, seed=args.seed), args.out)
    except (CliError, ConfigError, corpus.CorpusError, OSError, ValueError) as exc:
        print(f"transrec: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
