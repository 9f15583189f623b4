"""``obfugraph`` command line."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl


def _parser() -> argparse.ArgumentParser:
    def add_globals(parser, suppress: bool):
        # after the subcommand, globals only override what was given before it
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--config", default=d(None), help="pipeline config (JSON)")
        parser.add_argument("--workers", type=int, default=d(1),
                            help="worker pool size for batch stages")
        parser.add_argument("--seed", type=int, default=d(None),
                            help="override partition, training and corpus seeds")
        parser.add_argument("--json", action="store_true", default=d(False),
                            help="print a JSON summary on stdout")
        parser.add_argument("-v", "--verbose", action="store_true", default=d(False))

    p = argparse.ArgumentParser(prog="obfugraph",
                                description="Malicious JavaScript detection pipeline.")
    add_globals(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    add_globals(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    s = sub.add_parser("score", help="write the obfuscation entropy report")
    s.add_argument("manifest")
    s.add_argument("--out", help="CSV path (default <out_dir>/scores.csv)")

    s = sub.add_parser("deob", help="deobfuscate gated files")
    s.add_argument("manifest")
    s.add_argument("--mode", choices=["llm", "rules", "auto"])
    s.add_argument("--out", help="output directory (default <out_dir>/deob)")

    s = sub.add_parser("build", help="build graph records and partitions")
    s.add_argument("manifest")
    s.add_argument("--out", help="output directory (default <out_dir>/graphs)")

    s = sub.add_parser("train", help="train a model on built records")
    s.add_argument("--index", help="graph index (default <out_dir>/graphs/index.jsonl)")
    s.add_argument("--out", help="output directory (default <out_dir>/model)")

    s = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    s.add_argument("--index", help="graph index (default: the one used for training)")
    s.add_argument("--out", help="output directory (default: next to the checkpoint)")

    s = sub.add_parser("predict", help="classify one file")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("path")

    s = sub.add_parser("gen-corpus", help="write a synthetic labelled corpus")
    s.add_argument("n_benign", type=int)
    s.add_argument("n_malicious", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--pack-prob", type=float, default=0.5)
    s.add_argument("--obfuscate-prob", type=float, default=0.5)
    return p


def _dispatch(args, cfg: pl.PipelineConfig) -> dict:
    out_dir = Path(cfg.out_dir)
    if args.command == "score":
        return pl.run_score(args.manifest, args.out or out_dir / "scores.csv", cfg, args.workers)
    if args.command == "deob":
        if args.mode:
            cfg = dataclasses.replace(cfg, deob=dataclasses.replace(cfg.deob, mode=args.mode))
        return pl.run_deob(args.manifest, args.out or out_dir / "deob", cfg, args.workers)
    if args.command == "build":
        return pl.run_build(args.manifest, args.out or out_dir / "graphs", cfg, args.workers)
    if args.command == "train":
        def progress(rec):
            logging.getLogger("obfugraph.train").info(
                "epoch %d loss %.4f val_f1 %.4f val_auc %.4f",
                rec.epoch, rec.train_loss, rec.val_f1, rec.val_auc)
        return pl.run_train(args.index or out_dir / "graphs" / "index.jsonl",
                            args.out or out_dir / "model", cfg, progress)
    if args.command == "eval":
        return pl.run_eval(args.checkpoint, args.split, args.out, args.index)
    if args.command == "predict":
        return pl.run_predict(args.checkpoint, args.path)
    if args.command == "gen-corpus":
        from .corpus import CorpusOptions
        seed = 0 if args.seed is None else args.seed
        return pl.run_gen_corpus(args.n_benign, args.n_malicious, seed, args.out,
                                 CorpusOptions(args.pack_prob, args.obfuscate_prob))
    raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pl.load_config(args.config).with_seed(args.seed)
        summary = _dispatch(args, cfg)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        reason = f"{type(exc).__name__}: {exc}"
        print(f"obfugraph {args.command}: {reason}", file=sys.stderr)
        if args.json:
            print(json.dumps({"command": args.command, "exit": 1, "error": reason}))
        return 1
    if args.json:
        print(json.dumps({"command": args.command, "exit": 0, **summary}, default=str))
    elif args.command == "predict":
        print(json.dumps(summary))
    else:
        print(f"obfugraph {args.command}: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
