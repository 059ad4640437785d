"""Command-line entry point: synthgen, extract, train, eval, infer, baseline-mlp.

Errors go to stderr with a nonzero exit code; reports go to files in the
run directory. A typical run:

    affdet synthgen --out data --n-per-class 50 --seed 1
    affdet extract  --manifest data/manifest.csv --config run.json --out run
    affdet train    --config run.json --out run
    affdet eval     --checkpoint run/checkpoint.affc --out run --split test
    affdet infer    --checkpoint run/checkpoint.affc data/wavs/fake_0000.wav
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig
from .pipeline import (
    run_baseline_mlp,
    run_eval,
    run_extract,
    run_infer,
    run_synthgen,
    run_train,
)
from .synth import PROFILES, SynthTaskSpec


def _load_config(path) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _cmd_synthgen(args) -> int:
    fractions = tuple(float(f) for f in args.split_fractions.split(","))
    spec = SynthTaskSpec(
        n_per_class=args.n_per_class,
        sample_rate=args.sample_rate,
        seed=args.seed,
        profile=args.profile,
        split_fractions=fractions,
    )
    manifest = run_synthgen(spec, args.out)
    print(f"wrote {2 * spec.n_per_class} clips and manifest {manifest}")
    return 0


def _cmd_extract(args) -> int:
    cfg = _load_config(args.config)
    index_path, n_ok, failures = run_extract(args.manifest, cfg, args.out, threads=args.threads)
    print(f"extracted {n_ok} segments -> {index_path}")
    if failures:
        print(f"{len(failures)} file(s) failed:", file=sys.stderr)
        for path, status in failures:
            print(f"  {path}: {status}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    checkpoint, log_lines = run_train(cfg, args.out, seed=args.seed)
    for line in log_lines:
        print(line)
    print(f"checkpoint -> {checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    report = run_eval(args.checkpoint, args.out, split=args.split,
                      threshold=args.threshold, pool=args.pool)
    print(report.to_text(), end="")
    return 0


def _cmd_infer(args) -> int:
    scores, pooled = run_infer(args.checkpoint, args.wav)
    for i, score in enumerate(scores):
        print(f"segment {i}: fake probability {score:.4f}")
    print(f"file score: {pooled:.4f}")
    return 0


def _cmd_baseline_mlp(args) -> int:
    cfg = _load_config(args.config)
    report = run_baseline_mlp(cfg, args.out, feature_kind=args.feature, split=args.split)
    print(report.to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affdet",
                                     description="synthetic-speech detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthgen", help="generate the synthetic WAV corpus and manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=PROFILES, default="highband")
    p.add_argument("--split-fractions", default="0.7,0.15,0.15",
                   help="train,test,eval fractions per class")
    p.set_defaults(func=_cmd_synthgen)

    p = sub.add_parser("extract", help="segment audio and write feature files + index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="run config JSON (defaults apply when omitted)")
    p.add_argument("--out", required=True, help="run directory for features and index.csv")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train the configured model on split=train")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="run directory holding index.csv")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a split and write report files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="run directory holding index.csv")
    p.add_argument("--split", default="test", choices=("train", "test", "eval"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--pool", default="segments", choices=("segments", "files"),
                   help="score 1-second segments or mean-pool per file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="score one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav", help="path to a WAV file (>= 1 second)")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("baseline-mlp", help="train and evaluate the small MLP baseline")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="run directory holding index.csv")
    p.add_argument("--feature", default="mfcc", choices=("mfcc", "lfcc"))
    p.add_argument("--split", default="test", choices=("train", "test", "eval"))
    p.set_defaults(func=_cmd_baseline_mlp)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
