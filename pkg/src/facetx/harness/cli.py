"""Command line entry point: ``python -m facetx <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from .. import tensor as T
from ..metrics import EvalReport
from ..synthdata import read_dataset, save_png, write_dataset
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config
from .driver import DataError, NaNAbort, evaluate, gradcheck, load_pairs, swap, train

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NAN = 4
EXIT_CHECKPOINT = 5


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed)) if v is not None}
    cfg = cfg.override(**overrides)
    state = train(cfg, resume=args.resume)
    print(f"trained {state.step} steps; checkpoint {cfg.ckpt_path}; metrics {cfg.metrics_path}")
    return EXIT_OK


def _pairs_for(state, data):
    path = data or state.config.data_path
    if path:
        try:
            return read_dataset(path)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from None
    return load_pairs(state.config)


def _cmd_swap(args) -> int:
    state = load_checkpoint(args.ckpt)
    pairs = _pairs_for(state, args.data)
    for idx in (args.source, args.target):
        if not 0 <= idx < len(pairs):
            raise DataError(f"pair index {idx} out of range (dataset has {len(pairs)})")
    out, row = swap(state.model, pairs[args.source].source, pairs[args.target].target)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    T.save_tensor(d / "swap.bin", out)
    save_png(d / "swap.png", out)
    rep = EvalReport()
    rep.add(*row)
    rep.write(d)
    print(rep.to_tsv(), end="")
    return EXIT_OK


def _cmd_eval(args) -> int:
    state = load_checkpoint(args.ckpt)
    rep = evaluate(state.model, _pairs_for(state, args.data))
    if args.out:
        rep.write(args.out)
    print(json.dumps({"count": len(rep), "mean": rep.means()}, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    rep = gradcheck(cfg, max_entries=args.max_entries)
    print(rep)
    return EXIT_OK if rep.passed else EXIT_FAILED_CHECK


def _cmd_gen_data(args) -> int:
    write_dataset(args.out, args.n, args.seed, size=args.size, png=args.png)
    print(f"wrote {args.n} pairs to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facetx", description="Desk-scale transformer face swapping.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", action="store_true", help="continue from config.ckpt_path")
    t.set_defaults(func=_cmd_train)

    s = sub.add_parser("swap", help="swap pair[source].source onto pair[target].target")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--target", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--data", help="dataset directory (default: the training data)")
    s.set_defaults(func=_cmd_swap)

    e = sub.add_parser("eval", help="evaluate every pair of a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="directory for eval.tsv and eval_summary.json")
    e.set_defaults(func=_cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check at 8x8")
    g.add_argument("--config", required=True)
    g.add_argument("--max-entries", type=int, help="entries sampled per parameter tensor")
    g.set_defaults(func=_cmd_gradcheck)

    d = sub.add_parser("gen-data", help="render a synthetic swap dataset")
    d.add_argument("--out", required=True)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--size", type=int, default=64)
    d.add_argument("--png", action="store_true", help="also write 8-bit PNG previews")
    d.set_defaults(func=_cmd_gen_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NaNAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NAN
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
