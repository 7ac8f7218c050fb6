"""Command-line front end.

    fedsim run   --config run.cfg [--set key=value ...] [--out DIR]
    fedsim sweep --config run.cfg --vary client.lr=0.1..0.9:0.2 [--out DIR]
    fedsim eval  --checkpoint DIR/checkpoint.bin --config run.cfg [--split test]

Exit codes: 0 success, 2 configuration problems, 3 data problems,
4 numeric/shape failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import apply_overrides, build_sim_config, parse_config_text
from .corpus import load_corpus
from .errors import ConfigError, DataError, FedsimError, NumericalError, ShapeError
from .params import ParamSet
from .simulation import evaluate, run_simulation

__all__ = ["main"]


def _exit_code(exc: FedsimError) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, (NumericalError, ShapeError)):
        return 4
    return 1


def _read_pairs(args: argparse.Namespace) -> dict[str, str]:
    pairs: dict[str, str] = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        pairs = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
    if args.set:
        pairs = apply_overrides(pairs, args.set)
    return pairs


def _parse_vary(spec: str) -> tuple[str, list[str]]:
    """`key=a..b[:step]` or `key=v1,v2,...` -> (key, value strings)."""
    key, sep, body = spec.partition("=")
    key, body = key.strip(), body.strip()
    if not sep or not key or not body:
        raise ConfigError(f"--vary must look like key=values, got {spec!r}")
    if ".." in body:
        span, _, step_s = body.partition(":")
        lo_s, _, hi_s = span.partition("..")
        try:
            if any("." in s or "e" in s.lower() for s in (lo_s, hi_s, step_s) if s):
                lo, hi = float(lo_s), float(hi_s)
                step = float(step_s) if step_s else 0.1
            else:
                lo, hi = int(lo_s), int(hi_s)
                step = int(step_s) if step_s else 1
        except ValueError as exc:
            raise ConfigError(f"--vary range: {exc}") from None
        if step <= 0:
            raise ConfigError(f"--vary step must be positive, got {step}")
        if hi < lo:
            raise ConfigError(f"--vary range is empty: {body!r}")
        n = int((hi - lo) / step + 1e-9) + 1
        values = [lo + i * step for i in range(n)]
        return key, [repr(v) if isinstance(v, float) else str(v) for v in values]
    return key, [v.strip() for v in body.split(",") if v.strip()]


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.4f}"


def _cmd_run(args: argparse.Namespace) -> int:
    pairs = _read_pairs(args)
    if args.out is not None:
        pairs["out_dir"] = args.out
    cfg = build_sim_config(pairs)
    result = run_simulation(cfg)
    best = result.best_round()
    print(
        f"strategy={cfg.aggregator.strategy} rounds={result.rounds_run} "
        f"vocab={result.vocab_size} "
        f"final_valid_ppl={_fmt(result.final_valid_ppl)} "
        f"final_test_ppl={_fmt(result.final_test_ppl)} "
        f"best_round={best.round if best else '-'} "
        f"best_test_ppl={_fmt(best.test_ppl if best else None)}"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    key, values = _parse_vary(args.vary)
    base_pairs = _read_pairs(args)
    out_root = Path(args.out) if args.out else None
    rows = []
    for value in values:
        pairs = dict(base_pairs)
        pairs[key] = value
        if out_root is not None:
            sub = f"{key.replace('.', '_')}={value}"
            pairs["out_dir"] = str(out_root / sub)
        cfg = build_sim_config(pairs)
        result = run_simulation(cfg)
        rows.append((value, result.rounds_run, result.final_valid_ppl, result.final_test_ppl))
        print(
            f"{key}={value} rounds={result.rounds_run} "
            f"final_valid_ppl={_fmt(result.final_valid_ppl)} "
            f"final_test_ppl={_fmt(result.final_test_ppl)}"
        )
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        with (out_root / "sweep.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([key, "rounds", "final_valid_ppl", "final_test_ppl"])
            for value, rounds, vppl, tppl in rows:
                writer.writerow(
                    [
                        value,
                        rounds,
                        "" if vppl is None else f"{vppl:.6f}",
                        "" if tppl is None else f"{tppl:.6f}",
                    ]
                )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    pairs = _read_pairs(args)
    cfg = build_sim_config(pairs)
    params = ParamSet.load(args.checkpoint)
    data = load_corpus(
        cfg.train_path, cfg.valid_path, cfg.test_path, max_vocab=cfg.model.vocab_size
    )
    model_cfg = dataclasses.replace(
        cfg.model, vocab_size=len(data.vocab.id_to_token)
    )
    stream = data.valid if args.split == "valid" else data.test
    ppl = evaluate(params, stream, model_cfg, cfg.eval_batch_size)
    print(json.dumps({"split": args.split, "ppl": ppl}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim", description="federated GRU language model simulator"
    )
    parser.add_argument("--verbose", action="store_true", help="log per-round progress")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    p_run = sub.add_parser("run", parents=[common], help="run one simulation")
    p_run.add_argument("--out", help="artifact directory (overrides out_dir)")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser(
        "sweep", parents=[common], help="run one simulation per value of a key"
    )
    p_sweep.add_argument(
        "--vary",
        required=True,
        metavar="KEY=LO..HI[:STEP] | KEY=V1,V2,...",
        help="config key and the values to sweep",
    )
    p_sweep.add_argument("--out", help="directory for per-value artifacts + sweep.csv")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_eval = sub.add_parser(
        "eval", parents=[common], help="evaluate a saved checkpoint"
    )
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint.bin path")
    p_eval.add_argument("--split", choices=["valid", "test"], default="test")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except FedsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
