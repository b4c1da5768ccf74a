"""
ATTACKGUARD - Command-line entry point
Fraud-attack detection over card transaction streams.

  detect    CSV → decisions JSONL (+ summary, + EvalReport when labeled)
  simulate  synthetic labeled CSV from generator params and an attack list
  evaluate  decisions JSONL vs labeled CSV → EvalReport
  sweep     parameter grid → table (CSV + JSON)
  plotdata  per-transaction amount / interval / action for one card

Exit code 0 on success, 2 on any handled error (one JSON line on stderr).
"""
import os as _os
from dotenv import load_dotenv
load_dotenv(_os.path.join(_os.path.dirname(_os.path.abspath(__file__)), '.env'))

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Type, TypeVar

from pydantic import BaseModel, TypeAdapter, ValidationError

from modules.config import load_config
from modules.errors import AttackGuardError, ConfigError, SinkError
from modules.models import Decision, Reason, Transaction
from engines.detection_engine import DetectionEngine
from lab.evaluation import evaluate, plot_frame
from lab.generator import AttackSpec, GenParams, generate, inject_attacks
from lab.sweep import SweepGrid, sweep, write_sweep_table
from utils.csv_io import TransactionReader, load_remap, read_transactions, write_transactions
from utils.decisions_io import read_decisions, write_decisions

logger = logging.getLogger("attackguard")

M = TypeVar("M", bound=BaseModel)
T = TypeVar("T")


# ══════════════════════════════════════════════════════════════════════════════
# HELPERS
# ══════════════════════════════════════════════════════════════════════════════
def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"not valid JSON ({e.msg} at line {e.lineno})", str(path)) from e


def _load_model(path: Path, model: Type[M]) -> M:
    try:
        return model.model_validate(_read_json(path))
    except ValidationError as e:
        err = e.errors()[0]
        key = ".".join(str(p) for p in err.get("loc", ())) or str(path)
        raise ConfigError(err.get("msg", "invalid value"), key) from e


def _load_attacks(path: Optional[Path]) -> List[AttackSpec]:
    if path is None:
        return []
    try:
        return TypeAdapter(List[AttackSpec]).validate_python(_read_json(path))
    except ValidationError as e:
        err = e.errors()[0]
        key = ".".join(str(p) for p in err.get("loc", ())) or str(path)
        raise ConfigError(err.get("msg", "invalid value"), key) from e


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=False))


# ══════════════════════════════════════════════════════════════════════════════
# SUBCOMMANDS
# ══════════════════════════════════════════════════════════════════════════════
def _collect(items: Iterable[T], into: List[T]) -> Iterator[T]:
    for item in items:
        into.append(item)
        yield item


def cmd_detect(args) -> int:
    seq_start = {}
    if args.resume:
        engine = DetectionEngine.restore(Path(args.resume).read_bytes())
        if args.config:
            logger.warning("[cli] --config ignored: configuration comes from the resumed checkpoint")
        # continue each card after its last processed seq_no
        seq_start = {
            card_id: cs.last_seq_no + 1
            for card_id, cs in engine.state.cards.items() if cs.last_seq_no is not None
        }
    else:
        engine = DetectionEngine(load_config(args.config))

    reader = TransactionReader(
        args.input, strict=args.strict, remap=load_remap(args.remap), seq_start=seq_start,
    )
    txns: List[Transaction] = []
    decisions: List[Decision] = []
    try:
        sink = open(args.out, "w", encoding="utf-8")
    except OSError as e:
        raise SinkError(f"cannot write {args.out}: {e}") from e
    with sink:
        # each line is written as soon as its transaction is decided
        write_decisions(_collect(engine.iter_decisions(_collect(reader, txns)), decisions), sink)

    if args.checkpoint:
        try:
            Path(args.checkpoint).write_bytes(engine.checkpoint())
        except OSError as e:
            raise SinkError(f"cannot write checkpoint {args.checkpoint}: {e}") from e

    summary = {
        "rows_accepted": reader.accepted,
        "rows_skipped": reader.skipped,
        "counters": engine.counters.model_dump(),
        "attack_starts": sum(1 for d in decisions if Reason.ATTACK_START in d.reasons),
    }
    if reader.has_labels and all(t.fraud_label is not None for t in txns):
        summary["evaluation"] = evaluate(decisions, txns).model_dump(mode="json")
    _emit(summary)
    return 0


def cmd_simulate(args) -> int:
    gen = _load_model(args.params, GenParams)
    if args.seed is not None:
        gen = gen.model_copy(update={"seed": args.seed})
    stream = generate(gen)
    txns = inject_attacks(stream.transactions, _load_attacks(args.attacks), gen.seed, stream.personas)
    n = write_transactions(txns, args.out)
    logger.info(f"[cli] wrote {n} transactions to {args.out}")
    _emit({"transactions": n, "fraud": sum(1 for t in txns if t.fraud_label), "seed": gen.seed})
    return 0


def cmd_evaluate(args) -> int:
    decisions = read_decisions(args.decisions)
    truth = read_transactions(args.truth, strict=True, remap=load_remap(args.remap))
    _emit(evaluate(decisions, truth).model_dump(mode="json"))
    return 0


def cmd_sweep(args) -> int:
    grid = _load_model(args.grid, SweepGrid)
    gen = _load_model(args.params, GenParams)
    base = load_config(args.config) if args.config else None
    table = sweep(grid, gen, _load_attacks(args.attacks), base=base, max_workers=args.workers)
    csv_path, json_path = write_sweep_table(table, args.out)
    _emit({"grid_points": len(table), "csv": str(csv_path), "json": str(json_path)})
    return 0


def cmd_plotdata(args) -> int:
    decisions = read_decisions(args.decisions)
    truth = read_transactions(args.truth, strict=True, remap=load_remap(args.remap))
    frame = plot_frame(decisions, truth, args.card)
    try:
        frame.to_csv(args.out, index=False)
    except OSError as e:
        raise SinkError(f"cannot write {args.out}: {e}") from e
    _emit({"card": args.card, "rows": len(frame), "out": str(args.out)})
    return 0


# ══════════════════════════════════════════════════════════════════════════════
# PARSER
# ══════════════════════════════════════════════════════════════════════════════
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attackguard", description="Card fraud-attack detection engine")
    parser.add_argument(
        "--log-level", default=_os.getenv("ATTACKGUARD_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run detection over a transaction CSV")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--config", type=Path, default=None, help="dotenv config (default: config/defaults.env)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--checkpoint", type=Path, default=None, help="write engine state here after the run")
    p.add_argument("--resume", type=Path, default=None, help="start from a previously written checkpoint")
    p.add_argument("--strict", action="store_true", help="abort on the first malformed row")
    p.add_argument("--remap", type=Path, default=None, help="JSON header remap")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="generate a labeled synthetic CSV")
    p.add_argument("--params", required=True, type=Path)
    p.add_argument("--attacks", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score decisions against labels")
    p.add_argument("--decisions", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--remap", type=Path, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="parameter sweep on a generated stream")
    p.add_argument("--grid", required=True, type=Path)
    p.add_argument("--params", required=True, type=Path)
    p.add_argument("--attacks", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None, help="base config for keys not in the grid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plotdata", help="per-transaction interval data for one card")
    p.add_argument("--decisions", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--card", required=True)
    p.add_argument("--remap", type=Path, default=None)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except AttackGuardError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
    except FileNotFoundError as e:
        print(json.dumps({"error": "FileNotFoundError", "message": str(e)}), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
