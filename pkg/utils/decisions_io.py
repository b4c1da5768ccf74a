"""
JSONL decision sink / source. One Decision per line, keys in field order,
money as two-decimal dollar strings. Any prefix of the output is valid JSONL.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import IO, Iterable, List

from pydantic import ValidationError

from modules.errors import RowParseError, SinkError
from modules.models import Decision

logger = logging.getLogger(__name__)


def decision_line(decision: Decision) -> str:
    return decision.model_dump_json() + "\n"


def write_decisions(decisions: Iterable[Decision], sink: IO[str]) -> int:
    """Write decisions to an open text sink; returns the number of lines written."""
    n = 0
    try:
        for decision in decisions:
            sink.write(decision_line(decision))
            n += 1
        sink.flush()
    except OSError as e:
        raise SinkError(f"decision sink failed after {n} lines: {e}") from e
    return n


def read_decisions(path: Path) -> List[Decision]:
    out: List[Decision] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(Decision.model_validate_json(line))
            except ValidationError as e:
                raise RowParseError(f"invalid decision: {e.errors()[0].get('msg')}", line=line_no) from e
    logger.info(f"[io] read {len(out)} decisions from {path}")
    return out
