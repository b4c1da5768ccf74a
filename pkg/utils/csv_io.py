"""
CSV ingestion / emission for card-transaction files.

Column set of the widely circulated synthetic credit-card CSV:

  User, Card, Year, Month, Day, Time, Amount, Use Chip, Merchant Name,
  Merchant City, Merchant State, Zip, MCC, Errors?, Is Fraud?

"Is Fraud?" is optional. Header variants are handled by a remap document
({"dataset header": "canonical header"}).
"""
from __future__ import annotations

import json
import logging
import re
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

import pandas as pd
from pydantic import ValidationError

from modules.errors import RejectedInput, RowParseError, SinkError
from modules.models import ONLINE_STATE, Channel, ErrorFlag, Transaction, format_dollars, parse_dollars

logger = logging.getLogger(__name__)

COLUMNS = [
    "User", "Card", "Year", "Month", "Day", "Time", "Amount", "Use Chip",
    "Merchant Name", "Merchant City", "Merchant State", "Zip", "MCC", "Errors?", "Is Fraud?",
]
LABEL_COLUMN = "Is Fraud?"
REQUIRED_COLUMNS = COLUMNS[:-1]

ERROR_TEXT: Dict[str, ErrorFlag] = {
    "Bad CVV": ErrorFlag.BAD_CVV,
    "Bad PIN": ErrorFlag.BAD_PIN,
    "Bad Zipcode": ErrorFlag.BAD_ZIP,
    "Insufficient Balance": ErrorFlag.INSUFFICIENT_BALANCE,
    "Technical Glitch": ErrorFlag.TECHNICAL_GLITCH,
    "Bad Expiration": ErrorFlag.BAD_EXPIRATION,
    "Bad Card Number": ErrorFlag.BAD_CARD_NUMBER,
}
FLAG_TEXT = {flag: text for text, flag in ERROR_TEXT.items()}

CHANNEL_TEXT: Dict[str, Channel] = {
    "Chip Transaction": Channel.CHIP,
    "Swipe Transaction": Channel.SWIPE,
    "Online Transaction": Channel.ONLINE,
}
TEXT_CHANNEL = {ch: text for text, ch in CHANNEL_TEXT.items()}

_CARD_RE = re.compile(r"^u(\d+)c(\d+)$")
_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2})$")


# ══════════════════════════════════════════════════════════════════════════════
# ROWS
# ══════════════════════════════════════════════════════════════════════════════
def _field(row: Mapping[str, str], column: str, line: int) -> str:
    try:
        return str(row[column]).strip()
    except KeyError:
        raise RowParseError(f"missing column {column!r}", line=line, column=column) from None


def _errors(text: str, line: int) -> Tuple[frozenset, Tuple[str, ...]]:
    flags, unknown = set(), []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        flag = ERROR_TEXT.get(part)
        if flag is None:
            logger.warning(f"[csv] line {line}: unknown error text {part!r} kept as {ErrorFlag.OTHER}")
            flags.add(ErrorFlag.OTHER)
            unknown.append(part)
        else:
            flags.add(flag)
    return frozenset(flags), tuple(unknown)


def _zip(text: str) -> Optional[str]:
    if not text:
        return None
    if text.endswith(".0"):
        text = text[:-2]
    return text.zfill(5) if text.isdigit() else text


def _card_key(row: Mapping[str, str]) -> str:
    try:
        return f"u{int(str(row['User']).strip())}c{int(str(row['Card']).strip())}"
    except (KeyError, ValueError):
        return ""


def parse_row(row: Mapping[str, str], seq_no: int, line: int) -> Transaction:
    """One CSV record (canonical headers) → Transaction. line is 1-based in the file."""
    try:
        user, card = int(_field(row, "User", line)), int(_field(row, "Card", line))
    except ValueError:
        raise RowParseError("User and Card must be integers", line=line, column="User") from None

    m = _TIME_RE.match(_field(row, "Time", line))
    if not m:
        raise RowParseError("Time must be HH:MM", line=line, column="Time")
    try:
        ts = datetime(
            int(_field(row, "Year", line)), int(_field(row, "Month", line)), int(_field(row, "Day", line)),
            int(m.group(1)), int(m.group(2)),
        )
    except ValueError as e:
        raise RowParseError(f"bad date: {e}", line=line, column="Year") from None

    try:
        amount = parse_dollars(_field(row, "Amount", line))
    except ValueError as e:
        raise RowParseError(str(e), line=line, column="Amount") from None

    chip_text = _field(row, "Use Chip", line)
    channel = CHANNEL_TEXT.get(chip_text)
    if channel is None:
        raise RowParseError(f"unknown Use Chip value {chip_text!r}", line=line, column="Use Chip")

    try:
        mcc = int(_field(row, "MCC", line))
    except ValueError:
        raise RowParseError("MCC must be an integer", line=line, column="MCC") from None

    label: Optional[bool] = None
    if LABEL_COLUMN in row:
        label_text = _field(row, LABEL_COLUMN, line)
        if label_text in ("Yes", "No"):
            label = label_text == "Yes"
        elif label_text:
            raise RowParseError(f"Is Fraud? must be Yes or No, got {label_text!r}", line=line, column=LABEL_COLUMN)

    errors, unknown = _errors(_field(row, "Errors?", line), line)
    try:
        return Transaction(
            card_id=f"u{user}c{card}",
            seq_no=seq_no,
            timestamp=ts,
            amount=amount,
            mcc=mcc,
            merchant_name=_field(row, "Merchant Name", line),
            merchant_city=_field(row, "Merchant City", line),
            merchant_state=_field(row, "Merchant State", line) or ONLINE_STATE,
            zip=_zip(_field(row, "Zip", line)),
            channel=channel,
            errors=errors,
            unknown_errors=unknown,
            fraud_label=label,
        )
    except ValidationError as e:
        err = e.errors()[0]
        column = str(err.get("loc", ("",))[0])
        raise RowParseError(err.get("msg", "invalid value"), line=line, column=column) from None


def format_row(txn: Transaction) -> Dict[str, str]:
    m = _CARD_RE.match(txn.card_id)
    if not m:
        raise RejectedInput(f"card_id {txn.card_id!r} is not of the form u<User>c<Card>")
    known = [FLAG_TEXT[f] for f in ErrorFlag if f in txn.errors and f in FLAG_TEXT]
    ts = txn.timestamp
    return {
        "User": m.group(1),
        "Card": m.group(2),
        "Year": str(ts.year),
        "Month": str(ts.month),
        "Day": str(ts.day),
        "Time": f"{ts.hour:02d}:{ts.minute:02d}",
        "Amount": "$" + format_dollars(txn.amount),
        "Use Chip": TEXT_CHANNEL[txn.channel],
        "Merchant Name": txn.merchant_name,
        "Merchant City": txn.merchant_city,
        "Merchant State": "" if txn.merchant_state == ONLINE_STATE else txn.merchant_state,
        "Zip": txn.zip or "",
        "MCC": str(txn.mcc),
        "Errors?": ",".join(known + list(txn.unknown_errors)),
        "Is Fraud?": "" if txn.fraud_label is None else ("Yes" if txn.fraud_label else "No"),
    }


# ══════════════════════════════════════════════════════════════════════════════
# FILES
# ══════════════════════════════════════════════════════════════════════════════
def load_remap(path: Optional[Path]) -> Dict[str, str]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
        raise RowParseError("remap must be a JSON object of header → header", line=0, column=None)
    return data


_RAGGED = "\x00ragged:"
_TOKENIZER_RE = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def _mark_ragged(width: int):
    def handler(fields: List[str]) -> List[str]:
        return [f"{_RAGGED}{len(fields)}"] + [""] * (width - 1)
    return handler


def _check_width(row: Mapping[str, object], columns: List[str], line: int) -> None:
    """Over-long rows arrive marked, short ones padded with NaN."""
    first = row[columns[0]]
    if isinstance(first, str) and first.startswith(_RAGGED):
        raise RowParseError(f"expected {len(columns)} fields, saw {first[len(_RAGGED):]}", line=line)
    absent = [c for c in columns if not isinstance(row[c], str)]
    if absent:
        raise RowParseError(
            f"expected {len(columns)} fields, saw {len(columns) - len(absent)}", line=line, column=absent[0],
        )


class TransactionReader:
    """
    Streams Transactions out of a CSV file. seq_no is assigned per card in
    file order over accepted rows, starting at seq_start[card] (default 0).

    strict=True aborts on the first bad row; otherwise the row is skipped
    and counted (accepted + skipped = data rows).
    """

    def __init__(
        self,
        path: Path,
        strict: bool = False,
        remap: Optional[Mapping[str, str]] = None,
        chunksize: int = 100_000,
        seq_start: Optional[Mapping[str, int]] = None,
    ):
        self.path = Path(path)
        self.strict = strict
        self.remap = dict(remap or {})
        self.chunksize = chunksize
        self.seq_start = dict(seq_start or {})
        self.accepted = 0
        self.skipped = 0
        self.has_labels = False

    def _read_header(self) -> List[str]:
        try:
            head = pd.read_csv(self.path, nrows=0, dtype=str)
        except pd.errors.EmptyDataError:
            raise RowParseError("empty file, no header", line=1) from None
        columns = list(head.rename(columns=self.remap).columns)
        missing = [c for c in REQUIRED_COLUMNS if c not in columns]
        extra = [c for c in columns if c not in COLUMNS]
        if missing or extra:
            raise RowParseError(f"header mismatch (missing {missing}, unexpected {extra})", line=1)
        self.has_labels = LABEL_COLUMN in columns
        return columns

    def _chunks(self, width: int) -> Iterator[pd.DataFrame]:
        options = dict(dtype=str, keep_default_na=False, chunksize=self.chunksize)
        if not self.strict:
            # over-long rows stay in place, marked, so the line count holds
            options.update(engine="python", on_bad_lines=_mark_ragged(width))
        try:
            for chunk in pd.read_csv(self.path, **options):
                yield chunk.rename(columns=self.remap)
        except pd.errors.ParserError as e:
            m = _TOKENIZER_RE.search(str(e))
            if m is None:
                raise RowParseError(f"unreadable CSV: {str(e).strip()}", line=0) from None
            raise RowParseError(
                f"expected {m.group(1)} fields, saw {m.group(3)}", line=int(m.group(2)),
            ) from None

    def __iter__(self) -> Iterator[Transaction]:
        next_seq: Dict[str, int] = dict(self.seq_start)
        columns = self._read_header()
        width = len(columns)
        line = 1
        for chunk in self._chunks(width):
            for row in chunk.to_dict("records"):
                line += 1
                try:
                    _check_width(row, columns, line)
                    txn = parse_row(row, next_seq.get(_card_key(row), 0), line)
                except RowParseError as e:
                    if self.strict:
                        raise
                    self.skipped += 1
                    logger.warning(f"[csv] skipped {e}")
                    continue
                next_seq[txn.card_id] = txn.seq_no + 1
                self.accepted += 1
                yield txn
        logger.info(f"[csv] {self.path.name}: {self.accepted} rows accepted, {self.skipped} skipped")

    def read_all(self) -> List[Transaction]:
        return list(self)


def read_transactions(
    path: Path, strict: bool = False, remap: Optional[Mapping[str, str]] = None,
) -> List[Transaction]:
    return TransactionReader(path, strict=strict, remap=remap).read_all()


def write_transactions(txns: Iterable[Transaction], path: Path, labels: bool = True) -> int:
    columns = COLUMNS if labels else REQUIRED_COLUMNS
    rows = [format_row(t) for t in txns]
    frame = pd.DataFrame(rows, columns=COLUMNS)[columns]
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise SinkError(f"cannot write {path}: {e}") from e
    return len(rows)
