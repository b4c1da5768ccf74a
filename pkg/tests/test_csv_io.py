from __future__ import annotations

import json
from datetime import datetime

import pytest

from lab.generator import AttackSpec, GenParams, generate, inject_attacks
from modules.errors import RowParseError
from modules.models import ONLINE_STATE, Channel, ErrorFlag
from utils.csv_io import (
    COLUMNS, TransactionReader, format_row, load_remap, parse_row, read_transactions, write_transactions,
)

HEADER = ",".join(COLUMNS)


def _row(**over) -> dict:
    row = {
        "User": "0", "Card": "1", "Year": "2002", "Month": "9", "Day": "1", "Time": "06:21",
        "Amount": "$134.09", "Use Chip": "Swipe Transaction", "Merchant Name": "3527213246127876953",
        "Merchant City": "La Verne", "Merchant State": "CA", "Zip": "91750.0", "MCC": "5300",
        "Errors?": "", "Is Fraud?": "No",
    }
    row.update(over)
    return row


def test_parse_row_basics() -> None:
    t = parse_row(_row(), seq_no=0, line=2)
    assert t.card_id == "u0c1"
    assert t.timestamp == datetime(2002, 9, 1, 6, 21)
    assert t.amount == 13409
    assert t.channel == Channel.SWIPE
    assert t.zip == "91750"
    assert t.mcc == 5300
    assert t.errors == frozenset()
    assert t.fraud_label is False


def test_amount_text() -> None:
    assert parse_row(_row(Amount="$57.40"), 0, 2).amount == 5740


def test_error_text_mapping() -> None:
    t = parse_row(_row(**{"Errors?": "Technical Glitch,Bad CVV"}), 0, 2)
    assert t.errors == {ErrorFlag.TECHNICAL_GLITCH, ErrorFlag.BAD_CVV}
    t = parse_row(_row(**{"Errors?": "Bad Zipcode,Insufficient Balance,"}), 0, 2)
    assert t.errors == {ErrorFlag.BAD_ZIP, ErrorFlag.INSUFFICIENT_BALANCE}


def test_unknown_error_kept_with_warning(caplog) -> None:
    t = parse_row(_row(**{"Errors?": "Bad PIN,Card Melted"}), 0, 7)
    assert t.errors == {ErrorFlag.BAD_PIN, ErrorFlag.OTHER}
    assert t.unknown_errors == ("Card Melted",)
    assert "line 7" in caplog.text


def test_online_row_without_state() -> None:
    t = parse_row(_row(**{"Use Chip": "Online Transaction", "Merchant State": "", "Zip": "", "Merchant City": "ONLINE"}), 0, 2)
    assert t.merchant_state == ONLINE_STATE
    assert t.zip is None
    assert format_row(t)["Merchant State"] == ""


def test_fraud_column_optional() -> None:
    row = _row()
    del row["Is Fraud?"]
    assert parse_row(row, 0, 2).fraud_label is None
    assert parse_row(_row(**{"Is Fraud?": "Yes"}), 0, 2).fraud_label is True


@pytest.mark.parametrize("column,value", [
    ("Amount", "$-77.00"), ("Amount", "lots"), ("Time", "6h21"), ("Month", "13"), ("Use Chip", "Tap"),
    ("MCC", "groceries"), ("Is Fraud?", "Maybe"), ("Zip", "ABCDE"),
])
def test_bad_rows_carry_line(column: str, value: str) -> None:
    with pytest.raises(RowParseError) as exc:
        parse_row(_row(**{column: value}), 0, 12)
    assert exc.value.line == 12
    assert exc.value.to_dict()["line"] == 12


def _write_csv(path, rows, header=HEADER):
    lines = [header]
    for r in rows:
        lines.append(",".join(f'"{v}"' for v in r.values()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_reader_lenient_counts_and_keeps_good_rows(tmp_path) -> None:
    rows = [_row(Time="06:21"), _row(Amount="oops"), _row(Time="07:00"), _row(User="1", Time="08:00")]
    path = tmp_path / "in.csv"
    _write_csv(path, rows)
    reader = TransactionReader(path)
    txns = reader.read_all()
    assert reader.accepted == 3 and reader.skipped == 1
    assert reader.accepted + reader.skipped == len(rows)
    assert [(t.card_id, t.seq_no) for t in txns] == [("u0c1", 0), ("u0c1", 1), ("u1c1", 0)]
    assert reader.has_labels


def test_reader_strict_aborts(tmp_path) -> None:
    path = tmp_path / "in.csv"
    _write_csv(path, [_row(), _row(Amount="oops")])
    with pytest.raises(RowParseError) as exc:
        read_transactions(path, strict=True)
    assert exc.value.line == 3


def _write_ragged(path) -> None:
    good = ",".join(f'"{v}"' for v in _row().values())
    short = ",".join(f'"{v}"' for v in list(_row(Time="07:00").values())[:-2])
    lines = [HEADER, good, good + ',"extra"', short, good.replace("06:21", "09:30")]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_reader_lenient_skips_ragged_rows(tmp_path, caplog) -> None:
    path = tmp_path / "in.csv"
    _write_ragged(path)
    reader = TransactionReader(path)
    txns = reader.read_all()
    assert reader.accepted == 2 and reader.skipped == 2
    assert [t.timestamp.hour for t in txns] == [6, 9]
    assert [t.seq_no for t in txns] == [0, 1]
    assert "line 3: expected 15 fields, saw 16" in caplog.text
    assert "line 4: expected 15 fields, saw 13" in caplog.text


def test_reader_strict_reports_ragged_line(tmp_path) -> None:
    path = tmp_path / "in.csv"
    _write_ragged(path)
    with pytest.raises(RowParseError) as exc:
        read_transactions(path, strict=True)
    assert exc.value.line == 3
    assert "expected 15 fields, saw 16" in str(exc.value)


def test_reader_strict_reports_short_row(tmp_path) -> None:
    path = tmp_path / "in.csv"
    short = ",".join(f'"{v}"' for v in list(_row().values())[:-1])
    path.write_text("\n".join([HEADER, short]) + "\n", encoding="utf-8")
    with pytest.raises(RowParseError) as exc:
        read_transactions(path, strict=True)
    assert exc.value.line == 2
    assert exc.value.column == "Is Fraud?"


def test_reader_rejects_empty_file(tmp_path) -> None:
    path = tmp_path / "in.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(RowParseError) as exc:
        read_transactions(path)
    assert exc.value.line == 1


def test_reader_rejects_wrong_header(tmp_path) -> None:
    path = tmp_path / "in.csv"
    _write_csv(path, [_row()], header=HEADER.replace("Use Chip", "Chip Used"))
    with pytest.raises(RowParseError):
        read_transactions(path)


def test_reader_with_remap(tmp_path) -> None:
    renamed = HEADER.replace("Use Chip", "Chip Used").replace("Errors?", "Errors")
    path = tmp_path / "in.csv"
    lines = [renamed, ",".join(f'"{v}"' for v in _row().values())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    remap_path = tmp_path / "remap.json"
    remap_path.write_text(json.dumps({"Chip Used": "Use Chip", "Errors": "Errors?"}), encoding="utf-8")
    txns = read_transactions(path, remap=load_remap(remap_path))
    assert len(txns) == 1
    assert txns[0].channel == Channel.SWIPE


def test_generated_rows_round_trip(tmp_path) -> None:
    gen = GenParams(seed=12, n_cards=5, txns_per_card=200)
    stream = generate(gen)
    txns = inject_attacks(
        stream.transactions,
        [AttackSpec(card_id="u2c0", start_time=stream.transactions[450].timestamp)],
        gen.seed, stream.personas,
    )
    path = tmp_path / "gen.csv"
    assert write_transactions(txns, path) == len(txns)
    back = read_transactions(path, strict=True)
    by_key = {(t.card_id, t.seq_no): t for t in back}
    assert len(by_key) == len(txns)
    for t in txns:
        assert by_key[(t.card_id, t.seq_no)] == t


@pytest.mark.slow
def test_round_trip_ten_thousand_rows(tmp_path) -> None:
    stream = generate(GenParams(seed=13, n_cards=10, txns_per_card=1000))
    path = tmp_path / "gen.csv"
    write_transactions(stream.transactions, path)
    back = read_transactions(path, strict=True)
    assert sorted(back, key=lambda t: (t.card_id, t.seq_no)) == stream.transactions
