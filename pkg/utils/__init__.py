# Utils package
from .csv_io import TransactionReader, parse_row, format_row, read_transactions, write_transactions
from .decisions_io import write_decisions, read_decisions

__all__ = [
    "TransactionReader",
    "parse_row",
    "format_row",
    "read_transactions",
    "write_transactions",
    "write_decisions",
    "read_decisions",
]
