"""CSV ingestion, config files and the flat result format.

Returns files carry the header ``date,log_return``; the date column may be an
ISO date or an integer index and is not interpreted beyond ordering. Quote
files carry ``maturity_periods,moneyness,rate,price_normalized``. Decimal
parsing is locale independent (dot separator only). Files are written
atomically (temp file plus rename).
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import tempfile
from typing import Mapping

import numpy as np

from .errors import InvariantViolation, NonFiniteValue, ParseError
from .pricing import OptionQuote
from .simulate import ReturnSeries

__all__ = [
    "load_returns",
    "write_returns",
    "load_quotes",
    "write_quotes",
    "write_result",
    "atomic_write_text",
    "read_config",
]

RETURNS_HEADER = ["date", "log_return"]
QUOTES_HEADER = ["maturity_periods", "moneyness", "rate", "price_normalized"]


def _read_rows(path: str, header: list):
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc.strerror}") from exc
    with handle:
        rows = list(csv.reader(handle))
    if not rows or [c.strip() for c in rows[0]] != header:
        raise ParseError(f"expected header {','.join(header)}", line=1)
    data = [(i + 2, row) for i, row in enumerate(rows[1:]) if row]
    if not data:
        raise ParseError("no observations")
    return data


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text.strip())
    except ValueError as exc:
        raise ParseError(f"bad {column} value {text!r}", line=line) from exc
    if not math.isfinite(value):
        raise NonFiniteValue(f"line {line}: non-finite {column} value {text!r}")
    return value


def load_returns(path: str, delta: float) -> ReturnSeries:
    """Read a return series; the period length comes from configuration."""
    values = []
    for line, row in _read_rows(path, RETURNS_HEADER):
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, found {len(row)}", line=line)
        values.append(_parse_float(row[1], line, "log_return"))
    return ReturnSeries(np.array(values), delta)


def write_returns(path: str, series: ReturnSeries) -> None:
    lines = [",".join(RETURNS_HEADER)]
    lines += [f"{i + 1},{float(r)!r}" for i, r in enumerate(series.returns)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_quotes(path: str) -> dict:
    """Read option quotes grouped by maturity, validating each record."""
    groups: dict = {}
    for line, row in _read_rows(path, QUOTES_HEADER):
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, found {len(row)}", line=line)
        k_raw = row[0].strip()
        try:
            k = int(k_raw)
        except ValueError as exc:
            raise ParseError(f"bad maturity {k_raw!r}", line=line) from exc
        m = _parse_float(row[1], line, "moneyness")
        rate = _parse_float(row[2], line, "rate")
        c = _parse_float(row[3], line, "price_normalized")
        try:
            quote = OptionQuote(moneyness=m, price_normalized=c,
                                maturity_periods=k, rate=rate)
        except ValueError as exc:
            raise InvariantViolation(f"line {line}: {exc}") from exc
        groups.setdefault(k, []).append(quote)
    return {k: tuple(v) for k, v in sorted(groups.items())}


def write_quotes(path: str, groups: Mapping[int, tuple]) -> None:
    lines = [",".join(QUOTES_HEADER)]
    for k in sorted(groups):
        for q in groups[k]:
            lines.append(f"{k},{float(q.moneyness)!r},{float(q.rate)!r},{float(q.price_normalized)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_result(path: str, theta_items, se_items, objective: float,
                 seed: int, excluded_replicates: int = 0) -> None:
    """Flat ``key = value`` result file."""
    lines = []
    for name, value in theta_items:
        lines.append(f"theta.{name} = {float(value)!r}")
    for name, value in se_items:
        lines.append(f"se.{name} = {float(value)!r}" if value is not None
                     else f"se.{name} = nan")
    lines.append(f"objective = {float(objective)!r}")
    lines.append(f"seed = {seed}")
    lines.append(f"excluded_replicates = {excluded_replicates}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read_config(path: str) -> dict:
    """Flat ``key = value`` sections; returns a ``{section: {key: str}}`` map."""
    parser = configparser.ConfigParser(inline_comment_prefixes=None)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ParseError(f"bad config: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}
