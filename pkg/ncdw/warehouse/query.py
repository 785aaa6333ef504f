"""
Predicate scans over fact tables joined with their dimensions.

A predicate is a conjunction of conditions, written either as text
(`district = dhaka and month_of_year in (7, 8) and result_positive = true`)
or as a mapping of column to required value.
"""
import logging
import operator
import re
from dataclasses import dataclass

import pandas as pd

from ncdw.core.errors import QueryError
from ncdw.core.text import normalize_text
from ncdw.warehouse.schema import DIMENSIONS

logger = logging.getLogger(__name__)

OPERATORS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<op><=|>=|!=|=|<|>)|(?P<open>\()|(?P<close>\))|(?P<comma>,)"
    r"|'(?P<single>[^']*)'|\"(?P<double>[^\"]*)\"|(?P<word>[^\s=<>!(),'\"]+))"
)

_FOLDED = frozenset(column for schema in DIMENSIONS.values() for column in schema.folded_columns)


@dataclass(frozen=True)
class Condition:
    column: str
    op: str
    value: object

    def __str__(self):
        if self.op == "in":
            return f"{self.column} in ({', '.join(map(str, self.value))})"
        return f"{self.column} {self.op} {self.value}"


def _tokenize(text):
    tokens, position = [], 0
    text = text.strip()
    while position < len(text):
        match = _TOKEN.match(text, position)
        if not match or match.end() == position:
            raise QueryError(f"cannot parse predicate near {text[position:]!r}")
        position = match.end()
        kind = match.lastgroup
        if kind in ("single", "double"):
            tokens.append(("value", match.group(kind)))
        else:
            tokens.append((kind, match.group(kind)))
    return tokens


def parse_predicate(text):
    """
    Parse `col op value [and col op value ...]` into Conditions.

    Args:
        text: predicate text; empty or None means no constraint

    Returns:
        list: Condition objects, all of which must hold
    """
    if text is None or not str(text).strip():
        return []
    tokens = _tokenize(str(text))
    conditions = []
    i = 0

    def take(*kinds):
        nonlocal i
        if i >= len(tokens) or tokens[i][0] not in kinds:
            found = tokens[i][1] if i < len(tokens) else "end of predicate"
            raise QueryError(f"predicate: expected {' or '.join(kinds)}, found {found!r}")
        i += 1
        return tokens[i - 1][1]

    while True:
        column = take("word").lower()
        if i < len(tokens) and tokens[i][0] == "word" and tokens[i][1].lower() == "in":
            i += 1
            take("open")
            values = [take("word", "value")]
            while i < len(tokens) and tokens[i][0] == "comma":
                i += 1
                values.append(take("word", "value"))
            take("close")
            conditions.append(Condition(column, "in", tuple(values)))
        else:
            op = take("op")
            conditions.append(Condition(column, op, take("word", "value")))
        if i == len(tokens):
            return conditions
        if take("word").lower() != "and":
            raise QueryError(f"predicate: conditions must be joined by 'and', found {tokens[i - 1][1]!r}")


def _conditions(predicate):
    if predicate is None:
        return []
    if isinstance(predicate, str):
        return parse_predicate(predicate)
    if isinstance(predicate, dict):
        return [Condition(str(column).lower(), "in" if isinstance(value, (list, tuple, set, frozenset)) else "=",
                          tuple(value) if isinstance(value, (list, tuple, set, frozenset)) else value)
                for column, value in predicate.items()]
    return list(predicate)


def _coerce(series, column, value):
    """Convert predicate text to the dtype of the column it is compared with"""
    if pd.api.types.is_bool_dtype(series):
        text = str(value).strip().lower()
        if text in ("true", "1", "yes", "positive"):
            return True
        if text in ("false", "0", "no", "negative"):
            return False
        raise QueryError(f"column '{column}' is boolean; cannot compare with {value!r}")
    if pd.api.types.is_numeric_dtype(series):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise QueryError(f"column '{column}' is numeric; cannot compare with {value!r}") from None
    if column in _FOLDED:
        return normalize_text(value)
    return str(value).strip()


def condition_mask(frame, condition):
    """Boolean mask of rows satisfying one condition"""
    if condition.column not in frame.columns:
        raise QueryError(f"unknown column '{condition.column}'; available: {', '.join(frame.columns)}")
    series = frame[condition.column]
    if condition.op == "in":
        return series.isin([_coerce(series, condition.column, value) for value in condition.value])
    if condition.op not in OPERATORS:
        raise QueryError(f"unknown operator {condition.op!r}")
    value = _coerce(series, condition.column, condition.value)
    return OPERATORS[condition.op](series, value).fillna(False).astype(bool)


def filter_frame(frame, predicate):
    """Rows of a frame that satisfy every condition of a predicate"""
    mask = pd.Series(True, index=frame.index)
    for condition in _conditions(predicate):
        mask &= condition_mask(frame, condition)
    return frame.loc[mask]


def scan_frame(store, fact, predicate=None, columns=None):
    """
    Rows of a fact table (joined with its dimensions) satisfying a predicate.

    Args:
        store: WarehouseStore
        fact: fact table name
        predicate: text, mapping or list of Conditions
        columns: optional subset of columns to return

    Returns:
        DataFrame in fact-table order
    """
    selected = filter_frame(store.wide_frame(fact), predicate)
    if columns is not None:
        unknown = [column for column in columns if column not in selected.columns]
        if unknown:
            raise QueryError(f"unknown column(s): {', '.join(unknown)}")
        selected = selected.loc[:, list(columns)]
    return selected.reset_index(drop=True)


def scan(store, fact, predicate=None, columns=None):
    """Stream matching rows as dicts"""
    return iter(scan_frame(store, fact, predicate, columns).to_dict(orient="records"))
