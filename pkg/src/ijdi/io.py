"""CSV ingestion and export of audit tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import AuditTable, Subgroup
from .errors import DomainError, SchemaError
from .synthetic import fit_logistic, one_hot


@dataclass(frozen=True)
class ColumnBindings:
    """Which CSV columns play which role.

    ``threshold`` is either a column name or a constant; ``base_rate`` may be
    omitted, in which case base rates are fitted from the features.
    """

    features: tuple[str, ...]
    outcome: str
    prediction: str
    base_rate: str | None = None
    threshold: str | float = 0.5
    recommendation: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError("at least one feature column must be bound")
        if len(set(self.features)) != len(self.features):
            raise SchemaError("feature columns must be distinct")

    def columns(self) -> list[str]:
        cols = list(self.features) + [self.outcome, self.prediction]
        for extra in (self.base_rate, self.recommendation):
            if extra is not None:
                cols.append(extra)
        if isinstance(self.threshold, str):
            cols.append(self.threshold)
        return cols


def _parse_number(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DomainError(f"row {line}: column {column!r} value {text!r} is not a number") from None
    if not math.isfinite(value):
        raise DomainError(f"row {line}: column {column!r} value {text!r} is not finite")
    return value


def _parse_probability(text: str, column: str, line: int) -> float:
    value = _parse_number(text, column, line)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"row {line}: column {column!r} value {value!r} is outside [0, 1]")
    return value


def _parse_binary(text: str, column: str, line: int) -> int:
    value = _parse_number(text, column, line)
    if value not in (0.0, 1.0):
        raise DomainError(f"row {line}: column {column!r} value {text!r} must be 0 or 1")
    return int(value)


def load_table(path: str | Path, bindings: ColumnBindings) -> AuditTable:
    """Read and validate an audit table from a UTF-8 CSV with a header row.

    Line numbers in error messages count the header as line 1. Nothing is
    coerced: empty cells, non-numeric values and out-of-range probabilities
    are all rejected.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in bindings.columns() if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        feats: dict[str, list[str]] = {f: [] for f in bindings.features}
        y0, p_hat0, p, theta, rec = [], [], [], [], []
        for line, row in enumerate(reader, start=2):
            if None in row:
                raise SchemaError(f"row {line}: more fields than header columns")
            for f in bindings.features:
                value = row[f]
                if value is None or value == "":
                    raise SchemaError(f"row {line}: feature {f!r} is empty")
                feats[f].append(value)
            y0.append(_parse_binary(row[bindings.outcome], bindings.outcome, line))
            p_hat0.append(_parse_probability(row[bindings.prediction], bindings.prediction, line))
            if bindings.base_rate is not None:
                p.append(_parse_probability(row[bindings.base_rate], bindings.base_rate, line))
            if isinstance(bindings.threshold, str):
                theta.append(_parse_probability(row[bindings.threshold], bindings.threshold, line))
            if bindings.recommendation is not None:
                rec.append(_parse_binary(row[bindings.recommendation], bindings.recommendation, line))
    if not y0:
        raise SchemaError(f"{path}: no data rows")
    if bindings.base_rate is None:
        x, _ = one_hot(feats, bindings.features)
        p = fit_logistic(x, np.array(y0)).predict(x)
    th = np.array(theta) if isinstance(bindings.threshold, str) else float(bindings.threshold)
    return AuditTable.from_columns(feats, y0, p_hat0, p, theta=th, p_b=rec or None)


TABLE_COLUMNS = ("y0", "p_hat0", "p", "theta", "p_b")


def write_table(table: AuditTable, path: str | Path) -> None:
    """Write a table in the CSV layout ``load_table`` reads back.

    Floats use ``repr`` so the file round-trips exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(table.attributes) + list(TABLE_COLUMNS))
        cols = [table.feature_column(a) for a in table.attributes]
        for i in range(len(table)):
            w.writerow(
                [c[i] for c in cols]
                + [int(table.y0[i]), repr(float(table.p_hat0[i])), repr(float(table.p[i])), repr(float(table.theta[i])), int(table.p_b[i])]
            )


def default_bindings(table_attributes: Sequence[str]) -> ColumnBindings:
    """Bindings matching ``write_table`` output."""
    return ColumnBindings(tuple(table_attributes), "y0", "p_hat0", base_rate="p", threshold="theta", recommendation="p_b")


def write_subgroup(subgroup: Subgroup, path: str | Path) -> None:
    Path(path).write_text(json.dumps(subgroup.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_subgroup(path: str | Path) -> Subgroup:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise DomainError(f"{path}: a subgroup is a mapping from attribute to values")
    return Subgroup.from_dict(data)


def parse_subgroup(text: str) -> Subgroup:
    """Subgroup from ``attr=v1|v2;attr2=v3`` or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return Subgroup.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DomainError(f"invalid subgroup JSON: {exc}") from None
    included = {}
    for part in filter(None, (s.strip() for s in text.split(";"))):
        if "=" not in part:
            raise DomainError(f"subgroup term {part!r} is not of the form attr=v1|v2")
        attr, values = part.split("=", 1)
        included[attr.strip()] = frozenset(v.strip() for v in values.split("|"))
    return Subgroup(included)


def decile_rates(deciles: Sequence[int], outcomes: Sequence[int]) -> dict[int, float]:
    """Empirical outcome rate for each decile score.

    Maps scores to probabilities by the share of positive outcomes among
    records with that score, which is one reading of deriving predictions
    from decile scores.
    """
    d = np.asarray(deciles)
    y = np.asarray(outcomes, dtype=float)
    if len(d) != len(y):
        raise DomainError("deciles and outcomes differ in length")
    return {int(k): float(y[d == k].mean()) for k in np.unique(d)}


def apply_decile_rates(deciles: Sequence[int], rates: Mapping[int, float]) -> np.ndarray:
    try:
        return np.array([rates[int(k)] for k in deciles])
    except KeyError as exc:
        raise DomainError(f"no rate for decile {exc.args[0]}") from None
