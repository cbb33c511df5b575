"""Cost ratios from questionnaire responses.

Each question offers a system with error rate z1 for one group and z2 for
the other against a system with rate z3 for both; the respondent's
indifference point z3 reveals how much a unit of rate disparity costs
relative to a unit of error rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DomainError


@dataclass(frozen=True)
class ElicitationResponse:
    z1: int
    z2: int
    z3: int

    def __post_init__(self) -> None:
        for name in ("z1", "z2", "z3"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise DomainError(f"{name} must be an integer, got {v!r}")
            if not 0 <= v <= 100:
                raise DomainError(f"{name} = {v} is outside [0, 100]")
        if self.z1 == self.z2:
            raise DomainError("z1 and z2 must differ")
        if (self.z1 + self.z2) % 2:
            raise DomainError("z1 + z2 must be even")

    @property
    def x(self) -> int:
        return abs(self.z1 - self.z2)

    @property
    def y(self) -> float:
        return self.z3 - (self.z1 + self.z2) / 2


@dataclass(frozen=True)
class Validation:
    ok: bool
    warning: str | None
    x: int
    y: float


def validate(resp: ElicitationResponse) -> Validation:
    """Flag responses that prefer a higher, more unequal error rate.

    >>> validate(ElicitationResponse(30, 10, 25))
    Validation(ok=True, warning=None, x=20, y=5.0)
    """
    if resp.z3 < (resp.z1 + resp.z2) / 2:
        return Validation(
            False,
            f"z3 = {resp.z3} is below the average {(resp.z1 + resp.z2) / 2:g}; please re-answer",
            resp.x,
            resp.y,
        )
    return Validation(True, None, resp.x, resp.y)


def _require_ok(resp: ElicitationResponse) -> None:
    v = validate(resp)
    if not v.ok:
        raise DomainError(f"response {resp} failed validation: {v.warning}")


def cost_ratio_single(resp: ElicitationResponse) -> float:
    """cost(disparity) / cost(error) from one response: (4 z3 - 2 z1 - 2 z2) / |z1 - z2|."""
    _require_ok(resp)
    return (4 * resp.z3 - 2 * resp.z1 - 2 * resp.z2) / abs(resp.z1 - resp.z2)


def cost_ratio_regression(responses: Sequence[ElicitationResponse]) -> float:
    """Through-origin least squares over all responses: 4 sum(x y) / sum(x^2).

    Equals the mean of the single-response ratios weighted by |z1 - z2| squared.
    """
    if not responses:
        raise DomainError("at least one response is required")
    for r in responses:
        _require_ok(r)
    sxy = math.fsum(r.x * r.y for r in responses)
    sxx = math.fsum(r.x * r.x for r in responses)
    return 4.0 * sxy / sxx


def lambda_from_ratio(ratio: float, cost_fn_over_fp: float = 1.0) -> float:
    """Lambda implied by a disparity/error cost ratio: (1 + cost_fn/cost_fp) / ratio."""
    if not ratio > 0:
        raise DomainError("a zero disparity cost makes lambda unbounded")
    return (1.0 + cost_fn_over_fp) / ratio


def read_responses(path: str | Path) -> list[ElicitationResponse]:
    """Responses from a CSV with z1, z2, z3 columns."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"z1", "z2", "z3"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                vals = [int(row[k].strip()) for k in ("z1", "z2", "z3")]
            except (ValueError, AttributeError):
                raise DomainError(f"{path}, row {line}: z1, z2, z3 must be integers") from None
            try:
                out.append(ElicitationResponse(*vals))
            except DomainError as exc:
                raise DomainError(f"{path}, row {line}: {exc}") from None
    return out


def split_valid(responses: Iterable[ElicitationResponse]) -> tuple[list[ElicitationResponse], list[tuple[ElicitationResponse, str]]]:
    """Separate consistent responses from those that need re-answering."""
    good, flagged = [], []
    for r in responses:
        v = validate(r)
        if v.ok:
            good.append(r)
        else:
            flagged.append((r, v.warning))
    return good, flagged
