"""Dataset, subgroup and outcome-frame types shared across the package."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateSubgroupError, DomainError, EmptyFrameError, SchemaError


class Side(str, enum.Enum):
    """Which outcome class a frame keeps: negatives (FPR) or positives (TPR)."""

    NEGATIVE = "negative"
    POSITIVE = "positive"

    @property
    def outcome(self) -> int:
        return 0 if self is Side.NEGATIVE else 1

    @property
    def rate_name(self) -> str:
        return "FPR" if self is Side.NEGATIVE else "TPR"

    @classmethod
    def parse(cls, value: "Side | str") -> "Side":
        if isinstance(value, Side):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown side {value!r}; expected 'negative' or 'positive'") from None


def fmean(values: np.ndarray) -> float:
    """Mean with compensated summation."""
    if len(values) == 0:
        raise DomainError("mean of an empty vector")
    return math.fsum(values.tolist()) / len(values)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _probability_vector(name: str, values, n: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional")
    if n is not None and len(arr) != n:
        raise SchemaError(f"{name} has length {len(arr)}, expected {n}")
    bad = np.flatnonzero(~((arr >= 0.0) & (arr <= 1.0)))
    if len(bad):
        i = int(bad[0])
        raise DomainError(f"{name}[{i}] = {arr[i]!r} is outside [0, 1]")
    return arr


def binarize(p_hat0, theta) -> np.ndarray:
    """Recommendation vector: 1 where the prediction strictly exceeds its threshold.

    Ties map to 0. ``theta`` may be a scalar.
    """
    p_hat0 = _probability_vector("p_hat0", p_hat0)
    if np.ndim(theta) == 0:
        theta = np.full(len(p_hat0), float(theta))
    theta = _probability_vector("theta", theta, len(p_hat0))
    return (p_hat0 > theta).astype(np.int8)


@dataclass(frozen=True, eq=False)
class AuditTable:
    """Immutable audit dataset.

    Features are stored as integer codes into per-attribute domains. The
    recommendation vector ``p_b`` defaults to ``binarize(p_hat0, theta)`` but
    can be overridden (null replicates redraw it without touching the rest).
    """

    attributes: tuple[str, ...]
    domains: tuple[tuple[str, ...], ...]
    codes: np.ndarray
    y0: np.ndarray
    p_hat0: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    p_b: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.y0)
        if n < 1:
            raise SchemaError("an audit table needs at least one record")
        if len(self.attributes) != len(self.domains):
            raise SchemaError("attributes and domains differ in length")
        if len(set(self.attributes)) != len(self.attributes):
            raise SchemaError("duplicate attribute names")
        if self.codes.shape != (n, len(self.attributes)):
            raise SchemaError(f"codes shape {self.codes.shape} != ({n}, {len(self.attributes)})")
        for name in ("p_hat0", "p", "theta", "p_b"):
            if len(getattr(self, name)) != n:
                raise SchemaError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        for j, dom in enumerate(self.domains):
            col = self.codes[:, j]
            if len(col) and (col.min() < 0 or col.max() >= len(dom)):
                raise SchemaError(f"codes for {self.attributes[j]!r} fall outside its domain")
        if not np.isin(self.y0, (0, 1)).all():
            raise DomainError("y0 must be binary")
        if not np.isin(self.p_b, (0, 1)).all():
            raise DomainError("recommendations must be binary")
        for arr in (self.codes, self.y0, self.p_hat0, self.p, self.theta, self.p_b):
            _readonly(arr)

    @classmethod
    def from_columns(
        cls,
        features: Mapping[str, Sequence[str]],
        y0,
        p_hat0,
        p,
        theta=0.5,
        domains: Mapping[str, Sequence[str]] | None = None,
        p_b=None,
    ) -> "AuditTable":
        """Build a table from string feature columns.

        Domains default to the sorted set of observed values per attribute.
        """
        y0 = np.asarray(y0)
        n = len(y0)
        if not np.isin(y0, (0, 1)).all():
            raise DomainError("y0 must contain only 0 and 1")
        y0 = y0.astype(np.int8)
        attributes = tuple(features)
        if not attributes:
            raise SchemaError("at least one feature attribute is required")
        doms: list[tuple[str, ...]] = []
        codes = np.empty((n, len(attributes)), dtype=np.int64)
        for j, name in enumerate(attributes):
            col = [str(v) for v in features[name]]
            if len(col) != n:
                raise SchemaError(f"feature {name!r} has length {len(col)}, expected {n}")
            if domains is not None and name in domains:
                dom = tuple(str(v) for v in domains[name])
            else:
                dom = tuple(sorted(set(col)))
            index = {v: k for k, v in enumerate(dom)}
            for i, v in enumerate(col):
                try:
                    codes[i, j] = index[v]
                except KeyError:
                    raise SchemaError(f"row {i}: value {v!r} not in domain of {name!r}") from None
            doms.append(dom)
        p_hat0 = _probability_vector("p_hat0", p_hat0, n)
        p = _probability_vector("p", p, n)
        if np.ndim(theta) == 0:
            theta = np.full(n, float(theta))
        theta = _probability_vector("theta", theta, n)
        rec = binarize(p_hat0, theta) if p_b is None else np.asarray(p_b, dtype=np.int8)
        return cls(attributes, tuple(doms), codes, y0, p_hat0, p, theta, rec)

    def __len__(self) -> int:
        return len(self.y0)

    @property
    def n_values(self) -> np.ndarray:
        return np.array([len(d) for d in self.domains], dtype=np.int64)

    def feature_column(self, attribute: str) -> list[str]:
        j = self.attribute_index(attribute)
        dom = self.domains[j]
        return [dom[c] for c in self.codes[:, j]]

    def attribute_index(self, attribute: str) -> int:
        try:
            return self.attributes.index(attribute)
        except ValueError:
            raise SchemaError(f"unknown attribute {attribute!r}") from None

    def replace(self, **changes) -> "AuditTable":
        """Copy with some columns swapped.

        Recommendations are re-derived when ``p_hat0`` or ``theta`` change,
        unless ``p_b`` is given explicitly.
        """
        for key in ("p_hat0", "p", "theta"):
            if key in changes:
                changes[key] = _probability_vector(key, changes[key], len(self))
        if "p_b" in changes:
            changes["p_b"] = np.array(changes["p_b"], dtype=np.int8)
        elif "p_hat0" in changes or "theta" in changes:
            changes["p_b"] = binarize(changes.get("p_hat0", self.p_hat0), changes.get("theta", self.theta))
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Subgroup:
    """Conjunction of per-attribute value sets.

    Attributes missing from ``included`` admit every value.
    """

    included: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        norm = {}
        for attr, values in dict(self.included).items():
            vals = frozenset(str(v) for v in ([values] if isinstance(values, str) else values))
            if not vals:
                raise SchemaError(f"subgroup has an empty value set for {attr!r}")
            norm[str(attr)] = vals
        object.__setattr__(self, "included", dict(sorted(norm.items())))

    def __hash__(self) -> int:
        return hash(tuple((k, tuple(sorted(v))) for k, v in self.included.items()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Subgroup) and self.included == other.included

    @classmethod
    def full(cls) -> "Subgroup":
        return cls({})

    @classmethod
    def from_dict(cls, data: Mapping[str, Iterable[str]]) -> "Subgroup":
        return cls({k: frozenset(v if not isinstance(v, str) else [v]) for k, v in data.items()})

    def to_dict(self) -> dict[str, list[str]]:
        return {k: sorted(v) for k, v in self.included.items()}

    def describe(self) -> str:
        if not self.included:
            return "{all}"
        parts = [f"{k}: [{', '.join(sorted(v))}]" for k, v in self.included.items()]
        return "{" + "; ".join(parts) + "}"

    def validate(self, table: "AuditTable | AuditFrame") -> None:
        for attr, values in self.included.items():
            j = table.attribute_index(attr)
            unknown = values - set(table.domains[j])
            if unknown:
                raise SchemaError(f"values {sorted(unknown)} not in domain of {attr!r}")

    def inclusion_mask(self, table: "AuditTable | AuditFrame") -> np.ndarray:
        """Boolean (attributes x max-domain-size) matrix of included values."""
        self.validate(table)
        width = max(len(d) for d in table.domains)
        incl = np.zeros((len(table.attributes), width), dtype=np.bool_)
        for j, (attr, dom) in enumerate(zip(table.attributes, table.domains)):
            if attr in self.included:
                chosen = self.included[attr]
                incl[j, : len(dom)] = [v in chosen for v in dom]
            else:
                incl[j, : len(dom)] = True
        return incl

    @classmethod
    def from_inclusion(cls, table: "AuditTable | AuditFrame", incl: np.ndarray) -> "Subgroup":
        """Canonical subgroup from an inclusion matrix; full attributes are omitted."""
        included = {}
        for j, (attr, dom) in enumerate(zip(table.attributes, table.domains)):
            row = incl[j, : len(dom)]
            if not row.all():
                included[attr] = frozenset(v for v, keep in zip(dom, row) if keep)
        return cls(included)


def membership_from_inclusion(codes: np.ndarray, incl: np.ndarray) -> np.ndarray:
    mask = np.ones(len(codes), dtype=np.bool_)
    for j in range(codes.shape[1]):
        mask &= incl[j][codes[:, j]]
    return mask


def membership(subgroup: Subgroup, table: "AuditTable | AuditFrame") -> np.ndarray:
    """Row-wise conjunction test of ``subgroup`` over a table or frame."""
    return membership_from_inclusion(table.codes, subgroup.inclusion_mask(table))


@dataclass(frozen=True, eq=False)
class AuditFrame:
    """Outcome-filtered view used by the scan.

    ``p`` is a working copy of the base rates for the frame rows; the scan
    expectation is ``p_bar_b + lam * (p - p_bar)`` before clamping.
    """

    side: Side
    lam: float
    attributes: tuple[str, ...]
    domains: tuple[tuple[str, ...], ...]
    rows: np.ndarray
    codes: np.ndarray
    y_scan: np.ndarray
    p: np.ndarray
    p_hat0: np.ndarray
    p_scan_uncensored: np.ndarray
    p_scan_censored: np.ndarray
    p_bar_b: float
    p_bar: float

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def n_values(self) -> np.ndarray:
        return np.array([len(d) for d in self.domains], dtype=np.int64)

    def attribute_index(self, attribute: str) -> int:
        try:
            return self.attributes.index(attribute)
        except ValueError:
            raise SchemaError(f"unknown attribute {attribute!r}") from None

    def with_scan_values(self, p: np.ndarray | None = None, uncensored: np.ndarray | None = None) -> "AuditFrame":
        """Copy carrying adjusted base rates and/or scan expectations.

        Frame means stay fixed; only the per-row vectors change.
        """
        p = self.p if p is None else np.array(p, dtype=float)
        if uncensored is None:
            uncensored = self.p_scan_uncensored if p is self.p else self.p_bar_b + self.lam * (p - self.p_bar)
        uncensored = np.array(uncensored, dtype=float)
        return AuditFrame(
            side=self.side,
            lam=self.lam,
            attributes=self.attributes,
            domains=self.domains,
            rows=self.rows,
            codes=self.codes,
            y_scan=self.y_scan,
            p=_readonly(p),
            p_hat0=self.p_hat0,
            p_scan_uncensored=_readonly(uncensored),
            p_scan_censored=_readonly(np.clip(uncensored, 0.0, 1.0)),
            p_bar_b=self.p_bar_b,
            p_bar=self.p_bar,
        )


def build_frame(table: AuditTable, side: Side | str, lam: float) -> AuditFrame:
    """Filter to one outcome class and compute the scan inputs."""
    side = Side.parse(side)
    lam = float(lam)
    if not lam >= 0.0:
        raise DomainError(f"lambda must be non-negative, got {lam}")
    rows = np.flatnonzero(table.y0 == side.outcome)
    if len(rows) == 0:
        raise EmptyFrameError(f"no {side.value}s in the table")
    y_scan = table.p_b[rows].astype(np.int8)
    p = table.p[rows].astype(float)
    p_bar_b = fmean(y_scan.astype(float))
    p_bar = fmean(p)
    uncensored = p_bar_b + lam * (p - p_bar)
    return AuditFrame(
        side=side,
        lam=lam,
        attributes=table.attributes,
        domains=table.domains,
        rows=_readonly(rows),
        codes=_readonly(table.codes[rows]),
        y_scan=_readonly(y_scan),
        p=_readonly(p),
        p_hat0=_readonly(table.p_hat0[rows].copy()),
        p_scan_uncensored=_readonly(uncensored),
        p_scan_censored=_readonly(np.clip(uncensored, 0.0, 1.0)),
        p_bar_b=p_bar_b,
        p_bar=p_bar,
    )


@dataclass(frozen=True)
class GroupStats:
    rate_in: float
    rate_out: float
    p_in: float
    p_out: float
    n_in: int
    n_out: int


def stats_from_mask(y: np.ndarray, p: np.ndarray, mask: np.ndarray) -> GroupStats:
    n_in = int(mask.sum())
    n_out = len(mask) - n_in
    if n_in == 0 or n_out == 0:
        raise DegenerateSubgroupError(
            "subgroup is empty within the frame" if n_in == 0 else "subgroup covers the whole frame"
        )
    y = y.astype(float)
    return GroupStats(
        rate_in=fmean(y[mask]),
        rate_out=fmean(y[~mask]),
        p_in=fmean(p[mask]),
        p_out=fmean(p[~mask]),
        n_in=n_in,
        n_out=n_out,
    )


def group_stats(frame: AuditFrame, subgroup: Subgroup) -> GroupStats:
    """Recommendation rate and mean base rate inside and outside ``subgroup``."""
    return stats_from_mask(frame.y_scan, frame.p, membership(subgroup, frame))
