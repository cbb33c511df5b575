"""Bernoulli log-likelihood-ratio subgroup scan.

The scan looks for the subgroup whose recommendations most exceed their
scan expectations, i.e. maximizes

    F(S) = max_{q >= 1}  sum_S y_i log q - sum_S log(1 - p_i + q p_i)

by coordinate ascent over attributes with random restarts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import AuditFrame, Subgroup
from .errors import BudgetExceededError, DomainError

DEFAULT_Q_MAX = 1e6


@dataclass(frozen=True)
class ScoreValue:
    f: float
    q: float  # math.inf when the supremum is only reached in the limit

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.q)


@dataclass(frozen=True)
class ScanConfig:
    restarts: int = 20
    max_sweeps: int = 50
    q_max: float = DEFAULT_Q_MAX
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.restarts < 1 or self.max_sweeps < 1:
            raise DomainError("restarts and max_sweeps must be positive")
        if not self.q_max > 1.0:
            raise DomainError("q_max must exceed 1")
        if not self.tol > 0.0:
            raise DomainError("tol must be positive")


@dataclass(frozen=True, eq=False)
class ScanResult:
    subgroup: Subgroup
    f: float
    q: float
    members: np.ndarray  # boolean over frame rows
    inclusion: np.ndarray
    history: tuple[float, ...] = ()

    @property
    def size(self) -> int:
        return int(self.members.sum())


def _as_inputs(y, p) -> tuple[np.ndarray, np.ndarray]:
    y = np.ascontiguousarray(y, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    if len(y) != len(p):
        raise DomainError(f"y has length {len(y)} but p has length {len(p)}")
    return y, p


def score(y_scan, p_scan, q_max: float = DEFAULT_Q_MAX) -> ScoreValue:
    """Log-likelihood-ratio score of one subgroup.

    >>> round(score([1, 1, 1], [0.5, 0.5, 0.5]).f, 5)
    2.07944
    """
    y, p = _as_inputs(y_scan, p_scan)
    if len(y) == 0:
        raise DomainError("cannot score an empty subgroup")
    if ((p < 0) | (p > 1)).any():
        raise DomainError("scan expectations must lie in [0, 1]")
    f, t, status = _kernels.score_arrays(y, p, math.log(q_max))
    if status == _kernels.UNBOUNDED:
        return ScoreValue(max(f, 0.0), math.inf)
    return ScoreValue(max(f, 0.0), math.exp(t))


def mle_q(y_scan, p_scan, q_max: float = DEFAULT_Q_MAX) -> float:
    """Constrained MLE of the odds multiplier, clamped to ``[1, q_max]``."""
    return min(score(y_scan, p_scan, q_max).q, q_max)


def _tie_key(f: float, members: np.ndarray, incl: np.ndarray, n_values: np.ndarray) -> tuple:
    desc = tuple(tuple(np.flatnonzero(incl[j, : n_values[j]]).tolist()) for j in range(len(n_values)))
    return (int(members.sum()), desc)


def _better(f_new: float, key_new: tuple, f_old: float, key_old: tuple) -> bool:
    """Higher score wins; near-ties go to fewer members, then lexicographic."""
    tol = 1e-12 * max(1.0, abs(f_old), abs(f_new))
    if f_new > f_old + tol:
        return True
    if f_new < f_old - tol:
        return False
    return key_new < key_old


def _result(frame: AuditFrame, incl: np.ndarray, y, p, q_max, history=()) -> ScanResult:
    mask = _kernels.members(frame.codes, incl)
    sv = score(y[mask], p[mask], q_max) if mask.any() else ScoreValue(0.0, 1.0)
    return ScanResult(Subgroup.from_inclusion(frame, incl), sv.f, sv.q, mask, incl, tuple(history))


def _random_inclusion(rng: np.random.Generator, codes: np.ndarray, n_values: np.ndarray) -> np.ndarray:
    width = int(n_values.max())
    for _ in range(100):
        incl = np.zeros((len(n_values), width), dtype=np.bool_)
        for j, nv in enumerate(n_values):
            row = rng.random(nv) < 0.5
            while not row.any():
                row = rng.random(nv) < 0.5
            incl[j, :nv] = row
        if _kernels.members(codes, incl).any():
            return incl
    incl = np.zeros((len(n_values), width), dtype=np.bool_)
    for j, nv in enumerate(n_values):
        incl[j, :nv] = True
    return incl


def _scan_inputs(frame: AuditFrame, y=None, p=None):
    y = frame.y_scan if y is None else y
    p = frame.p_scan_censored if p is None else p
    y, p = _as_inputs(y, p)
    if len(y) != len(frame):
        raise DomainError("scan vectors must cover every frame row")
    codes = np.ascontiguousarray(frame.codes, dtype=np.int64)
    return codes, y, p, frame.n_values


def restart_seeds(config: ScanConfig) -> list[int]:
    """Per-restart seeds; a prefix of a longer run's seeds."""
    return [int(s) for s in np.random.SeedSequence(config.seed).generate_state(config.restarts)]


def optimize_attribute(frame: AuditFrame, current: Subgroup, attribute: str, config: ScanConfig = ScanConfig()) -> Subgroup:
    """Re-choose one attribute's value set with the others held fixed."""
    codes, y, p, n_values = _scan_inputs(frame)
    j = frame.attribute_index(attribute)
    incl = current.inclusion_mask(frame)
    row, _ = _kernels.optimize_attribute(codes, y, p, incl, j, n_values, math.log(config.q_max))
    incl[j] = row
    return Subgroup.from_inclusion(frame, incl)


def _ascend_raw(codes, y, p, n_values, config, seed):
    rng = np.random.default_rng(seed)
    incl0 = _random_inclusion(rng, codes, n_values)
    orders = np.argsort(rng.random((config.max_sweeps, len(n_values))), axis=1).astype(np.int64)
    incl, f, hist = _kernels.ascend(codes, y, p, incl0, n_values, orders, math.log(config.q_max), config.tol)
    return incl, f, hist[~np.isnan(hist)]


def ascend(frame: AuditFrame, config: ScanConfig = ScanConfig(), seed: int | None = None, y=None, p=None) -> ScanResult:
    """One coordinate-ascent run from a random starting subgroup.

    Each value is included independently with probability 1/2 (empty sets
    are redrawn). Sweeps visit attributes in a fresh random order and stop
    once a sweep gains less than ``config.tol``.
    """
    codes, y, p, n_values = _scan_inputs(frame, y, p)
    incl, _, hist = _ascend_raw(codes, y, p, n_values, config, config.seed if seed is None else seed)
    return _result(frame, incl, y, p, config.q_max, hist.tolist())


def scan(frame: AuditFrame, config: ScanConfig = ScanConfig(), y=None, p=None) -> ScanResult:
    """Best subgroup over ``config.restarts`` ascents.

    ``y``/``p`` default to the frame's recommendations and censored scan
    expectations.
    """
    codes, y, p, n_values = _scan_inputs(frame, y, p)
    best = None
    for seed in restart_seeds(config):
        incl, f, hist = _ascend_raw(codes, y, p, n_values, config, seed)
        key = _tie_key(f, _kernels.members(codes, incl), incl, n_values)
        if best is None or _better(f, key, best[1], best[2]):
            best = (incl, f, key, hist)
    return _result(frame, best[0], y, p, config.q_max, best[3].tolist())


def subgroup_count(n_values) -> int:
    return math.prod(2 ** int(k) - 1 for k in n_values)


def brute_force_scan(frame: AuditFrame, budget: int = 1_000_000, q_max: float = DEFAULT_Q_MAX, y=None, p=None) -> ScanResult:
    """Exact maximum by enumerating every subgroup with non-empty membership."""
    codes, y, p, n_values = _scan_inputs(frame, y, p)
    total = subgroup_count(n_values)
    if total > budget:
        raise BudgetExceededError(f"{total} subgroups exceed the enumeration budget of {budget}")
    width = int(n_values.max())
    per_attr = []
    for nv in n_values:
        subsets = []
        for bits in range(1, 2 ** int(nv)):
            row = np.zeros(width, dtype=np.bool_)
            row[: int(nv)] = [(bits >> k) & 1 for k in range(int(nv))]
            subsets.append(row)
        per_attr.append(subsets)
    # per-attribute row masks avoid recomputing membership from scratch
    attr_masks = [[row[codes[:, j]] for row in subsets] for j, subsets in enumerate(per_attr)]
    best = None
    for combo in itertools.product(*(range(len(s)) for s in per_attr)):
        mask = attr_masks[0][combo[0]].copy()
        for j in range(1, len(combo)):
            mask &= attr_masks[j][combo[j]]
        if not mask.any():
            continue
        sv = score(y[mask], p[mask], q_max)
        incl = np.array([per_attr[j][k] for j, k in enumerate(combo)])
        key = _tie_key(sv.f, mask, incl, n_values)
        if best is None or _better(sv.f, key, best[0].f, best[1]):
            best = (ScanResult(Subgroup.from_inclusion(frame, incl), sv.f, sv.q, mask, incl), key)
    return best[0]
