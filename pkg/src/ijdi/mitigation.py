"""Mitigation strategies: group thresholds, iterative quantile correction and
randomized thresholds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import AuditTable, Side, Subgroup, binarize, build_frame, fmean, membership, stats_from_mask
from .engine import criterion_holds, ijdi_scan
from .errors import DegenerateSubgroupError, DomainError
from .scan import ScanConfig
from .significance import SignificanceConfig, p_value


def _check_threshold(value: float, what: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{what} {value!r} is outside [0, 1]")
    return value


@dataclass(frozen=True)
class ThresholdPolicy:
    """Default threshold plus subgroup overrides; later overrides win."""

    default: float = 0.5
    overrides: tuple[tuple[Subgroup, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "default", _check_threshold(self.default, "default threshold"))
        checked = tuple((sg, _check_threshold(t, f"threshold for {sg.describe()}")) for sg, t in self.overrides)
        object.__setattr__(self, "overrides", checked)

    def thresholds(self, table: AuditTable) -> np.ndarray:
        theta = np.full(len(table), self.default)
        for subgroup, value in self.overrides:
            theta[membership(subgroup, table)] = value
        return theta

    def to_dict(self) -> dict:
        return {
            "default": self.default,
            "overrides": [{"subgroup": sg.to_dict(), "threshold": t} for sg, t in self.overrides],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdPolicy":
        try:
            overrides = tuple(
                (Subgroup.from_dict(rec["subgroup"]), float(rec["threshold"])) for rec in data.get("overrides", [])
            )
            return cls(float(data.get("default", 0.5)), overrides)
        except (KeyError, TypeError, AttributeError) as exc:
            raise DomainError(f"malformed threshold policy: {exc}") from None


def apply_policy(table: AuditTable, policy: ThresholdPolicy) -> AuditTable:
    """Table with per-record thresholds from ``policy`` and fresh recommendations."""
    return table.replace(theta=policy.thresholds(table))


@dataclass(frozen=True)
class ErrorRates:
    fpr_in: float
    fpr_out: float
    tpr_in: float
    tpr_out: float


def error_rate_report(table: AuditTable, subgroup: Subgroup) -> ErrorRates:
    """FPR and TPR inside and outside ``subgroup``."""
    neg = build_frame(table, Side.NEGATIVE, 0.0)
    pos = build_frame(table, Side.POSITIVE, 0.0)
    sn = stats_from_mask(neg.y_scan, neg.p, membership(subgroup, neg))
    sp = stats_from_mask(pos.y_scan, pos.p, membership(subgroup, pos))
    return ErrorRates(sn.rate_in, sn.rate_out, sp.rate_in, sp.rate_out)


def order_statistic_threshold(values: np.ndarray, level: float) -> float:
    """Ascending order statistic at 1-based index ceil(level * n), at least 1.

    At most a ``1 - level`` fraction of ``values`` strictly exceeds the result.
    """
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    if n == 0:
        raise DegenerateSubgroupError("no values to take a quantile of")
    level = min(max(float(level), 0.0), 1.0)
    k = max(math.ceil(level * n), 1)
    # guard against level * n landing just below an integer
    if k < n and (n - k) / n > 1.0 - level + 1e-12:
        k += 1
    return float(values[k - 1])


def eta_level(table: AuditTable, subgroup: Subgroup, lam: float, side: Side | str) -> float:
    frame = build_frame(table, side, lam)
    st = stats_from_mask(frame.y_scan, frame.p, membership(subgroup, frame))
    return min(max(1.0 - (st.rate_out + lam * (st.p_in - st.p_out)), 0.0), 1.0)


def eta_threshold(table: AuditTable, subgroup: Subgroup, lam: float, side: Side | str) -> float:
    """Threshold for ``subgroup`` that caps its in-frame recommendation rate.

    The level is ``1 - (PR(~S) + lam (p(S) - p(~S)))`` clamped to [0, 1], and
    the threshold is that order statistic of the members' predictions, so at
    most ``PR(~S) + lam (p(S) - p(~S))`` of them strictly exceed it.
    """
    frame = build_frame(table, side, lam)
    mask = membership(subgroup, frame)
    if not mask.any():
        raise DegenerateSubgroupError("subgroup is empty within the frame")
    return order_statistic_threshold(frame.p_hat0[mask], eta_level(table, subgroup, lam, side))


def with_subgroup_threshold(table: AuditTable, subgroup: Subgroup, eta: float) -> AuditTable:
    """Give every member of ``subgroup`` threshold ``eta`` and re-binarize only them.

    Other rows keep their recommendations even if those were supplied
    rather than derived from ``theta``.
    """
    rows = membership(subgroup, table)
    theta = table.theta.copy()
    theta[rows] = eta
    p_b = table.p_b.copy()
    p_b[rows] = binarize(table.p_hat0[rows], theta[rows])
    return table.replace(theta=theta, p_b=p_b)


class Termination(str, enum.Enum):
    NO_SUBGROUP_FOUND = "NoSubgroupFound"
    NOT_SIGNIFICANT = "NotSignificant"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class CorrectionStep:
    iteration: int
    subgroup: Subgroup
    eta: float
    f_before: float
    side: Side
    margin_after: float
    p_value: float | None = None


@dataclass(frozen=True, eq=False)
class CorrectionTrace:
    steps: tuple[CorrectionStep, ...]
    terminated: Termination
    table: AuditTable = field(repr=False)
    final_f: float = 0.0
    final_p_value: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.steps)


def iterative_correction(
    table: AuditTable,
    lam: float,
    side: Side | str = Side.NEGATIVE,
    scan_config: ScanConfig = ScanConfig(),
    sig_config: SignificanceConfig | None = None,
    max_iters: int = 20,
    f_floor: float = 1e-6,
) -> CorrectionTrace:
    """Repeatedly scan and lower the detected subgroup's recommendation rate.

    Each round runs the corrected scan. It stops when the score is at most
    ``f_floor`` or, with ``sig_config``, when the score is not significant.
    Otherwise every member of the subgroup gets the eta threshold and the
    recommendations are re-binarized. Hitting ``max_iters`` corrections is
    reported in the trace rather than raised.
    """
    side = Side.parse(side)
    if max_iters < 0:
        raise DomainError("max_iters must be non-negative")
    steps: list[CorrectionStep] = []
    current = table
    it = 0
    while True:
        result = ijdi_scan(current, lam, side, scan_config)
        pv = None
        if result.f <= f_floor:
            return CorrectionTrace(tuple(steps), Termination.NO_SUBGROUP_FOUND, current, result.f)
        if sig_config is not None:
            cfg = SignificanceConfig(sig_config.replicates, sig_config.alpha, sig_config.seed + it)
            sig = p_value(current, lam, side, scan_config, cfg, observed=result)
            pv = sig.p_value
            if not sig.significant:
                return CorrectionTrace(tuple(steps), Termination.NOT_SIGNIFICANT, current, result.f, pv)
        if it >= max_iters:
            return CorrectionTrace(tuple(steps), Termination.MAX_ITERATIONS, current, result.f, pv)
        if result.members.all():
            # no complement to compare against: nothing the criterion can flag
            return CorrectionTrace(tuple(steps), Termination.NO_SUBGROUP_FOUND, current, result.f, pv)
        it += 1
        eta = eta_threshold(current, result.subgroup, lam, side)
        current = with_subgroup_threshold(current, result.subgroup, eta)
        margin = criterion_holds(build_frame(current, side, lam), result.subgroup).margin
        steps.append(CorrectionStep(it, result.subgroup, eta, result.f, side, margin, pv))


def randomize_thresholds(theta_center: float, delta: float, n: int, seed) -> np.ndarray:
    """``n`` thresholds drawn uniformly on ``[theta - delta, theta + delta]``."""
    if not 0.0 < delta <= 0.5:
        raise DomainError(f"delta must lie in (0, 0.5], got {delta!r}")
    lo, hi = theta_center - delta, theta_center + delta
    if lo < 0.0 or hi > 1.0:
        raise DomainError(f"threshold interval [{lo:g}, {hi:g}] leaves [0, 1]")
    return np.random.default_rng(seed).uniform(lo, hi, int(n))


def min_lambda_no_ijdi(delta: float) -> float:
    """Smallest lambda at which uniformly randomized thresholds cannot show IJDI."""
    if not 0.0 < delta <= 0.5:
        raise DomainError(f"delta must lie in (0, 0.5], got {delta!r}")
    return 1.0 / (2.0 * delta)


@dataclass(frozen=True)
class TwoGroupOutcome:
    fpr_a: float
    fpr_b: float
    tpr_a: float
    tpr_b: float
    bound: float  # (p_a - p_b) / (2 delta)


def randomized_two_group(
    p_a: float, p_b: float, delta: float, n: int, seed, theta: float = 0.5
) -> TwoGroupOutcome:
    """Two groups with constant true probabilities, classified with random thresholds.

    Predictions equal the true probabilities; outcomes are Bernoulli draws.
    """
    rng = np.random.default_rng(seed)
    lo_seed, hi_seed = rng.integers(0, 2**63, size=2)
    thresholds = randomize_thresholds(theta, delta, 2 * n, lo_seed)
    rates = []
    draw = np.random.default_rng(hi_seed)
    for k, p in enumerate((p_a, p_b)):
        y = draw.random(n) < p
        rec = p > thresholds[k * n : (k + 1) * n]
        rates.append((fmean(rec[~y].astype(float)), fmean(rec[y].astype(float))))
    return TwoGroupOutcome(rates[0][0], rates[1][0], rates[0][1], rates[1][1], (p_a - p_b) / (2 * delta))


def policy_from_pairs(default: float, pairs: Sequence[tuple[dict, float]]) -> ThresholdPolicy:
    return ThresholdPolicy(default, tuple((Subgroup.from_dict(sg), t) for sg, t in pairs))
