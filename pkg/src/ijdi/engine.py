"""IJDI criterion, edge-case corrections and the corrected scan loop.

A subgroup S shows IJDI on the negative side when

    FPR(S) - FPR(~S) > lam * (p(S) - p(~S))      if p(S) > p(~S)
    FPR(S) > FPR(~S)                             otherwise

and symmetrically with TPR on the positive side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import AuditFrame, AuditTable, Side, Subgroup, build_frame, fmean, membership, stats_from_mask
from .errors import ConsistencyError, DomainError, IterationLimitError, MisuseError
from .scan import ScanConfig, ScanResult, scan

EDGE_TOL = 1e-12
CRITERION_TOL = 1e-12


@dataclass(frozen=True)
class CostProfile:
    """Utility costs of an FP, an FN, and a unit gap in FPR / TPR."""

    cost_fp: float
    cost_fn: float
    cost_dfpr: float
    cost_dtpr: float

    def __post_init__(self) -> None:
        for name in ("cost_fp", "cost_fn", "cost_dfpr", "cost_dtpr"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")


def lambda_from_costs(costs: CostProfile, side: Side | str) -> float:
    """Exchange rate between error-rate gaps and base-rate gaps.

    >>> lambda_from_costs(CostProfile(1, 1, 0.5, 1), "negative")
    4.0
    """
    side = Side.parse(side)
    gap = costs.cost_dfpr if side is Side.NEGATIVE else costs.cost_dtpr
    return float((costs.cost_fp + costs.cost_fn) / gap)


@dataclass(frozen=True)
class CriterionResult:
    holds: bool
    margin: float  # RHS - LHS of the applicable clause

    def __bool__(self) -> bool:
        return self.holds


def criterion_from_stats(rate_in: float, rate_out: float, p_in: float, p_out: float, lam: float) -> CriterionResult:
    lhs = rate_in - rate_out
    rhs = lam * (p_in - p_out) if p_in > p_out else 0.0
    margin = rhs - lhs
    return CriterionResult(margin >= -CRITERION_TOL, margin)


def criterion_holds(frame: AuditFrame, subgroup: Subgroup, lam: float | None = None) -> CriterionResult:
    """Whether ``subgroup`` satisfies the IJDI criterion within ``frame``.

    ``lam`` defaults to the frame's own lambda. Differences within 1e-12 of
    the boundary count as satisfied.
    """
    lam = frame.lam if lam is None else float(lam)
    st = stats_from_mask(frame.y_scan, frame.p, membership(subgroup, frame))
    return criterion_from_stats(st.rate_in, st.rate_out, st.p_in, st.p_out, lam)


def equivalence_check(frame: AuditFrame, subgroup: Subgroup, lam: float | None = None, tol: float = 1e-9) -> bool:
    """Compare the group-difference and per-record-sum forms of the criterion.

    The group form ``rate_in - rate_out <= lam (p_in - p_out)`` and the sum form
    ``sum_S (y - mean y) <= lam sum_S (p - mean p)`` differ by the positive
    factor ``n_S n_out / n``. Raises ConsistencyError if their verdicts differ
    while either margin is clear of zero by more than ``tol``.
    """
    lam = frame.lam if lam is None else float(lam)
    mask = membership(subgroup, frame)
    st = stats_from_mask(frame.y_scan, frame.p, mask)
    group_margin = lam * (st.p_in - st.p_out) - (st.rate_in - st.rate_out)
    y = frame.y_scan.astype(float)
    y_bar = fmean(y)
    p_bar = fmean(frame.p)
    sum_lhs = math.fsum((y[mask] - y_bar).tolist())
    sum_rhs = lam * math.fsum((frame.p[mask] - p_bar).tolist())
    sum_margin = sum_rhs - sum_lhs
    group_ok = group_margin >= -CRITERION_TOL
    sum_ok = sum_margin >= -CRITERION_TOL
    if group_ok != sum_ok and max(abs(group_margin), abs(sum_margin)) > tol:
        raise ConsistencyError(
            f"group form margin {group_margin:.3e} and sum form margin {sum_margin:.3e} disagree"
        )
    return group_ok


@dataclass(frozen=True)
class Adjustment:
    """One edge-case correction applied by the scan loop."""

    kind: str  # "edge_case_1", "edge_case_2" or "edge_case_2_saturate"
    iteration: int
    subgroup: Subgroup
    coefficient: float | None  # alpha or beta; None when members are set to 1
    mean_before: float
    mean_after: float
    target: float


def _edge1(p: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Raise members below the complement mean; returns (new p, alpha, target)."""
    target = fmean(p[~mask])
    members = p[mask]
    if not fmean(members) < target:
        raise MisuseError("edge case 1 needs p(S) < p(~S)")
    gaps = target - members
    below = gaps > 0
    alpha = math.fsum(gaps.tolist()) / math.fsum(gaps[below].tolist())
    out = p.copy()
    idx = np.flatnonzero(mask)[below]
    # (1 - alpha) p + alpha t is monotone in p under rounding; p + alpha (t - p) is not
    out[idx] = np.minimum((1.0 - alpha) * p[idx] + alpha * target, target)
    return out, alpha, target


def edge_case_1_adjust(frame: AuditFrame, subgroup: Subgroup) -> AuditFrame:
    """Shift member base rates below p(~S) toward it until p(S) = p(~S).

    Each such p_i moves by the same fraction alpha of its gap, which keeps
    their order. Scan expectations are recomputed from the new rates.
    """
    mask = membership(subgroup, frame)
    if not mask.any() or mask.all():
        raise MisuseError("edge case 1 needs a non-empty subgroup and complement")
    p, _, _ = _edge1(frame.p, mask)
    return frame.with_scan_values(p=p)


def _edge2(unc: np.ndarray, mask: np.ndarray, prior_mean: float) -> tuple[np.ndarray, float | None]:
    """Raise member expectations below 1 so the censored member mean hits ``prior_mean``.

    Returns the new uncensored vector and beta (None when every member
    below 1 is set to 1 because ``prior_mean >= 1``).
    """
    members = unc[mask]
    censored = np.clip(members, 0.0, 1.0)
    if not fmean(censored) < min(prior_mean, 1.0):
        raise MisuseError("edge case 2 needs E[censored](S) < E[uncensored](S)")
    out = unc.copy()
    idx = np.flatnonzero(mask)
    low = members < 1.0
    if prior_mean >= 1.0:
        out[idx[low]] = 1.0
        return out, None
    beta = _solve_beta(members[low], prior_mean * len(members) - np.count_nonzero(~low))
    out[idx[low]] = members[low] + beta * (1.0 - members[low])
    return out, beta


def _solve_beta(u: np.ndarray, required: float) -> float:
    """Smallest beta with sum(clip(u + beta (1 - u), 0, 1)) == required, for u < 1.

    Without negative entries this is the closed form
    (required - sum u) / sum(1 - u). Entries below 0 only start counting
    once they cross 0, so the sum is piecewise linear in beta; walk its
    breakpoints.
    """
    start = np.maximum(-u, 0.0) / (1.0 - u)  # beta at which each entry leaves 0
    order = np.argsort(start, kind="mergesort")
    start, u = start[order], u[order]
    cum_u = np.cumsum(u)
    cum_w = np.cumsum(1.0 - u)
    for k in range(len(u)):
        if k + 1 < len(u) and start[k + 1] == start[k]:
            continue
        beta = (required - cum_u[k]) / cum_w[k]
        upper = start[k + 1] if k + 1 < len(u) else 1.0
        if beta <= upper:
            return float(min(max(beta, start[k]), 1.0))
    return 1.0


def edge_case_2_adjust(frame: AuditFrame, subgroup: Subgroup) -> AuditFrame:
    """Make censoring mean-preserving on S.

    With beta = sum_{unc>=1}(unc - 1) / sum_{unc<1}(1 - unc), members below 1
    move to unc + beta (1 - unc); if E[unc](S) >= 1 they are set to 1.
    """
    mask = membership(subgroup, frame)
    if not mask.any():
        raise MisuseError("edge case 2 needs a non-empty subgroup")
    prior = fmean(frame.p_scan_uncensored[mask])
    unc, _ = _edge2(frame.p_scan_uncensored, mask, prior)
    return frame.with_scan_values(uncensored=unc)


@dataclass(frozen=True, eq=False)
class IjdiResult:
    subgroup: Subgroup
    f: float
    q: float
    members: np.ndarray  # boolean over frame rows
    frame: AuditFrame  # final working frame, corrections included
    base_frame: AuditFrame  # frame before any correction
    adjustments: tuple[Adjustment, ...] = ()
    iterations: int = 1
    p_value: float | None = None
    scan_result: ScanResult | None = field(default=None, repr=False)

    @property
    def table_rows(self) -> np.ndarray:
        """Table row indices of the detected subgroup's frame members."""
        return self.frame.rows[self.members]


def ijdi_scan(
    table: AuditTable,
    lam: float | None = None,
    side: Side | str = Side.NEGATIVE,
    scan_config: ScanConfig = ScanConfig(),
    max_iterations: int = 100,
    costs: CostProfile | None = None,
) -> IjdiResult:
    """Scan for the subgroup with the most IJDI, correcting edge cases.

    Each round scans with the current censored expectations. If the best
    subgroup has p(S) < p(~S) its low base rates are raised (edge case 1);
    otherwise, if censoring lowered its expected rate, the expectations of
    members below 1 are raised (edge case 2); otherwise the round's answer
    is final. Corrections only ever raise expectations, so the loop
    converges; ``max_iterations`` rounds without settling raise
    IterationLimitError.

    ``lam`` may be omitted when ``costs`` is given; an explicit ``lam`` wins.
    """
    side = Side.parse(side)
    if lam is None:
        if costs is None:
            raise DomainError("either lam or costs is required")
        lam = lambda_from_costs(costs, side)
    if max_iterations < 1:
        raise DomainError("max_iterations must be positive")
    frame = build_frame(table, side, lam)
    p = frame.p.copy()
    unc = frame.p_scan_uncensored.copy()
    # expectations before any censoring correction; edge case 2 targets these
    target = unc.copy()
    adjustments: list[Adjustment] = []
    result: ScanResult | None = None
    rescan = True
    for it in range(1, max_iterations + 1):
        work = frame.with_scan_values(p=p, uncensored=unc)
        if rescan:
            result = scan(work, scan_config)
        mask = result.members
        if result.f <= 0.0:
            return _finish(result, work, frame, adjustments, it)
        n_in = int(mask.sum())
        if n_in < len(mask) and fmean(p[mask]) < fmean(p[~mask]) - EDGE_TOL:
            before = fmean(p[mask])
            new_p, alpha, goal = _edge1(p, mask)
            delta = new_p - p
            p = new_p
            unc = unc + lam * delta
            target = target + lam * delta
            adjustments.append(Adjustment("edge_case_1", it, result.subgroup, alpha, before, fmean(p[mask]), goal))
            rescan = bool(lam > 0.0 and np.any(delta[mask] > 0.0))
            continue
        prior = fmean(target[mask])
        censored_mean = fmean(np.clip(unc[mask], 0.0, 1.0))
        if censored_mean < min(prior, 1.0) - EDGE_TOL:
            new_unc, beta = _edge2(unc, mask, prior)
            changed = not np.array_equal(np.clip(new_unc, 0.0, 1.0), np.clip(unc, 0.0, 1.0))
            unc = new_unc
            kind = "edge_case_2" if beta is not None else "edge_case_2_saturate"
            after = fmean(np.clip(unc[mask], 0.0, 1.0))
            adjustments.append(Adjustment(kind, it, result.subgroup, beta, censored_mean, after, prior))
            rescan = changed
            continue
        return _finish(result, work, frame, adjustments, it)
    raise IterationLimitError(f"edge-case corrections did not settle within {max_iterations} iterations")


def _finish(result: ScanResult, work: AuditFrame, base: AuditFrame, adjustments: list[Adjustment], iterations: int) -> IjdiResult:
    return IjdiResult(
        subgroup=result.subgroup,
        f=result.f,
        q=result.q,
        members=result.members,
        frame=work,
        base_frame=base,
        adjustments=tuple(adjustments),
        iterations=iterations,
        scan_result=result,
    )


def direct_rate_scan(table: AuditTable, side: Side | str, scan_config: ScanConfig = ScanConfig()) -> ScanResult:
    """Plain FPR-/TPR-Scan: constant expectation equal to the frame's rate."""
    frame = build_frame(table, side, 0.0)
    return scan(frame, scan_config)
