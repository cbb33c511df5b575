"""Randomization test for the detected subgroup's score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import AuditTable, Side, build_frame
from .engine import IjdiResult, ijdi_scan
from .errors import DomainError
from .scan import ScanConfig


@dataclass(frozen=True)
class SignificanceConfig:
    replicates: int = 99
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise DomainError("replicates must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class SignificanceResult:
    f_obs: float
    p_value: float
    significant: bool
    null_scores: np.ndarray
    threshold: float  # empirical (1 - alpha) quantile of the null scores
    observed: IjdiResult


def null_replicate(table: AuditTable, lam: float, side: Side | str, seed) -> AuditTable:
    """Copy of ``table`` whose in-frame recommendations are redrawn under the null.

    Each frame record's recommendation becomes Bernoulli(censored scan
    expectation) computed from the original base rates. Records of the other
    outcome class keep their recommendations.
    """
    frame = build_frame(table, side, lam)
    rng = np.random.default_rng(seed)
    draws = (rng.random(len(frame)) < frame.p_scan_censored).astype(np.int8)
    p_b = table.p_b.copy()
    p_b[frame.rows] = draws
    return table.replace(p_b=p_b)


def p_value_from_scores(f_obs: float, null_scores, alpha: float) -> tuple[float, bool, float]:
    """Add-one p-value, significance flag and the null quantile it is judged against."""
    null = np.asarray(null_scores, dtype=float)
    count = int(np.count_nonzero(null >= f_obs))
    p = (1 + count) / (len(null) + 1)
    # inverted-CDF quantile is an actual null score, so exceeding it means
    # beating at least ceil((1 - alpha) R) replicates
    threshold = float(np.quantile(null, 1.0 - alpha, method="inverted_cdf"))
    return p, bool(f_obs > threshold), threshold


def replicate_seeds(sig_config: SignificanceConfig) -> list[tuple[int, int]]:
    """(data seed, scan seed) per replicate, derived from ``sig_config.seed``."""
    children = np.random.SeedSequence(sig_config.seed).spawn(sig_config.replicates)
    out = []
    for child in children:
        data_seed, scan_seed = child.generate_state(2)
        out.append((int(data_seed), int(scan_seed)))
    return out


def p_value(
    table: AuditTable,
    lam: float,
    side: Side | str,
    scan_config: ScanConfig = ScanConfig(),
    sig_config: SignificanceConfig = SignificanceConfig(),
    observed: IjdiResult | None = None,
) -> SignificanceResult:
    """Compare the observed score with maximum scores on null replicates.

    Each replicate runs the full corrected scan with the same search settings
    as the observed run; only the scan seed differs.
    """
    side = Side.parse(side)
    if observed is None:
        observed = ijdi_scan(table, lam, side, scan_config)
    null = np.empty(sig_config.replicates)
    for r, (data_seed, scan_seed) in enumerate(replicate_seeds(sig_config)):
        rep = null_replicate(table, lam, side, data_seed)
        cfg = ScanConfig(scan_config.restarts, scan_config.max_sweeps, scan_config.q_max, scan_config.tol, scan_seed)
        null[r] = ijdi_scan(rep, lam, side, cfg).f
    p, significant, threshold = p_value_from_scores(observed.f, null, sig_config.alpha)
    if not math.isfinite(p):
        raise DomainError("p-value is not finite")
    return SignificanceResult(observed.f, p, significant, null, threshold, observed)
