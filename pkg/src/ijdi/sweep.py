"""Trial sweeps over lambda grids for the synthetic experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import AuditTable, Side, Subgroup, build_frame, membership
from .engine import ijdi_scan
from .errors import DomainError
from .scan import ScanConfig
from .synthetic import (
    DEMOGRAPHICS,
    Exp1Config,
    Exp2Config,
    ShiftMode,
    compas_like_features,
    generate_exp1,
    generate_exp2,
    iou_masks,
    learned_probabilities,
    random_planted,
)

TrialFactory = Callable[[int], tuple[AuditTable, Subgroup]]


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError(f"grid {text!r} must look like start:stop:step")
        try:
            start, stop, step = (float(x) for x in parts)
        except ValueError:
            raise DomainError(f"grid {text!r} has a non-numeric bound") from None
        if step <= 0 or stop < start:
            raise DomainError(f"grid {text!r} needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"grid {text!r} is not a list of numbers") from None


def exp1_trial(k: float, n: int = 5000, theta: float = 0.5, base_seed: int = 0, min_size: int | None = None) -> TrialFactory:
    """Experiment 1 trials: fresh features, planted demographic cell and outcomes per trial."""
    min_size = max(1, n // 20) if min_size is None else min_size

    def make(trial: int) -> tuple[AuditTable, Subgroup]:
        seeds = np.random.SeedSequence([base_seed, trial]).generate_state(3)
        feats = compas_like_features(n, seed=int(seeds[0]))
        planted = random_planted(feats, DEMOGRAPHICS, seed=int(seeds[1]), min_size=min_size)
        return generate_exp1(feats, Exp1Config(k, planted, theta, int(seeds[2])))

    return make


def exp2_trial(
    gamma: float,
    mode: ShiftMode | str = ShiftMode.SHIFT_PROBABILITY,
    n: int = 7214,
    theta0: float = 0.5,
    base_seed: int = 0,
    learned: bool = False,
    min_size: int = 100,
) -> TrialFactory:
    """Experiment 2 trials on the recidivism-like fixture.

    With ``learned`` the base rates are replaced by a logistic fit on all
    features. The generated data do not depend on ``mode``.
    """

    def make(trial: int) -> tuple[AuditTable, Subgroup]:
        seeds = np.random.SeedSequence([base_seed, trial]).generate_state(3)
        feats = compas_like_features(n, seed=int(seeds[0]))
        planted = random_planted(feats, DEMOGRAPHICS, seed=int(seeds[1]), min_size=min_size)
        table, planted = generate_exp2(feats, Exp2Config(gamma, planted, mode, theta0=theta0, seed=int(seeds[2])))
        if learned:
            table = table.replace(p=learned_probabilities(table))
        return table, planted

    return make


@dataclass(frozen=True)
class TrialRecord:
    lam: float
    trial: int
    iou: float
    f: float
    size: int
    planted_size: int


def trial_config(scan_config: ScanConfig, trial: int) -> ScanConfig:
    seed = int(np.random.SeedSequence([scan_config.seed, trial]).generate_state(1)[0])
    return ScanConfig(scan_config.restarts, scan_config.max_sweeps, scan_config.q_max, scan_config.tol, seed)


def run_sweep(
    factory: TrialFactory,
    lambdas: Sequence[float],
    trials: int,
    side: Side | str = Side.NEGATIVE,
    scan_config: ScanConfig = ScanConfig(),
) -> list[TrialRecord]:
    """Run the corrected scan for every (trial, lambda) pair.

    Each trial's table is generated once and scanned at every lambda with
    the same scan seed, so differences across lambda are paired.
    """
    side = Side.parse(side)
    if trials < 1:
        raise DomainError("trials must be positive")
    records = []
    for t in range(trials):
        table, planted = factory(t)
        cfg = trial_config(scan_config, t)
        planted_mask = membership(planted, build_frame(table, side, 0.0))
        for lam in lambdas:
            res = ijdi_scan(table, lam, side, cfg)
            records.append(
                TrialRecord(float(lam), t, iou_masks(res.members, planted_mask), res.f, res.scan_result.size, int(planted_mask.sum()))
            )
    return records


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    trials: int
    mean_iou: float
    ci_low: float
    ci_high: float
    mean_f: float


def mean_ci(values: Sequence[float], z: float = 1.96) -> tuple[float, float, float]:
    """Mean with a normal-approximation confidence interval."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if len(v) < 2:
        return m, m, m
    half = z * float(v.std(ddof=1)) / math.sqrt(len(v))
    return m, m - half, m + half


def summarize(records: Sequence[TrialRecord]) -> list[SweepPoint]:
    out = []
    for lam in sorted({r.lam for r in records}):
        rows = [r for r in records if r.lam == lam]
        m, lo, hi = mean_ci([r.iou for r in rows])
        out.append(SweepPoint(lam, len(rows), m, lo, hi, float(np.mean([r.f for r in rows]))))
    return out


def paired_difference(records: Sequence[TrialRecord], lam_a: float, lam_b: float) -> tuple[float, float, float]:
    """Mean and confidence interval of IOU(lam_a) - IOU(lam_b) over shared trials."""
    a = {r.trial: r.iou for r in records if r.lam == lam_a}
    b = {r.trial: r.iou for r in records if r.lam == lam_b}
    common = sorted(set(a) & set(b))
    if not common:
        raise DomainError("no trials shared by both lambdas")
    return mean_ci([a[t] - b[t] for t in common])
