"""Audit binarized recommendations for insufficiently justified disparate impact (IJDI).

A subgroup has IJDI when its false (or true) positive rate gap to the rest
of the population exceeds what its base-rate gap justifies at exchange
rate ``lam``. The corrected subgroup scan finds the intersectional subgroup
with the most significant such gap.
"""

__version__ = "0.1.0"

from .data import AuditFrame, AuditTable, GroupStats, Side, Subgroup, binarize, build_frame, group_stats, membership
from .engine import (
    CostProfile,
    IjdiResult,
    criterion_holds,
    edge_case_1_adjust,
    edge_case_2_adjust,
    equivalence_check,
    ijdi_scan,
    lambda_from_costs,
)
from .errors import DomainError
from .scan import ScanConfig, ScanResult, brute_force_scan, scan, score
from .significance import SignificanceConfig, null_replicate, p_value

__all__ = [
    "AuditFrame",
    "AuditTable",
    "CostProfile",
    "DomainError",
    "GroupStats",
    "IjdiResult",
    "ScanConfig",
    "ScanResult",
    "Side",
    "SignificanceConfig",
    "Subgroup",
    "binarize",
    "brute_force_scan",
    "build_frame",
    "criterion_holds",
    "edge_case_1_adjust",
    "edge_case_2_adjust",
    "equivalence_check",
    "group_stats",
    "ijdi_scan",
    "lambda_from_costs",
    "membership",
    "null_replicate",
    "p_value",
    "scan",
    "score",
]
