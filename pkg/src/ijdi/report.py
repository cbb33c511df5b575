"""Machine-readable audit reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .data import stats_from_mask
from .engine import IjdiResult, criterion_from_stats
from .errors import DomainError
from .significance import SignificanceResult

SCHEMA_VERSION = 1
FORMATS = ("json", "csv-summary")


def round_sig(x: Any, digits: int = 10) -> Any:
    """Floats rounded to ``digits`` significant digits; non-finite become strings."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: round_sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round_sig(v, digits) for v in x]
    if hasattr(x, "item"):
        return round_sig(x.item(), digits)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _unround(x: Any) -> Any:
    if x in ("inf", "-inf", "nan"):
        return float(x)
    return x


@dataclass(frozen=True)
class GroupSummary:
    rate_name: str
    rate_in: float
    rate_out: float
    base_rate_in: float
    base_rate_out: float
    n_in: int
    n_out: int


@dataclass(frozen=True)
class AuditReport:
    side: str
    lam: float
    subgroup: dict[str, list[str]]
    f: float
    q: float
    group: GroupSummary | None
    criterion_margin: float | None
    criterion_holds: bool | None
    adjustments: list[dict]
    iterations: int
    significance: dict | None
    config: dict
    seed: int
    engine_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        ordered = {"schema_version": d.pop("schema_version"), "engine_version": d.pop("engine_version"), "seed": d.pop("seed")}
        ordered.update(d)
        return round_sig(ordered)

    @classmethod
    def from_dict(cls, data: dict) -> "AuditReport":
        data = dict(data)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise DomainError(f"unsupported report schema {data.get('schema_version')!r}")
        group = data.pop("group")
        data["q"] = _unround(data["q"])
        return cls(group=GroupSummary(**group) if group else None, **data)


def build_report(result: IjdiResult, config: dict, seed: int, significance: SignificanceResult | None = None) -> AuditReport:
    """Assemble the report for one corrected-scan run.

    Group rates and the criterion margin use the original base rates, not
    the working copy the edge-case corrections modified.
    """
    frame = result.frame
    side = frame.side
    original = result.base_frame
    group = None
    margin = holds = None
    mask = result.members
    if mask.any() and not mask.all():
        st = stats_from_mask(original.y_scan, original.p, mask)
        group = GroupSummary(side.rate_name, st.rate_in, st.rate_out, st.p_in, st.p_out, st.n_in, st.n_out)
        crit = criterion_from_stats(st.rate_in, st.rate_out, st.p_in, st.p_out, frame.lam)
        margin, holds = crit.margin, crit.holds
    adjustments = [
        {
            "kind": a.kind,
            "iteration": a.iteration,
            "subgroup": a.subgroup.to_dict(),
            "coefficient": a.coefficient,
            "mean_before": a.mean_before,
            "mean_after": a.mean_after,
            "target": a.target,
        }
        for a in result.adjustments
    ]
    sig = None
    if significance is not None:
        sig = {
            "p_value": significance.p_value,
            "significant": significance.significant,
            "replicates": len(significance.null_scores),
            "null_quantile": significance.threshold,
        }
    return AuditReport(
        side=side.value,
        lam=frame.lam,
        subgroup=result.subgroup.to_dict(),
        f=result.f,
        q=result.q,
        group=group,
        criterion_margin=margin,
        criterion_holds=holds,
        adjustments=adjustments,
        iterations=result.iterations,
        significance=sig,
        config=config,
        seed=seed,
    )


def dumps_json(report: AuditReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False, allow_nan=False) + "\n"


SUMMARY_FIELDS = (
    "schema_version", "engine_version", "seed", "side", "lam", "subgroup", "f", "q",
    "rate_in", "rate_out", "base_rate_in", "base_rate_out", "n_in", "n_out",
    "criterion_margin", "criterion_holds", "adjustments", "iterations", "p_value", "significant",
)


def dumps_csv_summary(report: AuditReport) -> str:
    d = report.to_dict()
    g = d["group"] or {}
    s = d["significance"] or {}
    row = {
        **{k: d[k] for k in ("schema_version", "engine_version", "seed", "side", "lam", "f", "q", "criterion_margin", "criterion_holds", "iterations")},
        "subgroup": json.dumps(d["subgroup"], sort_keys=True),
        **{k: g.get(k) for k in ("rate_in", "rate_out", "base_rate_in", "base_rate_out", "n_in", "n_out")},
        "adjustments": len(d["adjustments"]),
        "p_value": s.get("p_value"),
        "significant": s.get("significant"),
    }
    return dumps_rows([row], SUMMARY_FIELDS)


def dumps_rows(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else round_sig(r.get(k))) for k in fields})
    return buf.getvalue()


def emit_report(report: AuditReport, path: str | Path | None, fmt: str = "json") -> str:
    """Serialize ``report``; writes to ``path`` unless it is None or ``-``."""
    if fmt == "json":
        text = dumps_json(report)
    elif fmt == "csv-summary":
        text = dumps_csv_summary(report)
    else:
        raise DomainError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    if path is not None and str(path) != "-":
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_report(path: str | Path) -> AuditReport:
    return AuditReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
