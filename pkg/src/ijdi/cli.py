"""Command-line entry point.

Every run-shaping option can also come from a flat JSON ``--config`` file
whose keys are the long option names with dashes replaced by underscores.
Flags given on the command line override file keys. Exit status is 0 on
success, 1 on a domain or I/O error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .data import Side, Subgroup, membership
from .elicitation import ElicitationResponse, cost_ratio_regression, lambda_from_ratio, read_responses, split_valid, validate
from .engine import CostProfile, ijdi_scan, lambda_from_costs
from .errors import DomainError
from .io import TABLE_COLUMNS, ColumnBindings, load_table, parse_subgroup, write_subgroup, write_table
from .mitigation import (
    ThresholdPolicy,
    apply_policy,
    error_rate_report,
    iterative_correction,
    min_lambda_no_ijdi,
    randomize_thresholds,
)
from .report import build_report, dumps_rows, emit_report, round_sig
from .scan import ScanConfig
from .significance import SignificanceConfig, p_value
from .sweep import exp1_trial, exp2_trial, paired_difference, parse_grid, run_sweep, summarize
from .synthetic import (
    DEMOGRAPHICS,
    Exp1Config,
    Exp2Config,
    ShiftMode,
    compas_like_features,
    generate_exp1,
    generate_exp2,
    lambda_star,
    lambda_star_monte_carlo,
    learned_probabilities,
    random_planted,
)

COMMANDS = ("audit", "scan", "significance", "mitigate", "simulate-exp1", "simulate-exp2", "elicit", "oracle-lambda-star")

# built-in defaults; anything left as None on the command line falls back to
# the config file, then to these
DEFAULTS: dict[str, Any] = {
    "input": None,
    "features": None,
    "outcome": "y0",
    "prediction": "p_hat0",
    "base_rate": "auto",
    "threshold": "auto",
    "recommendation": None,
    "side": "negative",
    "lambda": None,
    "costs": None,
    "elicitation": None,
    "fn_fp_ratio": 1.0,
    "restarts": 20,
    "max_sweeps": 50,
    "seed": 0,
    "replicates": 99,
    "alpha": 0.05,
    "significance": False,
    "max_iterations": 100,
    "output": "-",
    "format": "json",
    # mitigate
    "approach": None,
    "policy": None,
    "table_out": None,
    "max_iters": 20,
    "delta": 0.25,
    "theta_center": 0.5,
    # simulate
    "n": None,
    "k": 0.0,
    "gamma": 1.0,
    "mode": "probability",
    "theta0": 0.5,
    "planted": None,
    "planted_out": None,
    "learned": False,
    "sweep_lambda": None,
    "trials": 20,
    "summary_out": None,
    # elicit
    "responses": None,
    "interactive": False,
    "pairs": None,
    # oracle
    "monte_carlo": False,
    "samples": 1_000_000,
}


class UsageError(Exception):
    """Bad command-line usage; maps to exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser, table: bool = True, scan: bool = True) -> None:
    p.add_argument("--config", help="flat JSON file of option values")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="report path ('-' for stdout)")
    p.add_argument("--format", choices=("json", "csv-summary"))
    if table:
        g = p.add_argument_group("input table")
        g.add_argument("--input", "-i", help="CSV with a header row")
        g.add_argument("--features", help="comma-separated feature columns (default: every unbound column)")
        g.add_argument("--outcome", help="0/1 outcome column")
        g.add_argument("--prediction", help="predicted probability column")
        g.add_argument("--base-rate", dest="base_rate", help="true probability column; 'none' fits it from the features (default: 'p' if present)")
        g.add_argument("--threshold", help="threshold column name or constant (default: 'theta' if present, else 0.5)")
        g.add_argument("--recommendation", help="optional binarized recommendation column")
        g.add_argument("--side", choices=("negative", "positive"))
    if scan:
        g = p.add_argument_group("scan")
        g.add_argument("--restarts", type=int)
        g.add_argument("--max-sweeps", dest="max_sweeps", type=int)
        g.add_argument("--max-iterations", dest="max_iterations", type=int)


def _add_lambda(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("lambda source (exactly one)")
    g.add_argument("--lambda", dest="lambda", type=float)
    g.add_argument("--costs", help="cost_fp,cost_fn,cost_dfpr,cost_dtpr")
    g.add_argument("--elicitation", help="CSV of z1,z2,z3 responses")
    g.add_argument("--fn-fp-ratio", dest="fn_fp_ratio", type=float, help="cost(FN)/cost(FP) used with --elicitation")


def _add_significance(p: argparse.ArgumentParser, flag: bool = True) -> None:
    g = p.add_argument_group("significance")
    if flag:
        g.add_argument("--significance", action="store_const", const=True, help="also run randomization testing")
    g.add_argument("--replicates", type=int)
    g.add_argument("--alpha", type=float)


def _add_sweep(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sweep")
    g.add_argument("--sweep-lambda", dest="sweep_lambda", help="start:stop:step or a comma list")
    g.add_argument("--trials", type=int)
    g.add_argument("--summary-out", dest="summary_out", help="where to write the per-lambda summary table")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ijdi", description="Audit recommendations for insufficiently justified disparate impact.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("audit", help="corrected subgroup scan at a given lambda")
    _add_common(p)
    _add_lambda(p)
    _add_significance(p)

    p = sub.add_parser("scan", help="plain FPR/TPR scan (lambda = 0)")
    _add_common(p)

    p = sub.add_parser("significance", help="audit plus randomization testing")
    _add_common(p)
    _add_lambda(p)
    _add_significance(p, flag=False)

    p = sub.add_parser("mitigate", help="apply one of three mitigation approaches")
    _add_common(p)
    _add_lambda(p)
    _add_significance(p)
    p.add_argument("--approach", type=int, choices=(1, 2, 3))
    p.add_argument("--policy", help="threshold policy JSON (approach 1)")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="correction budget (approach 2)")
    p.add_argument("--delta", type=float, help="half-width of the threshold interval (approach 3)")
    p.add_argument("--theta-center", dest="theta_center", type=float, help="interval center (approach 3)")
    p.add_argument("--table-out", dest="table_out", help="write the mitigated table here")

    for name, helptext in (("simulate-exp1", "planted-subgroup data with constant error rates"), ("simulate-exp2", "log-odds shifted recidivism-like data")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, table=False)
        p.add_argument("--side", choices=("negative", "positive"))
        p.add_argument("--n", type=int)
        p.add_argument("--table-out", dest="table_out", help="generated CSV")
        p.add_argument("--planted-out", dest="planted_out", help="ground-truth subgroup JSON")
        p.add_argument("--planted", help="subgroup to plant (attr=v1|v2;...); random demographic cell if omitted")
        _add_sweep(p)
        if name == "simulate-exp1":
            p.add_argument("--k", type=float)
            p.add_argument("--threshold", help="constant threshold")
        else:
            p.add_argument("--gamma", type=float)
            p.add_argument("--mode", choices=("probability", "threshold"))
            p.add_argument("--theta0", type=float)
            p.add_argument("--learned", action="store_const", const=True, help="replace base rates by a logistic fit")

    p = sub.add_parser("elicit", help="cost ratio and lambda from questionnaire responses")
    p.add_argument("--config")
    p.add_argument("--responses", help="CSV of z1,z2,z3")
    p.add_argument("--interactive", action="store_const", const=True, help="prompt for z3 on stdin")
    p.add_argument("--pairs", help="z1:z2 pairs for interactive mode, comma separated")
    p.add_argument("--fn-fp-ratio", dest="fn_fp_ratio", type=float)
    p.add_argument("--output", "-o")

    p = sub.add_parser("oracle-lambda-star", help="closed-form lambda* for the planted-subgroup experiment")
    p.add_argument("--config")
    p.add_argument("--k", type=float)
    p.add_argument("--monte-carlo", dest="monte_carlo", action="store_const", const=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--side", choices=("negative", "positive"))
    return parser


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    for key, value in data.items():
        if key not in DEFAULTS:
            raise UsageError(f"{path}: unknown config key {key!r}")
        if isinstance(value, (dict, list)):
            raise UsageError(f"{path}: config key {key!r} must be a scalar")
    return data


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over built-in defaults.

    Only keys the subcommand defines are kept, in a fixed order, so the
    config echo in a report is deterministic.
    """
    file_cfg = _read_config(getattr(args, "config", None))
    given = vars(args)
    out = {}
    for key, default in DEFAULTS.items():
        if key not in given:
            continue
        if given[key] is not None:
            out[key] = given[key]
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    for key in file_cfg:
        if key not in given:
            raise UsageError(f"config key {key!r} does not apply to '{args.command}'")
    return out


def _side(cfg: dict) -> Side:
    try:
        return Side.parse(cfg["side"])
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _scan_config(cfg: dict) -> ScanConfig:
    return ScanConfig(restarts=int(cfg["restarts"]), max_sweeps=int(cfg["max_sweeps"]), seed=int(cfg["seed"]))


def _threshold(value: Any) -> str | float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


def _header(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh), [])


def _load(cfg: dict):
    if not cfg.get("input"):
        raise UsageError("--input is required")
    path = Path(cfg["input"])
    if not path.is_file():
        raise DomainError(f"{path}: no such file")
    header = _header(path)
    # "auto" picks up the layout written by simulate-* and mitigate
    base_rate = cfg["base_rate"]
    if base_rate == "auto":
        base_rate = "p" if "p" in header else None
    elif base_rate in ("none", ""):
        base_rate = None
    threshold = cfg["threshold"]
    if threshold == "auto":
        threshold = "theta" if "theta" in header else 0.5
    threshold = _threshold(threshold)
    if cfg["features"]:
        features = tuple(f.strip() for f in str(cfg["features"]).split(",") if f.strip())
    else:
        bound = {cfg["outcome"], cfg["prediction"], base_rate, cfg["recommendation"], *TABLE_COLUMNS}
        if isinstance(threshold, str):
            bound.add(threshold)
        features = tuple(h for h in header if h not in bound)
    bindings = ColumnBindings(features, cfg["outcome"], cfg["prediction"], base_rate, threshold, cfg["recommendation"])
    return load_table(path, bindings)


def _lambda(cfg: dict, side: Side) -> float:
    sources = [k for k in ("lambda", "costs", "elicitation") if cfg.get(k) is not None]
    if len(sources) != 1:
        raise UsageError("give exactly one of --lambda, --costs, --elicitation")
    src = sources[0]
    if src == "lambda":
        lam = float(cfg["lambda"])
        if not lam >= 0 or lam == float("inf"):
            raise DomainError(f"lambda must be a finite non-negative number, got {lam!r}")
        return lam
    if src == "costs":
        try:
            parts = [float(x) for x in str(cfg["costs"]).split(",")]
        except ValueError:
            raise UsageError("--costs takes four comma-separated numbers") from None
        if len(parts) != 4:
            raise UsageError("--costs takes four comma-separated numbers")
        return lambda_from_costs(CostProfile(*parts), side)
    good, flagged = split_valid(read_responses(cfg["elicitation"]))
    for resp, warning in flagged:
        print(f"warning: excluded {resp}: {warning}", file=sys.stderr)
    return lambda_from_ratio(cost_ratio_regression(good), float(cfg["fn_fp_ratio"]))


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _echo(cfg: dict, **extra) -> dict:
    d = {k: v for k, v in cfg.items() if k not in ("output", "format")}
    d.update(extra)
    return d


def cmd_audit(cfg: dict, force_sig: bool = False, lam: float | None = None) -> int:
    side = _side(cfg)
    table = _load(cfg)
    lam = _lambda(cfg, side) if lam is None else lam
    sc = _scan_config(cfg)
    result = ijdi_scan(table, lam, side, sc, max_iterations=int(cfg["max_iterations"]))
    sig = None
    if force_sig or cfg.get("significance"):
        sig_cfg = SignificanceConfig(int(cfg["replicates"]), float(cfg["alpha"]), int(cfg["seed"]))
        sig = p_value(table, lam, side, sc, sig_cfg, observed=result)
    report = build_report(result, _echo(cfg, resolved_lambda=lam), int(cfg["seed"]), sig)
    text = emit_report(report, cfg["output"], cfg["format"])
    if cfg["output"] in (None, "-"):
        sys.stdout.write(text)
    return 0


def cmd_scan(cfg: dict) -> int:
    return cmd_audit(cfg, lam=0.0)


def _load_policy(path: str) -> ThresholdPolicy:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, list):
        # bare list of {"subgroup": ..., "threshold": ...} records
        data = {"overrides": data}
    if not isinstance(data, dict):
        raise DomainError(f"{path}: a policy is an object or a list of records")
    return ThresholdPolicy.from_dict(data)


def _rates_dict(table, subgroup: Subgroup) -> dict:
    r = error_rate_report(table, subgroup)
    return {"fpr_in": r.fpr_in, "fpr_out": r.fpr_out, "tpr_in": r.tpr_in, "tpr_out": r.tpr_out}


def cmd_mitigate(cfg: dict) -> int:
    approach = cfg["approach"]
    if approach is None:
        raise UsageError("--approach is required")
    side = _side(cfg)
    table = _load(cfg)
    seed = int(cfg["seed"])
    out: dict[str, Any] = {"schema_version": 1, "engine_version": __version__, "seed": seed, "approach": int(approach)}
    if approach == 1:
        if not cfg["policy"]:
            raise UsageError("approach 1 needs --policy")
        policy = _load_policy(cfg["policy"])
        new = apply_policy(table, policy)
        out["policy"] = policy.to_dict()
        out["groups"] = [
            {"subgroup": sg.to_dict(), "before": _rates_dict(table, sg), "after": _rates_dict(new, sg)} for sg, _ in policy.overrides
        ]
        out["recommendations_changed"] = int(np.sum(new.p_b != table.p_b))
    elif approach == 2:
        lam = _lambda(cfg, side)
        sig_cfg = SignificanceConfig(int(cfg["replicates"]), float(cfg["alpha"]), seed) if cfg.get("significance") else None
        trace = iterative_correction(table, lam, side, _scan_config(cfg), sig_cfg, int(cfg["max_iters"]))
        new = trace.table
        out["lam"] = lam
        out["terminated"] = trace.terminated.value
        out["final_f"] = trace.final_f
        out["final_p_value"] = trace.final_p_value
        out["steps"] = [
            {
                "iteration": s.iteration,
                "subgroup": s.subgroup.to_dict(),
                "eta": s.eta,
                "f_before": s.f_before,
                "criterion_margin_after": s.margin_after,
                "p_value": s.p_value,
            }
            for s in trace.steps
        ]
    else:
        delta = float(cfg["delta"])
        theta = randomize_thresholds(float(cfg["theta_center"]), delta, len(table), seed)
        new = table.replace(theta=theta)
        out["delta"] = delta
        out["theta_center"] = float(cfg["theta_center"])
        out["min_lambda_no_ijdi"] = min_lambda_no_ijdi(delta)
    out["config"] = _echo(cfg)
    if cfg["table_out"]:
        write_table(new, cfg["table_out"])
    _write(json.dumps(round_sig(out), indent=2) + "\n", cfg["output"])
    return 0


SWEEP_FIELDS = ("lam", "trial", "iou", "f", "size", "planted_size")
SUMMARY_COLS = ("lam", "trials", "mean_iou", "ci_low", "ci_high", "mean_f")


def _simulate(cfg: dict, exp: int) -> int:
    side = _side(cfg)
    seed = int(cfg["seed"])
    sc = _scan_config(cfg)
    if exp == 1:
        n = int(cfg["n"] or 5000)
        theta = 0.5 if cfg["threshold"] in (None, "auto") else float(cfg["threshold"])
        factory = exp1_trial(float(cfg["k"]), n, theta, base_seed=seed)
    else:
        n = int(cfg["n"] or 7214)
        mode = ShiftMode.SHIFT_PROBABILITY if cfg["mode"] == "probability" else ShiftMode.SHIFT_THRESHOLD
        factory = exp2_trial(float(cfg["gamma"]), mode, n, float(cfg["theta0"]), base_seed=seed, learned=bool(cfg["learned"]))

    if cfg["sweep_lambda"]:
        grid = parse_grid(str(cfg["sweep_lambda"]))
        records = run_sweep(factory, grid, int(cfg["trials"]), side, sc)
        rows = [{k: getattr(r, k) for k in SWEEP_FIELDS} for r in records]
        summary = [{k: getattr(s, k) for k in SUMMARY_COLS} for s in summarize(records)]
        if cfg["format"] == "csv-summary":
            _write(dumps_rows(rows, SWEEP_FIELDS), cfg["output"])
        else:
            doc = {
                "schema_version": 1,
                "engine_version": __version__,
                "seed": seed,
                "config": _echo(cfg),
                "summary": summary,
                "trials": rows,
            }
            if len(grid) >= 2:
                lo = [l for l in grid]
                doc["paired_differences"] = [
                    dict(zip(("lam_a", "lam_b", "mean", "ci_low", "ci_high"), (a, b, *paired_difference(records, a, b))))
                    for a, b in zip(lo, lo[1:])
                ]
            _write(json.dumps(round_sig(doc), indent=2) + "\n", cfg["output"])
        if cfg["summary_out"]:
            Path(cfg["summary_out"]).write_text(dumps_rows(summary, SUMMARY_COLS), encoding="utf-8")
        return 0

    # single generated table
    if exp == 1:
        feats = compas_like_features(n, seed=seed)
        planted = parse_subgroup(cfg["planted"]) if cfg["planted"] else random_planted(feats, DEMOGRAPHICS, seed=seed + 1, min_size=max(1, n // 20))
        table, planted = generate_exp1(feats, Exp1Config(float(cfg["k"]), planted, theta, seed + 2))
    else:
        feats = compas_like_features(n, seed=seed)
        planted = parse_subgroup(cfg["planted"]) if cfg["planted"] else random_planted(feats, DEMOGRAPHICS, seed=seed + 1, min_size=100)
        table, planted = generate_exp2(feats, Exp2Config(float(cfg["gamma"]), planted, mode, theta0=float(cfg["theta0"]), seed=seed + 2))
        if cfg["learned"]:
            table = table.replace(p=learned_probabilities(table))
    if not cfg["table_out"]:
        raise UsageError("--table-out is required unless --sweep-lambda is given")
    write_table(table, cfg["table_out"])
    if cfg["planted_out"]:
        write_subgroup(planted, cfg["planted_out"])
    info = {"rows": len(table), "planted": planted.to_dict(), "planted_size": int(membership(planted, table).sum())}
    _write(json.dumps(info, sort_keys=True) + "\n", cfg["output"])
    return 0


def _parse_pairs(text: str | None) -> list[tuple[int, int]]:
    if not text:
        return [(30, 10), (60, 40), (80, 20)]
    out = []
    for part in text.split(","):
        try:
            a, b = part.split(":")
            out.append((int(a), int(b)))
        except ValueError:
            raise UsageError(f"pair {part!r} is not z1:z2") from None
    return out


def _prompt(pairs: list[tuple[int, int]]) -> list[ElicitationResponse]:
    responses = []
    for z1, z2 in pairs:
        while True:
            sys.stdout.write(
                f"System A: error rates {z1}% and {z2}% for the two groups. "
                f"At what common rate z3 would System B be equally good? "
            )
            sys.stdout.flush()
            line = sys.stdin.readline()
            if not line:
                raise DomainError("input ended before all questions were answered")
            try:
                resp = ElicitationResponse(z1, z2, int(line.strip()))
            except ValueError:
                print("please enter an integer between 0 and 100")
                continue
            except DomainError as exc:
                print(exc)
                continue
            v = validate(resp)
            if not v.ok:
                print(f"warning: {v.warning}")
                continue
            responses.append(resp)
            break
    return responses


def cmd_elicit(cfg: dict) -> int:
    if cfg["interactive"]:
        good, flagged = _prompt(_parse_pairs(cfg["pairs"])), []
    elif cfg["responses"]:
        good, flagged = split_valid(read_responses(cfg["responses"]))
    else:
        raise UsageError("give --responses or --interactive")
    for resp, warning in flagged:
        print(f"warning: excluded {resp}: {warning}", file=sys.stderr)
    ratio = cost_ratio_regression(good)
    doc = {
        "responses_used": len(good),
        "responses_flagged": len(flagged),
        "cost_ratio": ratio,
        "fn_fp_ratio": float(cfg["fn_fp_ratio"]),
        "lambda": lambda_from_ratio(ratio, float(cfg["fn_fp_ratio"])) if ratio > 0 else "inf",
    }
    _write(json.dumps(round_sig(doc), indent=2) + "\n", cfg["output"])
    return 0


def cmd_oracle(cfg: dict) -> int:
    k = float(cfg["k"])
    print(f"{lambda_star(k):.4f}")
    if cfg["monte_carlo"]:
        est = lambda_star_monte_carlo(k, int(cfg["samples"]), int(cfg["seed"]), cfg["side"])
        print(f"monte-carlo {est.ratio:.4f}")
    return 0


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    cfg = resolve(args)
    handlers = {
        "audit": cmd_audit,
        "scan": cmd_scan,
        "significance": lambda c: cmd_audit(c, force_sig=True),
        "mitigate": cmd_mitigate,
        "simulate-exp1": lambda c: _simulate(c, 1),
        "simulate-exp2": lambda c: _simulate(c, 2),
        "elicit": cmd_elicit,
        "oracle-lambda-star": cmd_oracle,
    }
    return handlers[args.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
