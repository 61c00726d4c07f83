"""Command-line front end: ``clumpq {stationary,clump,predict,simulate,verify}``.

Every number in a report is a leaf ``{"value": ..., "source": ...}`` where
the source is one of ``closed-form``, ``gf-solver``, ``oracle`` or
``monte-carlo``.  JSON output has the layout ``{meta, results, warnings}``;
CSV output flattens ``results`` to ``key,value,source`` rows with ``/`` as
the path separator.  Both use Python's shortest round-trip float repr, so
the numeric payloads are identical and a rerun with the same arguments
reproduces the output byte for byte.

Exit codes: 0 success, 1 usage error, 2 numeric or structural failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import closedform as cf
from .clump import (
    EXTRAPOLATION_WARNING,
    VALIDATED_ELL,
    conjecture_ratio,
    epsilon_pair,
    max_cdf,
    predict_max_cdf,
    solve_clumps,
)
from .gfsolver import SolverError, StructuralError, solve_stationary
from .model import DEFAULT_TRUNCATION, ModelError, Order, make_params
from .montecarlo import (
    DEFAULT_SEED,
    InsufficientData,
    Record,
    SimConfig,
    compare_max,
    simulate_walk,
)
from .verify import run_suite

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
SCHEMA_VERSION = 1

CLOSED, SOLVER, ORACLE, MC = "closed-form", "gf-solver", "oracle", "monte-carlo"


class UsageError(Exception):
    pass


@dataclass
class Report:
    command: str
    args: dict
    results: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    extra_meta: dict = field(default_factory=dict)
    status: int = EXIT_OK

    def meta(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "args": self.args,
            "versions": _versions(),
            **self.extra_meta,
        }


def _versions() -> dict:
    from . import __version__

    return {"clumpq": __version__, "numpy": np.__version__, "mpmath": mpmath.__version__, "python": platform.python_version()}


def leaf(value, source: str) -> dict:
    if isinstance(value, (bool, np.bool_)):
        value = bool(value)
    elif isinstance(value, (int, np.integer)):
        value = int(value)
    elif value is not None:
        value = float(value)
        if not math.isfinite(value):
            value = None
    return {"value": value, "source": source}


def _is_leaf(node) -> bool:
    return isinstance(node, dict) and set(node) == {"value", "source"}


def flatten(results: dict, prefix: str = "") -> list[tuple[str, object, str]]:
    rows = []
    for key, node in results.items():
        path = f"{prefix}/{key}" if prefix else str(key)
        if _is_leaf(node):
            rows.append((path, node["value"], node["source"]))
        elif isinstance(node, dict):
            rows.extend(flatten(node, path))
        else:
            raise TypeError(f"result {path} is not a provenance leaf")
    return rows


def _csv_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def render(report: Report, fmt: str) -> str:
    if fmt == "json":
        doc = {"meta": report.meta(), "results": report.results, "warnings": report.warnings}
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value", "source"])
    for key, value, source in flatten(report.results):
        writer.writerow([key, _csv_value(value), source])
    return buf.getvalue()


# --- commands ----------------------------------------------------------------


def _closed(fn, *args):
    """Closed-form value, or ``None`` when no formula covers the case."""
    try:
        return fn(*args)
    except cf.UnsupportedCase:
        return None


def cmd_stationary(args) -> Report:
    params = make_params(args.p, args.ell)
    order = Order.parse(args.order)
    sol = solve_stationary(params, order, m=args.m, with_oracle=True)
    results = {f"pi{j}": leaf(v, SOLVER) for j, v in enumerate(sol.boundary)}
    results["A"] = leaf(sol.tail_amplitude, SOLVER)
    results["decay"] = leaf(sol.decay, SOLVER)
    results["L"] = leaf(sol.L, SOLVER)
    results["max_dev"] = leaf(sol.max_oracle_deviation(), ORACLE)
    closed = {}
    for j in range(params.ell):
        val = _closed(cf.pi_closed, params, order, j)
        if val is not None:
            closed[f"pi{j}"] = leaf(val, CLOSED)
    amp = _closed(cf.amplitude_closed, params, order)
    if amp is not None:
        closed["A"] = leaf(amp, CLOSED)
    if closed:
        results["closed_form"] = closed
    return Report("stationary", _echo(args, "p", "ell", "order", "m"), results)


def cmd_clump(args) -> Report:
    params = make_params(args.p, args.ell)
    sol = solve_clumps(params)
    ell = params.ell
    results = {
        "nu": {str(j): leaf(v, SOLVER) for j, v in sol.hit.table().items()},
        "lambdas": {str(-k): leaf(v, SOLVER) for k, v in enumerate(sol.lambdas)},
        "lambda_over_pi": leaf(sol.lambda_over_pi, SOLVER),
        "A": leaf(sol.amplitude, SOLVER),
        "epsilon0": leaf(sol.epsilon0, SOLVER),
        "epsilon1": leaf(sol.epsilon, SOLVER),
        "expected_sojourn": leaf(sol.expected_sojourn, SOLVER),
    }
    if ell in VALIDATED_ELL:
        eps0, eps1 = epsilon_pair(params)
        results["epsilon_ratio"] = leaf(eps0 / eps1, SOLVER)
    if ell >= 2:
        results["hidden_relation_gap"] = leaf(conjecture_ratio(params).rel_gap, SOLVER)
    closed = {}
    if ell in (2, 3):
        closed["chi"] = leaf(cf.chi(params), CLOSED)
    if ell in VALIDATED_ELL:
        closed["epsilon1"] = leaf(cf.epsilon_closed(params, 1), CLOSED)
        closed["lambda_over_pi"] = leaf(cf.lambda_over_pi_closed(params), CLOSED)
    if ell == 1:
        closed["expected_sojourn"] = leaf(cf.expected_sojourn_closed(params), CLOSED)
    if closed:
        results["closed_form"] = closed
    return Report("clump", _echo(args, "p", "ell"), results, list(sol.warnings))


def cmd_predict(args) -> Report:
    params = make_params(args.p, args.ell)
    sol = solve_clumps(params)
    pred = predict_max_cdf(params, args.n, clumps=sol)
    source = pred.source
    results = {
        "epsilon1": leaf(pred.epsilon, source),
        "location": leaf(pred.location(), source),
        "cdf": {str(m): leaf(v, source) for m, v in zip(pred.ms, pred.cdf) if 0.01 <= v <= 0.99},
    }
    return Report("predict", _echo(args, "p", "ell", "n"), results, list(sol.warnings))


def cmd_simulate(args) -> Report:
    params = make_params(args.p, args.ell)
    config = SimConfig(params, args.n, args.replicates, args.seed, Record.MAX_AND_CLUMPS)
    emp = simulate_walk(config)
    sol = solve_clumps(params)
    cmp = compare_max(emp, lambda m: max_cdf(sol.epsilon, params.decay, args.n, m))
    table = {
        str(r.m): {
            "empirical": leaf(r.empirical, MC),
            "predicted": leaf(r.predicted, SOLVER),
            "stderr": leaf(r.stderr, MC),
            "z": leaf(r.z, MC),
            "ok": leaf(r.ok, MC),
        }
        for r in cmp.rows
    }
    results = {
        "cdf": table,
        "summary": {
            "passed": leaf(cmp.passed, MC),
            "levels": leaf(len(cmp.rows), MC),
            "worst_gap": leaf(cmp.worst, MC),
            "sigmas": leaf(cmp.sigmas, MC),
            "slack": leaf(cmp.slack, MC),
        },
        "expected_sojourn": {"predicted": leaf(sol.expected_sojourn, SOLVER)},
    }
    extra = {}
    warnings = list(sol.warnings)
    if emp.sojourn is not None:
        results["expected_sojourn"].update(
            empirical=leaf(emp.sojourn.value, MC),
            stderr=leaf(emp.sojourn.stderr, MC),
            clumps=leaf(emp.sojourn.clumps, MC),
        )
        extra["clump_rule"] = emp.sojourn.rule
    else:
        warnings.append("no closed clump at the reference level; sojourn not estimated")
    if not cmp.rows:
        warnings.append("no level with predicted CDF in the central range")
    return Report("simulate", _echo(args, "p", "ell", "n", "replicates", "seed"), results, warnings, extra)


def cmd_verify(args) -> Report:
    checks = run_suite(quick=args.quick, ell_max=args.ell_max, seed=args.seed)
    table = {}
    warnings = []
    for c in checks:
        entry = {"value": leaf(c.value, c.source)}
        if c.tolerance is not None:
            entry["tolerance"] = leaf(c.tolerance, c.source)
            entry["passed"] = leaf(c.passed, c.source)
        table[c.key] = entry
        if c.note == EXTRAPOLATION_WARNING and EXTRAPOLATION_WARNING not in warnings:
            warnings.append(EXTRAPOLATION_WARNING)
    failed = [c.key for c in checks if not c.passed]
    asserted = [c for c in checks if not c.reported_only]
    results = {
        "checks": table,
        "summary": {
            "asserted": leaf(len(asserted), SOLVER),
            "failed": leaf(len(failed), SOLVER),
            "reported": leaf(len(checks) - len(asserted), SOLVER),
        },
    }
    warnings += [f"failed: {k}" for k in failed]
    report = Report("verify", _echo(args, "quick", "ell_max", "seed"), results, warnings)
    report.status = EXIT_VERIFY if failed else EXIT_OK
    return report


COMMANDS = {
    "stationary": cmd_stationary,
    "clump": cmd_clump,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def _echo(args, *names) -> dict:
    out = {}
    for name in names:
        value = getattr(args, name)
        out[name] = value.value if isinstance(value, Order) else value
    return out


# --- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    value = int(float(text)) if "e" in text.lower() else int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _order(text: str) -> Order:
    try:
        return Order.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown order {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write the report here instead of stdout")
    model = _Parser(add_help=False)
    model.add_argument("--p", type=float, required=True, help="arrival probability, 0 < p < 1/2")
    model.add_argument("--ell", type=int, required=True, help="slots per red or green block")

    parser = _Parser(prog="clumpq", description="Maximum queue length at a periodic traffic light.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("stationary", parents=[common, model], help="stationary law of a cycle subwalk")
    s.add_argument("--order", type=_order, default=Order.RED_FIRST,
                   help="red-first or green-first (RedFirst and GreenFirst also accepted)")
    s.add_argument("--m", type=_positive_int, default=DEFAULT_TRUNCATION, help="truncation for the oracle")
    sub.add_parser("clump", parents=[common, model], help="hitting probabilities and clump rates")
    s = sub.add_parser("predict", parents=[common, model], help="predicted law of the maximum")
    s.add_argument("--n", type=_positive_int, default=100_000, help="horizon in slots")
    s = sub.add_parser("simulate", parents=[common, model], help="simulation against the prediction")
    s.add_argument("--n", type=_positive_int, default=100_000, help="horizon in slots (whole cycles)")
    s.add_argument("--replicates", type=_positive_int, default=2000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s = sub.add_parser("verify", parents=[common], help="run the cross-validation suite")
    s.add_argument("--ell-max", type=int, default=3, help="also report conjecture gaps for 4..ELL_MAX")
    s.add_argument("--quick", action="store_true", help="analytic checks only, no simulation")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": {"type": kind, "message": message}}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        report = COMMANDS[args.command](args)
    except ModelError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (StructuralError, SolverError, InsufficientData, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_NUMERIC)
    text = render(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.format == "csv":
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
