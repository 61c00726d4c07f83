"""Acceptance criteria, one test each, at the stated tolerances and time budgets.

Each test records a ``criterion N: PASS/FAIL - detail`` line that is repeated
in the terminal summary.
"""
import time

import numpy as np
import pytest

from clumpq import cli
from clumpq import verify as vf
from clumpq.clump import EXTRAPOLATION_WARNING
from clumpq.model import make_params

GRID_P = tuple(round(0.05 * k, 2) for k in range(1, 10))
GRID_ELL = (1, 2, 3)


def _grid(ells=GRID_ELL):
    return [make_params(p, ell) for ell in ells for p in GRID_P]


def _worst(checks):
    failed = [c.key for c in checks if not c.passed]
    worst = max(c.value for c in checks)
    return failed, worst


def test_closed_form_equivalence(acceptance_log):
    start = time.perf_counter()
    checks = [c for params in _grid() for c in vf.closed_form_checks(params)]
    elapsed = time.perf_counter() - start
    failed, worst = _worst(checks)
    ok = not failed and elapsed < 5
    acceptance_log(1, ok, f"{len(checks)} comparisons, worst rel err {worst:.2e} (tol 1e-9), {elapsed:.2f}s (< 5s)")
    assert not failed, failed
    assert elapsed < 5


def test_oracle_equivalence(acceptance_log):
    start = time.perf_counter()
    checks = [c for params in _grid() for c in vf.oracle_checks(params, m=400)]
    elapsed = time.perf_counter() - start
    failed, worst = _worst(checks)
    ok = not failed and elapsed < 10
    acceptance_log(2, ok, f"{len(checks)} solves at m=400, worst deviation {worst:.2e} (tol 1e-9), {elapsed:.2f}s (< 10s)")
    assert not failed, failed
    assert elapsed < 10


def test_hidden_relation(acceptance_log):
    start = time.perf_counter()
    checks = [vf.hidden_relation_check(params) for params in _grid((2, 3))]
    elapsed = time.perf_counter() - start
    failed, worst = _worst(checks)
    ok = not failed and elapsed < 2
    acceptance_log(3, ok, f"ell in (2, 3), worst rel gap {worst:.2e} (tol 1e-8), {elapsed:.2f}s (< 2s)")
    assert not failed, failed
    assert elapsed < 2


def test_conjecture_evidence_is_reported(acceptance_log):
    reports = vf.conjecture_reports(5, ps=(0.1, 0.2, 0.3, 0.4))
    gaps = {c.key: c.value for c in reports}
    ok = (
        len(reports) == 8
        and all(c.reported_only and c.note == EXTRAPOLATION_WARNING for c in reports)
        and all(np.isfinite(v) for v in gaps.values())
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in gaps.items())
    acceptance_log(4, ok, f"reported only, with extrapolation warning: {detail}")
    assert ok


def test_ell_one_exact_chain(acceptance_log):
    start = time.perf_counter()
    checks = [c for p in GRID_P for c in vf.ell_one_checks(make_params(p, 1))]
    elapsed = time.perf_counter() - start
    failed, worst = _worst(checks)
    ok = not failed and elapsed < 1
    acceptance_log(5, ok, f"nu0, E(C), eps1, eps0/eps1 worst rel err {worst:.2e} (tol 1e-12), {elapsed:.2f}s (< 1s)")
    assert not failed, failed
    assert elapsed < 1


def test_perfect_squares(acceptance_log):
    start = time.perf_counter()
    checks = [vf.perfect_square_check(params) for params in _grid((2, 3))]
    elapsed = time.perf_counter() - start
    failed, worst = _worst(checks)
    ok = not failed and elapsed < 1
    acceptance_log(6, ok, f"chi/(2 ell) vs squared forms, worst rel err {worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 1s)")
    assert not failed, failed
    assert elapsed < 1


@pytest.mark.slow
def test_monte_carlo_maximum(acceptance_log):
    start = time.perf_counter()
    checks = [vf.max_distribution_check(0.3, ell, n=100_000, replicates=2000) for ell in (1, 2)]
    elapsed = time.perf_counter() - start
    failed, _ = _worst(checks)
    ok = not failed and elapsed < 180
    notes = "; ".join(f"ell={c.params['ell']} {c.note}" for c in checks)
    acceptance_log(7, ok, f"3 stderr + 0.015 over central levels: {notes}, {elapsed:.1f}s (< 180s)")
    assert not failed, [(c.key, c.note) for c in checks]
    assert elapsed < 180


def test_monte_carlo_stationary(acceptance_log):
    start = time.perf_counter()
    check = vf.stationary_mc_check(0.3, 2, n=1_000_000, burn_in=10_000)
    elapsed = time.perf_counter() - start
    ok = check.passed and elapsed < 30
    acceptance_log(8, ok, f"pi0 z-score {check.value:.2f} (<= 3), {elapsed:.1f}s (< 30s)")
    assert check.passed
    assert elapsed < 30


@pytest.mark.slow
def test_verify_command(acceptance_log, capsys):
    import json

    start = time.perf_counter()
    code = cli.main(["verify"])
    elapsed = time.perf_counter() - start
    doc = json.loads(capsys.readouterr().out)
    names = {key.split("[")[0] for key in doc["results"]["checks"]}
    required = {"reversal-identity", "row-stochastic", "reflection", "cdf-increasing", "seed-determinism", "mc-maximum"}
    summary = doc["results"]["summary"]
    ok = code == 0 and required <= names and elapsed < 300
    acceptance_log(
        9,
        ok,
        f"verify exit {code}, {summary['asserted']['value']} asserted, {summary['failed']['value']} failed, {elapsed:.1f}s (< 300s)",
    )
    assert code == 0
    assert required <= names
    assert elapsed < 300
