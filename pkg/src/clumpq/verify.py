"""Cross-validation suite: closed forms, root solver, direct oracles and simulation.

Every check records the measured discrepancy, its tolerance and the source
of the reference value.  Checks with ``tolerance=None`` are reported only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import closedform as cf
from .clump import (
    EXTRAPOLATION_WARNING,
    conjecture_ratio,
    epsilon_pair,
    hit_oracle,
    max_cdf,
    predict_max_cdf,
    solve_clumps,
    solve_hit_probs,
)
from .gfsolver import solve_stationary
from .model import ModelParams, Order, cycle_kernel, make_params, single_step_kernels
from .montecarlo import (
    DEFAULT_SEED,
    SimConfig,
    compare_max,
    estimate_stationary,
    simulate_path,
    simulate_walk,
)

DEFAULT_PS = (0.1, 0.2, 0.3, 0.4)
DEFAULT_ELLS = (1, 2, 3)
REVERSAL_ELLS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float | None
    source: str
    params: dict = field(default_factory=dict)
    note: str = ""

    @property
    def reported_only(self) -> bool:
        return self.tolerance is None

    @property
    def passed(self) -> bool:
        if self.tolerance is None:
            return True
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    @property
    def key(self) -> str:
        tags = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}[{tags}]" if tags else self.name


def _rel(a: float, b: float) -> float:
    return abs(a / b - 1.0) if b != 0 else abs(a)


def _tag(params: ModelParams, **extra) -> dict:
    return {"p": params.p, "ell": params.ell, **extra}


# --- analytic checks ---------------------------------------------------------


def closed_form_checks(params: ModelParams) -> list[Check]:
    """Generic pipeline against the radical formulas, worst relative error per quantity."""
    out = []
    orders = (Order.RED_FIRST, Order.GREEN_FIRST) if params.ell == 1 else (Order.RED_FIRST,)
    pi_err = amp_err = 0.0
    for order in orders:
        sol = solve_stationary(params, order, m=4 * params.ell + 4)
        for j in range(params.ell):
            pi_err = max(pi_err, _rel(sol.boundary[j], cf.pi_closed(params, order, j)))
        amp_err = max(amp_err, _rel(sol.tail_amplitude, cf.amplitude_closed(params, order)))
    hit = solve_hit_probs(params)
    nu_err = max(_rel(hit.nu(j), cf.nu_closed(params, j)) for j in cf.NU_INDICES[params.ell])
    clumps = solve_clumps(params)
    out.append(Check("pi-boundary", pi_err, 1e-9, "closed-form", _tag(params)))
    out.append(Check("tail-amplitude", amp_err, 1e-9, "closed-form", _tag(params)))
    out.append(Check("nu-table", nu_err, 1e-9, "closed-form", _tag(params)))
    out.append(
        Check("lambda-over-pi", _rel(clumps.lambda_over_pi, cf.lambda_over_pi_closed(params)), 1e-9, "closed-form", _tag(params))
    )
    out.append(Check("epsilon1", _rel(clumps.epsilon, cf.epsilon_closed(params, 1)), 1e-9, "closed-form", _tag(params)))
    return out


def oracle_checks(params: ModelParams, m: int = 400) -> list[Check]:
    out = []
    for order in (Order.RED_FIRST, Order.GREEN_FIRST):
        sol = solve_stationary(params, order, m=m, with_oracle=True)
        out.append(Check("oracle-pi", sol.max_oracle_deviation(), 1e-9, "oracle", _tag(params, order=order.value)))
    return out


def hidden_relation_check(params: ModelParams) -> Check:
    gap = conjecture_ratio(params).rel_gap
    return Check("hidden-relation", gap, 1e-8, "gf-solver", _tag(params))


def ell_one_checks(params: ModelParams) -> list[Check]:
    p, q = params.p, params.q
    sol = solve_clumps(params)
    eps0, eps1 = epsilon_pair(params)
    return [
        Check("ell1-return", _rel(sol.hit.nu0, 2 * p), 1e-12, "closed-form", _tag(params)),
        Check("ell1-sojourn", _rel(sol.expected_sojourn, 1 / (q - p)), 1e-12, "closed-form", _tag(params)),
        Check("ell1-epsilon1", _rel(sol.epsilon, p * (q - p) ** 2 / (2 * q**3)), 1e-12, "closed-form", _tag(params)),
        Check("ell1-epsilon-ratio", _rel(eps0 / eps1, p / q), 1e-12, "closed-form", _tag(params)),
    ]


def perfect_square_check(params: ModelParams) -> Check:
    chi_part = cf.chi(params) / (2 * params.ell)
    return Check("perfect-square", _rel(chi_part, cf.epsilon_closed(params, 1)), 1e-10, "closed-form", _tag(params))


def epsilon_pair_check(params: ModelParams) -> Check:
    eps0, eps1 = epsilon_pair(params)
    return Check("epsilon-ratio", _rel(eps0 / eps1, (params.p / params.q) ** params.ell), 1e-9, "gf-solver", _tag(params))


def reversal_checks(params: ModelParams) -> list[Check]:
    """Reversal identity on the independent oracle, and the solver against it."""
    oracle = hit_oracle(params)
    solved = solve_hit_probs(params)
    ell = params.ell
    rev = max(
        _rel(oracle.nu(-j), oracle.nu(j) * (params.q / params.p) ** (2 * j)) for j in range(1, ell + 1)
    )
    dev = max(_rel(solved.nu(j), oracle.nu(j)) for j in range(-ell, ell + 1))
    return [
        Check("reversal-identity", rev, 1e-9, "oracle", _tag(params)),
        Check("nu-vs-oracle", dev, 1e-9, "oracle", _tag(params)),
    ]


def stochastic_checks(params: ModelParams, m: int = 60) -> list[Check]:
    worst = 0.0
    for order in (Order.RED_FIRST, Order.GREEN_FIRST):
        k = cycle_kernel(params, order, m)
        exact = k.row_sums()[: m - params.ell]
        worst = max(worst, float(np.abs(exact - 1.0).max()), float(max(0.0, -k.entries.min())))
    u, v = single_step_kernels(params, m)
    worst = max(worst, float(np.abs(u.row_sums()[:-1] - 1).max()), float(np.abs(v.row_sums() - 1).max()))
    return [Check("row-stochastic", worst, 1e-12, "gf-solver", _tag(params))]


def sweep_checks(ells=DEFAULT_ELLS, n: int = 100_000) -> list[Check]:
    out = []
    ps = np.linspace(0.02, 0.48, 24)
    for ell in ells:
        # epsilon_1 is not monotone in p (it vanishes as p -> 1/2), so wiring
        # regressions are caught by tracking the closed form across a sweep
        worst = max(
            _rel(solve_clumps(make_params(p, ell)).epsilon, cf.epsilon_closed(make_params(p, ell), 1)) for p in ps
        )
        out.append(Check("epsilon-sweep", worst, 1e-9, "closed-form", {"ell": ell}))
    for ell in ells:
        for p in DEFAULT_PS:
            pred = predict_max_cdf(make_params(p, ell), n, range(-5, 80))
            steps = np.diff(pred.cdf)
            # strict where the values are not saturated at 0 or 1
            live = (pred.cdf[1:] > 1e-300) & (pred.cdf[:-1] < 1.0 - 1e-12)
            bad = int((steps < 0).sum() + (steps[live] <= 0).sum())
            out.append(Check("cdf-increasing", float(bad), 0.0, "gf-solver", {"p": p, "ell": ell}))
    return out


def conjecture_reports(ell_max: int, ps=DEFAULT_PS) -> list[Check]:
    out = []
    for ell in range(4, ell_max + 1):
        for p in ps:
            gap = conjecture_ratio(make_params(p, ell)).rel_gap
            out.append(Check("conjecture-gap", gap, None, "gf-solver", {"p": p, "ell": ell}, EXTRAPOLATION_WARNING))
    return out


# --- simulation checks -------------------------------------------------------


def reflection_checks(seed: int = DEFAULT_SEED) -> list[Check]:
    out = []
    for p, ell in ((0.3, 1), (0.3, 2), (0.45, 3)):
        params = make_params(p, ell)
        path = simulate_path(params, 20_000 * ell, seed)
        steps = np.diff(path)
        red = (np.arange(steps.size) % (2 * ell)) < ell
        bad = int((path < 0).sum() + (steps[red] < 0).sum() + (steps[~red] > 0).sum() + (np.abs(steps) > 1).sum())
        out.append(Check("reflection", float(bad), 0.0, "monte-carlo", _tag(params)))
    # no arrivals: the queue never leaves zero
    idle = simulate_walk(SimConfig(ModelParams(0.0, 2), 400, 5, seed))
    out.append(Check("no-arrivals", float(max(idle.counts)), 0.0, "monte-carlo", {"p": 0.0, "ell": 2}))
    return out


def determinism_checks(seed: int = DEFAULT_SEED) -> list[Check]:
    params = make_params(0.3, 2)
    cfg = SimConfig(params, 4_000, 6, seed)
    a, b = simulate_walk(cfg), simulate_walk(cfg)
    alone = {}
    for r in range(cfg.replicates):
        m = int(simulate_path(params, cfg.n, seed, r).max())
        alone[m] = alone.get(m, 0) + 1
    mismatch = float((a.counts != b.counts) + (a.counts != alone))
    emp = np.diff(a.cdf).min(initial=0.0)
    return [
        Check("seed-determinism", mismatch, 0.0, "monte-carlo", {"seed": seed}),
        Check("empirical-cdf-nondecreasing", float(max(0.0, -emp)), 0.0, "monte-carlo", {"seed": seed}),
    ]


def max_distribution_check(p: float, ell: int, n: int = 100_000, replicates: int = 2000, seed: int = DEFAULT_SEED) -> Check:
    params = make_params(p, ell)
    emp = simulate_walk(SimConfig(params, n, replicates, seed))
    eps = solve_clumps(params).epsilon
    cmp = compare_max(emp, lambda m: max_cdf(eps, params.decay, n, m))
    # excess over the allowance; zero when every central level is inside
    excess = max((abs(r.empirical - r.predicted) - (cmp.sigmas * r.stderr + cmp.slack) for r in cmp.rows), default=math.inf)
    return Check(
        "mc-maximum",
        max(0.0, excess),
        0.0,
        "monte-carlo",
        _tag(params, n=n, replicates=replicates),
        f"worst gap {cmp.worst:.4f} over {len(cmp.rows)} levels",
    )


def stationary_mc_check(p: float = 0.3, ell: int = 2, n: int = 1_000_000, burn_in: int = 10_000, seed: int = DEFAULT_SEED) -> Check:
    params = make_params(p, ell)
    emp = estimate_stationary(SimConfig(params, n, 1, seed), Order.RED_FIRST, burn_in)
    target = cf.pi_closed(params, Order.RED_FIRST, 0)
    z = abs(emp.pi[0] - target) / emp.stderr[0]
    return Check("mc-stationary-pi0", float(z), 3.0, "monte-carlo", _tag(params, n=n), "z-score of pi_0")


# --- driver ------------------------------------------------------------------


def run_suite(
    quick: bool = False,
    ell_max: int = 3,
    ps=DEFAULT_PS,
    ells=DEFAULT_ELLS,
    seed: int = DEFAULT_SEED,
) -> list[Check]:
    checks: list[Check] = []
    for ell in ells:
        for p in ps:
            params = make_params(p, ell)
            checks += closed_form_checks(params)
            checks += oracle_checks(params)
            checks += stochastic_checks(params)
            checks.append(epsilon_pair_check(params))
            if ell == 1:
                checks += ell_one_checks(params)
            else:
                checks.append(hidden_relation_check(params))
                checks.append(perfect_square_check(params))
    for ell in REVERSAL_ELLS:
        for p in ps:
            checks += reversal_checks(make_params(p, ell))
    checks += sweep_checks(ells)
    checks += conjecture_reports(ell_max, ps)
    if not quick:
        checks += reflection_checks(seed)
        checks += determinism_checks(seed)
        for ell in (1, 2):
            checks.append(max_distribution_check(0.3, ell, seed=seed))
        checks.append(stationary_mc_check(seed=seed))
    return checks
