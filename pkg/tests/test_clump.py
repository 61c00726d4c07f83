import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clumpq import closedform as cf
from clumpq.clump import (
    EXTRAPOLATION_WARNING,
    HIT_METHODS,
    conjecture_ratio,
    entry_law,
    epsilon_pair,
    hit_oracle,
    max_cdf,
    predict_max_cdf,
    sojourn_oracle,
    solve_clumps,
    solve_hit_probs,
)
from clumpq.gfsolver import build_denominator, classify_roots
from clumpq.model import make_params, step_law


def nu_by_mass(params, j, floor=200, steps=4000):
    """Propagate the law of the free walk from -j and collect exact landings on 0."""
    ell = params.ell
    a = step_law(params).as_array()
    top = abs(j) + ell * steps // 4 + 10
    size = top + floor + 1
    mass = np.zeros(size)
    mass[-j + floor] = 1.0
    hit = 0.0
    for _ in range(steps):
        mass = np.convolve(mass, a)[ell : ell + size]
        hit += mass[floor]
        mass[floor] = 0.0
        if mass.sum() < 1e-22:
            break
    return hit


def test_ell1_values():
    hit = solve_hit_probs(make_params(0.3, 1))
    assert hit.nu0 == pytest.approx(0.6, rel=1e-14)
    assert hit.nu(-1) == pytest.approx(1.0, rel=1e-14)


def test_ell2_values_as_displayed():
    p = 0.3
    q = 1 - p
    theta = math.sqrt(1 + 4 * p * q)
    hit = solve_hit_probs(make_params(p, 2))
    assert hit.nu0 == pytest.approx((-1 + 2 * p + 8 * p**2 - 8 * p**3 + (q - p) ** 2 * theta) / (4 * p * q), rel=1e-12)
    assert hit.nu(-1) == pytest.approx((1 - 8 * p**2 + 16 * p**3 - 8 * p**4 - (q - p) * theta) / (8 * p**3 * q), rel=1e-12)


@pytest.mark.parametrize("p", [0.05, 0.2, 0.45])
@pytest.mark.parametrize("ell", [2, 3, 4])
def test_against_mass_propagation(p, ell):
    params = make_params(p, ell)
    hit = solve_hit_probs(params)
    for j in range(-ell, ell + 1):
        assert hit.nu(j) == pytest.approx(nu_by_mass(params, j), rel=1e-10)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.3, 0.4])
@pytest.mark.parametrize("ell", [1, 2, 3, 4, 5])
def test_against_value_iteration_oracle(p, ell):
    params = make_params(p, ell)
    hit, oracle = solve_hit_probs(params), hit_oracle(params)
    for j in range(-ell, ell + 1):
        assert hit.nu(j) == pytest.approx(oracle.nu(j), rel=1e-11)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.4])
@pytest.mark.parametrize("ell", [1, 2, 3, 4, 5])
def test_reversal_identity_on_oracle(p, ell):
    oracle = hit_oracle(make_params(p, ell))
    for j in range(1, ell + 1):
        assert oracle.nu(-j) == pytest.approx(oracle.nu(j) * ((1 - p) / p) ** (2 * j), rel=1e-9)


@pytest.mark.parametrize("p", [0.2, 0.3, 0.45])
@pytest.mark.parametrize("ell", [2, 3])
def test_methods_agree(p, ell):
    params = make_params(p, ell)
    a, b = (solve_hit_probs(params, m) for m in HIT_METHODS)
    for j in range(-ell, ell + 1):
        assert a.nu(j) == pytest.approx(b.nu(j), rel=1e-9)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_hit_probs(make_params(0.3, 2), "guess")


@given(st.floats(0.02, 0.48), st.integers(1, 6))
def test_hit_probabilities_are_probabilities(p, ell):
    hit = solve_hit_probs(make_params(p, ell))
    assert 0 < hit.nu0 < 1
    values = np.array(list(hit.table().values()))
    assert np.all(values >= 0) and np.all(values <= 1 + 1e-9)


@given(st.floats(0.02, 0.48), st.integers(1, 5))
def test_entry_law_rows_are_distributions(p, ell):
    params = make_params(p, ell)
    roots = classify_roots(build_denominator(params), params)
    u = entry_law(params, roots, range(1, 3 * ell))
    assert np.allclose(u.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(u > -1e-12)


def test_entry_law_from_one_step_above():
    # from x = 1 with ell = 1 the walk can only enter at 0
    params = make_params(0.3, 1)
    roots = classify_roots(build_denominator(params), params)
    assert entry_law(params, roots, [1, 5]) == pytest.approx(np.ones((2, 1)))


def test_nu_out_of_range():
    with pytest.raises(IndexError):
        solve_hit_probs(make_params(0.3, 2)).nu(3)


@pytest.mark.parametrize("p, ell, j, target", [(0.3, 1, 0, 0.6), (0.01, 1, 0, 0.02)])
def test_sojourn_oracle_exact_cases(p, ell, j, target):
    est = sojourn_oracle(make_params(p, ell), j)
    assert est.within(target)


def test_sojourn_oracle_ell2():
    params = make_params(0.3, 2)
    est = sojourn_oracle(params, -1)
    assert est.within(cf.nu_closed(params, -1))


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
def test_ell2_lambda_over_pi(p):
    q = 1 - p
    theta = math.sqrt(1 + 4 * p * q)
    sol = solve_clumps(make_params(p, 2))
    assert sol.lambda_over_pi == pytest.approx((q - p) * (1 + (q - p) * theta) / (2 * q**2), rel=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
@pytest.mark.parametrize("ell", [2, 3])
def test_epsilon_is_chi_over_two_ell(p, ell):
    params = make_params(p, ell)
    assert solve_clumps(params).epsilon == pytest.approx(cf.chi(params) / (2 * ell), rel=1e-12)


@given(st.floats(0.02, 0.48), st.integers(1, 6))
def test_clump_solution_invariants(p, ell):
    sol = solve_clumps(make_params(p, ell))
    assert sol.lambdas.shape == (ell,)
    assert np.all(sol.lambdas > 0)
    assert sol.lambda_over_pi == pytest.approx(sol.lambdas.sum())
    assert sol.expected_sojourn == pytest.approx(1 / (1 - sol.hit.nu0))
    assert sol.epsilon0 == pytest.approx(sol.epsilon * (p / (1 - p)) ** ell, rel=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
def test_ell1_sojourn(p):
    assert solve_clumps(make_params(p, 1)).expected_sojourn == pytest.approx(1 / (1 - 2 * p), rel=1e-10)


@pytest.mark.parametrize("ell", [2, 3])
@pytest.mark.parametrize("p", [0.05, 0.2, 0.45])
def test_hidden_relation(p, ell):
    assert conjecture_ratio(make_params(p, ell)).rel_gap < 1e-8


def test_conjecture_needs_two_blocks():
    with pytest.raises(ValueError):
        conjecture_ratio(make_params(0.3, 1))


def test_extrapolation_flag():
    assert EXTRAPOLATION_WARNING in solve_clumps(make_params(0.3, 4)).warnings
    assert solve_clumps(make_params(0.3, 4)).extrapolated
    assert not solve_clumps(make_params(0.3, 3)).warnings


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_epsilon_pair_ratio(ell):
    p, q = 0.3, 0.7
    eps0, eps1 = epsilon_pair(make_params(p, ell))
    assert eps0 / eps1 == pytest.approx((p / q) ** ell, rel=1e-12)


def test_epsilon_pair_ell1_values():
    p, q = 0.3, 0.7
    eps0, eps1 = epsilon_pair(make_params(p, 1))
    assert eps0 == pytest.approx(p**2 * (q - p) ** 2 / (2 * q**4), rel=1e-12)
    assert eps1 == pytest.approx(p * (q - p) ** 2 / (2 * q**3), rel=1e-12)


def test_epsilon_pair_outside_validated_range():
    with pytest.raises(ValueError):
        epsilon_pair(make_params(0.3, 4))


def test_predict_ell1():
    pred = predict_max_cdf(make_params(0.3, 1), 100_000)
    assert pred.epsilon == pytest.approx(0.06997, abs=1e-5)
    assert pred.source == "closed-form"
    steps = np.diff(pred.cdf)
    assert np.all(steps >= 0)
    assert np.all(steps[pred.cdf[1:] > 0] > 0)
    assert pred.location() == pytest.approx(math.log(1e5) / math.log(0.49 / 0.09))


def test_predict_limits():
    pred = predict_max_cdf(make_params(0.3, 2), 100_000, range(-3, 200))
    assert pred.cdf[-1] == 1.0
    assert pred.cdf[0] < 1e-100
    central = pred.central()
    assert central.size >= 2
    assert np.all(np.diff(central) == 1)


def test_predict_rejects_empty_horizon():
    with pytest.raises(ValueError):
        predict_max_cdf(make_params(0.3, 1), 0)


def test_max_cdf_shift_property():
    # multiplying n by q^2/p^2 moves the law up by one level
    eps, r = 0.1, 0.2
    assert max_cdf(eps, r, 1000, 4) == pytest.approx(max_cdf(eps, r, 1000 / r, 5))
