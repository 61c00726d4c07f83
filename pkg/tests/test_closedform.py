import cmath
import math

import numpy as np
import pytest

from clumpq import closedform as cf
from clumpq.gfsolver import stationary_oracle
from clumpq.model import Order, cycle_kernel, make_params

GRID = [0.05, 0.1, 0.2, 0.3, 0.4, 0.45]


def oracle_pi(p, ell, order=Order.RED_FIRST):
    return stationary_oracle(cycle_kernel(make_params(p, ell), order, 400))


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("ell, orders", [(1, list(Order)), (2, [Order.RED_FIRST]), (3, [Order.RED_FIRST])])
def test_boundary_values_against_direct_solve(p, ell, orders):
    for order in orders:
        pi = oracle_pi(p, ell, order)
        for j in range(ell):
            assert cf.pi_closed(make_params(p, ell), order, j) == pytest.approx(pi[j], rel=1e-11)


def outside_poles(p, ell):
    """Roots of (q + p z)^2 = w z outside the unit disc, q^2/p^2 excluded."""
    q = 1 - p
    out = []
    for k in range(ell):
        w = cmath.exp(2j * cmath.pi * k / ell)
        b = 2 * p * q - w
        disc = cmath.sqrt(b * b - 4 * p * p * q * q)
        out += [(-b + disc) / (2 * p * p), (-b - disc) / (2 * p * p)]
    z_star = q * q / (p * p)
    return [z for z in out if abs(z) > 1 + 1e-9 and abs(z - z_star) > 1e-6 * z_star]


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("ell", [1, 2, 3])
def test_amplitude_against_far_tail(p, ell):
    params = make_params(p, ell)
    pi = oracle_pi(p, ell)
    # pi_j = A r^j + sum_w c_w w^-j past the boundary; fit after dividing by r^j
    js = np.arange(ell + 4, ell + 40)
    cols = [np.ones(js.size)]
    for w in outside_poles(p, ell):
        ratio = (1 / (w * params.decay)) ** js
        cols.append(ratio.real)
        if abs(w.imag) > 1e-12:
            cols.append(ratio.imag)
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, pi[js] / params.decay**js, rcond=None)
    assert cf.amplitude_closed(params) == pytest.approx(coef[0], rel=1e-8)


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("ell", [1, 2, 3])
def test_tail_mass(p, ell):
    params = make_params(p, ell)
    pi = oracle_pi(p, ell)
    assert cf.tail_mass_closed(params) == pytest.approx(pi[ell:].sum(), rel=1e-10)


def test_ell2_pi0_as_displayed():
    p = 0.3
    q = 1 - p
    theta = math.sqrt(1 + 4 * p * q)
    expected = (q - p) * (3 - 2 * p - theta) / (2 * q**4)
    assert cf.pi_closed(make_params(p, 2), Order.RED_FIRST, 0) == pytest.approx(expected, rel=1e-14)


def test_ell1_even_times_at_one_third():
    assert cf.pi_closed(make_params(1 / 3, 1), Order.RED_FIRST, 0) == pytest.approx(0.75, rel=1e-14)


@pytest.mark.parametrize("p", GRID)
def test_theta_family(p):
    fam = cf.theta_family(p)
    q = 1 - p
    assert fam.theta1 == pytest.approx(math.sqrt(1 + 4 * p * q))
    assert fam.theta2 == pytest.approx(math.sqrt(1 + 4 * p * q + 16 * p**2 * q**2))


@pytest.mark.parametrize("p", [0.1, 0.3])
@pytest.mark.parametrize("ell", [1, 2, 3])
def test_roots_solve_the_denominator(p, ell):
    q = 1 - p
    for z in cf.roots_closed(make_params(p, ell)):
        assert abs((q + p * z) ** (2 * ell) - z**ell) < 1e-10 * max(1, abs(z) ** (2 * ell))


def test_ell1_hit_probabilities():
    params = make_params(0.3, 1)
    assert cf.nu_closed(params, 0) == pytest.approx(0.6)
    assert cf.nu_closed(params, -1) == pytest.approx(1.0)
    assert cf.nu_closed(params, 1) == pytest.approx(0.09 / 0.49)


def test_ell2_hit_probabilities_as_displayed():
    p = 0.3
    q = 1 - p
    theta = math.sqrt(1 + 4 * p * q)
    params = make_params(p, 2)
    nu0 = (-1 + 2 * p + 8 * p**2 - 8 * p**3 + (q - p) ** 2 * theta) / (4 * p * q)
    nu_m1 = (1 - 8 * p**2 + 16 * p**3 - 8 * p**4 - (q - p) * theta) / (8 * p**3 * q)
    assert cf.nu_closed(params, 0) == pytest.approx(nu0, rel=1e-13)
    assert cf.nu_closed(params, -1) == pytest.approx(nu_m1, rel=1e-12)


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("ell", [2, 3])
def test_reversal_on_closed_forms(p, ell):
    params = make_params(p, ell)
    for j in (k for k in cf.NU_INDICES[ell] if k > 0):
        assert cf.nu_closed(params, -j) * params.decay**j == pytest.approx(cf.nu_closed(params, j), rel=1e-10)


@pytest.mark.parametrize("p", GRID)
def test_ell2_hidden_relation_closed(p):
    params = make_params(p, 2)
    q = 1 - p
    assert cf.lambda_over_pi_closed(params) == pytest.approx(2 * q**2 * cf.amplitude_closed(params), rel=1e-12)


@pytest.mark.parametrize("p", GRID)
def test_perfect_squares(p):
    for ell in (2, 3):
        params = make_params(p, ell)
        assert cf.chi(params) / (2 * ell) == pytest.approx(cf.epsilon_closed(params), rel=1e-12)
    coefs = cf.chi_coefficients(p)
    assert coefs.chi2 == pytest.approx(cf.chi(make_params(p, 2)))


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_epsilon_ratio(ell):
    params = make_params(0.3, ell)
    assert cf.epsilon_closed(params, 0) / cf.epsilon_closed(params, 1) == pytest.approx((0.3 / 0.7) ** ell)


def test_ell1_epsilon_value():
    # 0.3 * 0.16 / (2 * 0.343)
    assert cf.epsilon_closed(make_params(0.3, 1)) == pytest.approx(0.0699708, rel=1e-5)
    assert cf.expected_sojourn_closed(make_params(0.3, 1)) == pytest.approx(2.5)


def test_unsupported_cases():
    with pytest.raises(cf.UnsupportedCase):
        cf.pi_closed(make_params(0.3, 4), Order.RED_FIRST, 0)
    with pytest.raises(cf.UnsupportedCase):
        cf.pi_closed(make_params(0.3, 2), Order.GREEN_FIRST, 0)
    with pytest.raises(cf.UnsupportedCase):
        cf.chi(make_params(0.3, 1))
    with pytest.raises(cf.UnsupportedCase):
        cf.nu_closed(make_params(0.3, 2), 2)
    with pytest.raises(ValueError):
        cf.epsilon_closed(make_params(0.3, 2), which=2)


def test_warmup_walk():
    p = 0.3
    q = 1 - p
    total = sum(cf.warmup_pi(p, j) for j in range(400))
    assert total == pytest.approx(1.0)
    assert cf.warmup_sojourn(p) == pytest.approx(1 / (q - p))
    assert cf.warmup_coefficient(p) == pytest.approx(p * (q - p) ** 2 / q**2)


def test_shifted_gf_matches_series():
    params = make_params(0.3, 2)
    pi = oracle_pi(0.3, 2)
    z = 0.8
    # F(z) = sum_{j >= ell} pi_j z^j
    expected = float(np.sum(pi[2:] * z ** np.arange(2, pi.size)))
    assert cf.shifted_gf_closed(params, z) == pytest.approx(expected, rel=1e-10)
