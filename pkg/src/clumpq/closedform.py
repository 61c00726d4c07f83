"""Exact expressions for block lengths 1, 2 and 3.

These are ground truth for the generic solvers.  Several of the ``ell = 3``
formulas are differences of nearly equal terms divided by ``p^6``, so every
expression is evaluated in 50-digit arithmetic and rounded at the end.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import mpmath

from .model import ModelParams, Order, make_params

_DPS = 50


class UnsupportedCase(ValueError):
    """No closed form is known for the requested combination."""


def _poly(p, *coeffs):
    """Horner evaluation of ``sum coeffs[k] p^k`` (ascending)."""
    acc = mpmath.mpf(0)
    for c in reversed(coeffs):
        acc = acc * p + c
    return acc


def _sqrt(x):
    if x < 0:
        if x < -mpmath.mpf("1e-12"):
            raise ArithmeticError(f"negative radicand {mpmath.nstr(x, 8)}")
        x = mpmath.mpf(0)
    return mpmath.sqrt(x)


class _Ctx:
    """``p``, ``q`` and the radical ``theta`` at working precision."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.p = mpmath.mpf(params.p)
        self.q = 1 - self.p
        self.d = self.q - self.p
        p, q = self.p, self.q
        if params.ell == 2:
            self.theta = _sqrt(1 + 4 * p * q)
        elif params.ell == 3:
            self.theta = _sqrt(1 + 4 * p * q + 16 * p**2 * q**2)
        else:
            self.theta = None


def _run(fn, params: ModelParams, *args) -> float:
    with mpmath.workdps(_DPS):
        return float(fn(_Ctx(params), *args))


def _require(params: ModelParams, allowed: tuple[int, ...], what: str) -> None:
    if params.ell not in allowed:
        raise UnsupportedCase(f"no closed form for {what} with ell={params.ell}")


@dataclass(frozen=True)
class ThetaFamily:
    theta1: float
    theta2: float


def theta_family(p: float) -> ThetaFamily:
    q = 1.0 - p
    return ThetaFamily(
        theta1=(1 + 4 * p * q) ** 0.5, theta2=(1 + 4 * p * q + 16 * p**2 * q**2) ** 0.5
    )


# --- stationary distribution -------------------------------------------------


def _pi(c: _Ctx, order: Order, j: int):
    p, q, d, th = c.p, c.q, c.d, c.theta
    ell = c.params.ell
    r = p**2 / q**2
    if ell == 1:
        if order is Order.RED_FIRST:
            return d / q**2 * r**j
        return d / q if j == 0 else d / (p * q) * r**j
    if order is not Order.RED_FIRST:
        raise UnsupportedCase("only the red-first boundary values are known for ell >= 2")
    if ell == 2:
        if j == 0:
            return d * (3 - 2 * p - th) / (2 * q**4)
        if j == 1:
            return d * (-1 - p - 2 * p * q + (1 + p) * th) / q**5
    if ell == 3:
        if j == 0:
            w = _poly(p, 7, -10, 4)
            rad = _poly(p, 1, 28, -60, 40, -8) + w * th
            return d * (w + th - mpmath.sqrt(2) * _sqrt(rad)) / (4 * q**6)
        if j == 1:
            rad = _poly(p, -1, 30, 71, -84, -100, 120, -24) + _poly(p, 7, 16, -5, -18, 12) * th
            head = -3 * _poly(p, 1, 7, -10, 4) - 3 * (1 + p) * th
            return d * (head + mpmath.sqrt(6) * _sqrt(rad)) / (4 * q**7)
        if j == 2:
            rad = (
                _poly(p, -1, -16, 64, 656, 52, -1072, 80, 480, -96)
                + _poly(p, 1, 14, 120, 80, -92, -24, 48) * th
            )
            head = 3 * _poly(p, -1, 6, 14, -20, 8) + 3 * _poly(p, 1, 4, 2) * th
            return d * (head - mpmath.sqrt(6) * _sqrt(rad)) / (4 * q**8)
    raise UnsupportedCase(f"no closed form for pi_{j} with ell={ell}")


def pi_closed(params: ModelParams, order: Order | str, j: int) -> float:
    """Stationary probability of queue length ``j`` for the observed cycle."""
    _require(params, (1, 2, 3), "pi")
    return _run(_pi, params, Order.parse(order), int(j))


def _tail_mass(c: _Ctx):
    p, q, d = c.p, c.q, c.d
    ell = c.params.ell
    pis = [_pi(c, Order.RED_FIRST, j) for j in range(ell)]
    if ell == 1:
        # pi_1 plus the j >= 2 generating-function limit
        return (p**2 / q**2 + p**4 / (q**2 * d)) * pis[0]
    if ell == 2:
        return (2 * p**3 * (1 + q) * pis[0] - (2 * d - q**4) * pis[1]) / (2 * d)
    return (
        3 * p**4 * (1 + 2 * q + 2 * q**2) * pis[0]
        - (3 * d - 2 * (1 + 2 * p) * q**5) * pis[1]
        - (3 * d - q**6) * pis[2]
    ) / (3 * d)


def tail_mass_closed(params: ModelParams) -> float:
    """``L = sum_{j >= ell} pi_j`` for the red-first cycle."""
    _require(params, (1, 2, 3), "L")
    return _run(_tail_mass, params)


def _shifted_gf(c: _Ctx, z):
    p, q = c.p, c.q
    ell = c.params.ell
    z = mpmath.mpf(z)
    pis = [_pi(c, Order.RED_FIRST, j) for j in range(ell)]
    if ell == 2:
        num = (
            p**3 * (4 - 3 * p + p * z) * pis[0]
            + (_poly(p, -1, 0, 6, -8, 3) + (4 - 3 * p) * p**3 * z + p**4 * z**2) * pis[1]
        ) * z**2
        den = (q**2 - p**2 * z) * (q**2 + (1 + 2 * p * q) * z + p**2 * z**2)
        return num / den
    a = 6 - 5 * p
    b = _poly(p, 15, -24, 10)
    cc = -_poly(p, 1, 0, 0, -20, 45, -36, 10)
    dd = -_poly(p, 1, 0, -15, 40, -45, 24, -5)
    num = (
        p**4 * (b + a * p * z + p**2 * z**2) * pis[0]
        + (cc + b * p**4 * z + a * p**5 * z**2 + p**6 * z**3) * pis[1]
        + (dd + cc * z + b * p**4 * z**2 + a * p**5 * z**3 + p**6 * z**4) * pis[2]
    ) * z**3
    quartic = (
        q**4
        + q**2 * (1 + 4 * p * q) * z
        + (1 + 2 * p * q + 6 * p**2 * q**2) * z**2
        + p**2 * (1 + 4 * p * q) * z**3
        + p**4 * z**4
    )
    return num / ((q**2 - p**2 * z) * quartic)


def shifted_gf_closed(params: ModelParams, z: float) -> float:
    """``F(z) = sum_{j >= ell} pi_j z^j`` for the red-first cycle (ell = 2, 3)."""
    _require(params, (2, 3), "F(z)")
    return _run(_shifted_gf, params, z)


def _amplitude(c: _Ctx, order: Order):
    p, q, d, th = c.p, c.q, c.d, c.theta
    ell = c.params.ell
    if ell == 1:
        return d / q**2 if order is Order.RED_FIRST else d / (p * q)
    if order is not Order.RED_FIRST:
        raise UnsupportedCase("amplitude known for the red-first cycle only")
    if ell == 2:
        return d * (1 + d * th) / (4 * q**4)
    u, v = _uv(p)
    return (d * u + d**3 * th + mpmath.sqrt(2) * d**2 * _sqrt(v + u * th)) / (12 * q**6)


def _uv(p):
    return _poly(p, 1, -2, 6, -8, 4), _poly(p, 1, 0, 6, -28, 54, -48, 16)


def amplitude_closed(params: ModelParams, order: Order | str = Order.RED_FIRST) -> float:
    """Tail amplitude ``A(p)`` in ``pi_j ~ A (p^2/q^2)^j``."""
    _require(params, (1, 2, 3), "A(p)")
    return _run(_amplitude, params, Order.parse(order))


def roots_closed(params: ModelParams) -> list[complex]:
    """Displayed roots of the cancelled denominator, smallest modulus first."""
    _require(params, (1, 2, 3), "roots")
    p, q = params.p, params.q
    if params.ell == 1:
        return [complex(q**2 / p**2)]
    if params.ell == 2:
        th = (1 + 4 * p * q) ** 0.5
        return [
            complex((-1 - 2 * p * q + th) / (2 * p**2)),
            complex(q**2 / p**2),
            complex((-1 - 2 * p * q - th) / (2 * p**2)),
        ]
    s3 = 1j * 3**0.5

    def pair(sign: int, branch: int) -> complex:
        w = -1 + sign * s3
        rad = cmath.sqrt(-2 - sign * 2 * s3 + 8 * (1 - sign * s3) * p * q)
        return (w - 4 * p * q + branch * rad) / (4 * p**2)

    # pair(-1, .) uses -1 - i sqrt3 with radicand -2 + 2i sqrt3 + 8(1 + i sqrt3)pq
    return [pair(-1, 1), pair(1, 1), complex(q**2 / p**2), pair(-1, -1), pair(1, -1)]


# --- hitting probabilities ---------------------------------------------------


def _delta3(p):
    return _poly(p, 1, 0, 0, -256, 768, -768, 256)


def _nu3_numerators(c: _Ctx):
    p, q, d, th = c.p, c.q, c.d, c.theta
    s2 = mpmath.sqrt(2)
    nu0 = (
        -2 * p * _poly(p, -3, -18, 92, -120, 816, -2816, 3840, -2304, 512)
        + 2 * d**3 * _poly(p, 1, 4, 12, -32, 16) * th
        - d**2
        * th
        * s2
        * _sqrt(
            _poly(p, -1, -8, 8) * _poly(p, -1, -2, -46, -32, 848, -2432, 3200, -2048, 512)
            + _poly(p, 1, 8, 88, -448, 1888, -4864, 6400, -4096, 1024) * th
        )
    )
    n1 = (
        -6 * p * q
        - d**2 * _poly(p, 1, 0, 32, -64, 32) * th
        + d
        * th
        * _sqrt(
            d**2 * _poly(p, -1, -8, 8) * _poly(p, 1, -8, -56, -128, 704, -768, 256)
            + 2 * _poly(p, 1, 0, -32, 64, 992, -4096, 6144, -4096, 1024) * th
        )
    )
    n2 = (
        -6 * p**2 * q**2 * _poly(p, 5, 0, 0, -256, 768, -768, 256)
        - d**4 * _poly(p, 1, 8, 24, -64, 32) * th
        + d
        * th
        * _sqrt(
            _poly(
                p, -1, 8, 8, 288, -944, -3136, 3776, -73728, 712704, -2445312,
                4345856, -4489216, 2736128, -917504, 131072,
            )
            + 2
            * _poly(p, 1, 4, 12, -32, 16)
            * _poly(p, 1, -8, 40, -320, 1824, -4864, 6400, -4096, 1024)
            * th
        )
    )
    n3 = (
        -2 * p * _poly(
            p, -3, -18, -33, 255, 441, -643, -8448, 28416, -40448, 30720, -12288, 2048
        )
        - d**2 * _poly(p, -2, -10, -41, 190, 89, -1088, 1728, -1152, 288) * th
        - d
        * th
        * _sqrt(
            _poly(
                p, 2, 24, 186, 272, -1239, -8796, 43998, -51924, -581577, 3019604,
                -4358340, -6991872, 38416256, -72366336, 79163136, -54779904,
                23804928, -5971968, 663552,
            )
            + 2
            * _poly(
                p, 1, 10, 69, -18, -330, -3840, 8160, 62940, -250095, 56320,
                1459360, -4044096, 5577696, -4608000, 2322432, -663552, 82944,
            )
            * th
        )
    )
    return nu0, n1, n2, n3


def _nu(c: _Ctx, j: int):
    p, q, d, th = c.p, c.q, c.d, c.theta
    ell = c.params.ell
    if ell == 1:
        if j == 0:
            return 2 * p
        return mpmath.mpf(1) if j < 0 else (p / q) ** (2 * j)
    if ell == 2:
        if j == 0:
            return (_poly(p, -1, 2, 8, -8) + d**2 * th) / (4 * p * q)
        if j == -1:
            return (_poly(p, 1, 0, -8, 16, -8) - d * th) / (8 * p**3 * q)
        if j == -2:
            return (
                _poly(p, -1, -2, 12, 0, -24, 24, -8) + d * _poly(p, 1, 2, -4) * th
            ) / (8 * p**5 * q)
        if j == 1:
            return (_poly(p, 1, 0, -8, 16, -8) - d * th) / (8 * p * q**3)
    if ell == 3:
        nu0, n1, n2, n3 = _nu3_numerators(c)
        delta = _delta3(p)
        table = {
            0: nu0 / delta,
            -1: n1 / (2 * p**2 * delta),
            -2: n2 / (2 * p**4 * delta),
            -3: n3 / (2 * p**6 * delta),
            1: n1 / (2 * delta * q**2),
            2: n2 / (2 * delta * q**4),
        }
        if j in table:
            return table[j]
    raise UnsupportedCase(f"no closed form for nu_{j} with ell={ell}")


NU_INDICES = {1: (0, -1, 1), 2: (0, -1, -2, 1), 3: (0, -1, -2, -3, 1, 2)}


def nu_closed(params: ModelParams, j: int) -> float:
    """Hitting probability ``nu_j`` (``nu_0`` is the return probability)."""
    _require(params, (1, 2, 3), "nu")
    return _run(_nu, params, int(j))


# --- clump rate and exponential coefficient ----------------------------------


def _lambda_over_pi(c: _Ctx):
    p, q, d, th = c.p, c.q, c.d, c.theta
    ell = c.params.ell
    if ell == 1:
        return d
    if ell == 2:
        return d * (1 + d * th) / (2 * q**2)
    u, v = _uv(p)
    return (d * u + d**3 * th + mpmath.sqrt(2) * d**2 * _sqrt(v + u * th)) / (4 * q**4)


def lambda_over_pi_closed(params: ModelParams) -> float:
    _require(params, (1, 2, 3), "lambda/pi")
    return _run(_lambda_over_pi, params)


def _abg(p):
    alpha = _poly(p, 1, -4, 10, -52, 226, -520, 640, -400, 100)
    beta = _poly(p, 1, -2, 6, -8, 4)
    gamma = _poly(
        p, 1, -4, 16, -104, 506, -1808, 5604, -15576, 35574, -61160, 75152,
        -63440, 34840, -11200, 1600,
    )
    return alpha, beta, gamma


@dataclass(frozen=True)
class ChiCoefficients:
    chi2: float | None
    chi3: float | None
    alpha: float
    beta: float
    gamma: float
    u: float
    v: float


def _chi(c: _Ctx):
    p, q, d, th = c.p, c.q, c.d, c.theta
    if c.params.ell == 2:
        return d**2 / (4 * q**6) * (_poly(p, 1, 0, -8, 16, -8) + d * th)
    alpha, beta, gamma = _abg(p)
    rad = gamma + alpha * beta * th
    return d**2 / (12 * p * q**9) * (
        alpha + d**2 * beta * th + d * mpmath.sqrt(2) * _sqrt(rad)
    )


def chi(params: ModelParams) -> float:
    """Coefficient with ``epsilon_1 = chi_ell(p) / (2 ell)``."""
    _require(params, (2, 3), "chi")
    return _run(_chi, params)


def chi_coefficients(p: float) -> ChiCoefficients:
    with mpmath.workdps(_DPS):
        mp = mpmath.mpf(p)
        alpha, beta, gamma = _abg(mp)
        u, v = _uv(mp)
        return ChiCoefficients(
            chi2=chi(make_params(p, 2)),
            chi3=chi(make_params(p, 3)),
            alpha=float(alpha),
            beta=float(beta),
            gamma=float(gamma),
            u=float(u),
            v=float(v),
        )


def _epsilon_square(c: _Ctx):
    """``epsilon_1`` written as a perfect square."""
    p, q, d, th = c.p, c.q, c.d, c.theta
    ell = c.params.ell
    if ell == 1:
        return p * d**2 / (2 * q**3)
    if ell == 2:
        return d**2 * (1 + d * th) ** 2 / (32 * q**6)
    u, v = _uv(p)
    s = d * u + d**3 * th + mpmath.sqrt(2) * d**2 * _sqrt(v + u * th)
    return s**2 / (288 * p * q**9)


def epsilon_closed(params: ModelParams, which: int = 1) -> float:
    """``epsilon_1`` (full-walk maximum) or ``epsilon_0`` (cycle-start subwalk)."""
    _require(params, (1, 2, 3), "epsilon")
    if which not in (0, 1):
        raise ValueError("which must be 0 or 1")
    eps1 = _run(_epsilon_square, params)
    if which == 1:
        return eps1
    return eps1 * (params.p / params.q) ** params.ell


def expected_sojourn_closed(params: ModelParams) -> float:
    _require(params, (1,), "E(C)")
    return 1.0 / (params.q - params.p)


# --- weakly reflected walk with single +-1 steps -----------------------------


def warmup_pi(p: float, j: int) -> float:
    q = 1.0 - p
    return (q - p) / q * (p / q) ** j


def warmup_sojourn(p: float) -> float:
    return 1.0 / (1.0 - 2.0 * p)


def warmup_coefficient(p: float) -> float:
    """``P{M_n <= log_{q/p} n + h} ~ exp(-coef (q/p)^-h)``."""
    q = 1.0 - p
    return p * (q - p) ** 2 / q**2
