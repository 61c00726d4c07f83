"""Stationary law of a cycle kernel by generating functions.

With ``G(z) = sum_j pi_j z^j`` the balance equations give

    G(z) D(z) = sum_{i<ell} pi_i N_i(z),
    D(z) = (q + p z)^(2 ell) - z^ell,
    N_i(z) = z^i (q + p z)^(2 ell) - z^ell R_i(z),

where ``R_i`` is the generating function of boundary row ``i``.  ``G`` is
analytic in the unit disc, so the numerator must vanish at the ``ell - 1``
roots of ``D`` inside the disc; with ``G(1) = 1`` this fixes the boundary
probabilities.  The surviving pole at ``q^2/p^2`` controls the tail.

Polynomials are stored as coefficient arrays in ascending powers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .model import (
    DEFAULT_TRUNCATION,
    KernelMatrix,
    ModelParams,
    Order,
    cycle_kernel,
    step_law,
)

ROOT_SNAP_TOL = 1e-8
UNIT_CIRCLE_GAP = 1e-7
DIVISION_TOL = 1e-10
MAX_CONDITION = 1e12


class StructuralError(RuntimeError):
    """The root structure or linear system does not have the expected shape."""


class SolverError(RuntimeError):
    """A linear system could not be solved reliably."""


# ---------------------------------------------------------------------------
# polynomial helpers


def _relative_residual(coeffs: np.ndarray, z: complex) -> float:
    scale = P.polyval(abs(z), np.abs(coeffs))
    return abs(P.polyval(z, coeffs)) / scale if scale > 0 else 0.0


def polish_root(coeffs: np.ndarray, z: complex, steps: int = 8) -> complex:
    """Newton-refine a root; stops when the relative residual stops improving."""
    deriv = P.polyder(coeffs)
    best, best_res = z, _relative_residual(coeffs, z)
    for _ in range(steps):
        d = P.polyval(z, deriv)
        if d == 0:
            break
        z = z - P.polyval(z, coeffs) / d
        res = _relative_residual(coeffs, z)
        if res < best_res:
            best, best_res = z, res
        if res == 0.0:
            break
    return best


def polynomial_roots(coeffs: np.ndarray) -> np.ndarray:
    """Companion-matrix eigenvalues, each polished by Newton's method."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    # np.roots builds the companion matrix from descending coefficients
    raw = np.roots(coeffs[::-1]).astype(complex)
    return np.array([polish_root(coeffs, z) for z in raw])


def divide_out(coeffs: np.ndarray, root: complex) -> np.ndarray:
    """Divide by ``z - root`` (or the real quadratic of a complex pair).

    Raises :class:`StructuralError` if the remainder is not negligible.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if abs(np.imag(root)) > 0:
        factor = np.array([abs(root) ** 2, -2.0 * root.real, 1.0])
    else:
        factor = np.array([-float(np.real(root)), 1.0])
    quo, rem = P.polydiv(coeffs, factor)
    scale = max(np.abs(coeffs).max(), 1.0) * max(abs(root), 1.0) ** len(coeffs)
    if np.abs(rem).max(initial=0.0) > DIVISION_TOL * scale:
        raise StructuralError(
            f"polynomial does not vanish at z={root}: remainder {np.abs(rem).max():.3e}"
        )
    return quo


# ---------------------------------------------------------------------------
# denominator and its roots


@dataclass(frozen=True)
class DenominatorPoly:
    """``D(z) = sum_k c_k z^k`` of degree ``2 ell``."""

    coeffs: np.ndarray
    ell: int

    def __call__(self, z):
        return P.polyval(z, self.coeffs)

    def derivative(self, z):
        return P.polyval(z, P.polyder(self.coeffs))


def build_denominator(params: ModelParams) -> DenominatorPoly:
    """Coefficient of ``z^d`` is the step probability of ``d - ell``, with
    ``-(1 - a_0)`` on ``z^ell``."""
    law = step_law(params)
    ell = params.ell
    coeffs = np.array([law.probs[d - ell] for d in range(2 * ell + 1)])
    coeffs[ell] = -(1.0 - law.probs[0])
    return DenominatorPoly(coeffs=coeffs, ell=ell)


@dataclass(frozen=True)
class RootClassification:
    inside: np.ndarray
    unit_root: float
    geometric_root: float
    outside: np.ndarray

    @property
    def all_roots(self) -> np.ndarray:
        return np.concatenate(
            [self.inside, [self.unit_root, self.geometric_root], self.outside]
        ).astype(complex)

    def inside_representatives(self) -> list[complex]:
        """One root per conjugate pair, real roots as-is."""
        reps = []
        for z in self.inside:
            if z.imag >= 0:
                reps.append(complex(z))
        return reps


def _snap_conjugates(roots: np.ndarray) -> np.ndarray:
    """Force exact conjugate symmetry and exactly real roots where appropriate."""
    out = []
    pending = list(roots)
    while pending:
        z = pending.pop(0)
        scale = max(abs(z), 1.0)
        if abs(z.imag) <= 1e-10 * scale:
            out.append(complex(z.real, 0.0))
            continue
        j = int(np.argmin([abs(w - np.conj(z)) for w in pending])) if pending else -1
        if j < 0 or abs(pending[j] - np.conj(z)) > 1e-6 * scale:
            raise StructuralError(f"root {z} has no conjugate partner")
        w = pending.pop(j)
        mid = 0.5 * (z + np.conj(w))
        out.extend([complex(mid.real, abs(mid.imag)), complex(mid.real, -abs(mid.imag))])
    return np.array(out, dtype=complex)


def classify_roots(poly: DenominatorPoly, params: ModelParams) -> RootClassification:
    """Find all ``2 ell`` roots of ``D`` and bucket them around the unit circle."""
    ell = params.ell
    roots = list(polynomial_roots(poly.coeffs))
    if len(roots) != 2 * ell:
        raise StructuralError(f"expected {2 * ell} roots, found {len(roots)}")
    z_star = (params.q / params.p) ** 2

    def take(target: float) -> None:
        k = int(np.argmin([abs(z - target) for z in roots]))
        if abs(roots[k] - target) > ROOT_SNAP_TOL * max(1.0, target):
            raise StructuralError(f"no root of D near z={target}")
        roots.pop(k)

    take(1.0)
    take(z_star)
    rest = _snap_conjugates(np.array(roots, dtype=complex))
    mods = np.abs(rest)
    if np.any(np.abs(mods - 1.0) <= UNIT_CIRCLE_GAP):
        raise StructuralError("a root of D lies on the unit circle")
    inside = rest[mods < 1.0]
    outside = rest[mods > 1.0]
    if len(inside) != ell - 1:
        raise StructuralError(
            f"expected {ell - 1} roots inside the unit disc, found {len(inside)}"
        )
    order_in = np.lexsort((inside.imag, np.abs(inside)))
    order_out = np.lexsort((outside.imag, np.abs(outside)))
    return RootClassification(
        inside=inside[order_in],
        unit_root=1.0,
        geometric_root=z_star,
        outside=outside[order_out],
    )


# ---------------------------------------------------------------------------
# stationary law


@dataclass(frozen=True)
class StationarySolution:
    params: ModelParams
    order: Order
    boundary: np.ndarray
    tail_amplitude: float
    decay: float
    L: float
    pi_series: np.ndarray
    numerator: np.ndarray = field(repr=False)
    reduced_denominator: np.ndarray = field(repr=False)
    condition: float = 0.0
    pi_vector: np.ndarray | None = field(default=None, repr=False)

    def max_oracle_deviation(self) -> float:
        if self.pi_vector is None:
            raise ValueError("no oracle vector attached")
        n = min(len(self.pi_vector), len(self.pi_series))
        return float(np.max(np.abs(self.pi_vector[:n] - self.pi_series[:n])))


def _gth(matrix: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman state reduction (subtraction free)."""
    a = np.array(matrix, dtype=float)
    n_states = a.shape[0]
    for n in range(n_states - 1, 0, -1):
        s = a[n, :n].sum()
        if s <= 0.0:
            raise SolverError(f"state {n} cannot reach lower states; chain is reducible")
        col = a[:n, n] / s
        a[:n, n] = col
        rows = np.nonzero(col)[0]
        cols = np.nonzero(a[n, :n])[0]
        if rows.size and cols.size:
            a[np.ix_(rows, cols)] += np.outer(col[rows], a[n, cols])
    pi = np.zeros(n_states)
    pi[0] = 1.0
    for n in range(1, n_states):
        pi[n] = pi[:n] @ a[:n, n]
    return pi / pi.sum()


def stationary_oracle(kernel: KernelMatrix) -> np.ndarray:
    """Stationary vector of the truncated chain by direct elimination.

    Mass lost by the last rows is put back on the diagonal so the chain is
    stochastic; the effect is of the order of the truncated tail.
    """
    if kernel.size < 50:
        raise ValueError(f"oracle needs truncation m >= 50, got {kernel.size}")
    mat = np.array(kernel.entries, dtype=float)
    leak = 1.0 - mat.sum(axis=1)
    if np.any(leak < -1e-12):
        raise SolverError("kernel rows sum above one")
    mat[np.diag_indices_from(mat)] += np.clip(leak, 0.0, None)
    pi = _gth(mat)
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise SolverError("oracle produced an invalid vector")
    return pi


def boundary_numerators(params: ModelParams, order: Order | str) -> list[np.ndarray]:
    """``N_i(z)`` for each boundary row, with the common ``z - 1`` removed."""
    ell = params.ell
    kernel = cycle_kernel(params, order, m=4 * ell + 4)
    full = P.polypow([params.q, params.p], 2 * ell)
    out = []
    for i in range(ell):
        row = kernel.entries[i]
        shifted_row = np.concatenate([np.zeros(ell), row])
        poly = P.polysub(np.concatenate([np.zeros(i), full]), shifted_row)
        out.append(P.polytrim(divide_out(poly, 1.0), 0.0))
    return out


def equilibrated_solve(
    mat: np.ndarray, rhs: np.ndarray, what: str = "linear system"
) -> tuple[np.ndarray, float]:
    """Solve after scaling rows and columns to unit max-norm.

    Columns belonging to unknowns of very different size otherwise cost
    elimination about the ratio of their scales in relative accuracy.
    """
    col = np.abs(mat).max(axis=0)
    col[col == 0] = 1.0
    scaled = mat / col
    row = np.abs(scaled).max(axis=1)
    row[row == 0] = 1.0
    scaled = scaled / row[:, None]
    cond = float(np.linalg.cond(scaled))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SolverError(f"{what} ill-conditioned (scaled cond={cond:.3e})")
    return np.linalg.solve(scaled, rhs / row) / col, cond


def solve_boundary(
    params: ModelParams,
    order: Order | str,
    classification: RootClassification,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve for ``pi_0..pi_{ell-1}``.

    Returns ``(boundary, numerator, condition)`` where ``numerator`` is
    ``sum_i pi_i N_i(z) / (z - 1)``.
    """
    ell = params.ell
    numerators = boundary_numerators(params, order)
    denom = build_denominator(params)
    reduced = divide_out(denom.coeffs, 1.0)

    rows, rhs = [], []
    for z in classification.inside_representatives():
        vals = np.array([P.polyval(z, n) for n in numerators])
        rows.append(vals.real)
        rhs.append(0.0)
        if z.imag != 0:
            rows.append(vals.imag)
            rhs.append(0.0)
    d1 = P.polyval(1.0, reduced)
    rows.append(np.array([P.polyval(1.0, n) for n in numerators]) / d1)
    rhs.append(1.0)
    mat = np.array(rows)
    if mat.shape != (ell, ell):
        raise StructuralError(f"boundary system has shape {mat.shape}, expected {(ell, ell)}")
    boundary, cond = equilibrated_solve(mat, np.array(rhs), f"boundary system for {params}")
    width = max(len(n) for n in numerators)
    numer = np.zeros(width)
    for coef, n in zip(boundary, numerators):
        numer[: len(n)] += coef * n
    return boundary, numer, cond


def _series(numer: np.ndarray, denom: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` power-series coefficients of ``numer / denom``."""
    out = np.zeros(count)
    d0 = denom[0]
    for j in range(count):
        acc = numer[j] if j < len(numer) else 0.0
        k_max = min(j, len(denom) - 1)
        if k_max:
            acc -= denom[1 : k_max + 1] @ out[j - 1 :: -1][:k_max]
        out[j] = acc / d0
    return out


def _deflate_inside(poly: np.ndarray, classification: RootClassification) -> np.ndarray:
    for z in classification.inside_representatives():
        poly = divide_out(poly, z if z.imag != 0 else z.real)
    return poly


def tail_amplitude(
    params: ModelParams, numerator: np.ndarray, classification: RootClassification
) -> float:
    """``A = -N(z*) / (z* D'(z*))`` with the factor ``1 - z`` cancelled."""
    z_star = classification.geometric_root
    reduced = divide_out(build_denominator(params).coeffs, 1.0)
    d_prime = P.polyval(z_star, P.polyder(reduced))
    if abs(d_prime) < 1e-12:
        raise StructuralError("degenerate pole at q^2/p^2")
    return float(-P.polyval(z_star, numerator) / (z_star * d_prime))


def solve_stationary(
    params: ModelParams,
    order: Order | str = Order.RED_FIRST,
    m: int = DEFAULT_TRUNCATION,
    with_oracle: bool = False,
) -> StationarySolution:
    """Boundary values, tail amplitude and ``pi_0..pi_{m-1}`` by the root method.

    The full vector is expanded from ``G(z)`` after every root of the
    denominator on or inside the unit circle has been divided out, so the
    recurrence only carries decaying modes.
    """
    order = Order.parse(order)
    denom = build_denominator(params)
    roots = classify_roots(denom, params)
    boundary, numer, cond = solve_boundary(params, order, roots)
    reduced = divide_out(denom.coeffs, 1.0)
    amp = tail_amplitude(params, numer, roots)

    numer_hat = _deflate_inside(numer, roots)
    denom_hat = _deflate_inside(reduced, roots)
    series = _series(numer_hat, denom_hat, max(m, 2 * params.ell))
    # positive terms: summing the tail avoids cancelling G(1) against the boundary
    L = float(series[params.ell :].sum())
    # The coordinates of the numerator in the N_i basis are poorly
    # determined for larger ell even when the numerator itself is accurate,
    # so the reported boundary values are read off the expansion.
    boundary = series[: params.ell].copy()

    pi_vector = None
    if with_oracle:
        pi_vector = stationary_oracle(cycle_kernel(params, order, m))
    return StationarySolution(
        params=params,
        order=order,
        boundary=boundary,
        tail_amplitude=amp,
        decay=params.decay,
        L=L,
        pi_series=series,
        numerator=numer,
        reduced_denominator=reduced,
        condition=cond,
        pi_vector=pi_vector,
    )
