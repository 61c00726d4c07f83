"""Poisson clumping for the maximum queue length.

The free walk that moves by one cycle's increment (``-ell..ell``) has
hitting probabilities ``nu_j``: the chance that, started ``j`` below a
level, it ever lands exactly on that level (``nu_0`` is the return
probability).  Because the walk can jump over a level, clumps are counted
on the ``ell`` consecutive levels ``{0, -1, ..., -(ell-1)}``, giving an
``ell x ell`` system for the clump intensities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .gfsolver import (
    MAX_CONDITION,
    SolverError,
    StructuralError,
    build_denominator,
    classify_roots,
    equilibrated_solve,
    solve_stationary,
)
from .model import ModelParams, Order, step_law

VALIDATED_ELL = (1, 2, 3)
EXTRAPOLATION_WARNING = "epsilon prefactor extrapolated"


@dataclass(frozen=True)
class HitProbabilities:
    params: ModelParams
    nu0: float
    nu_pos: np.ndarray  # nu_1 .. nu_ell
    nu_neg: np.ndarray  # nu_-1 .. nu_-ell
    condition: float = 0.0

    def nu(self, j: int, recursion: bool = False) -> float:
        """``nu_j`` for ``|j| <= ell``.

        With ``recursion=True``, ``nu_0`` is 1 (the value it takes inside the
        first-step equations) rather than the return probability.
        """
        if j == 0:
            return 1.0 if recursion else self.nu0
        if abs(j) > self.params.ell:
            raise IndexError(f"nu_{j} outside the solved range |j| <= {self.params.ell}")
        return float(self.nu_pos[j - 1] if j > 0 else self.nu_neg[-j - 1])

    def table(self) -> dict[int, float]:
        ell = self.params.ell
        return {j: self.nu(j) for j in range(-ell, ell + 1)}


def _hit_numerator(params: ModelParams) -> np.ndarray:
    """Numerator of ``z^(ell-1) H(z)`` as an affine form in the unknowns.

    ``H(z) = sum_{k >= 1-ell} nuhat_k z^k`` with ``nuhat_0 = 1``.  Returns
    an array ``coef[power, var]`` where ``var = 0`` is the constant and
    ``var = k`` multiplies ``nu_-k``; positive-index values are replaced by
    ``nu_k = (p/q)^(2k) nu_-k``.
    """
    ell = params.ell
    law = step_law(params)
    r = params.decay
    deg = 2 * ell - 1
    coef = np.zeros((deg + 1, ell + 1))

    def add(power: int, k: int, weight: float) -> None:
        # weight * nuhat_k * z^power
        if k == 0:
            coef[power, 0] += weight
        elif k < 0:
            coef[power, -k] += weight
        else:
            coef[power, k] += weight * r**k

    for k in range(1 - ell, 1):
        add(deg + k, k, 1.0)
    for d, a in law.probs.items():
        for k in range(1 - ell, -d + 1):
            add(deg + d + k, k, -a)
    return coef


def _hit_probs_numerator(params: ModelParams, roots) -> tuple[np.ndarray, float, float]:
    """Unknowns ``nu_0, nu_-1, ..., nu_-ell`` from the numerator conditions.

    The numerator of the ``nu`` generating function must vanish at ``z = 1``
    and at each root of the denominator inside the unit disc; the return
    probability closes the system through its first-step equation with
    ``nu_ell`` folded back.  ``nu_-ell`` only enters with weight
    ``p^(2 ell)``, so its accuracy degrades like ``1e-16 / p^(2 ell)``.
    """
    ell = params.ell
    law = step_law(params)
    coef = _hit_numerator(params)
    rows, rhs = [], []

    def condition_at(z: complex) -> None:
        vals = np.array([P.polyval(z, coef[:, v]) for v in range(ell + 1)])
        row = np.concatenate([[0.0], vals[1:]])
        rows.append(row.real)
        rhs.append(-vals[0].real)
        if np.imag(z) != 0:
            rows.append(row.imag)
            rhs.append(-vals[0].imag)

    for z in roots.inside_representatives():
        condition_at(z)
    condition_at(1.0)
    # nu_0 = a_0 + 2 sum_{e>=1} a_e nu_-e
    rows.append(np.array([1.0] + [-2.0 * law.probs[e] for e in range(1, ell + 1)]))
    rhs.append(law.probs[0])

    mat = np.array(rows)
    if mat.shape != (ell + 1, ell + 1):
        raise StructuralError(f"hit system has shape {mat.shape}")
    sol, cond = equilibrated_solve(mat, np.array(rhs), "hit system")
    return sol[1:], float(sol[0]), cond


def entry_law(params: ModelParams, roots, starts) -> np.ndarray:
    """``u[x, i]``: probability that the walk from ``x >= 1`` first enters
    ``(-inf, 0]`` at ``-i``.

    Each ``u[., i]`` is the bounded solution of the first-step equations,
    a combination of ``w^x`` over ``w = 1`` and the roots inside the disc,
    pinned to ``delta_{y, -i}`` on ``y = 0, -1, ..., 1 - ell``.
    """
    ell = params.ell
    w = np.concatenate([[1.0 + 0j], np.asarray(roots.inside, dtype=complex)])
    ys = -np.arange(ell)
    vander = w[None, :] ** ys[:, None]
    coeffs = np.linalg.solve(vander, np.eye(ell, dtype=complex))
    xs = np.asarray(list(starts))
    u = (w[None, :] ** xs[:, None]) @ coeffs
    if np.abs(u.imag).max(initial=0.0) > 1e-9:
        raise StructuralError("entry law is not real")
    return u.real


def _hit_probs_entry(params: ModelParams, roots) -> tuple[np.ndarray, float, float]:
    """Unknowns from the first-entry decomposition.

    From ``x > 0`` the walk enters ``(-inf, 0]`` at some ``-i`` with
    ``0 <= i < ell`` and must then climb back to 0, so
    ``nu_-x = u_0(x) + sum_{i>=1} u_i(x) (p/q)^(2i) nu_-i``.
    """
    ell = params.ell
    law = step_law(params)
    r = params.decay
    u = entry_law(params, roots, range(1, ell + 1))
    climb = r ** np.arange(1, ell)  # nu_i / nu_-i
    inner = u[: ell - 1, 1:] * climb[None, :]
    mat = np.eye(ell - 1) - inner
    cond = float(np.linalg.cond(mat)) if ell > 1 else 1.0
    if cond > MAX_CONDITION:
        raise SolverError(f"entry system ill-conditioned (cond={cond:.3e})")
    head = np.linalg.solve(mat, u[: ell - 1, 0]) if ell > 1 else np.zeros(0)
    last = u[ell - 1, 0] + u[ell - 1, 1:] @ (climb * head)
    nu_neg = np.concatenate([head, [last]])
    nu0 = law.probs[0] + 2.0 * sum(law.probs[e] * nu_neg[e - 1] for e in range(1, ell + 1))
    return nu_neg, float(nu0), cond


HIT_METHODS = ("entry", "numerator")


def solve_hit_probs(params: ModelParams, method: str = "entry") -> HitProbabilities:
    """Hitting probabilities from the roots of the step-law denominator.

    ``method="entry"`` decomposes on the first entry below the level and is
    accurate to near machine precision.  ``method="numerator"`` imposes the
    vanishing of the generating-function numerator directly; it is kept as
    a cross-check and loses accuracy for small ``p`` and large ``ell``.
    """
    roots = classify_roots(build_denominator(params), params)
    if method == "entry":
        nu_neg, nu0, cond = _hit_probs_entry(params, roots)
    elif method == "numerator":
        nu_neg, nu0, cond = _hit_probs_numerator(params, roots)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {HIT_METHODS}")
    ks = np.arange(1, params.ell + 1)
    nu_pos = nu_neg * params.decay**ks
    return HitProbabilities(params, nu0, nu_pos, nu_neg, cond)


@dataclass(frozen=True)
class ClumpSolution:
    params: ModelParams
    lambdas: np.ndarray  # lambda_0, lambda_-1, ... in units of pi_j
    lambda_over_pi: float
    epsilon: float  # epsilon_1, governs the full-walk maximum
    epsilon0: float
    expected_sojourn: float
    amplitude: float  # red-first tail amplitude
    hit: HitProbabilities = field(repr=False)
    warnings: tuple[str, ...] = ()

    @property
    def extrapolated(self) -> bool:
        return self.params.ell not in VALIDATED_ELL


def _clump_matrix(hit: HitProbabilities) -> np.ndarray:
    ell = hit.params.ell
    return np.array(
        [[hit.nu(i - k, recursion=True) for k in range(ell)] for i in range(ell)]
    )


def solve_clump_system(
    params: ModelParams, hit: HitProbabilities, amplitude: float
) -> ClumpSolution:
    """Clump intensities on ``{0, ..., -(ell-1)}`` and the coefficient ``epsilon``.

    Row ``i`` reads ``sum_k lambda_-k nu_(i-k) = (1 - nu_0) (p/q)^(2i)``,
    everything in units of ``pi_j``.  Then

        epsilon_1 = (1/(2 ell)) (p/q)^2 (q/p)^ell (lambda/pi_j) A(p).
    """
    ell = params.ell
    mat = _clump_matrix(hit)
    rhs = (1.0 - hit.nu0) * params.decay ** np.arange(ell)
    if abs(np.linalg.det(mat)) < 1e-300 or np.linalg.cond(mat) > MAX_CONDITION:
        raise SolverError("clump system is singular")
    lambdas = np.linalg.solve(mat, rhs)
    lam = float(lambdas.sum())
    base = params.decay * lam * amplitude / (2 * ell)
    eps1 = base * (params.q / params.p) ** ell
    warnings = () if ell in VALIDATED_ELL else (EXTRAPOLATION_WARNING,)
    return ClumpSolution(
        params=params,
        lambdas=lambdas,
        lambda_over_pi=lam,
        epsilon=eps1,
        epsilon0=base,
        expected_sojourn=1.0 / (1.0 - hit.nu0),
        amplitude=amplitude,
        hit=hit,
        warnings=warnings,
    )


def solve_clumps(params: ModelParams) -> ClumpSolution:
    """Full pipeline: hit probabilities, red-first amplitude, clump system."""
    hit = solve_hit_probs(params)
    amp = solve_stationary(params, Order.RED_FIRST, m=4 * params.ell + 4).tail_amplitude
    return solve_clump_system(params, hit, amp)


@dataclass(frozen=True)
class ConjectureCheck:
    ell: int
    p: float
    lhs: float
    rhs: float
    rel_gap: float


def conjecture_ratio(params: ModelParams) -> ConjectureCheck:
    """Compare ``lambda/pi_j`` with ``ell q^2 A(p)``."""
    if params.ell < 2:
        raise ValueError("the relation concerns ell >= 2")
    sol = solve_clumps(params)
    rhs = params.ell * params.q**2 * sol.amplitude
    return ConjectureCheck(
        params.ell, params.p, sol.lambda_over_pi, rhs, abs(sol.lambda_over_pi / rhs - 1.0)
    )


def epsilon_pair(params: ModelParams) -> tuple[float, float]:
    """``(epsilon_0, epsilon_1)`` from the two extreme subwalks.

    ``epsilon_0`` uses the red-first amplitude, ``epsilon_1`` the
    green-first one; their ratio must be ``(p/q)^ell``.
    """
    if params.ell not in VALIDATED_ELL:
        raise ValueError(f"epsilon pair validated for ell in {VALIDATED_ELL} only")
    hit = solve_hit_probs(params)
    m = 4 * params.ell + 4
    lam = solve_clump_system(params, hit, 1.0).lambda_over_pi
    scale = params.decay * lam / (2 * params.ell)
    eps0 = scale * solve_stationary(params, Order.RED_FIRST, m).tail_amplitude
    eps1 = scale * solve_stationary(params, Order.GREEN_FIRST, m).tail_amplitude
    ratio = eps0 / eps1
    expected = (params.p / params.q) ** params.ell
    if abs(ratio / expected - 1.0) > 1e-9:
        raise StructuralError(f"epsilon_0/epsilon_1 = {ratio}, expected {expected}")
    return eps0, eps1


@dataclass(frozen=True)
class MaxPrediction:
    n: int
    epsilon: float
    decay: float
    ms: np.ndarray
    cdf: np.ndarray
    source: str = "gf-solver"

    def central(self, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
        """Levels whose predicted CDF lies in ``[lo, hi]``."""
        mask = (self.cdf >= lo) & (self.cdf <= hi)
        return self.ms[mask]

    def location(self) -> float:
        """``log_{q^2/p^2}(n)``: the centring level of the maximum."""
        return math.log(self.n) / -math.log(self.decay)


def max_cdf(epsilon: float, decay: float, n: float, m) -> np.ndarray:
    """``P{M_n <= m} ~ exp(-epsilon n decay^m)``."""
    m = np.asarray(m, dtype=float)
    return np.exp(-epsilon * n * decay**m)


def predict_max_cdf(
    params: ModelParams, n: int, m_range=None, clumps: ClumpSolution | None = None
) -> MaxPrediction:
    """Predicted distribution of the largest queue length over ``n`` slots.

    For ``ell = 1`` the coefficient is the exact ``p (q-p)^2 / (2 q^3)``;
    otherwise it comes from the clump pipeline (or ``clumps`` if given).
    """
    if n < 1:
        raise ValueError("horizon n must be >= 1")
    if params.ell == 1:
        eps, source = params.p * (params.q - params.p) ** 2 / (2 * params.q**3), "closed-form"
    else:
        eps = (clumps if clumps is not None else solve_clumps(params)).epsilon
        source = "gf-solver"
    if m_range is None:
        centre = math.log(n) / -math.log(params.decay)
        lo = max(0, int(math.floor(centre)) - 6)
        ms = np.arange(lo, int(math.ceil(centre)) + 8)
    else:
        ms = np.asarray(list(m_range), dtype=int)
    return MaxPrediction(n, eps, params.decay, ms, max_cdf(eps, params.decay, n, ms), source)


# --- deterministic oracle for nu ----------------------------------------------


def hit_oracle(
    params: ModelParams, floor: int = 200, max_iter: int = 4000, rtol: float = 1e-16
) -> HitProbabilities:
    """``nu_j`` for ``|j| <= ell`` by value iteration on the free walk.

    ``h_t(x)`` is the chance of landing on 0 within ``t`` cycles from ``x``;
    it increases to ``h(x)`` and every update adds non-negative terms, so
    small values keep their relative accuracy.  Starts below ``-floor`` are
    treated as lost (their chance is about ``(p/q)^(2 floor)``).  The grid
    reaches far enough upward that its top edge cannot influence the
    targets within ``max_iter`` sweeps.
    """
    ell = params.ell
    law = step_law(params).as_array()
    top = ell * (max_iter + 2)
    size = floor + top + 1
    origin = floor  # index of x = 0
    h = np.zeros(size)
    targets = origin + np.arange(-ell, ell + 1)
    for _ in range(max_iter):
        g = h.copy()
        g[origin] = 1.0
        new = np.zeros(size)
        for idx, d in enumerate(range(-ell, ell + 1)):
            if d >= 0:
                new[: size - d] += law[idx] * g[d:]
            else:
                new[-d:] += law[idx] * g[: size + d]
        done = np.all(np.abs(new[targets] - h[targets]) <= rtol * new[targets])
        h = new
        if done:
            break
    else:
        raise SolverError(f"hit oracle did not converge in {max_iter} sweeps for {params}")
    # h at x = 0 is the return probability (first step already taken)
    xs = np.arange(1, ell + 1)
    return HitProbabilities(
        params,
        nu0=float(h[origin]),
        nu_pos=h[origin - xs].copy(),
        nu_neg=h[origin + xs].copy(),
        condition=float("nan"),
    )


# --- Monte Carlo oracle for nu ----------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    trials: int

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * max(self.stderr, 1e-300)


def sojourn_oracle(
    params: ModelParams,
    j_start: int,
    trials: int = 100_000,
    horizon: int = 2_000,
    seed: int = 20190121,
    chunk: int = 50_000,
) -> MCEstimate:
    """Estimate ``nu_j`` by simulating the free cycle walk from ``-j``.

    A path counts as a hit only if it lands exactly on 0 (at a step >= 1).
    Paths that sink far below both the start and 0 are abandoned; their
    return chance is below ``(p/q)^(2 * 40 ell)``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    ell = params.ell
    start = -int(j_start)
    floor = min(start, 0) - 40 * ell
    seeds = np.random.SeedSequence(seed).spawn((trials + chunk - 1) // chunk)
    hits = 0
    done = 0
    for ss in seeds:
        size = min(chunk, trials - done)
        rng = np.random.Generator(np.random.Philox(ss))
        pos = np.full(size, start, dtype=np.int64)
        alive = np.ones(size, dtype=bool)
        for _ in range(horizon):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            pos[idx] += rng.binomial(2 * ell, params.p, idx.size) - ell
            landed = idx[pos[idx] == 0]
            hits += landed.size
            alive[landed] = False
            alive[idx[pos[idx] < floor]] = False
        done += size
    est = hits / trials
    return MCEstimate(est, math.sqrt(max(est * (1 - est), 0.0) / trials), trials)
