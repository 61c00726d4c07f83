"""Traffic-light walk: parameters, single-slot kernels and cycle kernels.

A cycle is ``ell`` red slots (a car arrives with probability ``p``, none
leave) followed by ``ell`` green slots (a car leaves with probability ``q``
if the queue is non-empty).  Observing the queue once per cycle gives a
Markov chain whose interior rows are the binomial increment law on
``-ell..ell``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import comb

import numpy as np

DEFAULT_TRUNCATION = 400


class ModelError(ValueError):
    """Invalid model parameters."""


class Order(str, enum.Enum):
    """Which block the observed cycle starts with."""

    RED_FIRST = "red-first"  # U^ell V^ell, sampled at times = 0 mod 2ell
    GREEN_FIRST = "green-first"  # V^ell U^ell, sampled at times = ell mod 2ell

    @classmethod
    def parse(cls, value: "Order | str") -> "Order":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"redfirst": "red-first", "greenfirst": "green-first"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class ModelParams:
    p: float
    ell: int

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def decay(self) -> float:
        """Geometric tail ratio p^2/q^2 of the stationary law."""
        return (self.p / self.q) ** 2


def make_params(p: float, ell: int) -> ModelParams:
    """Validate and build :class:`ModelParams` (requires ``0 < p < q``)."""
    p = float(p)
    if not np.isfinite(p) or p <= 0.0:
        raise ModelError(f"arrival probability must be positive, got p={p}")
    if p >= 0.5:
        raise ModelError(f"requires p<q (p < 0.5), got p={p}")
    if int(ell) != ell or ell < 1:
        raise ModelError(f"block length ell must be a positive integer, got {ell}")
    return ModelParams(p=p, ell=int(ell))


@dataclass(frozen=True)
class StepLaw:
    """Increment law of one full cycle of the unreflected walk."""

    ell: int
    probs: dict[int, float]

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.ell, self.ell + 1)

    def as_array(self) -> np.ndarray:
        """Probabilities ordered by increment ``-ell..ell``."""
        return np.array([self.probs[d] for d in range(-self.ell, self.ell + 1)])

    @property
    def mean(self) -> float:
        return float(sum(d * w for d, w in self.probs.items()))


def step_law(params: ModelParams | tuple[float, int]) -> StepLaw:
    """Binomial law ``C(2l, l+i) p^(l+i) q^(l-i)`` on ``i = -l..l``.

    Accepts a raw ``(p, ell)`` tuple so that degenerate ``p = 0`` can be
    inspected without going through :func:`make_params`.
    """
    if isinstance(params, ModelParams):
        p, ell = params.p, params.ell
    else:
        p, ell = float(params[0]), int(params[1])
    q = 1.0 - p
    probs = {
        i: comb(2 * ell, ell + i) * p ** (ell + i) * q ** (ell - i)
        for i in range(-ell, ell + 1)
    }
    return StepLaw(ell=ell, probs=probs)


@dataclass(frozen=True)
class KernelMatrix:
    """Truncated transition matrix on states ``0..size-1``.

    Rows up to ``size - ell - 1`` are exact; the last ``ell`` rows of a cycle
    kernel lose the mass that would leave the truncated range.
    """

    entries: np.ndarray
    label: str
    ell: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def boundary_rows(self) -> np.ndarray:
        return self.entries[: self.ell]


def _check_truncation(params: ModelParams, m: int) -> None:
    if m < 2 * params.ell + 2:
        raise ModelError(f"truncation m={m} must be at least 2*ell+2={2 * params.ell + 2}")


def _arrival_matrix(p: float, size: int) -> np.ndarray:
    q = 1.0 - p
    u = np.diag(np.full(size, q))
    u[np.arange(size - 1), np.arange(1, size)] = p
    return u


def _departure_matrix(p: float, size: int) -> np.ndarray:
    q = 1.0 - p
    v = np.diag(np.full(size, p))
    v[0, 0] = 1.0
    v[np.arange(1, size), np.arange(size - 1)] = q
    return v


def single_step_kernels(params: ModelParams, m: int) -> tuple[KernelMatrix, KernelMatrix]:
    """One red slot ``U`` and one green slot ``V`` on ``0..m-1``."""
    _check_truncation(params, m)
    u = KernelMatrix(_arrival_matrix(params.p, m), "U", ell=1)
    v = KernelMatrix(_departure_matrix(params.p, m), "V", ell=1)
    return u, v


def cycle_kernel(
    params: ModelParams, order: Order | str = Order.RED_FIRST, m: int = DEFAULT_TRUNCATION
) -> KernelMatrix:
    """Transition matrix of the queue observed once per ``2*ell`` slots.

    Factors are built at size ``m + ell`` so that every retained row of the
    product is exact before the columns are trimmed back to ``m``.
    """
    _check_truncation(params, m)
    order = Order.parse(order)
    ell = params.ell
    big = m + ell
    u_ell = np.linalg.matrix_power(_arrival_matrix(params.p, big), ell)
    v_ell = np.linalg.matrix_power(_departure_matrix(params.p, big), ell)
    if order is Order.RED_FIRST:
        prod, label = u_ell @ v_ell, f"U^{ell}V^{ell}"
    else:
        prod, label = v_ell @ u_ell, f"V^{ell}U^{ell}"
    return KernelMatrix(prod[:m, :m].copy(), label, ell=ell, meta={"order": order.value})
