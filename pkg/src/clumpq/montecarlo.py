"""Direct simulation of the traffic-light queue.

Slot ``i`` (counting from 1) is red when ``(i - 1) mod 2 ell < ell``: a car
arrives with probability ``p``.  In a green slot a car leaves with
probability ``q`` unless the queue is empty.  Paths are generated in one
vectorised pass: with ``W`` the free partial sums, the reflected walk is
``S_j = W_j - min(0, min_{k <= j} W_k)``.

Replicate ``r`` of a run draws from ``SeedSequence(seed, spawn_key=(r,))``
through a Philox generator, so any replicate can be regenerated on its own
and the aggregate does not depend on how replicates are scheduled.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, ModelParams, Order

DEFAULT_SEED = 20190121
THREADS_ENV = "CLUMPQ_THREADS"
CDF_SLACK = 0.015
CENTRAL_RANGE = (0.05, 0.95)


class InsufficientData(RuntimeError):
    """The simulated paths never produced the event being estimated."""


class Record(str, enum.Enum):
    MAX = "max"
    MAX_AND_CLUMPS = "max+clumps"


@dataclass(frozen=True)
class SimConfig:
    """Simulation request.  ``p = 0`` is accepted so degenerate runs can be tested."""

    params: ModelParams
    n: int
    replicates: int = 1
    seed: int = DEFAULT_SEED
    record: Record = Record.MAX

    def __post_init__(self):
        p, ell = self.params.p, self.params.ell
        if not (0.0 <= p < 1.0) or int(ell) != ell or ell < 1:
            raise ModelError(f"invalid parameters for simulation: {self.params}")
        if self.n < 1 or self.n % (2 * ell):
            raise ModelError(f"horizon n={self.n} must be a positive multiple of 2*ell={2 * ell}")
        if self.replicates < 1:
            raise ModelError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ModelError("seed must fit in 64 bits")
        object.__setattr__(self, "record", Record(self.record))


def _generator(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def _thread_count(jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        cap = int(raw)
    except ValueError:
        raise ModelError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, jobs))


def _map_replicates(fn, count: int) -> list:
    """Apply ``fn`` to ``0..count-1``; results come back in index order."""
    workers = _thread_count(count)
    if workers == 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def red_slots(ell: int, n: int) -> np.ndarray:
    """Boolean mask over slots ``1..n``; True for red."""
    return (np.arange(n) % (2 * ell)) < ell


def simulate_path(params: ModelParams, n: int, seed: int = DEFAULT_SEED, replicate: int = 0) -> np.ndarray:
    """Queue lengths ``S_0 = 0, S_1, ..., S_n``."""
    ell = params.ell
    rng = _generator(seed, replicate)
    coin = rng.random(n) < params.p
    # red: +1 on arrival; green: -1 unless the coin says "no departure"
    steps = coin.astype(np.int64) - (~red_slots(ell, n)).astype(np.int64)
    free = np.empty(n + 1, dtype=np.int64)
    free[0] = 0
    np.cumsum(steps, out=free[1:])
    return free - np.minimum.accumulate(np.minimum(free, 0))


@dataclass(frozen=True)
class SojournEstimate:
    """Mean number of visits to ``level`` per clump."""

    value: float
    stderr: float
    clumps: int
    visits: int
    level: int
    rule: dict = field(default_factory=dict)

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr


@dataclass(frozen=True)
class MaxEmpirical:
    counts: dict[int, int]
    replicates: int
    sojourn: SojournEstimate | None = None

    @property
    def ms(self) -> np.ndarray:
        return np.arange(0, max(self.counts) + 1)

    @property
    def cdf(self) -> np.ndarray:
        """Empirical ``P{M_n <= m}`` for ``m`` in :attr:`ms`."""
        freq = np.array([self.counts.get(int(m), 0) for m in self.ms], dtype=float)
        return np.cumsum(freq) / self.replicates

    @property
    def stderr(self) -> np.ndarray:
        f = self.cdf
        return np.sqrt(f * (1.0 - f) / self.replicates)

    def cdf_at(self, m) -> np.ndarray:
        m = np.atleast_1d(np.asarray(m, dtype=int))
        table = self.cdf
        out = np.where(m < 0, 0.0, 1.0)
        inside = (m >= 0) & (m < table.size)
        out[inside] = table[m[inside]]
        return out

    def quantile(self, level: float) -> int:
        """Smallest ``m`` with empirical CDF at least ``level``."""
        return int(self.ms[np.searchsorted(self.cdf, level - 1e-12)])


def simulate_walk(config: SimConfig) -> MaxEmpirical:
    """Distribution of ``M_n = max_{j <= n} S_j`` over independent replicates.

    With ``Record.MAX_AND_CLUMPS`` the clump statistics at the default level
    are pooled as well; they stay ``None`` if no clump closed.
    """
    params, n = config.params, config.n
    want_clumps = config.record is Record.MAX_AND_CLUMPS

    def one(r: int):
        path = simulate_path(params, n, config.seed, r)
        stats = _clump_stats(_cycle_chain(path, params.ell, Order.RED_FIRST), params.ell) if want_clumps else None
        return int(path.max()), stats

    results = _map_replicates(one, config.replicates)
    maxima = np.array([m for m, _ in results])
    values, freq = np.unique(maxima, return_counts=True)
    counts = {int(v): int(c) for v, c in zip(values, freq)}
    sojourn = None
    if want_clumps:
        try:
            sojourn = _pool_clumps([s for _, s in results], params.ell)
        except InsufficientData:
            pass
    return MaxEmpirical(counts=counts, replicates=config.replicates, sojourn=sojourn)


# --- comparison with the clumping prediction --------------------------------


@dataclass(frozen=True)
class CdfRow:
    m: int
    empirical: float
    predicted: float
    stderr: float
    z: float
    ok: bool


@dataclass(frozen=True)
class MaxComparison:
    rows: tuple[CdfRow, ...]
    sigmas: float
    slack: float

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.ok for r in self.rows)

    @property
    def worst(self) -> float:
        """Largest ``|empirical - predicted|`` over the compared levels."""
        return max((abs(r.empirical - r.predicted) for r in self.rows), default=math.nan)


def compare_max(
    empirical: MaxEmpirical,
    predicted_cdf,
    sigmas: float = 3.0,
    slack: float = CDF_SLACK,
    central: tuple[float, float] = CENTRAL_RANGE,
) -> MaxComparison:
    """Check ``|F_emp(m) - F(m)| <= sigmas * stderr + slack`` where ``F(m)`` is central.

    ``predicted_cdf`` maps an integer array of levels to predicted values.
    """
    lo, hi = central
    ms = np.arange(0, empirical.ms[-1] + 40)
    pred = np.asarray(predicted_cdf(ms), dtype=float)
    keep = (pred >= lo) & (pred <= hi)
    emp = empirical.cdf_at(ms)
    se = np.sqrt(emp * (1.0 - emp) / empirical.replicates)
    rows = []
    for m, e, f, s in zip(ms[keep], emp[keep], pred[keep], se[keep]):
        gap = e - f
        z = gap / s if s > 0 else (0.0 if gap == 0 else math.copysign(math.inf, gap))
        rows.append(CdfRow(int(m), float(e), float(f), float(s), float(z), bool(abs(gap) <= sigmas * s + slack)))
    return MaxComparison(tuple(rows), sigmas, slack)


# --- embedded chain: occupancy and clumps ------------------------------------


def _cycle_chain(path: np.ndarray, ell: int, order: Order) -> np.ndarray:
    offset = 0 if Order.parse(order) is Order.RED_FIRST else ell
    return path[offset :: 2 * ell]


@dataclass(frozen=True)
class StationaryEmpirical:
    order: Order
    pi: np.ndarray
    stderr: np.ndarray  # batch-means standard error per state
    samples: int
    batches: int

    def tail_ratio(self, lo: int, hi: int) -> float:
        """Least-squares slope of ``log pi_j`` over ``lo <= j <= hi``, as a ratio."""
        js = np.arange(lo, hi + 1)
        vals = self.pi[js] if hi < self.pi.size else None
        if vals is None or np.any(vals <= 0):
            raise InsufficientData(f"no occupancy in states {lo}..{hi}")
        slope = np.polyfit(js, np.log(vals), 1, w=np.sqrt(vals))[0]
        return float(math.exp(slope))


def estimate_stationary(
    config: SimConfig,
    order: Order | str = Order.RED_FIRST,
    burn_in: int = 10_000,
    batches: int = 50,
) -> StationaryEmpirical:
    """Occupancy of the subwalk observed at slots ``0`` (red-first) or ``ell``
    (green-first) mod ``2 ell`` after a burn-in of ``burn_in`` slots.

    The standard error uses batch means over each run, which absorbs the
    autocorrelation of the chain.
    """
    params, ell = config.params, config.params.ell
    order = Order.parse(order)
    if not 0 <= burn_in < config.n:
        raise ModelError("burn-in must lie inside the horizon")

    def one(r: int) -> np.ndarray:
        path = simulate_path(params, config.n, config.seed, r)
        chain = _cycle_chain(path, ell, order)
        return chain[-(-burn_in // (2 * ell)) :] if burn_in else chain

    chains = _map_replicates(one, config.replicates)
    top = max(int(c.max()) for c in chains) + 1
    total = sum(c.size for c in chains)
    if any(c.size < batches for c in chains):
        raise InsufficientData("too few samples for batch means")
    pi = sum(np.bincount(c, minlength=top) for c in chains) / total
    means = []
    for c in chains:
        size = c.size // batches
        for b in range(batches):
            seg = c[b * size : (b + 1) * size]
            means.append(np.bincount(seg, minlength=top) / seg.size)
    means = np.array(means)
    stderr = means.std(axis=0, ddof=1) / math.sqrt(means.shape[0])
    return StationaryEmpirical(order, pi, stderr, total, means.shape[0])


def default_sojourn_level(ell: int) -> int:
    """High enough that a return through the reflecting floor costs about
    ``(p/q)^(2 ell + 2)``, low enough to be visited in runs of ``10^6`` slots."""
    return 2 * ell + 1


def _clump_stats(chain: np.ndarray, ell: int, level: int | None = None,
                 drop: int | None = None, window: int | None = None) -> tuple[list[int], int]:
    """Visit counts of the closed clumps at ``level`` and the number of visits.

    A clump ends once the chain falls below ``level - drop`` or when
    ``window`` cycles pass without a return to ``level``; a clump still open
    at the end of the run is discarded.
    """
    level = default_sojourn_level(ell) if level is None else level
    drop = level - 1 if drop is None else drop
    window = 64 * ell if window is None else window
    visits = np.flatnonzero(chain == level)
    if visits.size == 0:
        return [], 0
    if visits.size > 1:
        lows = np.minimum.reduceat(chain, visits)[:-1]
        breaks = (lows < level - drop) | (np.diff(visits) > window)
    else:
        breaks = np.zeros(0, dtype=bool)
    cuts = np.concatenate([[0], np.flatnonzero(breaks) + 1, [visits.size]])
    sizes = np.diff(cuts).tolist()
    tail = chain[visits[-1] :]
    closed = tail.size > window or np.any(tail < level - drop)
    if not closed:
        sizes.pop()
    return sizes, int(visits.size)


def _pool_clumps(stats, ell: int, level: int | None = None,
                 drop: int | None = None, window: int | None = None) -> SojournEstimate:
    level = default_sojourn_level(ell) if level is None else level
    sizes = [s for run, _ in stats for s in run]
    visits = sum(v for _, v in stats)
    if not sizes:
        raise InsufficientData(f"level {level} was never reached in a closed clump")
    arr = np.asarray(sizes, dtype=float)
    se = arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else math.inf
    rule = {
        "level": level,
        "drop_below": 1 if drop is None else level - drop,
        "window_cycles": 64 * ell if window is None else window,
        "sampling": "cycle start (red-first)",
    }
    return SojournEstimate(float(arr.mean()), float(se), arr.size, visits, level, rule)


def estimate_sojourn(
    config: SimConfig,
    level: int | None = None,
    drop: int | None = None,
    window: int | None = None,
) -> SojournEstimate:
    """Mean visits to a high ``level`` per clump of the cycle-sampled chain.

    Defaults: ``level = 2 ell + 1``; a clump ends when the queue empties or
    after ``64 ell`` cycles without a return.
    """
    params = config.params

    def one(r: int):
        chain = _cycle_chain(simulate_path(params, config.n, config.seed, r), params.ell, Order.RED_FIRST)
        return _clump_stats(chain, params.ell, level, drop, window)

    return _pool_clumps(_map_replicates(one, config.replicates), params.ell, level, drop, window)
