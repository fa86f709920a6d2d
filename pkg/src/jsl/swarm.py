"""Event-driven simulation of N interacting right-jumping particles.

Particle i jumps at rate

    rate_i = base_rate / (N - 1) * sum_{j != i, x_j > x_i} g(x_j - xbar),   g(u) = cosh(u)^(-n),

with xbar the empirical barycenter, and each jump is Exp(lam).

Two exact samplers are provided.

``direct``
    Gillespie's direct method on the full rate vector, maintained by
    :class:`RateIndex` (sorted index, O(N) per event). Particles are chosen by
    rank, so the empirical-measure trajectory does not depend on labels.
``thinning``
    The total rate is a sum over ordered pairs (i behind j) of g(x_j - xbar)/(N-1).
    Pairs are proposed uniformly at the bounded rate base_rate * N * gmax / 2 and
    accepted with probability g / gmax, where gmax = 1 for n >= 0 and
    cosh(D)^|n| for n < 0 with D bounding |x - xbar| on the current state.
    This costs O(1) per proposal and runs in the compiled kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from jsl import kernels
from jsl.linear_jump import InitialDensity
from jsl.params import ModelParams
from jsl.special import logcosh

T_NEXT, SUM, HI, LO, ACCEPTED, PROPOSALS = range(kernels.STATE_SIZE)
BUFFER_PROPOSALS = 1 << 15
REBUILD_EVERY = 10_000
INCREMENTAL_TOL = 1e-9
COLD_JITTER = 1e-6


class FrozenSwarm(RuntimeError):
    """No particle has a positive rate (e.g. N = 1 or all positions tied)."""


class RateOverflowError(OverflowError):
    pass


@dataclass
class EventRecord:
    dt: float
    index: int
    jump: float


class Swarm:
    """Particle positions, clock and random state.

    The running position sum is kept in ``state`` together with the thinning
    bookkeeping (pending proposal time, running max, frozen lower bound on the
    minimum, counters); positions only ever increase, so the stored minimum
    remains a valid lower bound.
    """

    def __init__(self, positions, params: ModelParams, rng: np.random.Generator | int = 42, t: float = 0.0):
        x = np.array(positions, dtype=float).ravel()
        if x.size < 1:
            raise ValueError("a swarm needs at least one particle")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        self.positions = x
        self.params = params
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.t = float(t)
        self.state = np.zeros(kernels.STATE_SIZE)
        self.state[T_NEXT] = math.nan
        self.state[SUM] = math.fsum(x)
        self.state[HI] = x.max()
        self.state[LO] = x.min()
        self._buffer = np.empty(0)
        self._cursor = 0

    @classmethod
    def from_initial(cls, size: int, params: ModelParams, seed: int = 42,
                     init: InitialDensity | str = "gaussian") -> "Swarm":
        """N i.i.d. positions from ``init`` (an InitialDensity, "gaussian" = N(0,1), or "cold")."""
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        if init == "gaussian":
            init = InitialDensity.gaussian(0.0, 1.0)
        if init == "cold":
            x = rng.uniform(0.0, COLD_JITTER, size)
        elif isinstance(init, InitialDensity):
            x = sample_initial(init, size, rng)
        else:
            raise ValueError(f"unknown initial condition {init!r}")
        return cls(x, params, rng)

    @property
    def size(self) -> int:
        return self.positions.size

    @property
    def event_count(self) -> int:
        return int(self.state[ACCEPTED])

    @property
    def proposals(self) -> int:
        return int(self.state[PROPOSALS])

    @property
    def barycenter(self) -> float:
        return float(self.state[SUM] / self.size)

    def variance(self) -> float:
        return float(np.var(self.positions))

    def comoving(self) -> np.ndarray:
        return self.positions - self.barycenter

    def _moved(self, i: int, jump: float):
        self.state[SUM] += jump
        if self.positions[i] > self.state[HI]:
            self.state[HI] = self.positions[i]
        self.state[ACCEPTED] += 1
        # a pending thinning proposal was drawn for the old state
        self.state[T_NEXT] = math.nan


def sample_initial(init: InitialDensity, size: int, rng: np.random.Generator) -> np.ndarray:
    if init.kind == "delta":
        return np.full(size, init.params[0]) + rng.uniform(0.0, COLD_JITTER, size)
    if init.kind == "uniform":
        return rng.uniform(*init.params, size)
    if init.kind == "gaussian":
        return rng.normal(*init.params, size)
    if init.kind == "table":
        xs, vs = (np.asarray(p) for p in init.params)
        cells = 0.5 * (vs[1:] + vs[:-1]) * np.diff(xs)
        k = rng.choice(cells.size, size=size, p=cells / cells.sum())
        return xs[k] + rng.uniform(0.0, 1.0, size) * np.diff(xs)[k]
    raise ValueError(f"unknown initial density kind {init.kind!r}")


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def _g(u, n):
    if n == 0.0:
        return np.ones_like(u)
    with np.errstate(over="ignore"):
        out = np.exp(-n * logcosh(u))
    if not np.all(np.isfinite(out)):
        raise RateOverflowError(f"g = cosh^(-{n}) overflowed for the current positions")
    return out


def _right_edges(xs):
    """For sorted xs, index one past the last entry equal to xs[k]."""
    ends = np.flatnonzero(np.r_[xs[1:] != xs[:-1], True]) + 1
    starts = np.r_[True, xs[1:] != xs[:-1]]
    return ends[np.cumsum(starts) - 1]


def _sorted_rates(xs, xbar, params: ModelParams, count: int):
    g = _g(xs - xbar, params.n)
    suffix = np.zeros(count + 1)
    suffix[:-1] = np.cumsum(g[::-1])[::-1]
    return params.base_rate * suffix[_right_edges(xs)] / (count - 1)


def particle_rates(swarm: Swarm) -> np.ndarray:
    """Full O(N log N) rate computation from a fresh sort."""
    count = swarm.size
    if count == 1:
        return np.zeros(1)
    order = np.argsort(swarm.positions, kind="stable")
    out = np.empty(count)
    out[order] = _sorted_rates(swarm.positions[order], swarm.barycenter, swarm.params, count)
    return out


def naive_particle_rates(positions, params: ModelParams) -> np.ndarray:
    """O(N^2) pairwise reference."""
    x = np.asarray(positions, dtype=float)
    count = x.size
    if count == 1:
        return np.zeros(1)
    g = _g(x - x.mean(), params.n)
    out = np.empty(count)
    for lo in range(0, count, 512):
        block = x[lo:lo + 512, None]
        ahead = x[None, :] > block
        out[lo:lo + 512] = (ahead * g[None, :]).sum(axis=1)
    return params.base_rate * out / (count - 1)


class RateIndex:
    """Rates kept in sorted order and updated after each single-particle move.

    One move costs O(N): the particle is re-inserted into the sorted arrays and
    the suffix sums (which also absorb the barycenter shift) are recomputed. A
    full rebuild from a fresh sort happens every ``rebuild_every`` updates, and
    earlier if the maintained rates drift from the rebuilt ones by more than
    ``INCREMENTAL_TOL``.
    """

    def __init__(self, swarm: Swarm, rebuild_every: int = REBUILD_EVERY):
        self.swarm = swarm
        self.rebuild_every = rebuild_every
        self.max_rebuild_error = 0.0
        self.rebuilds = 0
        self.rebuild()

    def rebuild(self):
        sw = self.swarm
        self.order = np.argsort(sw.positions, kind="stable")
        self.xs = sw.positions[self.order]
        self._refresh()
        self.since_rebuild = 0
        self.rebuilds += 1

    def _refresh(self):
        sw = self.swarm
        if sw.size == 1:
            self.sorted_rates = np.zeros(1)
        else:
            self.sorted_rates = _sorted_rates(self.xs, sw.barycenter, sw.params, sw.size)
        self.cumulative = np.cumsum(self.sorted_rates)

    def update(self, moved: int):
        """Account for particle ``moved`` having jumped since the last update."""
        sw = self.swarm
        slot = int(np.flatnonzero(self.order == moved)[0])
        order = np.delete(self.order, slot)
        xs = np.delete(self.xs, slot)
        new_x = sw.positions[moved]
        ins = int(np.searchsorted(xs, new_x, side="right"))
        self.order = np.insert(order, ins, moved)
        self.xs = np.insert(xs, ins, new_x)
        self._refresh()
        self.since_rebuild += 1
        if self.since_rebuild >= self.rebuild_every:
            self.checked_rebuild()

    def checked_rebuild(self) -> float:
        maintained = self.rates()
        self.rebuild()
        err = relative_difference(maintained, self.rates())
        self.max_rebuild_error = max(self.max_rebuild_error, err)
        return err

    def rates(self) -> np.ndarray:
        out = np.empty(self.swarm.size)
        out[self.order] = self.sorted_rates
        return out

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    def select(self, target: float) -> int:
        """Particle whose cumulative rank-ordered rate interval contains ``target``."""
        k = int(np.searchsorted(self.cumulative, target, side="right"))
        k = min(k, self.cumulative.size - 1)
        while self.sorted_rates[k] <= 0.0 and k > 0:
            k -= 1
        return int(self.order[k])


def relative_difference(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.maximum(np.abs(b), 1e-300)
    diff = np.abs(a - b)
    mask = diff > 0
    return float(np.max(diff[mask] / scale[mask])) if mask.any() else 0.0


def rebuild_rates_incremental(index: RateIndex, moved: int) -> np.ndarray:
    index.update(moved)
    return index.rates()


def gillespie_step(swarm: Swarm, index: RateIndex | None = None) -> EventRecord:
    """One direct-method event: Exp(R) waiting time, mover chosen with probability rate_i / R."""
    if index is None:
        rates = particle_rates(swarm)
        order = np.argsort(swarm.positions, kind="stable")
        ranked = rates[order]
        cumulative = np.cumsum(ranked)
        total = float(cumulative[-1]) if swarm.size > 1 else 0.0
    else:
        total = index.total if swarm.size > 1 else 0.0
    if not total > 0:
        raise FrozenSwarm("total rate is zero")
    rng = swarm.rng
    dt = rng.exponential(1.0 / total)
    target = rng.random() * total
    if index is None:
        k = min(int(np.searchsorted(cumulative, target, side="right")), swarm.size - 1)
        while ranked[k] <= 0.0 and k > 0:
            k -= 1
        i = int(order[k])
    else:
        i = index.select(target)
    jump = rng.exponential(1.0 / swarm.params.lam)
    swarm.positions[i] += jump
    swarm.t += dt
    swarm._moved(i, jump)
    if index is not None:
        index.update(i)
    return EventRecord(dt=dt, index=i, jump=jump)


# ---------------------------------------------------------------------------
# trajectory driver
# ---------------------------------------------------------------------------

@dataclass
class Histogram:
    t: float
    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


@dataclass
class SwarmTrajectory:
    times: np.ndarray
    barycenters: np.ndarray
    variances: np.ndarray
    mean_rates: np.ndarray
    histograms: list = field(default_factory=list)
    comoving_samples: dict = field(default_factory=dict)
    status: str = "completed"
    events: int = 0
    proposals: int = 0
    method: str = "thinning"
    backend: str = kernels.BACKEND

    def window(self, t_lo: float, t_hi: float = math.inf):
        sel = (self.times >= t_lo) & (self.times <= t_hi)
        return self.times[sel], self.barycenters[sel], self.mean_rates[sel]


def _bound_rate(swarm: Swarm) -> float:
    n = swarm.params.n
    st = swarm.state
    xbar = st[SUM] / swarm.size
    gmax_log = 0.0 if n >= 0 else -n * float(logcosh(max(st[HI] - xbar, xbar - st[LO])))
    return swarm.params.base_rate * swarm.size * math.exp(gmax_log) * 0.5


def advance_thinning(swarm: Swarm, t_stop: float, backend=None) -> None:
    """Advance the swarm to ``t_stop`` with the thinned pair sampler."""
    impl = backend or kernels
    uses = kernels.UNIFORMS_PER_PROPOSAL
    if math.isnan(swarm.state[T_NEXT]):
        swarm.state[T_NEXT] = swarm.t - math.log1p(-swarm.rng.random()) / _bound_rate(swarm)
    p = swarm.params
    while True:
        if swarm._cursor + uses > swarm._buffer.size:
            swarm._buffer = swarm.rng.random(uses * BUFFER_PROPOSALS)
            swarm._cursor = 0
        swarm._cursor, status = impl.swarm_advance(
            swarm.positions, swarm.state, swarm._buffer, swarm._cursor, t_stop, p.n, p.lam, p.base_rate
        )
        if status == 0:
            break
    swarm.t = t_stop


def advance_direct(swarm: Swarm, t_stop: float, index: RateIndex) -> None:
    """Direct-method events until the next event would pass ``t_stop``.

    The overshooting event is discarded; by memorylessness this is exact.
    """
    while True:
        total = index.total
        if not total > 0:
            raise FrozenSwarm("total rate is zero")
        dt = swarm.rng.exponential(1.0 / total)
        u = swarm.rng.random()
        jump = swarm.rng.exponential(1.0 / swarm.params.lam)
        if swarm.t + dt > t_stop:
            break
        i = index.select(u * total)
        swarm.positions[i] += jump
        swarm.t += dt
        swarm._moved(i, jump)
        index.update(i)
    swarm.t = t_stop


def run(swarm: Swarm, t_end: float, record_every: float = 1.0, snapshot_times=(),
        bins: np.ndarray | None = None, method: str = "thinning", backend=None,
        keep_samples: bool = False) -> SwarmTrajectory:
    """Simulate to ``t_end`` recording barycenter, variance and mean rate every ``record_every``.

    Comoving histograms (x - xbar) are taken at each of ``snapshot_times``.
    """
    if method not in ("thinning", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if bins is None:
        bins = np.linspace(-10.0, 10.0, 201)
    stops = sorted(set(np.round(np.arange(swarm.t + record_every, t_end + 1e-9 * record_every,
                                          record_every), 12).tolist()) | {float(t_end)}
                   | {float(s) for s in snapshot_times if swarm.t < s <= t_end})
    snaps = {round(float(s), 12) for s in snapshot_times}

    times, bary, var, rate = [], [], [], []
    hists, samples = [], {}

    def record():
        times.append(swarm.t)
        bary.append(swarm.barycenter)
        var.append(swarm.variance())
        rate.append(float(particle_rates(swarm).mean()))
        if round(swarm.t, 12) in snaps:
            c = swarm.comoving()
            dens, edges = np.histogram(c, bins=bins)
            hists.append(Histogram(swarm.t, edges, dens / (c.size * np.diff(edges))))
            if keep_samples:
                samples[swarm.t] = c

    record()
    status = "completed"
    index = RateIndex(swarm) if method == "direct" else None
    if swarm.size == 1 or (index.total if index else particle_rates(swarm).sum()) <= 0:
        status = "frozen"
    else:
        for stop in stops:
            try:
                if method == "thinning":
                    advance_thinning(swarm, stop, backend)
                else:
                    advance_direct(swarm, stop, index)
            except FrozenSwarm:
                status = "frozen"
                break
            record()
    return SwarmTrajectory(
        times=np.array(times), barycenters=np.array(bary), variances=np.array(var),
        mean_rates=np.array(rate), histograms=hists, comoving_samples=samples, status=status,
        events=swarm.event_count, proposals=swarm.proposals, method=method,
        backend=(getattr(backend, "__name__", str(backend)) if backend else kernels.BACKEND),
    )
