"""Monte Carlo of the isolated right-jump process and comparison with its closed form.

Paths are sampled exactly: exponential inter-arrival times at ``base_rate`` and
independent Exp(lam) jump lengths. Ensembles are split into fixed-size blocks;
block ``k`` draws from ``SeedSequence(seed, spawn_key=(k,))`` so any block can be
regenerated (or computed on another worker) without the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from jsl.closed_form import linear_density
from jsl.params import ModelParams

DEFAULT_BLOCK = 4096
GL_ORDER = 16
MAX_PANELS = 4000
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class PathSample:
    position: float
    jump_count: int
    t: float


def sample_path(t_end: float, params: ModelParams, rng: np.random.Generator) -> PathSample:
    """Simulate one path event by event on [0, t_end]."""
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    clock = 0.0
    position = 0.0
    count = 0
    while True:
        clock += rng.exponential(1.0 / params.base_rate)
        if clock > t_end:
            break
        position += rng.exponential(1.0 / params.lam)
        count += 1
    return PathSample(position=position, jump_count=count, t=t_end)


@dataclass
class PathEnsemble:
    positions: np.ndarray
    jump_counts: np.ndarray
    t: float
    seed: int
    params: ModelParams = field(default_factory=ModelParams)

    def __len__(self):
        return self.positions.size

    def samples(self) -> Iterable[PathSample]:
        for x, k in zip(self.positions, self.jump_counts):
            yield PathSample(position=float(x), jump_count=int(k), t=self.t)

    @property
    def atom_fraction(self) -> float:
        return float(np.mean(self.positions == 0.0))

    def rows(self):
        """(replicate, t, position, jump_count) rows for CSV export."""
        for r, (x, k) in enumerate(zip(self.positions, self.jump_counts)):
            yield r, self.t, float(x), int(k)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def simulate_block(size: int, t_end: float, params: ModelParams, rng: np.random.Generator):
    """Event-driven simulation of ``size`` independent paths, vectorized across paths."""
    clock = np.zeros(size)
    pos = np.zeros(size)
    count = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    while active.size:
        clock[active] += rng.exponential(1.0 / params.base_rate, size=active.size)
        hit = active[clock[active] <= t_end]
        pos[hit] += rng.exponential(1.0 / params.lam, size=hit.size)
        count[hit] += 1
        active = hit
    return pos, count


def simulate_ensemble(n_paths: int, t_end: float, params: ModelParams, seed: int = 42,
                      block_size: int = DEFAULT_BLOCK) -> PathEnsemble:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    positions = np.empty(n_paths)
    counts = np.empty(n_paths, dtype=np.int64)
    for k, start in enumerate(range(0, n_paths, block_size)):
        size = min(block_size, n_paths - start)
        pos, cnt = simulate_block(size, t_end, params, block_rng(seed, k))
        positions[start:start + size] = pos
        counts[start:start + size] = cnt
    return PathEnsemble(positions=positions, jump_counts=counts, t=t_end, seed=seed, params=params)


class EmpiricalMixedCDF:
    """Step CDF of nonnegative samples with an explicit atom at 0."""

    def __init__(self, positions):
        x = np.sort(np.asarray(positions, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        if np.any(x < 0):
            raise ValueError("samples must be nonnegative")
        self.sorted = x
        self.size = x.size
        self.atom = float(np.count_nonzero(x == 0.0)) / x.size

    def __call__(self, x):
        return np.searchsorted(self.sorted, x, side="right") / self.size

    def left(self, x):
        """Left limit F(x-)."""
        return np.searchsorted(self.sorted, x, side="left") / self.size

    def jump_points(self) -> np.ndarray:
        return np.unique(self.sorted[self.sorted > 0])


def empirical_mixed_cdf(samples) -> EmpiricalMixedCDF:
    if isinstance(samples, PathEnsemble):
        return EmpiricalMixedCDF(samples.positions)
    samples = list(samples) if not isinstance(samples, np.ndarray) else samples
    if len(samples) and isinstance(samples[0], PathSample):
        return EmpiricalMixedCDF([s.position for s in samples])
    return EmpiricalMixedCDF(samples)


def ks_distance(empirical: EmpiricalMixedCDF, exact: Callable, exact_left: Callable | None = None) -> float:
    """Sup-distance between an empirical mixed CDF and an exact mixed CDF on [0, inf).

    ``exact`` must be right-continuous with exact(0) equal to its atom. Both
    one-sided limits are compared at every sample point; ``exact_left`` supplies
    the exact left limits when the exact CDF itself jumps on (0, inf).
    """
    d0 = abs(float(exact(0.0)) - float(empirical(0.0)))
    pts = empirical.jump_points()
    if pts.size == 0:
        # all mass at 0: the empirical CDF is 1 on [0, inf)
        return max(d0, 1.0 - float(exact(0.0)))
    f_right = np.asarray(exact(pts), dtype=float)
    f_left = f_right if exact_left is None else np.asarray(exact_left(pts), dtype=float)
    d_right = np.max(np.abs(f_right - empirical(pts)))
    d_left = np.max(np.abs(f_left - empirical.left(pts)))
    return float(max(d0, d_right, d_left))


# ---------------------------------------------------------------------------
# general initial density via convolution with the delta-start law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialDensity:
    kind: str
    params: tuple

    @classmethod
    def delta_at(cls, a: float = 0.0):
        return cls("delta", (float(a),))

    @classmethod
    def uniform(cls, a: float, b: float):
        if not b > a:
            raise ValueError("uniform(a, b) needs b > a")
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def gaussian(cls, mu: float, sigma: float):
        if not sigma > 0:
            raise ValueError("gaussian sigma must be > 0")
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def table(cls, x, values):
        x = np.asarray(x, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("table needs increasing x and matching values")
        if np.any(v < 0):
            raise ValueError("table density must be nonnegative")
        mass = _trapezoid(v, x)
        if not mass > 0:
            raise ValueError("table density has no mass")
        return cls("table", (tuple(x), tuple(v / mass)))

    def support(self) -> tuple[float, float]:
        if self.kind == "delta":
            return self.params[0], self.params[0]
        if self.kind == "uniform":
            return self.params
        if self.kind == "gaussian":
            mu, sigma = self.params
            return mu - 12.0 * sigma, mu + 12.0 * sigma
        if self.kind == "table":
            return self.params[0][0], self.params[0][-1]
        raise ValueError(f"unknown initial density kind {self.kind!r}")

    def scale(self) -> float:
        """Length over which the density varies smoothly."""
        if self.kind == "uniform":
            return self.params[1] - self.params[0]
        if self.kind == "gaussian":
            return self.params[1]
        if self.kind == "table":
            return float(np.min(np.diff(self.params[0])))
        return math.inf

    def breakpoints(self) -> list[float]:
        if self.kind == "table":
            return list(self.params[0])
        return list(self.support())

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "uniform":
            a, b = self.params
            return np.where((y >= a) & (y <= b), 1.0 / (b - a), 0.0)
        if self.kind == "gaussian":
            mu, sigma = self.params
            return np.exp(-0.5 * ((y - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
        if self.kind == "table":
            xs, vs = self.params
            return np.interp(y, xs, vs, left=0.0, right=0.0)
        raise ValueError(f"pdf undefined for kind {self.kind!r}")


def general_init_density(f: InitialDensity, x, t: float, params: ModelParams):
    """Law at time t when the initial density is ``f``.

    Returns ``(atom_weight, density)``. For ``delta_at(a)`` the atom e^{-t} sits at
    x = a and ``density`` is the delta-start continuous part translated by a;
    otherwise ``atom_weight`` is 0 and ``density`` contains e^{-t} f(x) plus the
    convolution of the continuous kernel with f.
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    tau = params.base_rate * t
    lam = params.lam
    xa = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xa).ravel()
    if f.kind == "delta":
        a = f.params[0]
        u = flat - a
        out = np.zeros_like(flat)
        ok = u >= 0
        if ok.any():
            out[ok] = linear_density(u[ok], tau, lam)[1]
        out = out.reshape(xa.shape)
        return math.exp(-tau), (out if out.ndim else float(out))

    lo, hi = f.support()
    scale = f.scale()
    out = np.empty_like(flat)
    for i, xi in enumerate(flat):
        out[i] = math.exp(-tau) * float(f.pdf(xi)) + _convolve(f, xi, tau, lam, lo, hi, scale)
    out = out.reshape(xa.shape)
    return 0.0, (out if out.ndim else float(out))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


def _convolve(f, xi, tau, lam, lo, hi, scale):
    # integral over u = xi - y >= 0 of kernel(u) f(xi - u); the kernel is smooth on u > 0,
    # so composite Gauss-Legendre panels with edges at the breakpoints of f converge fast
    u_lo, u_hi = max(0.0, xi - hi), xi - lo
    if not u_hi > u_lo:
        return 0.0
    edges = sorted({u_lo, u_hi} | {xi - p for p in f.breakpoints() if u_lo < xi - p < u_hi})
    width = 0.5 * min(1.0 / lam, scale, math.sqrt(tau) / lam + 1.0 / lam)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        k = min(MAX_PANELS, max(1, int(math.ceil((b - a) / width))))
        cuts = np.linspace(a, b, k + 1)
        half = 0.5 * np.diff(cuts)[:, None]
        mid = 0.5 * (cuts[1:] + cuts[:-1])[:, None]
        nodes.append((mid + half * _GL_NODES).ravel())
        weights.append((half * _GL_WEIGHTS).ravel())
    u = np.concatenate(nodes)
    w = np.concatenate(weights)
    return float(np.dot(w, linear_density(u, tau, lam)[1] * f.pdf(xi - u)))
