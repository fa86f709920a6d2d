"""Closed-form results for the linear jump process and the sech^m traveling profile."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import betainc

from jsl.special import gamma_ratio_half, log_bessel_i1, logcosh

SQRT_PI = math.sqrt(math.pi)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _check_positive(value, name):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


# ---------------------------------------------------------------------------
# soliton profile
# ---------------------------------------------------------------------------

def soliton_normalization(m: float) -> float:
    """C_m such that C_m * cosh(xi)**(-m) has unit mass."""
    return gamma_ratio_half(m) / SQRT_PI


def soliton_density(xi, m: float):
    """C_m cosh^{-m}(xi), evaluated in log space."""
    c = soliton_normalization(m)
    out = np.exp(math.log(c) - m * np.asarray(logcosh(xi)))
    return out if np.ndim(out) else float(out)


def soliton_cdf(xi, m: float):
    """Cumulative distribution of the sech^m profile.

    Uses int_xi^inf cosh^{-m} = B(m/2, 1/2) I_{sech^2 xi}(m/2, 1/2) / 2 for xi >= 0.
    """
    _check_positive(m, "m")
    xa = np.asarray(xi, dtype=float)
    w = np.exp(-2.0 * np.asarray(logcosh(xa)))
    tail = 0.5 * betainc(0.5 * m, 0.5, w)
    out = np.where(xa >= 0, 1.0 - tail, tail)
    return out if out.ndim else float(out)


def soliton_velocity(m: float) -> tuple[float, float]:
    """Return ``(v_derived, v_paper)`` for the profile exponent ``m``.

    ``v_paper`` is the printed constant C_m. ``v_derived = C_m / m`` is the value
    that makes the once-integrated traveling-wave relation V (L' + lam) = Omega
    hold with lam = m; it coincides with the barycenter drift (1/lam) int Omega p.
    """
    c = soliton_normalization(m)
    return c / m, c


def soliton_omega(xi, m: float):
    """Rate field ahead of xi on the soliton line: C_m (1 - tanh xi)."""
    c = soliton_normalization(m)
    out = c * (1.0 - np.tanh(np.asarray(xi, dtype=float)))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SolitonProfile:
    m: float
    c_m: float
    v_derived: float
    v_paper: float

    def density(self, xi):
        return soliton_density(xi, self.m)

    def cdf(self, xi):
        return soliton_cdf(xi, self.m)

    def omega(self, xi):
        return soliton_omega(xi, self.m)

    def to_dict(self) -> dict:
        return {"m": self.m, "c_m": self.c_m, "v_derived": self.v_derived, "v_paper": self.v_paper}


def soliton_profile(m: float) -> SolitonProfile:
    v_derived, v_paper = soliton_velocity(m)
    return SolitonProfile(m=float(m), c_m=soliton_normalization(m), v_derived=v_derived, v_paper=v_paper)


# ---------------------------------------------------------------------------
# linear process with Exp(lam) jumps, unit event rate, delta initial condition
# ---------------------------------------------------------------------------

def _continuous_part(x, t, lam):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x > 0
    xp = x[pos]
    z = 2.0 * np.sqrt(lam * xp * t)
    log_val = -t - lam * xp + 0.5 * np.log(lam * t / xp) + log_bessel_i1(z)
    out[pos] = np.exp(log_val)
    out[~pos] = math.exp(-t) * lam * t
    return out


def linear_density(x, t: float, lam: float):
    """Mixed law of the linear process started at 0.

    Returns ``(atom_weight, continuous)`` with the point mass e^{-t} at x = 0 kept
    separate from the density e^{-t} e^{-lam x} sqrt(lam t / x) I1(2 sqrt(lam x t)).
    At x = 0 the continuous part takes its right limit e^{-t} lam t.
    """
    _check_positive(t, "t")
    _check_positive(lam, "lam")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("linear_density is supported on x >= 0")
    cont = _continuous_part(np.atleast_1d(xa), t, lam).reshape(xa.shape)
    return math.exp(-t), (cont if cont.ndim else float(cont))


def jump_series(x, t: float, lam: float, terms: int = 200):
    """Truncated sum_{k>=1} (lam t)^k x^{k-1} / (k! (k-1)!) (the Bessel series)."""
    x = np.asarray(x, dtype=float)
    a = lam * t
    term = np.full_like(x, a)  # k = 1
    total = term.copy()
    for k in range(2, terms + 1):
        term = term * a * x / (k * (k - 1.0))
        total = total + term
    return total


def linear_laplace(s, t: float, lam: float):
    """Laplace transform exp(-t + t lam / (lam + s)) of the mixed law."""
    _check_positive(t, "t")
    _check_positive(lam, "lam")
    sa = np.asarray(s, dtype=float)
    if np.any(sa < 0):
        raise ValueError("linear_laplace requires s >= 0")
    out = np.exp(-t + t * lam / (lam + sa))
    return out if out.ndim else float(out)


def linear_asymptotic(x, t: float, lam: float):
    """Large-time diffusive wave (lam t)^{1/4} / (2 sqrt(pi) x^{3/4}) exp(-(sqrt(lam x) - sqrt t)^2)."""
    _check_positive(t, "t")
    _check_positive(lam, "lam")
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("linear_asymptotic requires x > 0")
    out = (lam * t) ** 0.25 / (2.0 * SQRT_PI * xa ** 0.75) * np.exp(-(np.sqrt(lam * xa) - math.sqrt(t)) ** 2)
    return out if out.ndim else float(out)


class LinearClosedForm:
    """Mixed law at fixed (lam, t): atom ``atom_weight`` at 0 plus a density on (0, inf).

    The CDF integrates the density with 10-point Gauss-Legendre panels whose
    width follows the smaller of the jump scale 1/lam and the spread sqrt(2t)/lam.
    """

    def __init__(self, lam: float, t: float):
        _check_positive(t, "t")
        _check_positive(lam, "lam")
        self.lam = float(lam)
        self.t = float(t)
        self.atom_weight = math.exp(-t)

    @property
    def mean(self) -> float:
        return self.t / self.lam

    @property
    def variance(self) -> float:
        return 2.0 * self.t / self.lam ** 2

    def continuous(self, x):
        return linear_density(x, self.t, self.lam)[1]

    @cached_property
    def _panels(self):
        sd = math.sqrt(self.variance)
        h = min(1.0 / self.lam, sd) / 8.0
        x_max = self.mean + 40.0 * sd + 40.0 / self.lam
        edges = np.arange(0.0, x_max + h, h)
        cum = np.concatenate([[0.0], np.cumsum(self._gl(edges[:-1], edges[1:]))])
        return edges, cum

    def _gl(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = _continuous_part(nodes.ravel(), self.t, self.lam).reshape(nodes.shape)
        return half * (vals @ _GL_WEIGHTS)

    def continuous_mass(self) -> float:
        return float(self._panels[1][-1])

    def cdf(self, x):
        """Right-continuous mixed CDF; equals ``atom_weight`` at x = 0."""
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa).ravel()
        edges, cum = self._panels
        out = np.zeros_like(flat)
        pos = flat > 0
        out[flat == 0] = self.atom_weight
        if pos.any():
            xp = np.minimum(flat[pos], edges[-1])
            j = np.clip(np.searchsorted(edges, xp, side="right") - 1, 0, len(edges) - 2)
            out[pos] = self.atom_weight + cum[j] + self._gl(edges[j], xp)
        out = np.minimum(out, 1.0).reshape(xa.shape)
        return out if out.ndim else float(out)

    __call__ = cdf
