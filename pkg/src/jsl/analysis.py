"""Verification layer: traveling-wave residuals, profile and velocity fits, phase scan."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, field

import numpy as np

from jsl.closed_form import soliton_density, soliton_normalization, soliton_velocity
from jsl.mean_field import DensityGrid, barycenter, compute_omega, evolve, gaussian_grid
from jsl.params import ModelParams
from jsl.special import logcosh

CONDITION_LIMIT = 1e8
WINDOW_FRACTION = 1e-3


class FitError(ValueError):
    pass


class IllConditionedFit(FitError):
    pass


class InsufficientData(FitError):
    pass


@dataclass
class FitReport:
    m_hat: float = math.nan
    c_hat: float = math.nan
    rmse: float = math.nan
    v_hat: float = math.nan
    v_se: float = math.nan
    window: tuple = (math.nan, math.nan)
    points: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _xy(data):
    if isinstance(data, DensityGrid):
        return data.x, data.values
    if hasattr(data, "centers") and hasattr(data, "density"):
        return data.centers, data.density
    x, p = data
    return np.asarray(x, dtype=float), np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# traveling-wave residual and symmetry
# ---------------------------------------------------------------------------

def stationary_residual(profile: DensityGrid, V: float, params: ModelParams) -> float:
    """L2 norm over the interior of V (p'' + lam p') - (Omega p)'.

    Central differences for p' and p''; the right side uses the product rule
    with Omega from :func:`compute_omega` and Omega' = -g(x - xbar) p.
    """
    p = profile.values
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("degenerate profile: values must be finite and nonnegative")
    if p.size < 3:
        raise ValueError("degenerate profile: need at least 3 nodes")
    if not np.any(p > 0):
        return 0.0
    dx = profile.dx
    mean = barycenter(profile)
    om = params.base_rate * compute_omega(profile, params.n, mean).values
    g = np.exp(-params.n * logcosh(profile.x - mean))
    d1 = (p[2:] - p[:-2]) / (2.0 * dx)
    d2 = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dx ** 2
    inner = p[1:-1]
    lhs = V * (d2 + params.lam * d1)
    rhs = om[1:-1] * d1 - params.base_rate * g[1:-1] * inner * inner
    return float(math.sqrt(dx * np.sum((lhs - rhs) ** 2)))


def residual_table(m: float, dxs=(0.04, 0.02, 0.01), V: float | None = None, half_width: float = 25.0):
    """Residual of the sampled exact profile at each grid spacing (V defaults to C_m / m)."""
    params = ModelParams.from_m(m)
    if V is None:
        V = soliton_velocity(m)[0]
    rows = []
    for dx in dxs:
        grid = DensityGrid.from_function(lambda x: soliton_density(x, m), -half_width, half_width, dx,
                                         normalize=False)
        rows.append({"m": m, "dx": dx, "V": V, "residual": stationary_residual(grid, V, params)})
    return rows


def symmetry_defect(profile: DensityGrid) -> float:
    """|first moment| in the barycentric frame."""
    x, p = _xy(profile)
    dx = profile.dx if isinstance(profile, DensityGrid) else float(np.mean(np.diff(x)))
    mass = dx * p.sum()
    xbar = dx * np.dot(x, p) / mass
    return float(abs(dx * np.dot(x - xbar, p)))


def skewness(profile) -> float:
    """Standardized third central moment; the asymmetry diagnostic reported beside the defect."""
    x, p = _xy(profile)
    w = p / p.sum()
    mu = np.dot(w, x)
    var = np.dot(w, (x - mu) ** 2)
    return float(np.dot(w, (x - mu) ** 3) / var ** 1.5)


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

def fit_soliton(data, window: tuple | None = None) -> FitReport:
    """Least squares of log p on (1, -logcosh(x - x0)), x0 the barycenter.

    ``window`` defaults to the region where p exceeds 1e-3 of its peak.
    """
    x, p = _xy(data)
    w = p / p.sum()
    x0 = float(np.dot(w, x))
    if window is None:
        sel = p > WINDOW_FRACTION * p.max()
    else:
        sel = (x >= window[0]) & (x <= window[1])
        if np.any(p[sel] <= 0):
            raise FitError("density must be positive on the fit window")
    xs, ys = x[sel], np.log(p[sel])
    if xs.size < 3:
        raise InsufficientData("fewer than 3 points in the fit window")
    design = np.column_stack([np.ones_like(xs), -logcosh(xs - x0)])
    cond = np.linalg.cond(design)
    if not cond < CONDITION_LIMIT:
        raise IllConditionedFit(f"fit window too narrow (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    return FitReport(
        m_hat=float(coef[1]), c_hat=float(math.exp(coef[0])),
        rmse=float(math.sqrt(np.mean(resid ** 2))),
        window=(float(xs[0]), float(xs[-1])), points=int(xs.size),
    )


def velocity_fit(times, barycenters, window: tuple | None = None) -> FitReport:
    """OLS slope of barycenter against time, with its standard error."""
    t = np.asarray(times, dtype=float)
    b = np.asarray(barycenters, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, b = t[sel], b[sel]
    if t.size < 10:
        raise InsufficientData(f"velocity fit needs >= 10 points, got {t.size}")
    tc = t - t.mean()
    sxx = float(np.dot(tc, tc))
    slope = float(np.dot(tc, b - b.mean()) / sxx)
    resid = b - b.mean() - slope * tc
    dof = t.size - 2
    se = math.sqrt(float(np.dot(resid, resid)) / dof / sxx) if dof > 0 else math.nan
    return FitReport(v_hat=slope, v_se=se, rmse=float(math.sqrt(np.mean(resid ** 2))),
                     window=(float(t[0]), float(t[-1])), points=int(t.size))


def variance_growth_rate(times, variances, window: tuple) -> float:
    t = np.asarray(times)
    v = np.asarray(variances)
    sel = (t >= window[0]) & (t <= window[1])
    return float(np.polyfit(t[sel], v[sel], 1)[0])


# ---------------------------------------------------------------------------
# phase scan
# ---------------------------------------------------------------------------

@dataclass
class ScanSettings:
    t_end: float = 60.0
    sigma: float = 1.0
    dx: float = 0.05
    half_width: float = 40.0
    dt: float | None = None
    early: float = 10.0
    late: float = 50.0
    fit_tol: float = 0.1


@dataclass
class PhaseRow:
    n: float
    lam: float
    on_soliton_line: bool
    growth_rate: float
    var_early: float
    var_late: float
    variance_ratio: float
    dispersive: bool
    velocity: float
    v_derived: float
    m_expected: float
    m_hat: float
    fit_rmse: float
    fit_ok: bool
    mass_drift: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


def scan_lambda(n: float, off_line_lambda: float = 0.5) -> float:
    """lam on the soliton line for n < 2, a fixed value beyond it."""
    return 2.0 - n if n < 2 else off_line_lambda


def _variance_at(times, variances, t):
    return float(np.interp(t, times, variances))


def scan_point(n: float, lam: float, settings: ScanSettings = ScanSettings()) -> PhaseRow:
    params = ModelParams(lam=lam, n=n)
    grid = gaussian_grid(settings.sigma, settings.dx, settings.half_width)
    traj = evolve(grid, params, settings.t_end, dt=settings.dt, recenter=True)
    half = (0.5 * settings.t_end, settings.t_end)
    growth = variance_growth_rate(traj.times, traj.variances, half)
    v_early = _variance_at(traj.times, traj.variances, settings.early)
    v_late = _variance_at(traj.times, traj.variances, settings.late)
    vel = velocity_fit(traj.times, traj.barycenters, half).v_hat
    on_line = params.soliton_constrained()
    m_expected = 2.0 - n if on_line else math.nan
    try:
        fit = fit_soliton(traj.final)
        m_hat, rmse = fit.m_hat, fit.rmse
    except FitError:
        m_hat, rmse = math.nan, math.nan
    fit_ok = on_line and math.isfinite(m_hat) and abs(m_hat - m_expected) < settings.fit_tol
    return PhaseRow(
        n=n, lam=lam, on_soliton_line=on_line, growth_rate=growth,
        var_early=v_early, var_late=v_late, variance_ratio=v_late / v_early,
        dispersive=bool(v_late > 2.0 * v_early), velocity=vel,
        v_derived=soliton_velocity(m_expected)[0] if on_line else math.nan,
        m_expected=m_expected, m_hat=m_hat, fit_rmse=rmse, fit_ok=bool(fit_ok),
        mass_drift=traj.mass_drift,
        extra={"times": traj.times, "variances": traj.variances, "final": traj.final},
    )


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("JSL_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, requested or cap))


def _scan_job(args):
    n, lam, settings = args
    row = scan_point(n, lam, settings)
    row.extra = {}
    return row


def phase_scan(points, settings: ScanSettings = ScanSettings(), workers: int | None = None) -> list[PhaseRow]:
    """Evolve identical gaussian data at each (n, lam) and tabulate dispersion diagnostics.

    The dispersive flag marks variance(late) > 2 variance(early); the growth rate
    is the OLS slope of the variance over the second half of the run.
    """
    jobs = [(float(n), float(lam), settings) for n, lam in points]
    nw = worker_count(workers)
    if nw == 1 or len(jobs) == 1:
        return [scan_point(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(nw, len(jobs))) as pool:
        return list(pool.map(_scan_job, jobs))


# ---------------------------------------------------------------------------
# constants tables
# ---------------------------------------------------------------------------

def velocity_table(ms=(4, 16, 64, 256)) -> list[dict]:
    rows = []
    for m in ms:
        v_derived, v_paper = soliton_velocity(m)
        rows.append({
            "m": float(m),
            "v_paper": v_paper,
            "v_derived": v_derived,
            "sqrt_m_over_2pi": math.sqrt(m / (2.0 * math.pi)),
            "inv_sqrt_2pi_m": 1.0 / math.sqrt(2.0 * math.pi * m),
            "sqrt_m": math.sqrt(m),
            "v_paper_ratio": v_paper / math.sqrt(m / (2.0 * math.pi)),
            "v_derived_ratio": v_derived * math.sqrt(2.0 * math.pi * m),
        })
    return rows


def peak_heights(ms=(1, 2, 3, 4)) -> list[dict]:
    return [{"m": float(m), "c_m": soliton_normalization(m)} for m in ms]


# ---------------------------------------------------------------------------
# comparison helpers
# ---------------------------------------------------------------------------

def best_translate_error(grid: DensityGrid, m: float, guess: float | None = None) -> tuple[float, float]:
    """(shift, L-inf error) of the grid against the closest translate of C_m cosh^{-m}."""
    from scipy.optimize import minimize_scalar

    x, p = grid.x, grid.values
    if guess is None:
        guess = barycenter(grid)

    def err(s):
        return float(np.max(np.abs(p - soliton_density(x - s, m))))

    res = minimize_scalar(err, bracket=(guess - 0.1, guess + 0.1), tol=1e-10)
    return float(res.x), float(res.fun)


def ks_continuous(samples, cdf) -> float:
    """Two-sided KS statistic of samples against a continuous CDF."""
    from scipy.stats import kstest

    return float(kstest(np.asarray(samples, dtype=float), cdf).statistic)
