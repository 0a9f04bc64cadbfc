"""Early-phase analysis: R0, Malthusian growth rate, stable-age profiles,
exponential solutions of the linearized system, extinction probability.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter

from .errors import InvalidParameterError, SolverError
from .infectivity import Curve, InfectivityLaw
from .quadrature import cell_integrals, integrate, trapezoid_convolution
from .trajectory import fmt

RHO_BRACKET = (-50.0, 50.0)
RHO_TOL = 1e-12
TAIL_LOG_EPS = math.log(1e-17)
MAX_DOUBLINGS = 12


def _as_curve(obj) -> Curve:
    if isinstance(obj, Curve):
        return obj
    if isinstance(obj, InfectivityLaw):
        return obj.mean_curve()
    raise InvalidParameterError("expected an InfectivityLaw or a Curve with known support")


def effective_end(curve: Curve, rho: float, envelope: Curve | None = None) -> float:
    """Truncation point beyond which curve(t) * exp(-rho t) is negligible; inf if it diverges."""
    envelope = curve if envelope is None else envelope
    end = curve.end
    for _ in range(MAX_DOUBLINGS):
        with np.errstate(divide="ignore"):
            tail = float(envelope(np.array([end]))[0])
            if tail <= 0 or math.log(tail) - rho * end <= TAIL_LOG_EPS:
                return end
        end *= 2.0
    return math.inf


def weighted_integral(curve: Curve, rho: float, power: int = 0) -> float:
    """Integral over [0, inf) of t**power * curve(t) * exp(-rho t)."""
    end = effective_end(curve, rho)
    if not np.isfinite(end):
        return math.inf

    def f(t):
        with np.errstate(over="ignore"):
            return curve(t) * np.exp(np.minimum(-rho * t, 700.0)) * t**power

    return integrate(f, 0.0, end, curve.breakpoints)


def reproduction_integrals(g_bar, rho):
    """(integral of g, integral of g * exp(-rho t))."""
    curve = _as_curve(g_bar)
    return weighted_integral(curve, 0.0), weighted_integral(curve, rho)


def compute_R0(law) -> float:
    """Integral of the mean infectivity curve."""
    return weighted_integral(_as_curve(law), 0.0)


def growth_functional(law, rho) -> float:
    """m(rho) = integral of mean infectivity * exp(-rho t)."""
    return weighted_integral(_as_curve(law), rho)


def solve_rho(law, bracket=RHO_BRACKET, tol=RHO_TOL) -> float:
    """Root of m(rho) = 1: bisection-type bracketing then Newton polish."""
    curve = _as_curve(law)
    r0 = weighted_integral(curve, 0.0)
    if not r0 > 0:
        raise InvalidParameterError("R0 = 0: the growth equation has no solution")

    def g(r):
        return weighted_integral(curve, r) - 1.0

    lo, hi = bracket
    glo, ghi = g(lo), g(hi)
    if not (glo > 0 > ghi):
        raise SolverError(f"rho not bracketed by {bracket}: m(lo)-1={glo}, m(hi)-1={ghi}, R0={r0}")
    rho = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(20):
        resid = g(rho)
        if abs(resid) <= tol:
            return float(rho)
        slope = -weighted_integral(curve, rho, power=1)
        rho -= resid / slope
    if abs(g(rho)) > tol:
        raise SolverError(f"Newton polish did not reach |m(rho)-1| <= {tol}: residual {g(rho)}")
    return float(rho)


@dataclass(frozen=True)
class ShapeEstimate:
    mu: float
    R0: float
    Re: float


def R0_from_growth(g_bar, rho, susceptible=1.0) -> ShapeEstimate:
    """Scale factor and reproduction numbers from a mean-infectivity shape and an observed growth rate.

    With a susceptible fraction ``susceptible`` held during the observation,
    the ratio integral(g) / integral(g exp(-rho t)) is the effective number
    ``Re`` and ``R0 = Re / susceptible``.
    """
    if not 0 < susceptible <= 1:
        raise InvalidParameterError("susceptible fraction must lie in (0, 1]")
    total, weighted = reproduction_integrals(g_bar, rho)
    if weighted == 0 or not np.isfinite(weighted):
        raise InvalidParameterError(f"integral of g * exp(-rho t) is {weighted}; R0 undefined")
    mu = 1.0 / (susceptible * weighted)
    Re = total / weighted
    return ShapeEstimate(mu=mu, R0=Re / susceptible, Re=Re)


@dataclass(frozen=True)
class StableAgeProfiles:
    grid: np.ndarray
    lambda_rho: np.ndarray
    F_rho_c: np.ndarray
    i_frac: float
    r_frac: float
    denominator: float


def _tail_transforms(curve, rho, grid, h, end):
    """int_0^inf curve(t_k + s) exp(-rho s) ds at each grid point t_k = k h."""
    n_ext = int(math.ceil(max(end, grid[-1]) / h)) + 1
    ext = np.arange(n_ext + 1) * h

    def f(u):
        left = ext[np.clip(np.searchsorted(ext, u, side="right") - 1, 0, n_ext)]
        return curve(u) * np.exp(-rho * (u - left))

    cells = cell_integrals(f, ext, curve.breakpoints)
    # T_k = c_k + exp(-rho h) T_{k+1}, run backwards
    tails = lfilter([1.0], [1.0, -math.exp(-rho * h)], cells[::-1])[::-1]
    tails = np.append(tails, 0.0)
    return tails[: len(grid)]


def stable_age_profiles(law: InfectivityLaw, rho, grid_step=0.01, horizon=None) -> StableAgeProfiles:
    fc = law.survival_curve()
    end = effective_end(fc, rho)
    if not np.isfinite(end):
        raise SolverError(f"E[exp(-rho (zeta+eta))] diverges for rho={rho}")
    horizon = end if horizon is None else horizon
    n = int(math.floor(horizon / grid_step + 1e-9)) + 1
    grid = np.arange(n) * grid_step
    mean = law.mean_curve()
    lam_tail = _tail_transforms(mean, rho, grid, grid_step, max(end, effective_end(mean, rho)))
    fc_tail = _tail_transforms(fc, rho, grid, grid_step, end)
    # same quadrature as the tails, so F_rho_c(0) = 1 exactly
    den = fc_tail[0]
    i_frac = rho * den
    return StableAgeProfiles(grid, lam_tail / den, fc_tail / den, i_frac, 1.0 - i_frac, den)


def verify_linear_solution(law: InfectivityLaw, rho, profiles: StableAgeProfiles | None = None,
                           dt=1e-3, horizon=10.0, R0_init=0.0):
    """Residuals of the exponential solution inserted in the discretized linear system.

    Residuals are scaled by max(1, exp(rho t)), so for growing solutions
    they are relative errors.  Returns a dict of sup-residuals per equation.
    """
    if rho == 0:
        raise InvalidParameterError("rho must be nonzero")
    if profiles is None or not np.isclose(profiles.grid[1] - profiles.grid[0], dt):
        profiles = stable_age_profiles(law, rho, dt, horizon)
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    lam_rho = profiles.lambda_rho[:n]
    frho_c = profiles.F_rho_c[:n]
    kernel = law.mean(t)
    fc = 1.0 - law.Phi(t)
    growth = np.exp(rho * t)
    sign = 1.0 if rho > 0 else -1.0
    ifr, rfr = profiles.i_frac, profiles.r_frac
    force = sign * rho * growth
    infected = sign * ifr * growth
    i0 = sign * ifr
    if rho > 0:
        recovered = rfr * growth
        r0 = rfr
    else:
        r0 = R0_init
        recovered = r0 + rfr * (1.0 - growth)
    res_force = force - (i0 * lam_rho + trapezoid_convolution(kernel, force, dt))
    res_inf = infected - (i0 * frho_c + trapezoid_convolution(fc, force, dt))
    res_rec = recovered - (r0 + i0 * (1.0 - frho_c) + trapezoid_convolution(1.0 - fc, force, dt))
    scale = np.maximum(1.0, growth)
    out = {
        "force": float(np.max(np.abs(res_force) / scale)),
        "infected": float(np.max(np.abs(res_inf) / scale)),
        "recovered": float(np.max(np.abs(res_rec) / scale)),
    }
    out["max"] = max(out.values())
    out["cumulative_at_end"] = float(infected[-1] + recovered[-1] - (i0 + r0))
    return out


def _fixed_point(h, tol=1e-13, max_iter=1_000_000):
    s = 0.0
    for _ in range(max_iter):
        s_new = float(h(s))
        if s_new < s - 1e-15:
            raise SolverError("generating-function iterates are not monotone")
        if abs(s_new - s) <= tol:
            return s_new
        s = s_new
    raise SolverError("extinction fixed point did not converge")


def extinction_probability(law: InfectivityLaw, law0: InfectivityLaw | None = None, I0: int = 1,
                           mc_samples: int | None = None, rng=None) -> float:
    """Extinction probability of the approximating branching process.

    Each individual has a conditionally Poisson number of offspring with
    parameter Lambda = integral of its curve.  The offspring generating
    function E[exp(-(1-s) Lambda)] is evaluated exactly from the Laplace
    transform of the durations, or by Monte Carlo over ``mc_samples``
    sampled curves when that is given.
    """
    law0 = law if law0 is None else law0
    if I0 < 0:
        raise InvalidParameterError("I0 must be nonnegative")
    if mc_samples is None:
        h = lambda s: law.integral_laplace(1.0 - s)
        h0 = lambda s: law0.integral_laplace(1.0 - s)
        r0 = law.mean_integral
    else:
        if mc_samples < 10_000:
            raise InvalidParameterError("need at least 10^4 Monte-Carlo samples")
        rng = np.random.default_rng(0) if rng is None else rng
        lam = law.sample_integrals(rng, mc_samples)
        lam0 = lam if law0 is law else law0.sample_integrals(rng, mc_samples)
        h = lambda s: np.mean(np.exp(-(1.0 - s) * lam))
        h0 = lambda s: np.mean(np.exp(-(1.0 - s) * lam0))
        r0 = float(lam.mean())
    if r0 <= 1.0:
        return 1.0
    q_star = _fixed_point(h)
    return float(h0(q_star)) ** I0


def growth_window(trajectory, N, lo=0.3, hi=0.7):
    """Times at which the cumulative count first reaches N**lo and N**hi."""
    A = trajectory.A
    a = np.flatnonzero(A >= N**lo)
    b = np.flatnonzero(A >= N**hi)
    if a.size == 0 or b.size == 0:
        return None
    return float(trajectory.t[a[0]]), float(trajectory.t[b[0]])


def estimate_growth_rate(trajectory, window, I0=None) -> float:
    """Least-squares slope of log(I0 + A(t)) over ``window``."""
    t_lo, t_hi = window
    t = trajectory.t
    if t_lo < t[0] - 1e-12 or t_hi > t[-1] + 1e-12 or not t_hi > t_lo:
        raise InvalidParameterError(f"window {window} outside trajectory [{t[0]}, {t[-1]}]")
    I0 = trajectory.I0 if I0 is None else I0
    sel = (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
    y = I0 + trajectory.A[sel]
    if sel.sum() < 2 or np.any(y <= 0):
        raise InvalidParameterError("window needs two or more points with positive I0 + A")
    slope, _ = np.polyfit(t[sel], np.log(y), 1)
    return float(slope)


@dataclass(frozen=True)
class GrowthSummary:
    rho: float
    R0: float
    Re: float
    mu: float
    i_frac: float
    r_frac: float
    q: float

    def to_text(self):
        return "".join(f"{k} = {fmt(v)}\n" for k, v in asdict(self).items())

    def csv_header(self):
        return ",".join(asdict(self))

    def csv_row(self):
        return ",".join(fmt(v) for v in asdict(self).values())


def growth_summary(law: InfectivityLaw, law0: InfectivityLaw | None = None, I0: int = 1,
                   susceptible: float = 1.0, observed_rho: float | None = None) -> GrowthSummary:
    """Growth rate, reproduction numbers, stable-age split and extinction probability.

    Without ``observed_rho`` the growth rate solves m(rho) = 1 and mu = 1.
    With it, the law is treated as a shape known up to the factor mu.
    """
    if observed_rho is None:
        rho = solve_rho(law)
        r0 = compute_R0(law)
        est = ShapeEstimate(mu=1.0, R0=r0, Re=susceptible * r0)
    else:
        rho = observed_rho
        est = R0_from_growth(law, rho, susceptible)
    prof = stable_age_profiles(law, rho, grid_step=0.1, horizon=0.0) if rho != 0 else None
    i_frac = prof.i_frac if prof else 0.0
    return GrowthSummary(rho=rho, R0=est.R0, Re=est.Re, mu=est.mu, i_frac=i_frac, r_frac=1.0 - i_frac,
                         q=extinction_probability(law, law0, I0))
