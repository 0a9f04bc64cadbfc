"""Deterministic large-population limit: Volterra integral systems on a uniform grid.

All four variants share one time-stepper.  The new-infection flux
``y = susceptible * force`` is the only implicit quantity; every compartment
is a convolution of ``y`` with a duration c.d.f., evaluated afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .durations import Deterministic, DurationLaw
from .errors import InvalidParameterError, SolverError
from .infectivity import InfectivityLaw
from .quadrature import trapezoid_convolution
from .trajectory import Trajectory

VARIANTS = ("SEIR", "SEIR_SIR_merged", "SIS", "SIRS")


@dataclass(frozen=True)
class LimitModelSpec:
    """Inputs of a limit system.

    ``law0`` drives initially exposed individuals (``E0``), or all initial
    infected in the merged, SIS and SIRS variants; ``law0I`` drives initially
    infectious ones in SEIR.  Both default to ``law``.  In SIS and SIRS an
    individual stays infectious until the end of its infectivity curve
    (zeta + eta of the law); SIRS adds an ``immunity`` period after that.
    """

    variant: str
    law: InfectivityLaw
    I0: float
    E0: float = 0.0
    law0: InfectivityLaw | None = None
    law0I: InfectivityLaw | None = None
    immunity: DurationLaw | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.E0 < 0 or self.I0 < 0:
            raise InvalidParameterError("initial fractions must be nonnegative")
        if not 0 < self.E0 + self.I0 < 1:
            raise InvalidParameterError(
                f"initial infected fraction E0 + I0 = {self.E0 + self.I0} must lie strictly between 0 and 1")
        if self.variant != "SEIR" and self.E0 != 0:
            raise InvalidParameterError(f"variant {self.variant} has no exposed compartment; E0 must be 0")
        if self.variant == "SIRS" and self.immunity is None:
            raise InvalidParameterError("SIRS needs an immunity duration law")

    @classmethod
    def seir(cls, law, E0, I0, law0=None, law0I=None):
        return cls("SEIR", law, I0=I0, E0=E0, law0=law0, law0I=law0I)

    @classmethod
    def merged(cls, law, I0, law0=None):
        return cls("SEIR_SIR_merged", law, I0=I0, law0=law0)

    @classmethod
    def sis(cls, law, I0, law0=None):
        return cls("SIS", law, I0=I0, law0=law0)

    @classmethod
    def sirs(cls, law, I0, immunity: DurationLaw, law0=None):
        return cls("SIRS", law, I0=I0, law0=law0, immunity=immunity)

    @property
    def initial_law(self):
        return self.law if self.law0 is None else self.law0

    @property
    def initial_infectious_law(self):
        return self.law if self.law0I is None else self.law0I


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    horizon: float = 100.0
    fp_tol: float = 1e-10
    fp_max_iter: int = 200

    def __post_init__(self):
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise InvalidParameterError("dt must be positive")
        if not self.horizon > 0:
            raise InvalidParameterError("horizon must be positive")
        if not self.fp_tol > 0:
            raise InvalidParameterError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise InvalidParameterError("fp_max_iter must be >= 1")

    @property
    def grid(self):
        n = int(math.floor(self.horizon / self.dt + 1e-9)) + 1
        return np.arange(n) * self.dt

    def refined(self, factor):
        return SolverConfig(self.dt / factor, self.horizon, self.fp_tol, self.fp_max_iter)


def _trim(kernel):
    nz = np.flatnonzero(kernel)
    return kernel[: nz[-1] + 1] if nz.size else kernel[:1] * 0.0


@dataclass
class _Stepper:
    """Trapezoid stepping of force(t) = f(t) + int_0^t K(t-s) y(s) ds.

    At each step y solves y = (a - b*y) * (C + d*y): the susceptible fraction
    is affine in y with slope -b and the force is affine with slope d.
    """

    kernel: np.ndarray
    forcing: np.ndarray
    h: float
    cfg: SolverConfig
    y: np.ndarray = field(init=False)
    force: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.forcing.size
        self.kernel = _trim(np.asarray(self.kernel, dtype=float))
        self.y = np.zeros(n)
        self.force = np.zeros(n)

    def history(self, m):
        """f_m + h * (sum_{k=1}^{m-1} K_{m-k} y_k + K_m y_0 / 2)."""
        K, y = self.kernel, self.y
        J = min(m - 1, K.size - 1)
        acc = float(np.dot(K[1:J + 1], y[m - J:m][::-1])) if J > 0 else 0.0
        if m < K.size:
            acc += 0.5 * K[m] * y[0]
        return self.forcing[m] + self.h * acc

    def solve(self, m, a, b, C, guess):
        d = 0.5 * self.h * self.kernel[0]
        y = guess
        for _ in range(self.cfg.fp_max_iter):
            y_new = (a - b * y) * (C + d * y)
            if not abs(y_new) < 1e150:
                break
            if abs(y_new - y) <= self.cfg.fp_tol * max(1.0, abs(y_new)):
                self.y[m] = y_new
                self.force[m] = C + d * y_new
                return y_new
            y = y_new
        raise SolverError(
            f"fixed point did not converge at t={m * self.h:.6g} within {self.cfg.fp_max_iter} iterations; "
            f"try a smaller dt (contraction factor about dt*max(force, kernel(0))/2)")


def _solve_seir_flux(spec, cfg, forcing, kernel):
    h = cfg.dt
    st = _Stepper(kernel, forcing, h, cfg)
    n = forcing.size
    S = np.empty(n)
    S[0] = 1.0 - spec.E0 - spec.I0
    st.force[0] = forcing[0]
    st.y[0] = S[0] * forcing[0]
    for m in range(1, n):
        a = S[m - 1] - 0.5 * h * st.y[m - 1]
        C = st.history(m)
        y = st.solve(m, a, 0.5 * h, C, st.y[m - 1])
        S[m] = a - 0.5 * h * y
    return S, st.force, st.y


def _conv(kernel, y, h):
    return trapezoid_convolution(kernel, y, h)


def solve_seir(spec: LimitModelSpec, cfg: SolverConfig) -> Trajectory:
    """Full SEIR limit system."""
    if spec.variant != "SEIR":
        raise InvalidParameterError(f"solve_seir needs variant SEIR, got {spec.variant}")
    t = cfg.grid
    h = cfg.dt
    law, law0, law0I = spec.law, spec.initial_law, spec.initial_infectious_law
    forcing = spec.E0 * law0.mean(t) + spec.I0 * law0I.mean(t)
    S, force, y = _solve_seir_flux(spec, cfg, forcing, law.mean(t))
    G, Phi = law.G(t), law.Phi(t)
    G0, Phi0, F0I = law0.G(t), law0.Phi(t), law0I.Phi(t)
    E = spec.E0 * (1.0 - G0) + _conv(1.0 - G, y, h)
    I = spec.E0 * (G0 - Phi0) + spec.I0 * (1.0 - F0I) + _conv(G - Phi, y, h)
    R = spec.E0 * Phi0 + spec.I0 * F0I + _conv(Phi, y, h)
    return _trajectory(t, S, force, E, I, R, y, h)


def solve_merged(spec: LimitModelSpec, cfg: SolverConfig) -> Trajectory:
    """SEIR/SIR model with the exposed and infectious compartments merged."""
    if spec.variant != "SEIR_SIR_merged":
        raise InvalidParameterError(f"solve_merged needs variant SEIR_SIR_merged, got {spec.variant}")
    t = cfg.grid
    h = cfg.dt
    law, law0 = spec.law, spec.initial_law
    forcing = spec.I0 * law0.mean(t)
    S, force, y = _solve_seir_flux(spec, cfg, forcing, law.mean(t))
    F, F0 = law.Phi(t), law0.Phi(t)
    I = spec.I0 * (1.0 - F0) + _conv(1.0 - F, y, h)
    R = spec.I0 * F0 + _conv(F, y, h)
    return _trajectory(t, S, force, np.zeros_like(t), I, R, y, h)


def _solve_reinfection(spec, cfg, Ic_kernel, Ic_init, R_kernel=None, R_init=None):
    """Shared stepper of SIS (no R) and SIRS.

    Susceptible fraction 1 - I - R where I = I0*Ic_init + Ic_kernel * y and
    R = I0*R_init + R_kernel * y.
    """
    t = cfg.grid
    h = cfg.dt
    n = t.size
    law, law0 = spec.law, spec.initial_law
    forcing = spec.I0 * law0.mean(t)
    removed_kernel = Ic_kernel if R_kernel is None else Ic_kernel + R_kernel
    removed_init = spec.I0 * (Ic_init if R_init is None else Ic_init + R_init)
    st = _Stepper(law.mean(t), forcing, h, cfg)
    rem = _Stepper(removed_kernel, removed_init, h, cfg)
    st.force[0] = forcing[0]
    st.y[0] = (1.0 - removed_init[0]) * forcing[0]
    rem.y = st.y  # share the flux array
    b = 0.5 * h * rem.kernel[0] if rem.kernel.size else 0.0
    for m in range(1, n):
        a = 1.0 - rem.history(m)
        C = st.history(m)
        st.solve(m, a, b, C, st.y[m - 1])
    y = st.y
    I = spec.I0 * Ic_init + _conv(Ic_kernel, y, h)
    R = np.zeros(n) if R_kernel is None else spec.I0 * R_init + _conv(R_kernel, y, h)
    S = 1.0 - I - R
    return t, S, st.force, I, R, y


def solve_sis(spec: LimitModelSpec, cfg: SolverConfig) -> Trajectory:
    """SIS: recovered individuals are immediately susceptible again."""
    if spec.variant != "SIS":
        raise InvalidParameterError(f"solve_sis needs variant SIS, got {spec.variant}")
    t = cfg.grid
    Fc = 1.0 - spec.law.Phi(t)
    F0c = 1.0 - spec.initial_law.Phi(t)
    t, S, force, I, R, y = _solve_reinfection(spec, cfg, Fc, F0c)
    return _trajectory(t, S, force, np.zeros_like(t), I, R, y, cfg.dt)


def _immune_end_cdf(law: InfectivityLaw, immunity: DurationLaw, t):
    """P(infectious period + immune period <= t)."""
    if isinstance(immunity, Deterministic):
        return law.Phi(t - immunity.value)
    x, w = immunity.nodes()
    return sum(wk * law.Phi(t - xk) for xk, wk in zip(x, w))


def solve_sirs(spec: LimitModelSpec, cfg: SolverConfig) -> Trajectory:
    """SIRS: infection, then a random immune period, then susceptibility again."""
    if spec.variant != "SIRS":
        raise InvalidParameterError(f"solve_sirs needs variant SIRS, got {spec.variant}")
    t = cfg.grid
    law, law0 = spec.law, spec.initial_law
    G, G0 = law.Phi(t), law0.Phi(t)
    Psi = G - _immune_end_cdf(law, spec.immunity, t)
    Psi0 = G0 - _immune_end_cdf(law0, spec.immunity, t)
    t, S, force, I, R, y = _solve_reinfection(spec, cfg, 1.0 - G, 1.0 - G0, np.maximum(Psi, 0.0),
                                              np.maximum(Psi0, 0.0))
    return _trajectory(t, S, force, np.zeros_like(t), I, R, y, cfg.dt)


def _trajectory(t, S, force, E, I, R, y, h):
    A = np.concatenate([[0.0], np.cumsum(0.5 * h * (y[1:] + y[:-1]))])
    return Trajectory(t, S, force, E, I, R, A)


SOLVERS = {"SEIR": solve_seir, "SEIR_SIR_merged": solve_merged, "SIS": solve_sis, "SIRS": solve_sirs}


def solve(spec: LimitModelSpec, cfg: SolverConfig) -> Trajectory:
    return SOLVERS[spec.variant](spec, cfg)


def convergence_order(spec: LimitModelSpec, cfg: SolverConfig, refinements: int = 2,
                      components=("S_bar", "Ifrak_bar", "I_bar", "R_bar"), all_levels=False):
    """Observed order from solutions at dt, dt/2, ..., dt/2**refinements.

    Successive sup-differences e_k are compared on the coarse grid and the
    order is log2(e_k / e_{k+1}); the finest estimate is returned, or every
    estimate when ``all_levels`` is set.
    """
    if refinements < 2:
        raise InvalidParameterError("refinements must be >= 2")
    sols = [solve(spec, cfg.refined(2**k)) for k in range(refinements + 1)]
    coarse = sols[0].t.size
    diffs = []
    for k in range(refinements):
        a = np.vstack([sols[k][c][:: 2**k][:coarse] for c in components])
        b = np.vstack([sols[k + 1][c][:: 2 ** (k + 1)][:coarse] for c in components])
        diffs.append(float(np.max(np.abs(a - b))))
    orders = [math.log2(d0 / d1) if d1 > 0 else math.inf for d0, d1 in zip(diffs[:-1], diffs[1:])]
    return orders if all_levels else orders[-1]
