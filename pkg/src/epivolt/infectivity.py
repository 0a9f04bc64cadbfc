"""Random infection-age infectivity functions and their laws.

Every sampled function has the form ``height * shape((t - zeta) / eta)`` where
``shape`` is a piecewise-linear profile on [0, 1) and zero elsewhere.  A law
is a finite mixture of such branches, each with its own height, profile and
joint law of (zeta, eta).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .durations import Deterministic, DurationPair, IndependentDurations
from .errors import InvalidParameterError

MEAN_GRID_STEP = 0.01
SUPPORT_EPS = 1e-8
INTEGRAL_EPS = 1e-15


@dataclass(frozen=True)
class Profile:
    """Piecewise-linear shape on [0, 1): linear interpolation of ``values`` at ``knots``."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.size < 2 or k.shape != v.shape or k[0] != 0.0 or k[-1] != 1.0 or np.any(np.diff(k) <= 0):
            raise InvalidParameterError("profile knots must increase strictly from 0 to 1")
        if np.any(v < 0):
            raise InvalidParameterError("profile values must be nonnegative")
        if np.any(v[1:-1] <= 0) or (k.size == 2 and v.max() <= 0):
            raise InvalidParameterError("profile must be positive inside (0, 1)")

    @classmethod
    def constant(cls):
        return cls((0.0, 1.0), (1.0, 1.0))

    @classmethod
    def triangular(cls, peak_fraction):
        return cls((0.0, float(peak_fraction), 1.0), (0.0, 1.0, 0.0))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x < 1.0)
        return np.where(inside, np.interp(x, self.knots, self.values), 0.0)

    @property
    def area(self):
        k, v = np.asarray(self.knots), np.asarray(self.values)
        return float(np.sum(np.diff(k) * (v[1:] + v[:-1]) / 2.0))

    @property
    def peak(self):
        return float(max(self.values))

    def terms(self):
        """Decompose into steps ``coef * 1{x >= c}`` and ramps ``coef * (x - c)_+``."""
        k, v = np.asarray(self.knots), np.asarray(self.values)
        slopes = np.diff(v) / np.diff(k)
        steps = [(v[0], 0.0), (-v[-1], 1.0)]
        ramps = [(slopes[0], 0.0)]
        ramps += [(slopes[j] - slopes[j - 1], k[j]) for j in range(1, len(slopes))]
        ramps.append((-slopes[-1], 1.0))
        steps = [(float(a), float(c)) for a, c in steps if a != 0.0]
        ramps = [(float(a), float(c)) for a, c in ramps if a != 0.0]
        return steps, ramps


@dataclass(frozen=True)
class InfectivityFunction:
    """One realized infectivity curve, as a function of time since infection.

    On ``[breakpoints[j], breakpoints[j+1])`` the value is
    ``intercepts[j] + slopes[j] * t``; it is zero before 0 and after the last
    breakpoint.
    """

    breakpoints: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray
    zeta: float
    eta: float

    @classmethod
    def from_profile(cls, zeta, eta, height, profile: Profile):
        k = np.asarray(profile.knots, dtype=float)
        v = np.asarray(profile.values, dtype=float)
        if eta <= 0:
            return cls(np.array([0.0, zeta]), np.zeros(1), np.zeros(1), float(zeta), 0.0)
        s = np.diff(v) / np.diff(k)
        b = height * s / eta
        a = height * v[:-1] - b * (zeta + k[:-1] * eta)
        bps = np.concatenate([[0.0], zeta + k * eta])
        return cls(bps, np.concatenate([[0.0], a]), np.concatenate([[0.0], b]), float(zeta), float(eta))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.breakpoints, t, side="right") - 1
        valid = (j >= 0) & (j < len(self.slopes))
        jj = np.clip(j, 0, len(self.slopes) - 1)
        return np.where(valid, self.intercepts[jj] + self.slopes[jj] * t, 0.0)

    def integral(self):
        lo, hi = self.breakpoints[:-1], self.breakpoints[1:]
        return float(np.sum(self.intercepts * (hi - lo) + self.slopes * (hi**2 - lo**2) / 2.0))

    def sup(self):
        lo, hi = self.breakpoints[:-1], self.breakpoints[1:]
        ends = np.concatenate([self.intercepts + self.slopes * lo, self.intercepts + self.slopes * hi])
        return float(max(ends.max(), 0.0))


@dataclass(frozen=True)
class Branch:
    weight: float
    height: float
    profile: Profile
    durations: DurationPair

    def mean(self, t):
        """E[height * shape((t - zeta) / eta)] for this branch."""
        t = np.asarray(t, dtype=float)
        steps, ramps = self.profile.terms()
        out = np.zeros_like(t)
        for coef, c in steps:
            out += coef * self.durations.total_cdf(t, c)
        if ramps:
            for w, e, zlaw in self.durations.conditional_nodes():
                if e <= 0:
                    continue
                acc = np.zeros_like(t)
                for coef, c in ramps:
                    acc += coef * zlaw.int_cdf(t - c * e)
                out += w * acc / e
        lo = self.durations.zeta_range[0]
        hi = self.durations.zeta_range[1] + self.durations.eta_range[1]
        out = np.where((t >= max(lo, 0.0)) & (t < hi), out, 0.0)
        # clip rounding noise of the decomposition
        return self.height * np.clip(out, 0.0, self.profile.peak)

    @property
    def mean_integral(self):
        return self.height * self.profile.area * self.durations.mean_eta


@dataclass(frozen=True)
class SampleBatch:
    zeta: np.ndarray
    eta: np.ndarray
    height: np.ndarray
    branch: np.ndarray

    def __len__(self):
        return len(self.zeta)


@dataclass(frozen=True)
class Curve:
    """A deterministic curve with known nonsmooth points and support end."""

    fn: Callable
    end: float
    breakpoints: tuple = ()

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True)
class InfectivityLaw:
    branches: tuple
    lambda_star: float = None
    name: str = ""
    descriptor: dict = field(default=None, compare=False)

    def __post_init__(self):
        if not self.branches:
            raise InvalidParameterError("a law needs at least one branch")
        w = np.array([b.weight for b in self.branches])
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise InvalidParameterError("branch weights must be nonnegative and sum to 1")
        bound = max(b.height * b.profile.peak for b in self.branches)
        if self.lambda_star is None:
            object.__setattr__(self, "lambda_star", float(bound))
        elif self.lambda_star < bound - 1e-12:
            raise InvalidParameterError(f"lambda_star={self.lambda_star} is below the sup {bound}")

    # -- sampling ---------------------------------------------------------
    def sample_batch(self, rng: np.random.Generator, n: int) -> SampleBatch:
        nb = len(self.branches)
        if nb == 1:
            branch = np.zeros(n, dtype=np.int64)
        else:
            w = np.array([b.weight for b in self.branches])
            branch = rng.choice(nb, size=n, p=w / w.sum())
        zeta = np.empty(n)
        eta = np.empty(n)
        height = np.empty(n)
        for j, b in enumerate(self.branches):
            sel = branch == j
            m = int(sel.sum())
            if m:
                zeta[sel], eta[sel] = b.durations.sample(rng, m)
                height[sel] = b.height
        return SampleBatch(zeta, eta, height, branch)

    def evaluate(self, batch: SampleBatch, idx, ages):
        """lambda_i(age) for the individuals ``idx`` of ``batch``."""
        idx = np.asarray(idx)
        ages = np.asarray(ages, dtype=float)
        out = np.zeros(ages.shape)
        br = batch.branch[idx]
        for j, b in enumerate(self.branches):
            sel = br == j
            if not np.any(sel):
                continue
            ii = idx[sel]
            e = batch.eta[ii]
            x = np.divide(ages[sel] - batch.zeta[ii], e, out=np.full(e.shape, -1.0), where=e > 0)
            out[sel] = batch.height[ii] * b.profile(x)
        return out

    def function(self, batch: SampleBatch, i: int) -> InfectivityFunction:
        b = self.branches[int(batch.branch[i])]
        return InfectivityFunction.from_profile(batch.zeta[i], batch.eta[i], batch.height[i], b.profile)

    def sample(self, rng: np.random.Generator) -> InfectivityFunction:
        return self.function(self.sample_batch(rng, 1), 0)

    # -- deterministic summaries ------------------------------------------
    def mean(self, t):
        t = np.asarray(t, dtype=float)
        return sum(b.weight * b.mean(t) for b in self.branches)

    def G(self, t):
        return sum(b.weight * b.durations.G(t) for b in self.branches)

    def Phi(self, t):
        return sum(b.weight * b.durations.total_cdf(t, 1.0) for b in self.branches)

    def Psi(self, t):
        return self.G(t) - self.Phi(t)

    @property
    def is_compact(self):
        return all(np.isfinite(b.durations.tail_end(1e-300)) for b in self.branches)

    def support_end(self, eps=SUPPORT_EPS):
        """Time beyond which the mean vanishes (up to probability ``eps`` when not compact)."""
        return float(max(b.durations.tail_end(eps) for b in self.branches))

    def breakpoints(self):
        pts = set()
        for b in self.branches:
            zr = [z for z in b.durations.zeta_range if np.isfinite(z)]
            er = [e for e in b.durations.eta_range if np.isfinite(e)]
            for c in b.profile.knots:
                pts.update(z + c * e for z in zr for e in er)
            pts.update(zr)
        return tuple(sorted(p for p in pts if p > 0))

    def mean_curve(self, eps=INTEGRAL_EPS) -> Curve:
        return Curve(self.mean, self.support_end(eps), self.breakpoints())

    def survival_curve(self, eps=INTEGRAL_EPS) -> Curve:
        """F^c(t) = P(zeta + eta > t), for t >= 0."""
        end = self.support_end(eps)
        compact = self.is_compact

        def fc(t):
            t = np.asarray(t, dtype=float)
            out = np.clip(1.0 - self.Phi(t), 0.0, 1.0)
            # weights summing to 1 - ulp would leave a spurious tail
            return np.where(t >= end, 0.0, out) if compact else out

        return Curve(fc, end, self.breakpoints())

    @property
    def mean_integral(self):
        """E[integral of lambda] computed from the duration laws, not from the mean curve."""
        return float(sum(b.weight * b.mean_integral for b in self.branches))

    def integral_laplace(self, s):
        """E[exp(-s * integral of lambda)]."""
        s = np.asarray(s, dtype=float)
        return sum(b.weight * b.durations.eta_laplace(s * b.height * b.profile.area) for b in self.branches)

    def sample_integrals(self, rng, n):
        batch = self.sample_batch(rng, n)
        area = np.array([b.profile.area for b in self.branches])
        return batch.height * area[batch.branch] * batch.eta

    @property
    def mean_grid(self):
        return tabulate_mean(self)


def tabulate_mean(law: InfectivityLaw, dt=MEAN_GRID_STEP):
    """Mean curve on a uniform grid up to the support end."""
    n = int(np.ceil(law.support_end() / dt)) + 1
    grid = np.arange(n) * dt
    return grid, law.mean(grid)


def monte_carlo_mean(law: InfectivityLaw, t, n_samples, rng, chunk=20000):
    """Brute-force mean and standard error of lambda(t) over sampled functions."""
    t = np.asarray(t, dtype=float)
    s1 = np.zeros_like(t)
    s2 = np.zeros_like(t)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        batch = law.sample_batch(rng, m)
        idx = np.repeat(np.arange(m), t.size)
        vals = law.evaluate(batch, idx, np.tile(t, m)).reshape(m, t.size)
        s1 += vals.sum(axis=0)
        s2 += (vals**2).sum(axis=0)
        done += m
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    return mean, np.sqrt(var / n_samples)


def _validate_pair(durations):
    if not isinstance(durations, DurationPair):
        raise InvalidParameterError("durations must be a DurationPair")
    return durations


def make_law_constant(beta, exposed, infectious=None) -> InfectivityLaw:
    """Constant infectivity ``beta`` on [zeta, zeta + eta).

    ``exposed`` and ``infectious`` are one-dimensional duration laws, or
    ``exposed`` is a joint `DurationPair` and ``infectious`` is omitted.
    """
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    pair = exposed if infectious is None else IndependentDurations(exposed, infectious)
    return InfectivityLaw((Branch(1.0, float(beta), Profile.constant(), _validate_pair(pair)),), name="constant")


def make_law_triangular(alpha_scale, peak_fraction, durations: DurationPair) -> InfectivityLaw:
    """Linear rise from 0 at zeta to ``alpha_scale`` at zeta + peak_fraction*eta, then linear fall."""
    if not 0 < alpha_scale <= 1:
        raise InvalidParameterError(f"alpha_scale must lie in (0, 1], got {alpha_scale}")
    if not 0 < peak_fraction < 1:
        raise InvalidParameterError(f"peak_fraction must lie in (0, 1), got {peak_fraction}")
    branch = Branch(1.0, float(alpha_scale), Profile.triangular(peak_fraction), _validate_pair(durations))
    return InfectivityLaw((branch,), lambda_star=1.0, name="triangular")


def mixture(laws: Sequence[InfectivityLaw], weights: Sequence[float]) -> InfectivityLaw:
    weights = np.asarray(weights, dtype=float)
    if len(laws) != len(weights) or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
        raise InvalidParameterError("mixture weights must be nonnegative, sum to 1, and match the laws")
    branches = tuple(
        Branch(float(w * b.weight), b.height, b.profile, b.durations)
        for law, w in zip(laws, weights)
        for b in law.branches
        if w * b.weight > 0
    )
    star = max(law.lambda_star for law, w in zip(laws, weights) if w > 0)
    return InfectivityLaw(branches, lambda_star=star, name="mixture")


def scale_law(law: InfectivityLaw, factor: float) -> InfectivityLaw:
    """Multiply every sampled function by ``factor`` (a contact-rate scale)."""
    if not factor > 0:
        raise InvalidParameterError("scale factor must be positive")
    branches = tuple(Branch(b.weight, b.height * factor, b.profile, b.durations) for b in law.branches)
    return InfectivityLaw(branches, lambda_star=law.lambda_star * factor, name=law.name)


def mean_infectivity(law: InfectivityLaw, t):
    """Mean infectivity at infection age ``t`` (vectorized)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("infection age must be nonnegative")
    return law.mean(t)


@dataclass(frozen=True)
class DurationDistributions:
    """Tabulated c.d.f.s on a uniform grid (see `duration_distributions`)."""

    grid: np.ndarray
    G: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    F: np.ndarray
    F0I: np.ndarray
    G0: np.ndarray
    Phi0: np.ndarray
    Psi0: np.ndarray


def duration_distributions(law, grid_step, horizon, law0=None, law0I=None) -> DurationDistributions:
    """Tabulate G, Phi, Psi = G - Phi, F and the initial-condition analogues.

    ``law0`` governs initially exposed individuals and ``law0I`` the initially
    infectious ones (whose c.d.f. F0I is that of their end of positivity).
    """
    if not grid_step > 0:
        raise InvalidParameterError("grid_step must be positive")
    if horizon < 0:
        raise InvalidParameterError("horizon must be nonnegative")
    law0 = law if law0 is None else law0
    law0I = law if law0I is None else law0I
    n = int(np.floor(horizon / grid_step + 1e-9)) + 1
    grid = np.arange(n) * grid_step
    G = np.clip(law.G(grid), 0, 1)
    Phi = np.minimum(np.clip(law.Phi(grid), 0, 1), G)
    G0 = np.clip(law0.G(grid), 0, 1)
    Phi0 = np.minimum(np.clip(law0.Phi(grid), 0, 1), G0)
    F0I = np.clip(law0I.Phi(grid), 0, 1)
    return DurationDistributions(grid, G, Phi, G - Phi, Phi.copy(), F0I, G0, Phi0, G0 - Phi0)


def deterministic_pair(zeta, eta):
    return IndependentDurations(Deterministic(zeta), Deterministic(eta))
