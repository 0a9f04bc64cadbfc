"""Laws of the exposed and infectious durations.

One-dimensional laws (`Deterministic`, `Exponential`, `BetaAffine`) expose
their c.d.f., the integrated c.d.f. ``E[(x - X)_+]``, the Laplace transform
and Gauss quadrature nodes.  Pairs of durations are either independent
(`IndependentDurations`) or given by a finite joint table (`JointTable`).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import InvalidParameterError

QUAD_NODES = 100


class DurationLaw:
    """Law of a nonnegative random duration."""

    lo: float
    hi: float

    @property
    def is_deterministic(self) -> bool:
        return False

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def int_cdf(self, x):
        """E[(x - X)_+] = integral of the c.d.f. from 0 to x."""
        raise NotImplementedError

    def laplace(self, s):
        raise NotImplementedError

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights (summing to one) for E[f(X)]."""
        raise NotImplementedError

    def scaled(self, c: float) -> "DurationLaw":
        raise NotImplementedError

    def quantile_upper(self, eps: float) -> float:
        """Smallest x with P(X > x) <= eps."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(DurationLaw):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise InvalidParameterError(f"deterministic duration must be finite and >= 0, got {self.value}")

    @property
    def lo(self):
        return self.value

    @property
    def hi(self):
        return self.value

    @property
    def is_deterministic(self):
        return True

    def sample(self, rng, n):
        return np.full(n, float(self.value))

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.value).astype(float)

    def int_cdf(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.value, 0.0)

    def laplace(self, s):
        return np.exp(-np.asarray(s, dtype=float) * self.value)

    def nodes(self):
        return np.array([float(self.value)]), np.array([1.0])

    def scaled(self, c):
        return Deterministic(c * self.value)

    def quantile_upper(self, eps):
        return float(self.value)

    @property
    def mean(self):
        return float(self.value)

    def descriptor(self):
        return {"dist": "deterministic", "value": self.value}


@dataclass(frozen=True)
class Exponential(DurationLaw):
    rate: float

    def __post_init__(self):
        if not self.rate > 0 or not np.isfinite(self.rate):
            raise InvalidParameterError(f"exponential rate must be positive, got {self.rate}")

    lo = 0.0
    hi = np.inf

    def sample(self, rng, n):
        return rng.exponential(1.0 / self.rate, size=n)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def int_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return x + np.expm1(-self.rate * x) / self.rate

    def laplace(self, s):
        return self.rate / (self.rate + np.asarray(s, dtype=float))

    def nodes(self):
        x, w = _laguerre(QUAD_NODES)
        return x / self.rate, w

    def scaled(self, c):
        if c == 0:
            return Deterministic(0.0)
        return Exponential(self.rate / c)

    def quantile_upper(self, eps):
        return float(-np.log(eps) / self.rate)

    @property
    def mean(self):
        return 1.0 / self.rate

    def descriptor(self):
        return {"dist": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class BetaAffine(DurationLaw):
    """shift + scale * X with X ~ Beta(a, b)."""

    a: float
    b: float
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidParameterError("beta shape parameters must be positive")
        if self.shift < 0 or self.scale <= 0:
            raise InvalidParameterError("beta_affine needs shift >= 0 and scale > 0")

    @property
    def lo(self):
        return float(self.shift)

    @property
    def hi(self):
        return float(self.shift + self.scale)

    def _x(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.shift) / self.scale, 0.0, 1.0)

    def sample(self, rng, n):
        return self.shift + self.scale * rng.beta(self.a, self.b, size=n)

    def cdf(self, x):
        return special.betainc(self.a, self.b, self._x(x))

    def int_cdf(self, x):
        x = np.asarray(x, dtype=float)
        u = self._x(x)
        m = self.a / (self.a + self.b)
        inside = self.scale * (u * special.betainc(self.a, self.b, u) - m * special.betainc(self.a + 1, self.b, u))
        beyond = x - self.shift - self.scale * m
        return np.where(x >= self.hi, beyond, inside)

    def laplace(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-s * self.shift) * special.hyp1f1(self.a, self.a + self.b, -s * self.scale)

    def nodes(self):
        u, w = _jacobi(QUAD_NODES, self.b - 1.0, self.a - 1.0)
        return self.shift + self.scale * (u + 1.0) / 2.0, w

    def scaled(self, c):
        if c == 0:
            return Deterministic(0.0)
        return BetaAffine(self.a, self.b, c * self.shift, c * self.scale)

    def quantile_upper(self, eps):
        return self.hi

    @property
    def mean(self):
        return self.shift + self.scale * self.a / (self.a + self.b)

    def descriptor(self):
        return {"dist": "beta_affine", "a": self.a, "b": self.b, "shift": self.shift, "scale": self.scale}


@lru_cache(maxsize=None)
def _laguerre(n):
    x, w = special.roots_laguerre(n)
    return x, w / w.sum()


@lru_cache(maxsize=None)
def _jacobi(n, alpha, beta):
    u, w = special.roots_jacobi(n, alpha, beta)
    return u, w / w.sum()


def sum_cdf(x_law: DurationLaw, y_law: DurationLaw, t):
    """P(X + Y <= t) for independent X, Y."""
    t = np.asarray(t, dtype=float)
    if y_law.is_deterministic:
        return x_law.cdf(t - y_law.value)
    if x_law.is_deterministic:
        return y_law.cdf(t - x_law.value)
    if isinstance(x_law, Exponential) and isinstance(y_law, Exponential):
        a, b = x_law.rate, y_law.rate
        tt = np.maximum(t, 0.0)
        if np.isclose(a, b, rtol=1e-12, atol=0):
            out = 1.0 - np.exp(-a * tt) * (1.0 + a * tt)
        else:
            out = 1.0 - (b * np.exp(-a * tt) - a * np.exp(-b * tt)) / (b - a)
        return np.where(t >= 0, out, 0.0)
    yk, wk = y_law.nodes()
    return np.tensordot(wk, x_law.cdf(t[None, ...] - yk.reshape((-1,) + (1,) * t.ndim)), axes=1)


def duration_from_descriptor(d: dict) -> DurationLaw:
    kind = d.get("dist")
    if kind == "deterministic":
        return Deterministic(float(d["value"]))
    if kind == "exponential":
        return Exponential(float(d["rate"]))
    if kind == "beta_affine":
        return BetaAffine(float(d["a"]), float(d["b"]), float(d.get("shift", 0.0)), float(d.get("scale", 1.0)))
    raise InvalidParameterError(f"unknown duration law {kind!r}")


class DurationPair:
    """Joint law of (zeta, eta)."""

    def sample(self, rng, n):
        raise NotImplementedError

    def G(self, t):
        """c.d.f. of zeta."""
        raise NotImplementedError

    def total_cdf(self, t, c: float = 1.0):
        """P(zeta + c * eta <= t)."""
        raise NotImplementedError

    def conditional_nodes(self):
        """Weights w_k, values eta_k and the law of zeta given eta = eta_k."""
        raise NotImplementedError

    def eta_laplace(self, s):
        raise NotImplementedError

    zeta_range: tuple
    eta_range: tuple
    mean_eta: float
    mean_total: float

    def tail_end(self, eps: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class IndependentDurations(DurationPair):
    zeta: DurationLaw
    eta: DurationLaw

    def sample(self, rng, n):
        return self.zeta.sample(rng, n), self.eta.sample(rng, n)

    def G(self, t):
        return self.zeta.cdf(t)

    def total_cdf(self, t, c=1.0):
        if c == 0:
            return self.zeta.cdf(t)
        return sum_cdf(self.zeta, self.eta.scaled(c), t)

    def conditional_nodes(self):
        ek, wk = self.eta.nodes()
        return [(w, e, self.zeta) for w, e in zip(wk, ek)]

    def eta_laplace(self, s):
        return self.eta.laplace(s)

    @property
    def zeta_range(self):
        return (self.zeta.lo, self.zeta.hi)

    @property
    def eta_range(self):
        return (self.eta.lo, self.eta.hi)

    @property
    def mean_eta(self):
        return self.eta.mean

    @property
    def mean_total(self):
        return self.zeta.mean + self.eta.mean

    def tail_end(self, eps):
        return self.zeta.quantile_upper(eps / 2) + self.eta.quantile_upper(eps / 2)

    def descriptor(self):
        return {"zeta": self.zeta.descriptor(), "eta": self.eta.descriptor()}


@dataclass(frozen=True)
class JointTable(DurationPair):
    """Finite joint law: atoms (zeta_i, eta_i) with probabilities p_i."""

    zetas: tuple
    etas: tuple
    probs: tuple

    def __post_init__(self):
        z, e, p = (np.asarray(v, dtype=float) for v in (self.zetas, self.etas, self.probs))
        if not (z.shape == e.shape == p.shape) or z.ndim != 1 or z.size == 0:
            raise InvalidParameterError("joint table columns must be equal-length, nonempty")
        if np.any(z < 0) or np.any(e < 0) or np.any(p < 0):
            raise InvalidParameterError("joint table entries must be nonnegative")
        if not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise InvalidParameterError(f"joint table probabilities sum to {p.sum()}, not 1")

    @classmethod
    def from_atoms(cls, atoms):
        z, e, p = zip(*atoms)
        return cls(tuple(map(float, z)), tuple(map(float, e)), tuple(map(float, p)))

    def _arrays(self):
        return (np.asarray(self.zetas, dtype=float), np.asarray(self.etas, dtype=float),
                np.asarray(self.probs, dtype=float))

    def sample(self, rng, n):
        z, e, p = self._arrays()
        idx = rng.choice(len(p), size=n, p=p / p.sum())
        return z[idx], e[idx]

    def G(self, t):
        z, _, p = self._arrays()
        t = np.asarray(t, dtype=float)
        return np.tensordot(p, (t[None, ...] >= z.reshape((-1,) + (1,) * t.ndim)), axes=1)

    def total_cdf(self, t, c=1.0):
        z, e, p = self._arrays()
        t = np.asarray(t, dtype=float)
        return np.tensordot(p, (t[None, ...] >= (z + c * e).reshape((-1,) + (1,) * t.ndim)), axes=1)

    def conditional_nodes(self):
        z, e, p = self._arrays()
        return [(pi, ei, Deterministic(zi)) for zi, ei, pi in zip(z, e, p)]

    def eta_laplace(self, s):
        _, e, p = self._arrays()
        s = np.asarray(s, dtype=float)
        return np.tensordot(p, np.exp(-np.multiply.outer(e, s)), axes=1)

    @property
    def zeta_range(self):
        return (min(self.zetas), max(self.zetas))

    @property
    def eta_range(self):
        return (min(self.etas), max(self.etas))

    @property
    def mean_eta(self):
        _, e, p = self._arrays()
        return float(p @ e)

    @property
    def mean_total(self):
        z, e, p = self._arrays()
        return float(p @ (z + e))

    def tail_end(self, eps):
        z, e, _ = self._arrays()
        return float((z + e).max())

    def descriptor(self):
        return {"dist": "joint_table", "atoms": [list(a) for a in zip(self.zetas, self.etas, self.probs)]}
