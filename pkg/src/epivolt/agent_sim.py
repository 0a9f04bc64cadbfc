"""Exact event-driven simulation of the finite-population model.

Infections form a point process with intensity ``(S(t)/N) * Ifrak(t)``.  It is
produced by thinning a dominating Poisson process of rate
``lambda_star * (number of individuals in their positivity window)``: each
individual carries its own rate-``lambda_star`` proposals on
``[zeta_i, zeta_i + eta_i)``, thinned by ``lambda_i(age) / lambda_star`` when
the individual is drawn; each surviving contact is then accepted with
probability ``S(t-)/N`` when it fires.  The two acceptance steps compose to
the ratio of true to dominating rate, so the sample path is exact.

Because an individual's curve and its contact ages do not depend on the rest
of the epidemic, they are drawn in vectorized chunks ahead of time; the event
loop only pops contact times off a heap.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .infectivity import InfectivityLaw, SampleBatch
from .trajectory import Trajectory

GRID_STEP = 0.1
EXTINCTION_EXPONENT = 0.25


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def draw_contacts(law: InfectivityLaw, rng, batch: SampleBatch):
    """Contact ages of each individual of ``batch``.

    Returns the flat array of accepted ages and offsets such that individual
    ``i`` owns ``ages[offsets[i]:offsets[i+1]]``.
    """
    lam = law.lambda_star
    n_prop = rng.poisson(lam * batch.eta)
    owner = np.repeat(np.arange(len(batch)), n_prop)
    ages = batch.zeta[owner] + rng.random(owner.size) * batch.eta[owner]
    keep = rng.random(owner.size) * lam < law.evaluate(batch, owner, ages)
    counts = np.bincount(owner[keep], minlength=len(batch))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return ages[keep], offsets


class _Reservoir:
    """Individuals drawn ahead of time, handed out in order."""

    def __init__(self, law, rng, first_chunk=64, max_chunk=4096):
        self.law = law
        self.rng = rng
        self.chunk = first_chunk
        self.max_chunk = max_chunk
        self.batches = []
        self._ages = []
        self._offsets = []
        self._pos = 0

    def _refill(self):
        batch = self.law.sample_batch(self.rng, self.chunk)
        ages, offsets = draw_contacts(self.law, self.rng, batch)
        self.batches.append(batch)
        self._ages = ages.tolist()
        self._offsets = offsets.tolist()
        self._pos = 0
        self.chunk = min(2 * self.chunk, self.max_chunk)

    def next_ages(self):
        if not self.batches or self._pos >= len(self._offsets) - 1:
            self._refill()
        i = self._pos
        self._pos += 1
        return self._ages[self._offsets[i]:self._offsets[i + 1]]

    def taken(self, n) -> SampleBatch:
        return concat_batches(self.batches, n)


def concat_batches(batches, n=None) -> SampleBatch:
    if not batches:
        empty = np.zeros(0)
        return SampleBatch(empty, empty, empty, np.zeros(0, dtype=np.int64))
    out = SampleBatch(*(np.concatenate([getattr(b, f) for b in batches]) for f in ("zeta", "eta", "height", "branch")))
    if n is not None:
        out = SampleBatch(out.zeta[:n], out.eta[:n], out.height[:n], out.branch[:n])
    return out


def sample_initial(law0: InfectivityLaw, rng, n, initial="fresh", rho=None):
    """Curves of the initially infected and their infection times (<= 0).

    ``fresh``: infected exactly at time 0.  ``stationary``: infection age
    drawn from the density proportional to exp(-rho * a) P(zeta + eta > a),
    so that the mean initial curve is the stable-age profile.
    """
    if initial == "fresh":
        batch = law0.sample_batch(rng, n)
        return batch, np.zeros(n)
    if initial != "stationary":
        raise InvalidParameterError(f"unknown initial condition {initial!r}")
    if rho is None:
        raise InvalidParameterError("stationary initial ages need a growth rate rho")

    def weight(length):
        if abs(rho) < 1e-12:
            return length
        return -np.expm1(-rho * length) / rho

    l_max = law0.support_end(1e-12)
    if not np.isfinite(l_max):
        if rho <= 0:
            raise InvalidParameterError("stationary ages need rho > 0 for unbounded durations")
        w_max = 1.0 / rho
    else:
        w_max = weight(l_max)
    parts, ages, got = [], [], 0
    while got < n:
        m = max(2 * (n - got), 64)
        b = law0.sample_batch(rng, m)
        length = b.zeta + b.eta
        keep = rng.random(m) * w_max < weight(length)
        u = rng.random(m)
        if abs(rho) < 1e-12:
            a = u * length
        else:
            a = -np.log1p(-u * (-np.expm1(-rho * length))) / rho
        sel = np.flatnonzero(keep)[: n - got]
        parts.append(SampleBatch(b.zeta[sel], b.eta[sel], b.height[sel], b.branch[sel]))
        ages.append(np.minimum(a[sel], length[sel]))
        got += sel.size
    return concat_batches(parts), -np.concatenate(ages)


@dataclass
class EpidemicState:
    """Full record of one run; individuals ``0..n_initial-1`` are the initially infected."""

    N: int
    n_initial: int
    law: InfectivityLaw
    batch: SampleBatch
    tau: np.ndarray
    horizon: float
    extinct: bool
    stopped: bool
    t_end: float

    @property
    def A(self) -> int:
        return len(self.tau) - self.n_initial

    @property
    def S(self) -> int:
        return self.N - self.n_initial - self.A

    @property
    def infection_times(self) -> np.ndarray:
        return self.tau[self.n_initial:]

    def counts(self, t):
        """Integer (S, E, I, R, A) at times ``t``."""
        t = np.asarray(t, dtype=float)
        s = np.sort(self.tau)
        e = np.sort(self.tau + self.batch.zeta)
        f = np.sort(self.tau + self.batch.zeta + self.batch.eta)
        cs = np.searchsorted(s, t, side="right")
        ce = np.searchsorted(e, t, side="right")
        cf = np.searchsorted(f, t, side="right")
        A = np.searchsorted(self.infection_times, t, side="right")
        S = self.N - self.n_initial - A
        return S, cs - ce, ce - cf, cf, A

    def active(self, t):
        """Number of individuals with tau_i <= t < tau_i + zeta_i + eta_i."""
        end = self.tau + self.batch.zeta + self.batch.eta
        return int(np.sum((self.tau <= t) & (t < end)))

    def event_log(self):
        """Rows (i, tau, zeta, eta); initially infected get negative indices."""
        idx = np.concatenate([-np.arange(1, self.n_initial + 1), np.arange(1, self.A + 1)])
        return np.column_stack([idx, self.tau, self.batch.zeta, self.batch.eta])

    def write_event_log(self, path):
        from .trajectory import fmt
        rows = self.event_log()
        with open(path, "w") as fh:
            fh.write("i,tau,zeta,eta\n")
            for i, tau, z, e in rows:
                fh.write(f"{int(i)},{fmt(tau)},{fmt(z)},{fmt(e)}\n")
        return len(rows)

    def trajectory(self, grid_step=GRID_STEP, merged=True) -> Trajectory:
        n = int(math.floor(self.horizon / grid_step + 1e-9)) + 1
        grid = np.arange(n) * grid_step
        S, E, I, R, A = self.counts(grid)
        if merged:
            I, E = I + E, np.zeros_like(E)
        N = self.N
        return Trajectory(grid, S / N, self.force_on_grid(grid) / N, E / N, I / N, R / N,
                          A.astype(float), N=N, I0=self.n_initial)

    def force_on_grid(self, grid):
        h = grid[1] - grid[0] if len(grid) > 1 else 1.0
        start = self.tau + self.batch.zeta
        stop = start + self.batch.eta
        lo = np.clip(np.ceil(start / h - 1e-12), 0, len(grid)).astype(np.int64)
        hi = np.clip(np.ceil(stop / h - 1e-12), 0, len(grid)).astype(np.int64)
        cnt = np.maximum(hi - lo, 0)
        owner = np.repeat(np.arange(len(self.tau)), cnt)
        first = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        k = first + np.arange(owner.size)
        vals = self.law.evaluate(self.batch, owner, grid[k] - self.tau[owner])
        return np.bincount(k, weights=vals, minlength=len(grid))[: len(grid)]


def force_of_infection(state: EpidemicState, t: float) -> float:
    """Total infectivity exerted at time ``t`` by everyone infected by then."""
    if len(state.tau) == 0:
        return 0.0
    idx = np.flatnonzero(state.tau <= t)
    if idx.size == 0:
        return 0.0
    return float(state.law.evaluate(state.batch, idx, t - state.tau[idx]).sum())


def simulate(law: InfectivityLaw, law0: InfectivityLaw | None, N: int, I0: int, horizon: float, seed,
             grid_step: float = GRID_STEP, *, merged: bool = True, initial: str = "fresh", rho=None,
             stop_at=None, check_dominating: bool = False):
    """Simulate one sample path; returns ``(Trajectory, EpidemicState)``.

    ``law0`` is the law of the initially infected (``None``: same as ``law``).
    ``stop_at`` ends the run once that many new infections have occurred.
    """
    N, I0 = int(N), int(I0)
    if not 0 < I0 < N:
        raise InvalidParameterError(f"need 0 < I0 < N, got I0={I0}, N={N}")
    if not horizon > 0:
        raise InvalidParameterError("horizon must be positive")
    law0 = law if law0 is None else law0
    ss_init, ss_res, ss_acc = _seed_sequence(seed).spawn(3)
    rng_init = np.random.default_rng(ss_init)
    acc = np.random.default_rng(ss_acc)

    batch0, tau0 = sample_initial(law0, rng_init, I0, initial, rho)
    ages0, off0 = draw_contacts(law0, rng_init, batch0)
    owner0 = np.repeat(np.arange(I0), np.diff(off0))
    times0 = tau0[owner0] + ages0
    heap = times0[times0 > 0].tolist()
    heapq.heapify(heap)

    reservoir = _Reservoir(law, np.random.default_rng(ss_res))
    S = N - I0
    taus = []
    ubuf = acc.random(1024).tolist()
    upos = 0
    stopped = False
    t_end = horizon
    checker = _DominationCheck(law, law0, N, batch0, tau0, reservoir) if check_dominating else None

    while heap:
        t = heapq.heappop(heap)
        if t > horizon:
            heapq.heappush(heap, t)
            break
        if checker is not None:
            checker(t, taus, S)
        if upos == len(ubuf):
            ubuf = acc.random(4096).tolist()
            upos = 0
        u = ubuf[upos]
        upos += 1
        if u * N < S:
            S -= 1
            taus.append(t)
            for a in reservoir.next_ages():
                heapq.heappush(heap, t + a)
            if stop_at is not None and len(taus) >= stop_at:
                stopped = True
                t_end = t
                break
    extinct = not heap and not stopped
    if extinct:
        t_end = min(horizon, taus[-1] if taus else 0.0)

    infected = reservoir.taken(len(taus))
    batch = concat_batches([batch0, infected])
    state = EpidemicState(N, I0, law, batch, np.concatenate([tau0, np.asarray(taus, dtype=float)]),
                          float(horizon), extinct, stopped, float(t_end))
    if law0 is not law:
        state.law = _PerIndividualLaw(law0, law, I0)
    return state.trajectory(grid_step, merged), state


class _PerIndividualLaw:
    """Evaluates initial individuals with ``law0`` and the rest with ``law``."""

    def __init__(self, law0, law, n_initial):
        self.law0, self.law, self.n_initial = law0, law, n_initial
        self.lambda_star = max(law0.lambda_star, law.lambda_star)

    def evaluate(self, batch, idx, ages):
        idx = np.asarray(idx)
        ages = np.asarray(ages, dtype=float)
        out = np.empty(ages.shape)
        first = idx < self.n_initial
        if np.any(first):
            out[first] = self.law0.evaluate(batch, idx[first], ages[first])
        if np.any(~first):
            out[~first] = self.law.evaluate(batch, idx[~first], ages[~first])
        return out


class _DominationCheck:
    """Asserts Upsilon(t) <= B(t) at every proposed event (slow; for testing)."""

    def __init__(self, law, law0, N, batch0, tau0, reservoir):
        self.law, self.law0, self.N = law, law0, N
        self.batch0, self.tau0, self.reservoir = batch0, tau0, reservoir
        self.lam = max(law.lambda_star, law0.lambda_star)
        self.checked = 0

    def __call__(self, t, taus, S):
        n0 = len(self.tau0)
        batch = concat_batches([self.batch0, concat_batches(self.reservoir.batches, len(taus))])
        tau = np.concatenate([self.tau0, np.asarray(taus, dtype=float)])
        ev = _PerIndividualLaw(self.law0, self.law, n0)
        force = float(ev.evaluate(batch, np.arange(len(tau)), t - tau).sum())
        end = tau + batch.zeta + batch.eta
        active = int(np.sum((tau <= t) & (t < end)))
        upsilon = S / self.N * force
        bound = self.lam * active * S / self.N
        if not upsilon <= bound * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"dominating rate violated at t={t}: {upsilon} > {bound}")
        if not force > 0:
            raise AssertionError(f"proposal at t={t} while the force of infection is zero")
        self.checked += 1


def hitting_times(state: EpidemicState, epsilon: float, alpha: float):
    """First times the cumulative infection count reaches eps*N and N**alpha (inf if never)."""
    if not 0 < epsilon < 1 or not 0 < alpha < 1:
        raise InvalidParameterError("epsilon and alpha must lie in (0, 1)")
    times = state.infection_times

    def first(k):
        k = max(int(math.ceil(k - 1e-12)), 1)
        return float(times[k - 1]) if len(times) >= k else math.inf

    return first(epsilon * state.N), first(state.N ** alpha)


def went_extinct(state: EpidemicState, exponent: float = EXTINCTION_EXPONENT) -> bool:
    """True when no infection remains possible before the count reaches N**exponent."""
    return state.extinct and state.A < state.N ** exponent
