"""Replicate ensembles of the stochastic model with percentile envelopes."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent_sim import GRID_STEP, simulate
from .errors import InvalidParameterError
from .infectivity import InfectivityLaw
from .trajectory import COMPONENTS, Trajectory, fmt

QUANTILES = {"p25": 25.0, "p75": 75.0, "p2.5": 2.5, "p97.5": 97.5}


@dataclass(frozen=True)
class SimulationConfig:
    law: InfectivityLaw
    N: int
    I0: int
    horizon: float
    law0: InfectivityLaw | None = None
    grid_step: float = GRID_STEP
    merged: bool = True
    initial: str = "fresh"
    rho: float | None = None
    stop_at: int | None = None


def replicate_seed(master_seed: int, r: int) -> np.random.SeedSequence:
    """Randomness stream of replicate ``r``; independent of how replicates are scheduled."""
    return np.random.SeedSequence(master_seed, spawn_key=(r,))


def run_replicate(config: SimulationConfig, master_seed: int, r: int):
    c = config
    return simulate(c.law, c.law0, c.N, c.I0, c.horizon, replicate_seed(master_seed, r), c.grid_step,
                    merged=c.merged, initial=c.initial, rho=c.rho, stop_at=c.stop_at)


def _run_block(args):
    config, master_seed, indices, fn = args
    return [fn(*run_replicate(config, master_seed, r)) for r in indices]


def _pair(traj, state):
    return traj, state


def _traj_only(traj, state):
    return traj, None


def map_replicates(config: SimulationConfig, n_replicates: int, master_seed: int, fn, threads: int = 1):
    """``[fn(trajectory, state) for each replicate]`` in replicate order.

    Work is split over ``threads`` processes in contiguous blocks; ``fn`` must
    be picklable when ``threads > 1``.  Results do not depend on the split.
    """
    if n_replicates < 1:
        raise InvalidParameterError("n_replicates must be >= 1")
    if master_seed is None:
        raise InvalidParameterError("master_seed is required")
    threads = max(1, min(int(threads), n_replicates))
    blocks = [b.tolist() for b in np.array_split(np.arange(n_replicates), threads)]
    jobs = [(config, master_seed, b, fn) for b in blocks]
    if threads == 1:
        results = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_block, jobs))
    return [x for block in results for x in block]


@dataclass
class EnsembleSummary:
    t: np.ndarray
    n: int
    mean: dict
    quantiles: dict
    trajectories: list = field(default_factory=list, repr=False)
    states: list = field(default_factory=list, repr=False)

    @classmethod
    def from_trajectories(cls, trajs, states=(), keep=True):
        if not trajs:
            raise InvalidParameterError("an ensemble needs at least one trajectory")
        t = trajs[0].t
        stacks = {c: np.vstack([tr[c] for tr in trajs]) for c in COMPONENTS}
        mean = {c: s.mean(axis=0) for c, s in stacks.items()}
        quant = {name: {c: np.percentile(s, q, axis=0) for c, s in stacks.items()}
                 for name, q in QUANTILES.items()}
        return cls(t, len(trajs), mean, quant, list(trajs) if keep else [], list(states))

    def mean_trajectory(self) -> Trajectory:
        return Trajectory(self.t, *(self.mean[c] for c in COMPONENTS))

    def envelope_width(self, component, lo="p2.5", hi="p97.5"):
        return self.quantiles[hi][component] - self.quantiles[lo][component]

    def to_csv(self, path):
        cols = ["t"] + [f"mean_{c}" for c in COMPONENTS]
        series = [self.t] + [self.mean[c] for c in COMPONENTS]
        for name in QUANTILES:
            cols += [f"{name}_{c}" for c in COMPONENTS]
            series += [self.quantiles[name][c] for c in COMPONENTS]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*series):
                fh.write(",".join(fmt(v) for v in row) + "\n")
        return len(self.t)


def default_threads():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_ensemble(config: SimulationConfig, n_replicates: int, master_seed: int, threads: int = 1,
                 keep_trajectories: bool = False, keep_states: bool = False) -> EnsembleSummary:
    """Run replicates ``0..n_replicates-1`` and reduce them in index order."""
    pairs = map_replicates(config, n_replicates, master_seed, _pair if keep_states else _traj_only, threads)
    trajs = [tr for tr, _ in pairs]
    states = [st for _, st in pairs] if keep_states else []
    return EnsembleSummary.from_trajectories(trajs, states, keep=keep_trajectories)
