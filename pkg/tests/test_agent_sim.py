import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.integrate import solve_ivp

from epivolt.agent_sim import (EpidemicState, force_of_infection, hitting_times, sample_initial, simulate,
                               went_extinct)
from epivolt.durations import BetaAffine, Deterministic, Exponential
from epivolt.ensemble import SimulationConfig, run_ensemble
from epivolt.errors import InvalidParameterError
from epivolt.infectivity import SampleBatch, deterministic_pair, make_law_constant, make_law_triangular


def _state(law, zeta, eta, tau, n_initial=0, N=100):
    zeta, eta, tau = (np.asarray(v, dtype=float) for v in (zeta, eta, tau))
    batch = SampleBatch(zeta, eta, np.full(zeta.size, law.branches[0].height), np.zeros(zeta.size, dtype=np.int64))
    return EpidemicState(N, n_initial, law, batch, tau, 10.0, False, False, 10.0)


def test_force_of_infection_empty():
    law = make_law_constant(2.0, Deterministic(0), Deterministic(1))
    assert force_of_infection(_state(law, [], [], []), 1.0) == 0.0


def test_force_of_infection_single_initial():
    law = make_law_constant(2.0, Deterministic(0), Deterministic(3))
    st_ = _state(law, [0.0], [3.0], [0.0], n_initial=1)
    assert force_of_infection(st_, 1.2) == 2.0
    assert force_of_infection(st_, 3.0) == 0.0


def test_force_of_infection_matches_naive_sum():
    law = make_law_triangular(1.0, 0.2, deterministic_pair(0.0, 1.0))
    zeta, eta, tau = [0.5, 0.2, 0.0], [2.0, 3.0, 1.0], [0.0, 1.0, 2.0]
    st_ = _state(law, zeta, eta, tau)

    def tri(age, z, e):
        x = (age - z) / e
        if x < 0 or x >= 1:
            return 0.0
        return x / 0.2 if x < 0.2 else (1 - x) / 0.8

    naive = sum(tri(2.5 - t, z, e) for z, e, t in zip(zeta, eta, tau))
    assert force_of_infection(st_, 2.5) == pytest.approx(naive, abs=1e-14)


def test_zero_infectivity_means_no_infections():
    law = make_law_constant(1.0, Deterministic(0.0), Deterministic(0.0))
    traj, state = simulate(law, law, 1000, 10, 20.0, seed=1)
    assert state.A == 0
    assert np.all(traj.S_bar == traj.S_bar[0])


@pytest.mark.parametrize("N,I0,horizon", [(100, 100, 10.0), (100, 0, 10.0), (100, 5, 0.0), (100, 150, 1.0)])
def test_invalid_arguments(markov_law, N, I0, horizon):
    with pytest.raises(InvalidParameterError):
        simulate(markov_law, None, N, I0, horizon, seed=0)


def test_first_infection_time_is_exponential():
    # no recoveries before the first infection: the rate stays (S/N) * I0 * beta
    law = make_law_constant(2.0, Deterministic(0.0), Deterministic(20.0))
    N, I0 = 100, 5
    rate = 2.0 * I0 * (N - I0) / N
    firsts = np.empty(10_000)
    for r in range(firsts.size):
        _, state = simulate(law, law, N, I0, 50.0, seed=np.random.SeedSequence(99, spawn_key=(r,)), stop_at=1,
                            grid_step=50.0)
        firsts[r] = state.infection_times[0]
    assert stats.kstest(firsts, stats.expon(scale=1 / rate).cdf).pvalue > 0.01


def _event_times(state):
    return np.unique(np.concatenate([state.tau, state.tau + state.batch.zeta,
                                     state.tau + state.batch.zeta + state.batch.eta]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), merged=st.booleans())
def test_conservation_and_monotonicity_at_events(seed, merged):
    law = make_law_constant(1.8, BetaAffine(2, 2, 0.5, 1.0), Exponential(1.0))
    traj, state = simulate(law, law, 300, 6, 40.0, seed=seed, merged=merged)
    t = _event_times(state)
    t = t[t <= 40.0]
    S, E, I, R, A = state.counts(t)
    assert np.all(S + E + I + R == state.N)
    assert np.all(S == state.N - state.n_initial - A)
    assert np.all(np.diff(A) >= 0) and np.all(np.diff(S) <= 0) and np.all(np.diff(R) >= 0)
    grid_total = (traj.S_bar + traj.E_bar + traj.I_bar + traj.R_bar) * state.N
    assert np.all(np.rint(grid_total) == state.N)
    assert np.max(np.abs(grid_total - state.N)) < 1e-9


def test_dominating_rate_check_runs(covid_law):
    traj, state = simulate(covid_law, covid_law, 400, 20, 30.0, seed=5, check_dominating=True)
    assert state.A > 0


def test_identical_seed_gives_identical_event_log(covid_law, tmp_path):
    paths = []
    for k in range(2):
        _, state = simulate(covid_law, covid_law, 2000, 50, 60.0, seed=424242)
        paths.append(tmp_path / f"log{k}.csv")
        state.write_event_log(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    _, other = simulate(covid_law, covid_law, 2000, 50, 60.0, seed=424243)
    other.write_event_log(tmp_path / "other.csv")
    assert (tmp_path / "other.csv").read_bytes() != paths[0].read_bytes()


def test_hitting_times_and_extinction(markov_law):
    _, state = simulate(markov_law, markov_law, 10_000, 20, 100.0, seed=3)
    T_eps, T_alpha = hitting_times(state, 0.1, 0.5)
    times = state.infection_times
    assert T_alpha == times[99]
    assert T_eps == times[999]
    assert not went_extinct(state)

    law = make_law_constant(0.3, Deterministic(0.0), Exponential(1.0))
    _, dead = simulate(law, law, 10_000, 1, 200.0, seed=8)
    assert dead.extinct and went_extinct(dead)
    assert hitting_times(dead, 0.5, 0.5) == (math.inf, math.inf)
    with pytest.raises(InvalidParameterError):
        hitting_times(dead, 1.5, 0.5)


def test_stationary_initial_ages(covid_law):
    rng = np.random.default_rng(4)
    batch, tau = sample_initial(covid_law, rng, 500, "stationary", rho=0.147)
    assert np.all(tau <= 0)
    assert np.all(tau + batch.zeta + batch.eta > 0)


def _sir_ode(beta, gamma, i0, t):
    sol = solve_ivp(lambda _, u: [-beta * u[0] * u[1], beta * u[0] * u[1] - gamma * u[1]], (0, t[-1]),
                    [1 - i0, i0], t_eval=t, rtol=1e-10, atol=1e-12)
    return sol.y


@pytest.mark.slow
def test_markov_sir_ensemble_matches_ode(markov_law):
    cfg = SimulationConfig(markov_law, 10_000, 500, 15.0, grid_step=0.1)
    ens = run_ensemble(cfg, 200, master_seed=77)
    S, I = _sir_ode(2.0, 1.0, 0.05, ens.t)
    assert np.max(np.abs(ens.mean["I_bar"] - I)) < 0.02
    assert np.max(np.abs(ens.mean["S_bar"] - S)) < 0.02
