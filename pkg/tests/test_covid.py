import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epivolt.covid import (CovidScenario, build_covid_law, doubling_time_to_rho, r0_heatmap, reported_law,
                           unreported_law, write_heatmap)
from epivolt.early_phase import R0_from_growth, compute_R0
from epivolt.errors import InvalidParameterError

GRID = np.linspace(0.0, 1.0, 21)


@pytest.mark.parametrize("d, halving, lo, hi, tol", [
    (2.5, False, 3.0, 6.0, 0.2),
    (11.6, True, 0.6, 0.76, 0.03),
    (21.4, False, 1.15, 1.28, 0.03),
])
def test_heatmap_within_band(d, halving, lo, hi, tol):
    values = r0_heatmap(doubling_time_to_rho(d, halving), GRID, GRID)
    assert lo - tol <= np.nanmin(values) <= np.nanmax(values) <= hi + tol


# corners (pure reported, pure unreported) from brute-force Monte-Carlo over
# 2e5 (zeta, eta) draws with per-sample trapezoid integration on a 0.005 grid
@pytest.mark.parametrize("d, halving, reported, unreported", [
    (2.5, False, 3.29239, 5.90328),
    (11.6, True, 0.767447, 0.650910),
    (21.4, False, 1.15290, 1.25239),
])
def test_heatmap_corners_against_monte_carlo(d, halving, reported, unreported):
    values = r0_heatmap(doubling_time_to_rho(d, halving), [1.0], [1.0, 0.0])
    assert values[0, 0] == pytest.approx(reported, rel=2e-3)
    assert values[1, 0] == pytest.approx(unreported, rel=2e-3)


def test_heatmap_matches_direct_evaluation():
    rho = 0.1
    values = r0_heatmap(rho, [0.3, 1.0], [0.0, 0.5, 1.0])
    for i, p in enumerate([0.0, 0.5, 1.0]):
        for j, a in enumerate([0.3, 1.0]):
            direct = R0_from_growth(build_covid_law(CovidScenario(p, a)), rho).R0
            assert values[i, j] == pytest.approx(direct, rel=1e-10)


def test_heatmap_undefined_corner():
    values = r0_heatmap(0.1, [0.0, 0.5], [0.0, 0.5])
    assert np.isnan(values[0, 0])
    assert np.all(np.isfinite(values.ravel()[1:]))


@pytest.mark.parametrize("rho", [0.277, 0.032, -0.06])
def test_heatmap_monotone(rho):
    values = r0_heatmap(rho, GRID[1:], GRID)
    sign = 1.0 if rho > 0 else -1.0
    assert np.all(sign * np.diff(values, axis=1) >= -1e-12)  # alpha
    assert np.all(sign * np.diff(values, axis=0) <= 1e-12)  # p_R


def test_heatmap_rejects_grid_outside_unit_square():
    with pytest.raises(InvalidParameterError):
        r0_heatmap(0.1, [0.0, 1.5], [0.5])


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.0, 1.0), alpha=st.floats(0.01, 1.0))
def test_R0_formula(p, alpha):
    law = build_covid_law(CovidScenario(p, alpha))
    assert compute_R0(law) == pytest.approx(p * 1.75 + (1 - p) * alpha * 5.0, rel=1e-8, abs=1e-12)


def test_compact_support():
    law = build_covid_law(CovidScenario())
    t = np.linspace(16.0, 30.0, 200)
    assert np.all(law.mean(t) == 0.0)
    assert law.mean(np.array([15.9]))[0] > 0


def test_reported_only_support():
    law = build_covid_law(CovidScenario(p_R=1.0, alpha=0.3))
    t = np.linspace(0, 20, 2001)
    m = law.mean(t)
    assert np.all(m[(t < 2) | (t >= 8)] == 0.0)


def test_mixture_mean_consistency():
    law = build_covid_law(CovidScenario(0.8, 0.7))
    t = np.linspace(0, 16, 321)
    direct = 0.8 * reported_law().mean(t) + 0.2 * unreported_law(0.7).mean(t)
    assert np.allclose(law.mean(t), direct, atol=1e-12)


def test_scenario_sampling_ranges():
    law = build_covid_law(CovidScenario())
    batch = law.sample_batch(np.random.default_rng(0), 20_000)
    assert np.all((batch.zeta >= 2) & (batch.zeta <= 4))
    rep = batch.branch == 0
    assert np.all((batch.eta[rep] >= 3) & (batch.eta[rep] <= 4))
    assert np.all((batch.eta[~rep] >= 8) & (batch.eta[~rep] <= 12))
    assert abs(rep.mean() - 0.8) < 0.01
    assert law.lambda_star == 1.0


@pytest.mark.parametrize("d, halving, expected", [
    (2.5, False, 0.27726), (11.6, True, -0.05976), (21.4, False, 0.03239),
])
def test_doubling_time(d, halving, expected):
    assert doubling_time_to_rho(d, halving) == pytest.approx(expected, abs=1e-5)
    assert doubling_time_to_rho(d, halving) == (-1 if halving else 1) * math.log(2) / d


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_doubling_time_rejects_nonpositive(bad):
    with pytest.raises(InvalidParameterError):
        doubling_time_to_rho(bad)


@pytest.mark.parametrize("kwargs", [
    {"p_R": 1.2}, {"p_R": -0.1}, {"alpha": 0.0}, {"alpha": 1.5}, {"peak_fraction": 1.0},
])
def test_scenario_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        CovidScenario(**kwargs)


def test_write_heatmap_format(tmp_path):
    alpha, pR = np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0])
    values = r0_heatmap(0.277, alpha, pR)
    rows = write_heatmap(tmp_path / "h.csv", alpha, pR, values)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert rows == len(lines) == 3
    assert lines[0] == "p_R\\alpha,0,0.5,1"
    assert lines[1].split(",")[1] == "nan"
    cells = lines[2].split(",")
    assert cells[0] == "1" and len(cells) == 4
    assert float(cells[2]) == pytest.approx(values[1, 1], rel=1e-5)
    assert all(len(c.replace(".", "").lstrip("0")) <= 6 for c in cells[1:])
