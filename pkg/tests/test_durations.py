import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from epivolt.durations import (BetaAffine, Deterministic, Exponential, IndependentDurations, JointTable,
                               duration_from_descriptor, sum_cdf)
from epivolt.errors import InvalidParameterError

LAWS = [Deterministic(1.5), Exponential(0.7), BetaAffine(2, 2, 2, 2), BetaAffine(0.5, 3.0, 1.0, 4.0)]


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_cdf_matches_samples(law, rng):
    x = law.sample(rng, 200_000)
    grid = np.linspace(law.lo - 0.5, min(law.hi, law.lo + 8) + 0.5, 41)
    emp = (x[:, None] <= grid[None, :]).mean(axis=0)
    assert np.max(np.abs(emp - law.cdf(grid))) < 0.005
    assert x.mean() == pytest.approx(law.mean, rel=0.01)


@pytest.mark.parametrize("law", LAWS[1:], ids=lambda l: type(l).__name__)
@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_int_cdf_is_integral_of_cdf(law):
    for x in (0.3, 2.5, 3.7, 9.0):
        ref, _ = integrate.quad(law.cdf, law.lo, max(x, law.lo), epsabs=1e-13, epsrel=1e-13, limit=500)
        assert law.int_cdf(x) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: type(l).__name__)
def test_nodes_integrate_smooth_functions(law):
    x, w = law.nodes()
    assert w.sum() == pytest.approx(1.0)
    assert w @ np.exp(-0.3 * x) == pytest.approx(float(law.laplace(0.3)), rel=1e-10)


def test_beta_laplace_against_scipy():
    law = BetaAffine(2, 2, 3, 1)
    ref, _ = integrate.quad(lambda x: np.exp(-0.8 * x) * stats.beta.pdf(x - 3, 2, 2), 3, 4)
    assert float(law.laplace(0.8)) == pytest.approx(ref, rel=1e-12)


def test_sum_of_exponentials_closed_form():
    t = np.array([0.0, 0.5, 1.0, 3.0])
    assert np.allclose(sum_cdf(Exponential(1.0), Exponential(2.0), t), 1 - 2 * np.exp(-t) + np.exp(-2 * t))
    assert np.allclose(sum_cdf(Exponential(1.0), Exponential(1.0), t), stats.gamma.cdf(t, 2))


def test_sum_cdf_quadrature_matches_convolution():
    z, e = BetaAffine(2, 2, 2, 2), BetaAffine(2, 2, 3, 1)
    for t in (5.5, 6.0, 7.2):
        kinks = [y for y in (t - 4, t - 2) if 3 < y < 4]
        ref, _ = integrate.quad(lambda y: z.cdf(t - y) * stats.beta.pdf(y - 3, 2, 2), 3, 4, points=kinks or None,
                                epsabs=1e-13)
        # node quadrature across the kinks of the inner c.d.f. is accurate to ~1e-7
        assert float(sum_cdf(z, e, t)) == pytest.approx(ref, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.1, 5.0), c=st.floats(0.1, 3.0))
def test_scaled_law_is_law_of_scaled_variable(rate, c):
    law = Exponential(rate)
    t = np.linspace(0, 5, 11)
    assert np.allclose(law.scaled(c).cdf(t), law.cdf(t / c))


def test_independent_pair_total_cdf_deterministic():
    pair = IndependentDurations(Deterministic(1.0), Deterministic(1.0))
    t = np.array([0.5, 1.0, 1.99, 2.0, 3.0])
    assert list(pair.G(t)) == [0, 1, 1, 1, 1]
    assert list(pair.total_cdf(t)) == [0, 0, 0, 1, 1]


def test_joint_table_validation():
    with pytest.raises(InvalidParameterError):
        JointTable((1.0, 2.0), (1.0,), (0.5, 0.5))
    with pytest.raises(InvalidParameterError):
        JointTable((1.0, 2.0), (1.0, 1.0), (0.5, 0.6))


def test_descriptors_round_trip():
    for law in LAWS:
        assert duration_from_descriptor(law.descriptor()) == law
    with pytest.raises(InvalidParameterError):
        duration_from_descriptor({"dist": "weibull"})


@pytest.mark.parametrize("bad", [lambda: Exponential(0.0), lambda: Deterministic(-1.0),
                                 lambda: BetaAffine(0.0, 1.0), lambda: BetaAffine(2, 2, scale=0.0)])
def test_invalid_parameters(bad):
    with pytest.raises(InvalidParameterError):
        bad()
