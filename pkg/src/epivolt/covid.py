"""Reported/unreported Covid-19 parameterization and R0 heatmaps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .durations import BetaAffine, IndependentDurations
from .early_phase import reproduction_integrals
from .errors import InvalidParameterError
from .infectivity import InfectivityLaw, make_law_triangular, mixture

ZETA = BetaAffine(2.0, 2.0, shift=2.0, scale=2.0)
ETA_REPORTED = BetaAffine(2.0, 2.0, shift=3.0, scale=1.0)
ETA_UNREPORTED = BetaAffine(2.0, 2.0, shift=8.0, scale=4.0)
PEAK_FRACTION = 0.2


@dataclass(frozen=True)
class CovidScenario:
    p_R: float = 0.8
    alpha: float = 0.7
    peak_fraction: float = PEAK_FRACTION

    def __post_init__(self):
        if not 0 <= self.p_R <= 1:
            raise InvalidParameterError(f"p_R must lie in [0, 1], got {self.p_R}")
        if not 0 < self.alpha <= 1:
            raise InvalidParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.peak_fraction < 1:
            raise InvalidParameterError("peak_fraction must lie in (0, 1)")


def reported_law(peak_fraction=PEAK_FRACTION):
    return make_law_triangular(1.0, peak_fraction, IndependentDurations(ZETA, ETA_REPORTED))


def unreported_law(alpha, peak_fraction=PEAK_FRACTION):
    return make_law_triangular(alpha, peak_fraction, IndependentDurations(ZETA, ETA_UNREPORTED))


def build_covid_law(scenario: CovidScenario) -> InfectivityLaw:
    """Each individual is reported with probability p_R, else unreported."""
    law = mixture([reported_law(scenario.peak_fraction), unreported_law(scenario.alpha, scenario.peak_fraction)],
                  [scenario.p_R, 1.0 - scenario.p_R])
    return InfectivityLaw(law.branches, lambda_star=1.0, name="covid")


def doubling_time_to_rho(d, halving=False):
    if not d > 0:
        raise InvalidParameterError(f"doubling time must be positive, got {d}")
    rho = math.log(2.0) / d
    return -rho if halving else rho


def r0_heatmap(rho, alpha_grid, pR_grid, peak_fraction=PEAK_FRACTION):
    """R0 from growth rate ``rho`` for each (p_R, alpha); rows follow ``pR_grid``.

    The mean shape is linear in the branch weights, so the two branch
    integrals are computed once.  The corner with no infectivity at all
    (p_R = 0, alpha = 0) is undefined and reported as NaN.
    """
    alpha = np.asarray(alpha_grid, dtype=float)
    p = np.asarray(pR_grid, dtype=float)[:, None]
    if np.any((alpha < 0) | (alpha > 1)) or np.any((p < 0) | (p > 1)):
        raise InvalidParameterError("heatmap grids must lie within [0, 1]")
    ar, br = reproduction_integrals(reported_law(peak_fraction).mean_curve(), rho)
    au, bu = reproduction_integrals(unreported_law(1.0, peak_fraction).mean_curve(), rho)
    num = p * ar + (1 - p) * alpha[None, :] * au
    den = p * br + (1 - p) * alpha[None, :] * bu
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den != 0, num / den, np.nan)


def write_heatmap(path, alpha_grid, pR_grid, values):
    """First row: alpha grid; first column: p_R grid; 6 significant digits."""
    with open(path, "w") as fh:
        fh.write("p_R\\alpha," + ",".join(format(a, ".6g") for a in alpha_grid) + "\n")
        for p, row in zip(pR_grid, values):
            fh.write(format(p, ".6g") + "," + ",".join("nan" if np.isnan(v) else format(v, ".6g") for v in row) + "\n")
    return len(pR_grid) + 1


__all__ = ["CovidScenario", "build_covid_law", "doubling_time_to_rho", "r0_heatmap", "write_heatmap"]
