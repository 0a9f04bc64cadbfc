from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

COLUMNS = ("t", "S_bar", "Ifrak_bar", "E_bar", "I_bar", "R_bar", "A")
COMPONENTS = COLUMNS[1:]


def fmt(x) -> str:
    """Stable text form of a float for CSV output."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".10g")


@dataclass
class Trajectory:
    """Scaled compartment values on a uniform time grid.

    ``A`` is the cumulative number of new infections: a count for stochastic
    runs (``N`` set), a population fraction for deterministic solutions.
    """

    t: np.ndarray
    S_bar: np.ndarray
    Ifrak_bar: np.ndarray
    E_bar: np.ndarray
    I_bar: np.ndarray
    R_bar: np.ndarray
    A: np.ndarray
    N: int | None = None
    I0: float = 0.0

    def __getitem__(self, name):
        return getattr(self, name)

    def stack(self):
        return np.vstack([getattr(self, c) for c in COMPONENTS])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in zip(*(getattr(self, c) for c in COLUMNS)):
                w.writerow([fmt(v) for v in row])
        return len(self.t)

    @classmethod
    def from_csv(cls, path, N=None, I0=0.0):
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls(*(np.atleast_1d(data[c]) for c in COLUMNS), N=N, I0=I0)

    def sup_distance(self, other: "Trajectory", components=("S_bar", "I_bar", "R_bar")):
        """Per-component sup-norm distance, on the grid points shared by both."""
        common, ia, ib = np.intersect1d(np.round(self.t, 9), np.round(other.t, 9), return_indices=True)
        return {c: float(np.max(np.abs(getattr(self, c)[ia] - getattr(other, c)[ib]))) for c in components}
