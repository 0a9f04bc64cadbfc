"""Ensemble mean vs deterministic limit at N = 1e4 and N = 1e3, plus envelope-width scaling.

    python scripts/flln_N10000.py [--threads K]
"""
import argparse
import csv
import math
from pathlib import Path

import numpy as np

from epivolt.cli import run

ROOT = Path(__file__).resolve().parents[1]


def _columns(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    dirs = {}
    for name in ("flln_N10000", "flln_N1000"):
        dirs[name] = ROOT / "out" / name
        if run(ROOT / "configs" / f"{name}.toml", dirs[name], args.threads) != 0:
            raise SystemExit(f"{name} failed")
    det = _columns(dirs["flln_N10000"] / "volterra.csv")
    big = _columns(dirs["flln_N10000"] / "ensemble.csv")
    small = _columns(dirs["flln_N1000"] / "ensemble.csv")
    t_peak = det["t"][np.argmax(det["I_bar"])]
    k = int(np.argmin(np.abs(big["t"] - t_peak)))
    widths = [e["p97.5_I_bar"][k] - e["p2.5_I_bar"][k] for e in (small, big)]
    print(f"I_bar peak at t = {t_peak:.2f}")
    print(f"95% envelope widths: N=1e3 {widths[0]:.4f}, N=1e4 {widths[1]:.4f}")
    print(f"ratio {widths[0] / widths[1]:.3f} (sqrt(10) = {math.sqrt(10):.3f})")


if __name__ == "__main__":
    main()
