"""Command-line runner: ``epivolt run CONFIG`` and ``epivolt validate CONFIG``."""
from __future__ import annotations

import argparse
import functools
import hashlib
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .agent_sim import went_extinct, hitting_times
from .config import ExperimentConfig, load_config
from .covid import doubling_time_to_rho, r0_heatmap, write_heatmap
from .early_phase import estimate_growth_rate, extinction_probability, growth_summary, growth_window, solve_rho
from .ensemble import SimulationConfig, default_threads, map_replicates, run_ensemble
from .errors import ConfigError, InvalidParameterError, SolverError
from .trajectory import fmt
from .volterra import solve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _sim_config(cfg: ExperimentConfig, stop_at=None) -> SimulationConfig:
    p = cfg.params
    rho = solve_rho(cfg.law0 or cfg.law) if p["initial"] == "stationary" else None
    return SimulationConfig(cfg.law, cfg.N, cfg.I0_count, p["horizon"], law0=cfg.law0, grid_step=p["grid_step"],
                            merged=p["variant"] == "SEIR_SIR_merged", initial=p["initial"], rho=rho,
                            stop_at=stop_at)


def _on_grid(traj, grid):
    """Rows of ``traj`` at the times of ``grid`` (a coarser grid sharing its origin)."""
    idx = np.rint(grid / (traj.t[1] - traj.t[0])).astype(int)
    return idx[idx < traj.t.size]


def run_flln_compare(cfg, out: Path, threads):
    ens = run_ensemble(_sim_config(cfg), cfg.replicates, cfg.master_seed, threads)
    det = solve(cfg.spec, cfg.solver)
    ens.to_csv(out / "ensemble.csv")
    det.to_csv(out / "volterra.csv")
    idx = _on_grid(det, ens.t)
    lines = []
    for c in ("S_bar", "E_bar", "I_bar", "R_bar"):
        d = float(np.max(np.abs(ens.mean[c][: idx.size] - det[c][idx])))
        lines.append(f"{c} {fmt(d)}")
    (out / "sup_distance.txt").write_text("\n".join(lines) + "\n")
    return lines


def _early_record(traj, state, N, I0, lo, hi, alpha, epsilon, exponent):
    extinct = went_extinct(state, exponent)
    window = None if extinct else growth_window(traj, N, lo, hi)
    rate = estimate_growth_rate(traj, window, I0) if window else math.nan
    T_eps, T_alpha = hitting_times(state, epsilon, alpha)
    return extinct, rate, T_eps, T_alpha, np.log(I0 + traj.A)


def run_early_growth(cfg, out: Path, threads):
    p, N, I0 = cfg.params, cfg.N, cfg.I0_count
    stop = math.ceil(max(N ** p["window_hi"], N ** p["alpha"], p["epsilon"] * N)) + 1
    fn = functools.partial(_early_record, N=N, I0=I0, lo=p["window_lo"], hi=p["window_hi"], alpha=p["alpha"],
                           epsilon=p["epsilon"], exponent=p["extinction_exponent"])
    recs = map_replicates(_sim_config(cfg, stop_at=stop), cfg.replicates, cfg.master_seed, fn, threads)
    t = np.arange(recs[0][4].size) * p["grid_step"]
    with open(out / "log_curves.csv", "w") as fh:
        fh.write("t," + ",".join(f"r{r}" for r in range(len(recs))) + "\n")
        for k in range(t.size):
            fh.write(fmt(t[k]) + "," + ",".join(fmt(rec[4][k]) for rec in recs) + "\n")
    with open(out / "replicates.csv", "w") as fh:
        fh.write("replicate,extinct,rho_hat,T_eps,T_alpha\n")
        for r, (ext, rate, te, ta, _) in enumerate(recs):
            fh.write(f"{r},{int(ext)},{fmt(rate)},{fmt(te)},{fmt(ta)}\n")
    rho = solve_rho(cfg.law)
    alive = [rec for rec in recs if not rec[0]]
    rates = [rec[1] for rec in alive if np.isfinite(rec[1])]
    T = [rec[3] / math.log(N) for rec in alive]
    q = extinction_probability(cfg.law, cfg.law0, I0)
    summary = {
        "rho": rho,
        "median_rho_hat": float(np.median(rates)) if rates else math.nan,
        "median_T_alpha_over_logN": float(np.median(T)) if T else math.nan,
        "alpha_over_rho": p["alpha"] / rho,
        "extinct_fraction": 1.0 - len(alive) / len(recs),
        "q": q,
    }
    lines = [f"{k} = {fmt(v)}" for k, v in summary.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines


def run_heatmap(cfg, out: Path, threads):
    h = cfg.params
    rho = h["rho"] if h["rho"] is not None else doubling_time_to_rho(h["doubling_time"], h["halving"])
    alpha = np.linspace(0.0, 1.0, h["n_alpha"])
    pR = np.linspace(0.0, 1.0, h["n_pR"])
    values = r0_heatmap(rho, alpha, pR, h["peak_fraction"])
    write_heatmap(out / "heatmap.csv", alpha, pR, values)
    return [f"rho = {fmt(rho)}", f"R0 min = {fmt(np.nanmin(values))}", f"R0 max = {fmt(np.nanmax(values))}"]


def run_growth_summary(cfg, out: Path, threads):
    s = cfg.params
    gs = growth_summary(cfg.law, cfg.law0, s["I0"], s["susceptible"], s["observed_rho"])
    (out / "summary.txt").write_text(gs.to_text())
    (out / "summary.csv").write_text(gs.csv_header() + "\n" + gs.csv_row() + "\n")
    return gs.to_text().splitlines()


def run_solve_only(cfg, out: Path, threads):
    traj = solve(cfg.spec, cfg.solver)
    traj.to_csv(out / "volterra.csv")
    return [f"S_bar(horizon) = {fmt(traj.S_bar[-1])}", f"max I_bar = {fmt(traj.I_bar.max())}"]


PIPELINES = {
    "flln_compare": run_flln_compare,
    "early_growth": run_early_growth,
    "heatmap": run_heatmap,
    "growth_summary": run_growth_summary,
    "solve_only": run_solve_only,
}


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: Path):
    entries = []
    for f in sorted(directory.rglob("*")):
        if f.is_file() and f.name != "manifest.txt":
            with open(f, "rb") as fh:
                rows = sum(1 for _ in fh)
            entries.append(f"{f.relative_to(directory).as_posix()} {sha256(f)} {rows}")
    (directory / "manifest.txt").write_text("\n".join(entries) + "\n")
    return entries


def read_manifest(directory):
    directory = Path(directory)
    out = {}
    for line in (directory / "manifest.txt").read_text().splitlines():
        path, digest, rows = line.rsplit(" ", 2)
        out[path] = (digest, int(rows))
    return out


def _output_dir(cfg, config_path, override):
    if override:
        return Path(override)
    if cfg.output_dir:
        p = Path(cfg.output_dir)
        return p if p.is_absolute() else Path(os.path.normpath(Path(config_path).parent / p))
    return Path("out") / Path(config_path).stem


def run(config_path, out=None, threads=None, stream=None):
    """Run one experiment; returns the exit status."""
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"{config_path}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    target = _output_dir(cfg, config_path, out)
    if target.exists() and any(target.iterdir()) and not (target / "manifest.txt").exists():
        print(f"{target}: exists and was not written by epivolt; refusing to overwrite", file=sys.stderr)
        return EXIT_CONFIG
    threads = default_threads() if threads is None else threads
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".epivolt-", dir=target.parent))
    try:
        lines = PIPELINES[cfg.kind](cfg, stage, threads)
        write_manifest(stage)
    except (SolverError, InvalidParameterError, ArithmeticError, ValueError) as exc:
        shutil.rmtree(stage, ignore_errors=True)
        print(f"{config_path}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    os.replace(stage, target)
    for line in lines:
        print(line, file=stream)
    print(f"wrote {target}", file=stream)
    return EXIT_OK


def validate(config_path, stream=None):
    stream = stream or sys.stdout
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"{config_path}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{config_path}: ok (kind={cfg.kind})", file=stream)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="epivolt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides [output] dir)")
    p_run.add_argument("--threads", type=int, default=None, help="worker processes (default: available cores)")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        if args.threads is not None and args.threads < 1:
            parser.error("--threads must be >= 1")
        return run(args.config, args.out, args.threads)
    return validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
