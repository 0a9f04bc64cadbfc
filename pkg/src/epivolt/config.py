"""Experiment configuration files (TOML): parsing and validation.

Every key is checked before anything runs.  Errors carry the line of the
offending key when it can be located in the source text.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import tomli

from .covid import CovidScenario, build_covid_law
from .durations import JointTable, duration_from_descriptor, IndependentDurations
from .errors import ConfigError, InvalidParameterError
from .infectivity import InfectivityLaw, make_law_constant, make_law_triangular, mixture, scale_law
from .volterra import VARIANTS, LimitModelSpec, SolverConfig

KINDS = ("flln_compare", "early_growth", "heatmap", "growth_summary", "solve_only")

SECTION_KEYS = {
    "": {"kind", "model", "ensemble", "output", "early", "heatmap", "summary"},
    "model": {"variant", "N", "I0", "I0_frac", "E0_frac", "horizon", "dt", "grid_step", "initial", "law", "law0",
              "immunity", "fp_tol", "fp_max_iter"},
    "ensemble": {"replicates", "master_seed"},
    "output": {"dir"},
    "early": {"window_lo", "window_hi", "alpha", "epsilon", "extinction_exponent"},
    "heatmap": {"rho", "doubling_time", "halving", "n_alpha", "n_pR", "peak_fraction"},
    "summary": {"susceptible", "observed_rho", "I0"},
}
NEEDS = {
    "flln_compare": ("model", "ensemble"),
    "early_growth": ("model", "ensemble"),
    "heatmap": ("heatmap",),
    "growth_summary": ("model",),
    "solve_only": ("model",),
}


class _Locator:
    """Maps (table path, key) to a 1-based line number in the TOML source."""

    header = re.compile(r"^\s*\[+\s*([^\]]+?)\s*\]+")
    assign = re.compile(r"^\s*([A-Za-z0-9_\-\"'.]+)\s*=")

    def __init__(self, text):
        self.index = {}
        table = ""
        for lineno, line in enumerate(text.splitlines(), 1):
            m = self.header.match(line)
            if m:
                table = m.group(1).replace('"', "")
                self.index.setdefault((table, None), lineno)
                continue
            m = self.assign.match(line)
            if m:
                key = m.group(1).strip("\"'")
                full = f"{table}.{key}" if table else key
                parent, _, leaf = full.rpartition(".")
                self.index.setdefault((parent, leaf), lineno)

    def line(self, path, key=None):
        while True:
            if (path, key) in self.index:
                return self.index[(path, key)]
            if key is not None and (path, None) in self.index:
                return self.index[(path, None)]
            if not path:
                return None
            path, _, key = path.rpartition(".")


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict
    output_dir: str | None
    law: InfectivityLaw | None = None
    law0: InfectivityLaw | None = None
    spec: LimitModelSpec | None = None
    solver: SolverConfig | None = None
    N: int | None = None
    I0_count: int | None = None
    replicates: int | None = None
    master_seed: int | None = None
    params: dict = field(default_factory=dict)

    @property
    def model(self):
        return self.raw.get("model", {})


class _Reader:
    def __init__(self, data, locator):
        self.data, self.loc = data, locator

    def fail(self, msg, path, key=None):
        raise ConfigError(msg, self.loc.line(path, key))

    def table(self, path, required=True):
        node = self.data
        for part in path.split(".") if path else []:
            if part not in node:
                if required:
                    self.fail(f"missing table [{path}]", path.rpartition(".")[0], part)
                return None
            node = node[part]
            if not isinstance(node, dict):
                self.fail(f"[{path}] must be a table", path)
        return node

    def check_keys(self, node, path, allowed):
        for key in node:
            if key not in allowed:
                self.fail(f"unknown key {key!r} in [{path or 'top level'}]; allowed: {sorted(allowed)}", path, key)

    def get(self, node, path, key, kind, default=None, required=False):
        if key not in node:
            if required:
                self.fail(f"missing required key {key!r} in [{path or 'top level'}]", path)
            return default
        v = node[key]
        ok = {
            "int": isinstance(v, int) and not isinstance(v, bool),
            "float": isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
            "bool": isinstance(v, bool),
            "str": isinstance(v, str),
            "table": isinstance(v, dict),
            "list": isinstance(v, list),
        }[kind]
        if not ok:
            self.fail(f"{key!r} must be of type {kind}, got {v!r}", path, key)
        return float(v) if kind == "float" else v


DURATION_KEYS = {"deterministic": {"value"}, "exponential": {"rate"}, "beta_affine": {"a", "b", "shift", "scale"},
                 "joint_table": {"zetas", "etas", "probs"}}


def _duration(r: _Reader, node, path, allow_joint=False):
    if not isinstance(node, dict):
        r.fail("a duration law must be a table with a 'dist' key", path)
    dist = r.get(node, path, "dist", "str", required=True)
    if dist not in DURATION_KEYS or (dist == "joint_table" and not allow_joint):
        r.fail(f"unknown duration law {dist!r}", path, "dist")
    r.check_keys(node, path, DURATION_KEYS[dist] | {"dist"})
    try:
        if dist == "joint_table":
            return JointTable(*(tuple(map(float, node[k])) for k in ("zetas", "etas", "probs")))
        return duration_from_descriptor(node)
    except (KeyError, TypeError) as exc:
        r.fail(f"incomplete duration law: {exc}", path)
    except InvalidParameterError as exc:
        r.fail(str(exc), path)


def _pair(r, node, path, first, second):
    if "durations" in node:
        if first in node or second in node:
            r.fail(f"give either 'durations' or '{first}'/'{second}', not both", path, "durations")
        return _duration(r, node["durations"], f"{path}.durations", allow_joint=True)
    for key in (first, second):
        if key not in node:
            r.fail(f"missing duration law {key!r}", path)
    return IndependentDurations(_duration(r, node[first], f"{path}.{first}"),
                                _duration(r, node[second], f"{path}.{second}"))


LAW_KEYS = {
    "constant": {"beta", "exposed", "infectious", "durations"},
    "triangular": {"alpha_scale", "peak_fraction", "zeta", "eta", "durations"},
    "covid": {"p_R", "alpha", "peak_fraction"},
    "mixture": {"components"},
}


def parse_law(r: _Reader, node, path) -> InfectivityLaw:
    if not isinstance(node, dict):
        r.fail("a law must be a table", path)
    kind = r.get(node, path, "kind", "str", required=True)
    if kind not in LAW_KEYS:
        r.fail(f"unknown law kind {kind!r}; expected one of {sorted(LAW_KEYS)}", path, "kind")
    r.check_keys(node, path, LAW_KEYS[kind] | {"kind", "contact_scale"})
    scale = r.get(node, path, "contact_scale", "float", 1.0)
    try:
        if kind == "constant":
            beta = r.get(node, path, "beta", "float", required=True)
            law = make_law_constant(beta, _pair(r, node, path, "exposed", "infectious"))
        elif kind == "triangular":
            law = make_law_triangular(r.get(node, path, "alpha_scale", "float", 1.0),
                                      r.get(node, path, "peak_fraction", "float", 0.2),
                                      _pair(r, node, path, "zeta", "eta"))
        elif kind == "covid":
            scen = CovidScenario(**{k: r.get(node, path, k, "float") for k in ("p_R", "alpha", "peak_fraction")
                                    if k in node})
            law = build_covid_law(scen)
        else:
            comps = r.get(node, path, "components", "list", required=True)
            if not comps:
                r.fail("a mixture needs at least one component", path, "components")
            laws, weights = [], []
            for i, c in enumerate(comps):
                cpath = f"{path}.components"
                if not isinstance(c, dict) or set(c) - {"weight", "law"} or "law" not in c or "weight" not in c:
                    r.fail(f"component {i} must be a table with keys 'weight' and 'law'", cpath)
                weights.append(r.get(c, cpath, "weight", "float"))
                laws.append(parse_law(r, c["law"], f"{cpath}.law"))
            law = mixture(laws, weights)
        return scale_law(law, scale) if scale != 1.0 else law
    except InvalidParameterError as exc:
        r.fail(str(exc), path, "kind")


def _model(r: _Reader, cfg: ExperimentConfig, need_counts: bool):
    path = "model"
    m = r.table(path)
    r.check_keys(m, path, SECTION_KEYS[path])
    cfg.law = parse_law(r, r.get(m, path, "law", "table", required=True), "model.law")
    if "law0" in m:
        cfg.law0 = parse_law(r, r.get(m, path, "law0", "table"), "model.law0")
    variant = r.get(m, path, "variant", "str", "SEIR_SIR_merged")
    if variant not in VARIANTS:
        r.fail(f"unknown variant {variant!r}; expected one of {VARIANTS}", path, "variant")
    horizon = r.get(m, path, "horizon", "float", required=True)
    if not horizon > 0:
        r.fail("horizon must be positive", path, "horizon")
    N = r.get(m, path, "N", "int")
    if N is not None and N < 2:
        r.fail("N must be >= 2", path, "N")
    if "I0" in m and "I0_frac" in m:
        r.fail("give either I0 (a count) or I0_frac, not both", path, "I0")
    if "I0" in m:
        I0 = r.get(m, path, "I0", "int")
        if N is None:
            r.fail("I0 as a count needs N", path, "I0")
        frac = I0 / N
    else:
        frac = r.get(m, path, "I0_frac", "float", required=True)
        I0 = round(frac * N) if N is not None else None
    E0 = r.get(m, path, "E0_frac", "float", 0.0)
    if not 0 < frac + E0 < 1 or frac < 0 or E0 < 0:
        key = "I0" if "I0" in m else "I0_frac"
        r.fail(f"initial infected fraction must satisfy 0 < E0 + I0 < 1 with both nonnegative "
               f"(got E0={E0}, I0={frac})", path, key)
    if need_counts:
        if N is None:
            r.fail("this experiment needs the population size N", path)
        if not 0 < I0 < N:
            r.fail(f"need 0 < I0 < N for the stochastic model, got I0={I0}", path, "I0" if "I0" in m else "I0_frac")
        if variant not in ("SEIR", "SEIR_SIR_merged"):
            r.fail("stochastic runs support only SEIR and SEIR_SIR_merged", path, "variant")
        if E0 != 0:
            r.fail("stochastic runs start from infected individuals only; E0_frac must be 0", path, "E0_frac")
    immunity = None
    if variant == "SIRS":
        if "immunity" not in m:
            r.fail("SIRS needs an [model.immunity] duration law", path, "variant")
        immunity = _duration(r, m["immunity"], "model.immunity")
    elif "immunity" in m:
        r.fail("immunity is only used by the SIRS variant", path, "immunity")
    initial = r.get(m, path, "initial", "str", "fresh")
    if initial not in ("fresh", "stationary"):
        r.fail("initial must be 'fresh' or 'stationary'", path, "initial")
    dt = r.get(m, path, "dt", "float", 0.01)
    grid_step = r.get(m, path, "grid_step", "float", 0.1)
    if not dt > 0 or not grid_step > 0:
        r.fail("dt and grid_step must be positive", path, "dt" if not dt > 0 else "grid_step")
    ratio = grid_step / dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        r.fail("grid_step must be an integer multiple of dt", path, "grid_step")
    try:
        cfg.spec = LimitModelSpec(variant, cfg.law, I0=frac, E0=E0, law0=cfg.law0, immunity=immunity)
        cfg.solver = SolverConfig(dt, horizon, r.get(m, path, "fp_tol", "float", 1e-10),
                                  r.get(m, path, "fp_max_iter", "int", 200))
    except InvalidParameterError as exc:
        r.fail(str(exc), path)
    cfg.N, cfg.I0_count = N, I0
    cfg.params.update(horizon=horizon, grid_step=grid_step, initial=initial, variant=variant)


def _laws_only(r: _Reader, cfg: ExperimentConfig):
    m = r.table("model")
    r.check_keys(m, "model", {"law", "law0"})
    cfg.law = parse_law(r, r.get(m, "model", "law", "table", required=True), "model.law")
    if "law0" in m:
        cfg.law0 = parse_law(r, r.get(m, "model", "law0", "table"), "model.law0")


def _ensemble(r, cfg):
    path = "ensemble"
    e = r.table(path)
    r.check_keys(e, path, SECTION_KEYS[path])
    cfg.replicates = r.get(e, path, "replicates", "int", required=True)
    if cfg.replicates < 1:
        r.fail("replicates must be >= 1", path, "replicates")
    if "master_seed" not in e:
        r.fail("missing master_seed: every stochastic experiment must be seeded for reproducibility", path)
    cfg.master_seed = r.get(e, path, "master_seed", "int")
    if cfg.master_seed < 0:
        r.fail("master_seed must be nonnegative", path, "master_seed")


def _optional_section(r, cfg, name, spec):
    node = r.table(name, required=False) or {}
    r.check_keys(node, name, SECTION_KEYS[name])
    out = {}
    for key, (kind, default) in spec.items():
        out[key] = r.get(node, name, key, kind, default)
    return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    text = raw_bytes.decode("utf-8", errors="replace")
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None) from exc
    return parse_config(data, text)


def parse_config(data: dict, text: str = "") -> ExperimentConfig:
    r = _Reader(data, _Locator(text))
    r.check_keys(data, "", SECTION_KEYS[""])
    kind = r.get(data, "", "kind", "str", required=True)
    if kind not in KINDS:
        r.fail(f"unknown experiment kind {kind!r}; expected one of {KINDS}", "", "kind")
    used = set(NEEDS[kind]) | set(_SECTION_FOR_KIND.get(kind, ())) | {"kind", "output"}
    for name in SECTION_KEYS[""]:
        if name in data and name not in used:
            r.fail(f"section [{name}] is not used by kind {kind!r}", name)
    for section in NEEDS[kind]:
        r.table(section)
    out = r.table("output", required=False) or {}
    r.check_keys(out, "output", SECTION_KEYS["output"])
    cfg = ExperimentConfig(kind, data, r.get(out, "output", "dir", "str"))
    if kind == "growth_summary":
        _laws_only(r, cfg)
    elif "model" in NEEDS[kind]:
        _model(r, cfg, need_counts=kind in ("flln_compare", "early_growth"))
    if "ensemble" in NEEDS[kind]:
        _ensemble(r, cfg)
    if kind == "early_growth":
        cfg.params.update(_optional_section(r, cfg, "early", {
            "window_lo": ("float", 0.3), "window_hi": ("float", 0.7), "alpha": ("float", 0.5),
            "epsilon": ("float", 0.5), "extinction_exponent": ("float", 0.25)}))
        p = cfg.params
        if not 0 < p["window_lo"] < p["window_hi"] < 1:
            r.fail("need 0 < window_lo < window_hi < 1", "early", "window_lo")
        for key in ("alpha", "epsilon", "extinction_exponent"):
            if not 0 < p[key] < 1:
                r.fail(f"{key} must lie in (0, 1)", "early", key)
    elif kind == "heatmap":
        h = _optional_section(r, cfg, "heatmap", {
            "rho": ("float", None), "doubling_time": ("float", None), "halving": ("bool", False),
            "n_alpha": ("int", 101), "n_pR": ("int", 101), "peak_fraction": ("float", 0.2)})
        if (h["rho"] is None) == (h["doubling_time"] is None):
            r.fail("give exactly one of rho and doubling_time", "heatmap")
        if h["doubling_time"] is not None and not h["doubling_time"] > 0:
            r.fail("doubling_time must be positive", "heatmap", "doubling_time")
        if h["n_alpha"] < 2 or h["n_pR"] < 2:
            r.fail("heatmap grids need at least 2 points", "heatmap", "n_alpha" if h["n_alpha"] < 2 else "n_pR")
        if not 0 < h["peak_fraction"] < 1:
            r.fail("peak_fraction must lie in (0, 1)", "heatmap", "peak_fraction")
        cfg.params.update(h)
    elif kind == "growth_summary":
        s = _optional_section(r, cfg, "summary", {
            "susceptible": ("float", 1.0), "observed_rho": ("float", None), "I0": ("int", 1)})
        if not 0 < s["susceptible"] <= 1:
            r.fail("susceptible must lie in (0, 1]", "summary", "susceptible")
        if s["I0"] < 1:
            r.fail("I0 must be >= 1", "summary", "I0")
        cfg.params.update(s)
    return cfg


_SECTION_FOR_KIND = {"early_growth": ("early",), "heatmap": ("heatmap",), "growth_summary": ("summary",)}
