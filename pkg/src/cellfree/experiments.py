"""Experiment harness: seeded figure-family runs written as versioned tables.

Each experiment is a list of independent work units (one per seed, or per
seed and grid point). Units may run on a process pool; rows are always
written in unit order, so output files do not depend on scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from . import activity, allocation, link, powerctl
from .channel import build_power_spectrum, transforms_for
from .config import ConfigError, SystemConfig
from .scenario import build_scenario

SCHEMA_VERSION = 1
SCHEMES = ("psop-rpa", "apsp-rpa", "apsp-alloc", "lower-bound")

# seed-stream tags, so that every random consumer gets its own stream
_ALLOC, _APSP_RPA, _PSOP_RPA, _MC, _ACTIVE, _LINK, _DETECT = range(7)

COLUMNS = {
    "mse-vs-ka": ("seed", "num_active", "scheme", "value", "mc_error"),
    "mse-vs-angle": ("seed", "angle_spread_deg", "scheme", "value", "mc_error"),
    "mse-vs-delay": ("seed", "delay_spread_us", "scheme", "value", "mc_error"),
    "mse-cdf": ("seed", "grid", "scheme", "ue", "value", "mc_error"),
    "se-cdf": ("seed", "subcarrier", "num_active", "scheme", "value", "mc_error"),
    "detect": ("seed", "rho_scale", "detector", "num_active", "misses", "false_alarms"),
    "power-control": ("seed", "record", "index", "value"),
}

DEFAULT_GRIDS = {
    "mse-vs-ka": (5.0, 10.0, 15.0, 20.0),
    "mse-vs-angle": (8.0, 4.0, 2.0),
    "mse-vs-delay": (0.8, 0.4, 0.2),
    "mse-cdf": (0.7,),
    "se-cdf": (0.0,),
    "detect": (1e4, 1.0),
    "power-control": (0.0,),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines an experiment's output."""

    kind: str
    cfg: SystemConfig
    seeds: tuple
    grid: tuple = ()
    trials: int | None = None
    subcarrier: int | str | None = None
    epsilon: float | None = None
    max_iters: int = powerctl.DINKELBACH_MAX_ITERS
    num_active: int | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in COLUMNS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("seed list is empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct")
        object.__setattr__(self, "seeds", seeds)
        grid = tuple(float(g) for g in (self.grid or DEFAULT_GRIDS[self.kind]))
        if not grid:
            raise ConfigError("sweep grid is empty")
        object.__setattr__(self, "grid", grid)
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")
        sc = self.subcarrier
        if sc is not None and sc != "avg":
            if not 0 <= int(sc) < self.cfg.num_subcarriers:
                raise ConfigError("subcarrier out of range")

    @property
    def n_trials(self) -> int:
        return self.trials if self.trials is not None else self.cfg.mc_samples

    @property
    def active_count(self) -> int:
        if self.num_active is not None:
            return self.num_active
        return max(1, int(round(self.cfg.activation_prob * self.cfg.num_ues)))

    @property
    def tolerance(self) -> float:
        return self.epsilon if self.epsilon is not None else self.cfg.dinkelbach_tol

    def subcarriers(self) -> list[int]:
        if self.subcarrier == "avg":
            n = self.cfg.num_subcarriers
            return [i * n // 4 for i in range(4)]
        if self.subcarrier is None:
            return [self.cfg.power_control_subcarrier]
        return [int(self.subcarrier)]


def _stream(seed: int, tag: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *extra])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".10g")
    return str(v)


# --- shared setup ----------------------------------------------------------------

@dataclass
class _Setup:
    cfg: SystemConfig
    scn: object
    ps: object
    plans: dict  # scheme -> pilot sets


def _setup(cfg: SystemConfig, seed: int) -> _Setup:
    scn = build_scenario(cfg, seed)
    ps = build_power_spectrum(scn, cfg)
    n_sub, Z = cfg.num_subcarriers, cfg.pilot_symbols
    alloc = allocation.proposed_allocation(
        ps, scn.beta, n_sub, Z, cfg.num_clusters, cfg.overlap_threshold,
        cfg.apsp_set_size, _stream(seed, _ALLOC))
    plans = {
        "psop-rpa": allocation.rpa_psop(cfg.num_ues, n_sub, cfg.cp_length, Z,
                                        _stream(seed, _PSOP_RPA)).sets,
        "apsp-rpa": allocation.rpa_apsp(cfg.num_ues, n_sub, Z, cfg.apsp_set_size,
                                        _stream(seed, _APSP_RPA)).sets,
        "apsp-alloc": alloc.sets,
    }
    return _Setup(cfg, scn, ps, plans)


def _mse_rows(st: _Setup, seed: int, point, p_a: float | None, n_active: int | None,
              trials: int) -> list[tuple]:
    cfg = st.cfg
    model = allocation.MseModel(st.ps, st.scn.rho_p, cfg.pilot_symbols, cfg.num_subcarriers)
    rows = []
    for scheme in SCHEMES[:3]:
        est = allocation.expected_mse(model, st.plans[scheme], p_a if p_a is not None else 0.0,
                                      trials, _stream(seed, _MC), n_active=n_active)
        rows.append((seed, point, scheme, est.value, est.stderr))
    rows.append((seed, point, "lower-bound", allocation.mse_lower_bound(model, p_a), 0.0))
    return rows


# --- work units ------------------------------------------------------------------------

def _unit_mse_ka(spec: ExperimentSpec, seed: int) -> list[tuple]:
    st = _setup(spec.cfg, seed)
    rows = []
    for ka in spec.grid:
        ka = int(ka)
        if not 1 <= ka <= spec.cfg.num_ues:
            raise ConfigError(f"number of active UEs {ka} out of range")
        rows += _mse_rows(st, seed, ka, None, ka, spec.n_trials)
    return rows


def _unit_mse_spread(spec: ExperimentSpec, seed: int, point: float) -> list[tuple]:
    if spec.kind == "mse-vs-angle":
        cfg = spec.cfg.replace(angle_spread=math.radians(point))
    else:
        cfg = spec.cfg.replace(delay_spread=point * 1e-6)
    return _mse_rows(_setup(cfg, seed), seed, point, cfg.activation_prob, None, spec.n_trials)


def _unit_mse_cdf(spec: ExperimentSpec, seed: int, point: float) -> list[tuple]:
    cfg = spec.cfg.replace(ap_selection_threshold=point)
    st = _setup(cfg, seed)
    model = allocation.MseModel(st.ps, st.scn.rho_p, cfg.pilot_symbols, cfg.num_subcarriers)
    rows = []
    for scheme in SCHEMES[:3]:
        vals, counts = allocation.per_ue_mse(model, st.plans[scheme], spec.active_count,
                                             spec.n_trials, _stream(seed, _MC))
        for k in range(cfg.num_ues):
            rows.append((seed, point, scheme, k, vals[k], float(counts[k])))
    for k, v in enumerate(model.floor()):
        rows.append((seed, point, "lower-bound", k, v, 0.0))
    return rows


def _link_case(spec: ExperimentSpec, seed: int, subcarrier: int):
    cfg = spec.cfg
    st = _setup(cfg, seed)
    rng = _stream(seed, _ACTIVE)
    active = np.sort(rng.permutation(cfg.num_ues)[:spec.active_count])
    plan = allocation.PilotPlan(cfg.num_subcarriers, cfg.pilot_symbols, st.plans["apsp-alloc"])
    shifts = plan.draw_shifts(rng)[active]
    stats = link.estimate_link_statistics(
        st.ps, transforms_for(cfg), active, shifts, st.scn.rho_p, st.scn.rho_u,
        cfg.pilot_symbols, subcarrier, spec.n_trials, _stream(seed, _LINK, subcarrier),
        min_trials=min(spec.n_trials, link.MIN_STAT_TRIALS))
    return stats


def _unit_se_cdf(spec: ExperimentSpec, seed: int) -> list[tuple]:
    varpi = spec.cfg.overhead_factor
    per = {name: [] for name in ("lb-equal", "lb-maxmin", "genie-equal", "genie-maxmin")}
    subs = spec.subcarriers()
    ka = spec.active_count
    for s in subs:
        stats = _link_case(spec, seed, s)
        sol = powerctl.dinkelbach(stats, spec.tolerance, spec.max_iters)
        one = np.ones(stats.num_active)
        per["lb-equal"].append(link.se_lb(one, stats, varpi))
        per["lb-maxmin"].append(link.se_lb(sol.eta, stats, varpi))
        per["genie-equal"].append(link.se_genie(one, stats, varpi))
        per["genie-maxmin"].append(link.se_genie(sol.eta, stats, varpi))
    label = "avg" if spec.subcarrier == "avg" else subs[0]
    return [(seed, label, ka, name, float(np.min(np.mean(v, axis=0))), float("nan"))
            for name, v in per.items()]


def _unit_detect(spec: ExperimentSpec, seed: int) -> list[tuple]:
    cfg = spec.cfg
    st = _setup(cfg, seed)
    Z, n_sub = cfg.pilot_symbols, cfg.num_subcarriers
    rows = []
    for scale in spec.grid:
        rng = _stream(seed, _DETECT)
        patterns = activity.build_patterns(st.plans["apsp-alloc"], cfg.frame_slots, rng)
        active = np.sort(rng.permutation(cfg.num_ues)[:spec.active_count])
        rho = st.scn.rho_p * scale
        frames = activity.pilot_frames(st.ps, patterns, active, rho, Z, n_sub, rng)
        rep = activity.likelihood_detect(frames, patterns, st.ps, rho, Z,
                                         cfg.activation_prob, active)
        rows.append((seed, scale, "likelihood", active.size, rep.misses, rep.false_alarms))
        tau = activity.calibrate_threshold(st.ps, patterns, rho, Z, n_sub,
                                           trials=50, seed=rng)
        erep = activity.detect_active(rep.statistics, tau, active)
        rows.append((seed, scale, "energy", active.size, erep.misses, erep.false_alarms))
    return rows


def _unit_power_control(spec: ExperimentSpec, seed: int) -> list[tuple]:
    s = spec.subcarriers()[0]
    stats = _link_case(spec, seed, s)
    sol = powerctl.dinkelbach(stats, spec.tolerance, spec.max_iters)
    rows = []
    for i, (t, w) in enumerate(sol.trace):
        rows.append((seed, "trace-t", i, t))
        rows.append((seed, "trace-w", i, w))
    for k, e in zip(stats.active, sol.eta):
        rows.append((seed, "eta", int(k), e))
    rows.append((seed, "t-dinkelbach", 0, sol.t))
    rows.append((seed, "t-bisection", 0, powerctl.bisection_oracle(stats, 1e-6)))
    rows.append((seed, "iterations", 0, sol.iterations))
    return rows


def _units(spec: ExperimentSpec) -> list[tuple[Callable, tuple]]:
    if spec.kind == "mse-vs-ka":
        return [(_unit_mse_ka, (spec, s)) for s in spec.seeds]
    if spec.kind in ("mse-vs-angle", "mse-vs-delay"):
        return [(_unit_mse_spread, (spec, s, g)) for g in spec.grid for s in spec.seeds]
    if spec.kind == "mse-cdf":
        return [(_unit_mse_cdf, (spec, s, g)) for g in spec.grid for s in spec.seeds]
    if spec.kind == "se-cdf":
        return [(_unit_se_cdf, (spec, s)) for s in spec.seeds]
    if spec.kind == "detect":
        return [(_unit_detect, (spec, s)) for s in spec.seeds]
    return [(_unit_power_control, (spec, s)) for s in spec.seeds]


def _call(unit: tuple[Callable, tuple]) -> list[tuple]:
    fn, args = unit
    return fn(*args)


# --- output ------------------------------------------------------------------------------

def header_lines(spec: ExperimentSpec) -> list[str]:
    return [f"# schema: cellfree/{spec.kind}/v{SCHEMA_VERSION}",
            "\t".join(COLUMNS[spec.kind])]


def write_rows(fh: TextIO, rows: Iterable[Sequence]) -> None:
    for row in rows:
        fh.write("\t".join(_fmt(v) for v in row) + "\n")
    fh.flush()


def iter_results(spec: ExperimentSpec, workers: int = 1):
    """Yield each unit's rows in unit order."""
    units = _units(spec)
    if workers <= 1:
        for u in units:
            yield _call(u)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_call, units)


def run_experiment(spec: ExperimentSpec, out: str | Path | TextIO, workers: int = 1) -> int:
    """Run ``spec`` and write its table to ``out``; returns the number of rows."""
    if hasattr(out, "write"):
        return _run_into(spec, out, workers)
    path = Path(out)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            return _run_into(spec, fh, workers)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _run_into(spec: ExperimentSpec, fh: TextIO, workers: int) -> int:
    fh.write("\n".join(header_lines(spec)) + "\n")
    fh.flush()
    n = 0
    for rows in iter_results(spec, workers):
        write_rows(fh, rows)
        n += len(rows)
    return n


def read_table(path: str | Path) -> tuple[str, list[dict]]:
    """Parse a result file into its schema id and typed rows."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise ValueError(f"{path}: missing schema header")
    schema = lines[0][len("# schema: "):]
    cols = lines[1].split("\t")
    rows = []
    for line in lines[2:]:
        vals = []
        for v in line.split("\t"):
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(v)
        rows.append(dict(zip(cols, vals)))
    return schema, rows


def default_workers() -> int:
    return max(1, min(4, (os.cpu_count() or 1)))
