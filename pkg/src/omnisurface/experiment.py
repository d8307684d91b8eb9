"""Monte-Carlo sweeps and convergence traces written as CSV.

This is the only place where decibel values are converted: SINR targets in
dB, the power budget in dBW and noise powers in dBm are turned into linear
units before any solver sees them.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channels import GENERATOR_NAME, sample_channels, trial_seed
from .model import Geometry, Status, SystemConfig
from .modes import SCHEMES, solve_with_mode

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SCHEMA_VERSION", "AXES", "PROFILES", "ConfigError", "ExperimentSpec", "db_to_linear",
    "dbm_to_watts", "system_from_dict", "spec_from_dict", "load_config", "run_experiment",
    "convergence_trace", "trimmed_summary",
]

SCHEMA_VERSION = 1
AXES = ("sinr_target", "n_elements", "power_budget", "user_ratio")
PROFILES = {"desk": {"n_elements": 64, "trials": 20}, "paper": {"n_elements": 128, "trials": 100}}
# schemes are solved in this order inside a trial so that warm starts are available
_SOLVE_ORDER = ("NONE", "IRS", "SD", "TD", "random-EED", "EED", "UED")
_WARM = {"EED": ("SD", "random-EED"), "UED": ("EED",)}
COLUMNS = ("axis", "axis_value", "scheme", "trial", "seed", "objective", "iterations",
           "status", "wall_time")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.

    Axis values are in presentation units: dB for ``sinr_target``, dBW for
    ``power_budget``, element counts for ``n_elements`` and ``(K_r, K_t)``
    pairs for ``user_ratio``.
    """

    axis: str
    values: tuple
    trials: int = 20
    schemes: tuple = ("UED", "EED", "SD")
    base: SystemConfig = field(default_factory=SystemConfig)
    problem: str = "power"
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; choose from {AXES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.problem not in ("power", "rate"):
            raise ConfigError("problem must be 'power' or 'rate'")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if not self.values:
            raise ConfigError("axis values must not be empty")
        if self.axis == "user_ratio":
            vals = tuple(tuple(int(x) for x in v) for v in self.values)
            if any(len(v) != 2 or min(v) < 0 or sum(v) < 1 for v in vals):
                raise ConfigError("user_ratio values must be (K_r, K_t) pairs")
        else:
            vals = tuple(float(v) for v in self.values)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("axis values must be strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "schemes", tuple(self.schemes))

    def point_config(self, value) -> SystemConfig:
        """Base config with the axis set to ``value`` (converted to linear units)."""
        if self.axis == "sinr_target":
            return replace(self.base, sinr_target=db_to_linear(value),
                           sinr_targets_r=None, sinr_targets_t=None)
        if self.axis == "power_budget":
            return replace(self.base, power_budget=db_to_linear(value))
        if self.axis == "n_elements":
            return replace(self.base, n_elements=int(value))
        return self.base.with_users(*value)


# -- configuration ---------------------------------------------------------------

_SYSTEM_KEYS = {"n_tx", "n_elements", "k_r", "k_t", "pathloss_bs_ios", "pathloss_ios_user",
                "pathloss_bs_user"}


def system_from_dict(d: dict) -> SystemConfig:
    """SystemConfig from presentation units (dB, dBW, dBm, meters)."""
    d = dict(d)
    kw = {k: d.pop(k) for k in list(d) if k in _SYSTEM_KEYS}
    if "noise_dbm" in d:
        kw["noise_r"] = kw["noise_t"] = dbm_to_watts(float(d.pop("noise_dbm")))
    if "noise_r_dbm" in d:
        kw["noise_r"] = dbm_to_watts(float(d.pop("noise_r_dbm")))
    if "noise_t_dbm" in d:
        kw["noise_t"] = dbm_to_watts(float(d.pop("noise_t_dbm")))
    if "sinr_db" in d:
        kw["sinr_target"] = db_to_linear(float(d.pop("sinr_db")))
    if "power_dbw" in d:
        kw["power_budget"] = db_to_linear(float(d.pop("power_dbw")))
    if "ref_gain_db" in d:
        kw["ref_gain"] = db_to_linear(float(d.pop("ref_gain_db")))
    geom = {k: d.pop(k) for k in ("d_bi", "d_iu", "angles") if k in d}
    if "angles" in geom and geom["angles"] is not None:
        geom["angles"] = tuple(float(a) for a in geom["angles"])
    if geom:
        kw["geometry"] = Geometry(**geom)
    if d:
        raise ConfigError(f"unknown system keys: {sorted(d)}")
    try:
        return SystemConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def spec_from_dict(d: dict, profile: Optional[str] = None, seed: Optional[int] = None,
                   schemes: Optional[tuple] = None, out: Optional[str] = None) -> ExperimentSpec:
    """Build a spec from a config dict.

    A profile fixes the element count and the number of trials; ``seed``,
    ``schemes`` and ``out`` override the file when given.
    """
    d = dict(d)
    system = dict(d.pop("system", {}))
    trials = d.pop("trials", None)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        system["n_elements"] = PROFILES[profile]["n_elements"]
        trials = PROFILES[profile]["trials"]
    axis = d.pop("axis", None)
    values = d.pop("values", None)
    if axis is None or values is None:
        raise ConfigError("config needs 'axis' and 'values'")
    problem = d.pop("problem", "rate" if axis == "power_budget" else "power")
    kw = dict(axis=axis, values=tuple(values), trials=int(trials or 20),
              schemes=tuple(schemes or d.pop("schemes", ("UED", "EED", "SD"))),
              base=system_from_dict(system), problem=problem,
              seed=int(seed if seed is not None else d.pop("seed", 0)),
              out=out or d.pop("out", None), workers=int(d.pop("workers", 1)))
    d.pop("schemes", None)
    d.pop("seed", None)
    d.pop("out", None)
    if d:
        raise ConfigError(f"unknown config keys: {sorted(d)}")
    return ExperimentSpec(**kw)


def load_config(path) -> dict:
    """Read a JSON or TOML file into a dict."""
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc


# -- running -----------------------------------------------------------------------

def _solve_trial(args):
    """All schemes of one (axis value, trial) on a shared channel draw."""
    spec, value, trial = args
    seed = trial_seed(spec.seed, trial)
    cfg = replace(spec.point_config(value), seed=seed)
    channels = sample_channels(cfg)
    done, rows = {}, {}
    wanted = set(spec.schemes)
    for scheme in _SOLVE_ORDER:
        needed = scheme in wanted or any(scheme in _WARM.get(s, ()) and s in wanted
                                         for s in wanted)
        if not needed:
            continue
        warm = [done[s] for s in _WARM.get(scheme, ()) if s in done]
        t0 = time.perf_counter()
        rep = solve_with_mode(spec.problem, channels, cfg, scheme, warm=warm)
        wall = time.perf_counter() - t0
        done[scheme] = rep
        if scheme in wanted:
            rows[scheme] = (rep.objective, rep.iterations, rep.status.value, wall)
    return value, trial, seed, rows


def _header(spec: ExperimentSpec, kind: str) -> str:
    meta = {"schema": f"omnisurface-{kind}", "version": SCHEMA_VERSION, "axis": spec.axis,
            "problem": spec.problem, "seed": spec.seed, "trials": spec.trials,
            "generator": GENERATOR_NAME,
            "units": {"sinr_target": "dB", "power_budget": "dBW", "objective":
                      "W" if spec.problem == "power" else "bit/s/Hz"}}
    if kind == "summary":
        meta["averaging"] = "mean over feasible trials; infeasible trials dropped and counted"
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def _order_key(spec, row):
    value, scheme, trial = row[1], row[2], row[3]
    return (spec.values.index(value), spec.schemes.index(scheme), trial)


def run_experiment(spec: ExperimentSpec, out=None, summary_out=None) -> list:
    """Run the sweep and write the per-trial CSV (and a summary CSV next to it).

    Returns the result rows in deterministic (axis value, scheme, trial) order.
    """
    out = out or spec.out
    tasks = [(spec, v, t) for v in spec.values for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_solve_trial, tasks))
    else:
        results = [_solve_trial(t) for t in tasks]
    rows = []
    for value, trial, seed, per_scheme in results:
        for scheme, (obj, iters, status, wall) in per_scheme.items():
            rows.append((spec.axis, value, scheme, trial, seed, obj, iters, status, wall))
    rows.sort(key=lambda r: _order_key(spec, r))
    if out is not None:
        out = Path(out)
        _write(out, _header(spec, "sweep"), COLUMNS, [_fmt(r) for r in rows])
        summary_out = summary_out or out.with_name(out.stem + "_summary" + out.suffix)
        _write(Path(summary_out), _header(spec, "summary"),
               ("axis", "axis_value", "scheme", "trials", "feasible", "infeasible_rate",
                "mean_objective", "mean_iterations"),
               trimmed_summary(spec, rows))
    return rows


def _fmt(row):
    axis, value, scheme, trial, seed, obj, iters, status, wall = row
    return (axis, _value_str(value), scheme, trial, seed, _num(obj), iters, status, f"{wall:.4f}")


def _value_str(value):
    if isinstance(value, tuple):
        return f"{value[0]}:{value[1]}"
    return f"{value:g}"


def _num(x):
    return "nan" if x is None or not math.isfinite(x) else repr(float(x))


def trimmed_summary(spec: ExperimentSpec, rows) -> list:
    """Per (axis value, scheme): mean over feasible trials and infeasibility rate."""
    out = []
    for value in spec.values:
        for scheme in spec.schemes:
            sel = [r for r in rows if r[1] == value and r[2] == scheme]
            if not sel:
                continue
            ok = [r for r in sel if r[7] != Status.INFEASIBLE.value and math.isfinite(r[5])]
            mean = float(np.mean([r[5] for r in ok])) if ok else float("nan")
            iters = float(np.mean([r[6] for r in ok])) if ok else float("nan")
            out.append((spec.axis, _value_str(value), scheme, len(sel), len(ok),
                        f"{1 - len(ok) / len(sel):.4f}", _num(mean), _num(iters)))
    return out


def _write(path: Path, header: str, columns, rows):
    buf = io.StringIO()
    buf.write(header)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def convergence_trace(cfg: SystemConfig, scheme: str = "UED", problem: str = "power",
                      out=None):
    """Solve once and write the per-iteration objective as CSV.

    Power runs record the total power; rate runs record the weighted MSE
    objective and the sum-rate.
    """
    channels = sample_channels(cfg)
    rep = solve_with_mode(problem, channels, cfg, scheme)
    if out is not None:
        meta = {"schema": "omnisurface-trace", "version": SCHEMA_VERSION, "scheme": scheme,
                "problem": problem, "seed": cfg.seed, "status": rep.status.value,
                "generator": GENERATOR_NAME}
        if problem == "power":
            cols = ("iteration", "total_power")
            rows = [(i, _num(v)) for i, v in enumerate(rep.objective_trace)]
        else:
            cols = ("iteration", "wmmse_objective", "sum_rate")
            rows = [(i, _num(v), _num(r))
                    for i, (v, r) in enumerate(zip(rep.objective_trace, rep.rate_trace))]
        _write(Path(out), "# " + json.dumps(meta, sort_keys=True) + "\n", cols, rows)
    return rep
