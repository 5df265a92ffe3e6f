"""Experiment drivers and the ``savflow`` command line entry point.

Usage::

    savflow convergence [--config PATH] [--key value ...]
    savflow cylinder --t_end 2
    savflow offset-circles --reynolds 200,1200 --compare_nosav false

Every run writes ``<output_dir>/<experiment>.csv`` (per-step or per-row data),
``summary.json`` and ``config.txt``; the latter re-parses to the same config.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import problems
from .diagnostics import (ERROR_MODES, Recorder, aggregate_in_time, poincare_bound,
                          stability_ledger)
from .linalg import ConvergenceError, SingularMatrixError
from .mesh import MeshError, build_channel_cylinder, build_offset_annulus, build_unit_square
from .solver import DivergenceError, ProblemSetup, SavParameters, SavSolver

log = logging.getLogger("savflow")

EXPERIMENTS = ("convergence", "cylinder", "offset_circles")

# H1-seminorm errors published for the manufactured problem, keyed by 1/h
REFERENCE_ERRORS = {4: 5.25977e-1, 8: 1.3403e-1, 16: 3.397e-2, 32: 8.50843e-3, 64: 2.13204e-3}
REFERENCE_TOLERANCE = 0.10

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    dt: float
    t_end: float
    alpha2: float
    nu: Optional[float] = None
    alpha1: str = "uniform_h2"
    sav_enabled: bool = True
    solver: str = "lu"
    output_dir: str = ""
    refinements: Optional[tuple] = None
    h_target: Optional[float] = None
    h_boundary: Optional[float] = None
    seed: int = 0
    reynolds: Optional[tuple] = None
    compare_nosav: bool = False

    def __post_init__(self):
        if not self.output_dir:
            self.output_dir = os.path.join("results", self.experiment)
        validate(self)


COMMON_KEYS = ("experiment", "dt", "t_end", "alpha1", "alpha2", "sav_enabled", "solver", "output_dir")
EXPERIMENT_KEYS = {
    "convergence": COMMON_KEYS + ("nu", "refinements"),
    "cylinder": COMMON_KEYS + ("nu", "h_target", "h_boundary", "seed"),
    "offset_circles": COMMON_KEYS + ("reynolds", "compare_nosav", "h_target", "h_boundary", "seed"),
}

DEFAULTS = {
    "convergence": dict(dt=0.01, t_end=0.01, nu=1.0, alpha2=1.0, refinements=(4, 8, 16, 32)),
    # h_boundary is the edge size on the obstacle; 15135 velocity+pressure DOF
    "cylinder": dict(dt=0.01, t_end=8.0, nu=1e-3, alpha2=1e-3, h_target=0.032, h_boundary=0.0065),
    "offset_circles": dict(dt=0.025, t_end=5.0, alpha2=0.0, reynolds=(200.0, 800.0, 1200.0),
                           compare_nosav=True, h_target=0.08, h_boundary=0.025),
}

_FIELD_TYPES = {
    "experiment": str, "dt": float, "t_end": float, "alpha2": float, "nu": float, "alpha1": str,
    "sav_enabled": bool, "solver": str, "output_dir": str, "refinements": (tuple, int),
    "h_target": float, "h_boundary": float, "seed": int, "reynolds": (tuple, float),
    "compare_nosav": bool,
}


def normalize_experiment(name: str) -> str:
    key = name.strip().replace("-", "_")
    if key not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of "
                          + ", ".join(e.replace("_", "-") for e in EXPERIMENTS))
    return key


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(kind, tuple):
            items = [s for s in text.replace(" ", "").split(",") if s]
            if not items:
                raise ValueError(text)
            return tuple(kind[1](s) for s in items)
        return kind(text)
    except ValueError:
        name = kind.__name__ if not isinstance(kind, tuple) else f"list of {kind[1].__name__}"
        raise ConfigError(f"{key}: expected {name}, got {text!r}") from None


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def alpha1_mode(text: str):
    """``uniform_h2``, ``per_element_h2`` or a nonnegative number."""
    if text in ("uniform_h2", "per_element_h2"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"alpha1: expected uniform_h2, per_element_h2 or a number, got {text!r}") from None
    if not value >= 0 or not math.isfinite(value):
        raise ConfigError("alpha1 must be nonnegative")
    return value


def validate(cfg: ExperimentConfig) -> None:
    normalize_experiment(cfg.experiment)
    if not (cfg.t_end >= 0 and math.isfinite(cfg.t_end)):
        raise ConfigError(f"t_end must be nonnegative, got {cfg.t_end!r}")
    for name in ("dt", "nu", "h_target", "h_boundary"):
        v = getattr(cfg, name)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{name} must be positive, got {v!r}")
    if not (cfg.alpha2 >= 0 and math.isfinite(cfg.alpha2)):
        raise ConfigError(f"alpha2 must be nonnegative, got {cfg.alpha2!r}")
    alpha1_mode(cfg.alpha1)
    if cfg.solver not in ("lu", "gmres"):
        raise ConfigError(f"solver must be lu or gmres, got {cfg.solver!r}")
    if cfg.refinements is not None:
        if any(n < 1 for n in cfg.refinements):
            raise ConfigError("refinements must be positive integers")
    if cfg.reynolds is not None and any(not r > 0 for r in cfg.reynolds):
        raise ConfigError("reynolds numbers must be positive")
    need = {"convergence": ("nu", "refinements"), "cylinder": ("nu", "h_target", "h_boundary"),
            "offset_circles": ("reynolds", "h_target", "h_boundary")}[cfg.experiment]
    for name in need:
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required key {name!r} for {cfg.experiment}")


def read_config_file(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Values stay strings."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def parse_config(path: Optional[str] = None, overrides: Optional[dict] = None,
                 experiment: Optional[str] = None) -> ExperimentConfig:
    """Build a config from experiment defaults, a config file, then overrides.

    ``overrides`` maps keys to strings (as from the command line). The
    experiment comes from ``experiment`` or the ``experiment`` key; if both
    are given they must agree.
    """
    raw = read_config_file(path) if path else {}
    raw.update(overrides or {})
    raw = {k.replace("-", "_"): v for k, v in raw.items()}
    named = raw.pop("experiment", None)
    if experiment is None and named is None:
        raise ConfigError("missing required key 'experiment'")
    exp = normalize_experiment(experiment if experiment is not None else named)
    if named is not None and experiment is not None and normalize_experiment(named) != exp:
        raise ConfigError(f"config is for {named!r} but {experiment!r} was requested")
    valid = EXPERIMENT_KEYS[exp]
    unknown = sorted(set(raw) - set(valid))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)} for {exp}; valid keys: {', '.join(valid)}")
    values = dict(DEFAULTS[exp])
    for key, text in raw.items():
        values[key] = _parse_value(key, text)
    return ExperimentConfig(experiment=exp, **values)


def config_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key in EXPERIMENT_KEYS[cfg.experiment]:
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


# -- output helpers ------------------------------------------------------------

@dataclass
class RunArtifacts:
    csv_path: str
    summary_path: str
    config_path: str


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_outputs(cfg: ExperimentConfig, columns, rows, summary: dict) -> RunArtifacts:
    out = cfg.output_dir
    art = RunArtifacts(os.path.join(out, f"{cfg.experiment}.csv"), os.path.join(out, "summary.json"),
                       os.path.join(out, "config.txt"))
    atomic_write(art.config_path, config_text(cfg))
    atomic_write(art.csv_path, csv_text(columns, rows))
    atomic_write(art.summary_path, json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
    return art


def _alpha1(cfg: ExperimentConfig, mesh, h_nominal: Optional[float] = None):
    mode = alpha1_mode(cfg.alpha1)
    if mode == "uniform_h2":
        return (h_nominal if h_nominal is not None else mesh.h) ** 2
    if mode == "per_element_h2":
        return mesh.element_diameters ** 2
    return mode


def total_variation(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sum(np.abs(np.diff(v)))) if v.size > 1 else 0.0


def _worst(records, attr, fn):
    vals = [getattr(r, attr) for r in records if getattr(r, attr) is not None]
    return fn(vals) if vals else None


# -- experiments ----------------------------------------------------------------

CONVERGENCE_COLUMNS = ("n", "h", "dt", "steps", "dofs", "alpha1", "initial_error_h1",
                       "l2_in_time_of_l2", "l2_in_time_of_h1", "time_rms_of_l2", "time_rms_of_h1",
                       "rate_time_rms_of_h1", "rate_l2_in_time_of_l2", "reference_h1",
                       "min_sav_slack", "max_divergence",
                       "stability_lhs", "stability_rhs")


def run_convergence(cfg: ExperimentConfig):
    """Manufactured-solution study, one row per refinement with dt scaled like h."""
    residual = problems.mms_strong_residual(cfg.nu)
    if residual > 1e-10:
        raise RuntimeError(f"manufactured force inconsistent (residual {residual:.3e})")
    force = problems.mms_force(cfg.nu)
    n0 = cfg.refinements[0]
    rows = []
    for n in cfg.refinements:
        dt = cfg.dt * n0 / n
        mesh = build_unit_square(n)
        setup = ProblemSetup.taylor_hood(mesh, problems.mms_boundary(), force,
                                         lambda x, y: problems.mms_velocity(x, y, 0.0))
        params = SavParameters(nu=cfg.nu, dt=dt, t_end=cfg.t_end, alpha1=_alpha1(cfg, mesh, 1.0 / n),
                               alpha2=cfg.alpha2, sav_enabled=cfg.sav_enabled)
        solver = SavSolver(setup, params, linear_solver=cfg.solver)
        rec = Recorder(setup, params, exact=problems.mms_velocity, exact_grad=problems.mms_velocity_grad,
                       check_energy=False)
        t0 = time.perf_counter()
        records = solver.run(recorder=rec)
        steps = records[1:]
        row = dict(n=n, h=1.0 / n, dt=dt, steps=len(steps), dofs=solver.n_dofs["total"],
                   alpha1=params.alpha1 if np.ndim(params.alpha1) == 0 else None,
                   initial_error_h1=records[0].error_h1, reference_h1=REFERENCE_ERRORS.get(n),
                   min_sav_slack=_worst(steps, "sav_bound_slack", min),
                   max_divergence=_worst(steps, "divergence_inf", max))
        for mode in ERROR_MODES:
            errs = [r.error_h1 if mode.endswith("h1") else r.error_l2 for r in steps]
            row[mode] = aggregate_in_time(errs, dt, mode)
        if steps:
            row["stability_lhs"], row["stability_rhs"] = stability_ledger(records, params,
                                                                           poincare_bound(mesh))
        if rows and rows[-1]["time_rms_of_h1"] > 0 and row["time_rms_of_h1"] > 0:
            prev = rows[-1]
            ratio = math.log(prev["h"] / row["h"])
            row["rate_time_rms_of_h1"] = math.log(prev["time_rms_of_h1"] / row["time_rms_of_h1"]) / ratio
            row["rate_l2_in_time_of_l2"] = math.log(prev["l2_in_time_of_l2"] / row["l2_in_time_of_l2"]) / ratio
        log.info("n=%d dt=%g err_h1(rms)=%.5e (%.1fs)", n, dt, row["time_rms_of_h1"], time.perf_counter() - t0)
        rows.append(row)

    matches = {}
    for mode in ERROR_MODES:
        devs = [abs(r[mode] / r["reference_h1"] - 1.0) for r in rows if r["reference_h1"]]
        matches[mode] = dict(max_relative_deviation=max(devs) if devs else None,
                             within_tolerance=bool(devs) and max(devs) <= REFERENCE_TOLERANCE)
    matched = [m for m in ERROR_MODES if matches[m]["within_tolerance"]]
    summary = dict(experiment=cfg.experiment, force_residual=residual, rows=rows,
                   reference_comparison=matches, matched_modes=matched,
                   final_rate=rows[-1].get("rate_time_rms_of_h1") if rows else None)
    return CONVERGENCE_COLUMNS, rows, summary


CYLINDER_COLUMNS = ("t", "energy", "c_d", "c_l", "dp", "enstrophy", "div_l2", "sav_bound_slack",
                    "linear_residual")


def _cylinder_rows(records):
    return [dict(t=r.time, energy=r.kinetic_energy, c_d=r.drag, c_l=r.lift, dp=r.pressure_drop,
                 enstrophy=r.enstrophy, div_l2=r.div_l2, sav_bound_slack=r.sav_bound_slack,
                 linear_residual=r.linear_residual) for r in records]


def run_cylinder(cfg: ExperimentConfig):
    """Channel flow past a cylinder with a time-dependent parabolic profile at both ends."""
    mesh = build_channel_cylinder(cfg.h_target, cfg.h_boundary, seed=cfg.seed)
    setup = ProblemSetup.taylor_hood(mesh, problems.channel_boundary())
    params = SavParameters(nu=cfg.nu, dt=cfg.dt, t_end=cfg.t_end, alpha1=_alpha1(cfg, mesh),
                           alpha2=cfg.alpha2, sav_enabled=cfg.sav_enabled)
    solver = SavSolver(setup, params, linear_solver=cfg.solver)
    log.info("cylinder mesh: %d triangles, %d DOF", mesh.n_triangles, solver.n_dofs["total"])
    records = []
    rec = Recorder(setup, params, cylinder=True, check_energy=False)
    status = "completed"
    try:
        records = solver.run(recorder=_Collect(rec, records))
    except DivergenceError as exc:
        status = f"diverged at step {exc.step}"
        _partial(cfg, CYLINDER_COLUMNS, _cylinder_rows(records), status)
        raise
    steps = records[1:]
    summary = dict(experiment=cfg.experiment, status=status, dofs=solver.n_dofs, steps=len(steps),
                   mesh=dict(vertices=mesh.n_vertices, triangles=mesh.n_triangles, h=mesh.h,
                             obstacle_edges=int(len(mesh.marked_edges([4])))),
                   alpha1=float(np.max(params.alpha1)),
                   min_sav_slack=_worst(steps, "sav_bound_slack", min))
    if steps:
        cd = np.array([r.drag for r in steps])
        cl = np.array([r.lift for r in steps])
        i, j = int(np.argmax(cd)), int(np.argmax(cl))
        summary.update(c_d_max=cd[i], t_c_d_max=steps[i].time, c_l_max=cl[j], t_c_l_max=steps[j].time)
    return CYLINDER_COLUMNS, _cylinder_rows(records), summary


OFFSET_COLUMNS = ("reynolds", "method", "t", "energy", "enstrophy", "div_l2",
                  "energy_identity_residual", "sav_bound_slack")


class _Collect:
    """Recorder wrapper that keeps every record in ``sink`` as it is produced."""

    def __init__(self, recorder, sink: list):
        self.recorder = recorder
        self.sink = sink

    def initial(self, state):
        self.sink.clear()
        r = self.recorder.initial(state)
        self.sink.append(r)
        return r

    def record(self, old, new, report):
        r = self.recorder.record(old, new, report)
        self.sink.append(r)
        return r


def _partial(cfg, columns, rows, status):
    out = os.path.join(cfg.output_dir, f"{cfg.experiment}.partial.csv")
    atomic_write(out, csv_text(columns, rows))
    log.error("%s; partial series written to %s", status, out)


def run_offset_circles(cfg: ExperimentConfig):
    """Rotating body force between offset circles, one SAV (and optional NOSAV) run per Re."""
    mesh = build_offset_annulus(cfg.h_target, cfg.h_boundary, seed=cfg.seed)
    setup = ProblemSetup.taylor_hood(mesh, problems.annulus_boundary(), problems.rotating_force)
    c_pf = poincare_bound(mesh)
    methods = [("sav", True)] + ([("nosav", False)] if cfg.compare_nosav else [])
    rows, runs = [], []
    for re in cfg.reynolds:
        for method, sav in methods:
            enabled = sav and cfg.sav_enabled
            params = SavParameters(nu=1.0 / re, dt=cfg.dt, t_end=cfg.t_end, alpha1=_alpha1(cfg, mesh),
                                   alpha2=cfg.alpha2, sav_enabled=enabled)
            solver = SavSolver(setup, params, linear_solver=cfg.solver)
            records: list = []
            status = "completed"
            t0 = time.perf_counter()
            try:
                solver.run(recorder=_Collect(Recorder(setup, params), records))
            except DivergenceError as exc:
                if enabled:
                    rows.extend(_offset_rows(re, method, records))
                    _partial(cfg, OFFSET_COLUMNS, rows, f"Re={re:g} {method} diverged at step {exc.step}")
                    raise
                status = f"diverged at step {exc.step}"
            rows.extend(_offset_rows(re, method, records))
            steps = records[1:]
            energy = [r.kinetic_energy for r in records]
            ens = [r.enstrophy for r in records]
            run = dict(reynolds=re, method=method, status=status, steps=len(steps),
                       finite=bool(np.all(np.isfinite(energy)) and np.all(np.isfinite(ens))),
                       energy_final=energy[-1], energy_max=max(energy),
                       energy_total_variation=total_variation(energy),
                       enstrophy_total_variation=total_variation(ens),
                       max_energy_identity_residual=_worst(steps, "energy_identity_residual", max),
                       min_sav_slack=_worst(steps, "sav_bound_slack", min))
            if steps:
                run["stability_lhs"], run["stability_rhs"] = stability_ledger(records, params, c_pf)
            log.info("Re=%g %s: %s, %d steps (%.1fs)", re, method, status, len(steps), time.perf_counter() - t0)
            runs.append(run)
    dofs = 2 * setup.velocity_space.n_dofs + setup.pressure_space.n_dofs
    summary = dict(experiment=cfg.experiment, dofs=dofs,
                   poincare_bound=c_pf, mesh=dict(vertices=mesh.n_vertices, triangles=mesh.n_triangles,
                                                  h=mesh.h), runs=runs)
    return OFFSET_COLUMNS, rows, summary


def _offset_rows(re, method, records):
    return [dict(reynolds=re, method=method, t=r.time, energy=r.kinetic_energy, enstrophy=r.enstrophy,
                 div_l2=r.div_l2, energy_identity_residual=r.energy_identity_residual,
                 sav_bound_slack=r.sav_bound_slack) for r in records]


RUNNERS = {"convergence": run_convergence, "cylinder": run_cylinder, "offset_circles": run_offset_circles}


def run_experiment(cfg: ExperimentConfig):
    """Run ``cfg`` and write its artifacts; returns ``(summary, artifacts)``."""
    columns, rows, summary = RUNNERS[cfg.experiment](cfg)
    return summary, write_outputs(cfg, columns, rows, summary)


# -- command line ----------------------------------------------------------------

def _split_overrides(extra: Sequence[str]) -> dict:
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}; overrides look like --key value")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def _print_summary(summary: dict, art: RunArtifacts) -> None:
    exp = summary["experiment"]
    if exp == "convergence":
        print(f"{'n':>4} {'dt':>10} {'time_rms_h1':>13} {'rate':>6} {'reference':>11}")
        for r in summary["rows"]:
            rate = r.get("rate_time_rms_of_h1")
            ref = r.get("reference_h1")
            print(f"{r['n']:>4} {r['dt']:>10.6g} {r['time_rms_of_h1']:>13.5e} "
                  f"{'--' if rate is None else f'{rate:.2f}':>6} {'' if ref is None else f'{ref:.5e}':>11}")
        print("modes matching the reference within 10%:", ", ".join(summary["matched_modes"]) or "none")
    elif exp == "cylinder":
        if "c_d_max" in summary:
            print(f"c_d,max = {summary['c_d_max']:.5f} at t = {summary['t_c_d_max']:.2f}")
            print(f"c_l,max = {summary['c_l_max']:.5f} at t = {summary['t_c_l_max']:.2f}")
        print(f"DOF = {summary['dofs']['total']}")
    else:
        for r in summary["runs"]:
            print(f"Re={r['reynolds']:g} {r['method']:>5}: {r['status']}, final energy {r['energy_final']:.6g}, "
                  f"energy variation {r['energy_total_variation']:.6g}")
    print(f"wrote {art.csv_path}, {art.summary_path}, {art.config_path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="savflow", description="Run a flow experiment.")
    parser.add_argument("experiment", help="convergence, cylinder or offset-circles")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--verbose", action="store_true", help="log progress")
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config, _split_overrides(extra), experiment=args.experiment)
    except ConfigError as exc:
        print(f"savflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary, art = run_experiment(cfg)
    except MeshError as exc:
        print(f"savflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularMatrixError, ConvergenceError) as exc:
        print(f"savflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    _print_summary(summary, art)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
