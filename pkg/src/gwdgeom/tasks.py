"""Task pipelines behind the command line interface.

Every task writes CSV files (floats with 17 significant digits) into an
output directory and returns the list of files written.  Rows of sweeps are
computed by top-level functions of plain arguments so that they can run in
worker processes; results are collected and written in input order, which
keeps the outputs byte-identical for any degree of parallelism.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, SchemeSpec, parse_config
from .diagnostics import (
    effective_energy_drift,
    energy_drift,
    energy_observer,
    norm_deviation,
    reversibility_defect,
)
from .integrators import propagate, run_to
from .potentials import CountingPotential, PotentialRangeError
from .qm import BoundaryLeakError, grid_autocorrelation_series, grid_sample_gaussian
from .spectra import (
    Autocorrelation,
    autocorrelation_observer,
    damp,
    spectral_distance,
    spectrum,
    write_autocorrelation_csv,
    write_spectrum_csv,
)
from .states import distance, to_heller, to_record
from .symplectic import accumulate_jacobian

RUN_ERRORS = (PotentialRangeError, FloatingPointError, np.linalg.LinAlgError)


class TaskFailure(RuntimeError):
    """A run could not be completed; ``kind`` is ``"range"`` or ``"boundary"``."""

    def __init__(self, kind: str, message: str, files=()):
        super().__init__(message)
        self.kind = kind
        self.files = list(files)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def _map(fn, args: list, threads: int) -> list:
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, *zip(*args)))
    return [fn(*a) for a in args]


def _steps(t_final: float, dt: float) -> int:
    return max(1, round(t_final / dt))


def _t_final(cfg: ExperimentConfig) -> float:
    return cfg.sweep.t_final if cfg.sweep.t_final is not None else cfg.run.n_steps * cfg.run.dt


def _schemes(cfg: ExperimentConfig) -> list[SchemeSpec]:
    return cfg.sweep.schemes or [cfg.run.scheme]


# propagate ----------------------------------------------------------------------


def _trajectory_rows(rec, D: int):
    for t, s, e, nd in zip(rec.times, rec.states, rec.samples["energy"], rec.samples["norm"]):
        yield [t, *s.q, *s.p, e.E, e.E_eff, nd]


def _trajectory_header(D: int):
    return ["t", *(f"q{j + 1}" for j in range(D)), *(f"p{j + 1}" for j in range(D)), "E", "E_eff", "norm_deviation"]


def task_propagate(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    pot = cfg.build_potential()
    s0, _ = cfg.build_initial_state()
    plan = cfg.run.plan()
    obs = {"energy": energy_observer(plan.method, pot), "norm": norm_deviation}
    rec = propagate(s0, plan, pot, cfg.run.n_steps, obs, stride=cfg.run.stride, keep_states=True)
    files = [write_csv(out / "trajectory.csv", _trajectory_header(s0.dim), _trajectory_rows(rec, s0.dim))]
    final = out / "final_state.txt"
    final.write_text(to_record(rec.final) + "\n")
    files.append(final)
    if rec.failed:
        raise TaskFailure("range", f"trajectory failed at step {rec.fail_step}: {rec.error}", files)
    return files


# spectrum -------------------------------------------------------------------------


def task_spectrum(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    spec = cfg.spectrum
    pot = cfg.build_potential()
    s0, zpe = cfg.build_initial_state()
    e1g = spec.e1g if spec.e1g is not None else zpe
    if math.isnan(e1g):
        raise ConfigError("spectrum.e1g: required unless the initial state is a harmonic ground state")
    n = spec.n_steps or cfg.run.n_steps
    stride = cfg.run.stride
    if n % stride:
        raise ConfigError("spectrum: number of steps must be a multiple of run.stride")
    window = tuple(spec.window) if spec.window else None
    files, spectra = [], {}
    for method in spec.methods:
        plan = cfg.run.plan(method=method)
        rec = propagate(s0, plan, pot, n, {"C": autocorrelation_observer(s0)}, stride=stride)
        if rec.failed:
            raise TaskFailure("range", f"{method}: trajectory failed at step {rec.fail_step}: {rec.error}")
        ac = Autocorrelation(rec.times, rec.samples["C"], e1g, cfg.hbar)
        files.append(out / f"autocorrelation_{method}.csv")
        write_autocorrelation_csv(files[-1], ac)
        spectra[method] = spectrum(damp(ac, spec.hwhm), window=window)
        files.append(out / f"spectrum_{method}.csv")
        write_spectrum_csv(files[-1], spectra[method])
    rows = [[m, ""] for m in spec.methods]
    if spec.quantum:
        psi0 = grid_sample_gaussian(to_heller(s0), spec.grid)
        try:
            times, values, _ = grid_autocorrelation_series(
                psi0, pot, cfg.mass_matrix(), cfg.run.dt, n, hbar=cfg.hbar, stride=stride,
                boundary_tol=spec.boundary_tol)
        except BoundaryLeakError as exc:
            raise TaskFailure("boundary", str(exc)) from None
        ac = Autocorrelation(times, values, e1g, cfg.hbar)
        files.append(out / "autocorrelation_quantum.csv")
        write_autocorrelation_csv(files[-1], ac)
        ref = spectrum(damp(ac, spec.hwhm), window=window)
        files.append(out / "spectrum_quantum.csv")
        write_spectrum_csv(files[-1], ref)
        rows = [[m, spectral_distance(spectra[m], ref)] for m in spec.methods]
    files.append(write_csv(out / "summary.csv", ["method", "l2_distance_to_quantum"], rows))
    return files


# sweeps over dt ----------------------------------------------------------------------


def convergence_row(raw_cfg: dict, scheme: dict, integrator: str, dt: float) -> list:
    cfg = parse_config(raw_cfg)
    scheme = SchemeSpec(**scheme)
    plan = cfg.run.plan(dt=dt, scheme=scheme, integrator=integrator)
    pot = CountingPotential(cfg.build_potential())
    s0, _ = cfg.build_initial_state()
    n = _steps(_t_final(cfg), dt)
    head = [plan.label, plan.order, dt, n]
    try:
        coarse = run_to(s0, plan, pot, n)
        evals = pot.evaluations
        fine = run_to(s0, plan.with_dt(0.5 * dt), pot.inner, 2 * n)
        return head + [distance(coarse, fine), evals, "ok", ""]
    except RUN_ERRORS as exc:
        return head + [math.nan, pot.evaluations, "failed", str(exc)]


def task_convergence_sweep(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    raw = cfg.to_dict()
    args = [(raw, vars(s), integ, dt) for s in _schemes(cfg) for integ in cfg.sweep.integrators
            for dt in cfg.sweep.dt]
    rows = _map(convergence_row, args, threads)
    header = ["integrator", "order", "dt", "n_steps", "error", "evaluations", "status", "message"]
    return [write_csv(out / "convergence.csv", header, rows)]


def geometry_row(raw_cfg: dict, scheme: dict, integrator: str, dt: float) -> list:
    cfg = parse_config(raw_cfg)
    plan = cfg.run.plan(dt=dt, scheme=SchemeSpec(**scheme), integrator=integrator)
    pot = cfg.build_potential()
    s0, _ = cfg.build_initial_state()
    n = _steps(_t_final(cfg), dt)
    head = [plan.label, plan.order, dt, n]
    rec = propagate(s0, plan, pot, n, {"energy": energy_observer(plan.method, pot), "norm": norm_deviation})
    if rec.failed:
        return head + [math.nan] * 4 + ["failed", f"step {rec.fail_step}: {rec.error}"]
    try:
        rev = reversibility_defect(s0, plan, pot, n)
    except RUN_ERRORS as exc:
        return head + [max(rec.samples["norm"]), effective_energy_drift(rec), energy_drift(rec), math.nan,
                       "failed", f"backward run: {exc}"]
    return head + [max(rec.samples["norm"]), effective_energy_drift(rec), energy_drift(rec), rev, "ok", ""]


def task_geometry_check(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    raw = cfg.to_dict()
    args = [(raw, vars(s), integ, dt) for s in _schemes(cfg) for integ in cfg.sweep.integrators
            for dt in cfg.sweep.dt]
    rows = _map(geometry_row, args, threads)
    header = ["integrator", "order", "dt", "n_steps", "max_norm_deviation", "effective_energy_drift",
              "energy_drift", "reversibility_defect", "status", "message"]
    return [write_csv(out / "geometry.csv", header, rows)]


def symplecticity_row(raw_cfg: dict, integrator: str, dt: float) -> list:
    cfg = parse_config(raw_cfg)
    plan = cfg.run.plan(dt=dt, integrator=integrator)
    pot = cfg.build_potential()
    s0, _ = cfg.build_initial_state()
    n = _steps(_t_final(cfg), dt)
    every = cfg.sweep.record_every or n
    dps = cfg.sweep.dps if integrator == "geometric" else None
    try:
        _, _, hist = accumulate_jacobian(s0, plan, pot, n, record_every=every, dps=dps)
    except RUN_ERRORS as exc:
        return [[plan.label, dt, math.nan, math.nan, "failed", str(exc)]]
    return [[plan.label, dt, t, r, "ok", ""] for t, r in hist]


def task_symplecticity(cfg: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    raw = cfg.to_dict()
    args = [(raw, integ, dt) for integ in cfg.sweep.integrators for dt in cfg.sweep.dt]
    rows = [r for block in _map(symplecticity_row, args, threads) for r in block]
    header = ["integrator", "dt", "t", "residual", "status", "message"]
    return [write_csv(out / "symplecticity.csv", header, rows)]


TASKS = {
    "propagate": task_propagate,
    "spectrum": task_spectrum,
    "convergence-sweep": task_convergence_sweep,
    "geometry-check": task_geometry_check,
    "symplecticity": task_symplecticity,
}


# the generic dt sweep ----------------------------------------------------------------

SWEEP_COLUMNS = {
    "norm": "max_norm_deviation",
    "effective_energy": "effective_energy_drift",
    "energy": "energy_drift",
    "reversibility": "reversibility_defect",
    "convergence": "convergence_error",
    "evaluations": "evaluations",
}


def sweep_row(raw_cfg: dict, index: int, dt: float, out_dir: str) -> tuple[list, str]:
    """One independent propagation at time step ``dt``; writes its own trajectory file."""
    cfg = parse_config(raw_cfg)
    plan = cfg.run.plan(dt=dt)
    pot = CountingPotential(cfg.build_potential())
    s0, _ = cfg.build_initial_state()
    n = _steps(cfg.run.n_steps * cfg.run.dt, dt)
    obs = {"energy": energy_observer(plan.method, pot), "norm": norm_deviation}
    rec = propagate(s0, plan, pot, n, obs, keep_states=True)
    name = f"row_{index:03d}_trajectory.csv"
    write_csv(Path(out_dir) / name, _trajectory_header(s0.dim), _trajectory_rows(rec, s0.dim))
    values = {
        "norm": max(rec.samples["norm"]),
        "effective_energy": effective_energy_drift(rec),
        "energy": energy_drift(rec),
        "evaluations": pot.evaluations,
    }
    status, message = "ok", ""
    if rec.failed:
        status, message = "failed", f"step {rec.fail_step}: {rec.error}"
    else:
        try:
            if "reversibility" in cfg.sweep.diagnostics:
                values["reversibility"] = reversibility_defect(s0, plan, pot.inner, n)
            if "convergence" in cfg.sweep.diagnostics:
                fine = run_to(s0, plan.with_dt(0.5 * dt), pot.inner, 2 * n)
                values["convergence"] = distance(rec.final, fine)
        except RUN_ERRORS as exc:
            status, message = "failed", str(exc)
    row = [dt, n, rec.steps_done] + [values.get(d, math.nan) for d in cfg.sweep.diagnostics] + [status, message]
    return row, name


def run_sweep(cfg: ExperimentConfig, values: list[float], out: Path, threads: int = 1) -> list[Path]:
    if not values:
        raise ConfigError("sweep: no values given")
    if any(v <= 0 for v in values) or list(values) != sorted(values):
        raise ConfigError("sweep: values must be positive and sorted")
    raw = cfg.to_dict()
    args = [(raw, i, float(dt), str(out)) for i, dt in enumerate(values)]
    results = _map(sweep_row, args, threads)
    header = ["dt", "n_steps", "steps_done"] + [SWEEP_COLUMNS[d] for d in cfg.sweep.diagnostics] + ["status", "message"]
    files = [out / name for _, name in results]
    files.append(write_csv(out / "sweep.csv", header, [row for row, _ in results]))
    return files
