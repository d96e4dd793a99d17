"""Experiment configuration files.

Configurations are YAML mappings whose nesting mirrors the objects they
build.  Every section is checked for unknown keys and wrong types before any
computation starts; errors are reported with the dotted path of the key.
A run manifest (JSON, hence also YAML) embeds the normalized configuration
and can be passed back in place of the original file.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .effective import MethodKind
from .integrators import CompositionScheme, Splitting, StepPlan, default_scheme, make_scheme
from .potentials import CoupledMorse, HarmonicPotential, harmonic_ground_state
from .states import GaussianState, HellerParams, as_mass_matrix, from_heller

TASKS = ("propagate", "spectrum", "convergence-sweep", "geometry-check", "symplecticity")
BUNDLED = ("morse1d.cfg", "morse2d.cfg", "morse20d.cfg")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# low-level checked accessors -------------------------------------------------


def _section(raw, path: str, allowed: dict) -> dict:
    """Check that ``raw`` is a mapping with only ``allowed`` keys; fill defaults.

    ``allowed`` maps key -> default, with ``...`` marking required keys.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + str(k) for k in unknown)}")
    out = {}
    for key, default in allowed.items():
        if key in raw:
            out[key] = raw[key]
        elif default is ...:
            raise ConfigError(f"missing required key: {path + '.' if path else ''}{key}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _num(value, path: str, positive: bool = False, integer: bool = False):
    if isinstance(value, str) and not integer:
        # YAML 1.1 reads exponent forms without a dot, such as 1e-4, as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer and (not isinstance(value, int)):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{path}: must be positive")
    return value


def _vec(value, path: str, dim: int | None = None) -> list[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if dim is None:
            raise ConfigError(f"{path}: expected a list of numbers")
        value = [value] * dim
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    out = [float(_num(v, f"{path}[{i}]")) for i, v in enumerate(value)]
    if dim is not None and len(out) != dim:
        raise ConfigError(f"{path}: expected {dim} entries, got {len(out)}")
    return out


def _choice(value, path: str, options) -> str:
    if not isinstance(value, str) or value.lower() not in options:
        raise ConfigError(f"{path}: expected one of {', '.join(options)}, got {value!r}")
    return value.lower()


# sections ---------------------------------------------------------------------


@dataclass
class PotentialSpec:
    kind: str
    q_eq: list
    V_eq: float = 0.0
    de_prime: float | None = None
    chi_prime: list | None = None
    de_cpl: float = 0.0
    chi_cpl: list | None = None
    k: list | None = None

    def build(self):
        if self.kind == "harmonic":
            return HarmonicPotential(self.q_eq, self.k, self.V_eq)
        return CoupledMorse(self.q_eq, self.V_eq, self.de_prime, self.chi_prime, self.de_cpl, self.chi_cpl)


def _parse_potential(raw) -> PotentialSpec:
    path = "potential"
    kind = _choice(_section(raw, path, {"kind": ...} | {k: None for k in
                   ("q_eq", "V_eq", "de_prime", "chi_prime", "de_cpl", "chi_cpl", "k")})["kind"],
                   f"{path}.kind", ("coupled-morse", "harmonic"))
    if kind == "harmonic":
        sec = _section(raw, path, {"kind": ..., "q_eq": ..., "k": ..., "V_eq": 0.0})
        q_eq = _vec(sec["q_eq"], f"{path}.q_eq")
        return PotentialSpec(kind, q_eq, float(_num(sec["V_eq"], f"{path}.V_eq")),
                             k=_vec(sec["k"], f"{path}.k", len(q_eq)))
    sec = _section(raw, path, {"kind": ..., "q_eq": ..., "V_eq": 0.0, "de_prime": ..., "chi_prime": ...,
                               "de_cpl": 0.0, "chi_cpl": None})
    q_eq = _vec(sec["q_eq"], f"{path}.q_eq")
    D = len(q_eq)
    chi_prime = _spread(sec["chi_prime"], f"{path}.chi_prime", D)
    chi_cpl = sec["chi_cpl"]
    if isinstance(chi_cpl, dict):
        scale = _section(chi_cpl, f"{path}.chi_cpl", {"scale_of_chi_prime": ...})["scale_of_chi_prime"]
        chi_cpl = [float(_num(scale, f"{path}.chi_cpl.scale_of_chi_prime")) * c for c in chi_prime]
    elif chi_cpl is not None:
        chi_cpl = _vec(chi_cpl, f"{path}.chi_cpl", D)
    de_cpl = float(_num(sec["de_cpl"], f"{path}.de_cpl"))
    if de_cpl > 0 and chi_cpl is None:
        raise ConfigError(f"{path}.chi_cpl: required when de_cpl > 0")
    return PotentialSpec(kind, q_eq, float(_num(sec["V_eq"], f"{path}.V_eq")),
                         float(_num(sec["de_prime"], f"{path}.de_prime", positive=True)),
                         chi_prime, de_cpl, chi_cpl)


def _spread(value, path: str, dim: int) -> list[float]:
    """A list, a scalar, or ``{linspace: [lo, hi]}`` (uniformly spaced values)."""
    if isinstance(value, dict):
        lo, hi = _vec(_section(value, path, {"linspace": ...})["linspace"], f"{path}.linspace", 2)
        return [float(v) for v in np.linspace(lo, hi, dim)]
    return _vec(value, path, dim)


@dataclass
class InitialStateSpec:
    q0: list
    p0: list
    A0_imag_diag: list | None = None
    harmonic_ground_state: bool = False
    omega: list | None = None


def _parse_initial(raw, pot: PotentialSpec) -> InitialStateSpec:
    path = "initial_state"
    D = len(pot.q_eq)
    sec = _section(raw, path, {"q0": ..., "p0": 0.0, "A0_imag_diag": None, "harmonic_ground_state": False,
                               "omega": None})
    q0 = _vec(sec["q0"], f"{path}.q0", D)
    p0 = _vec(sec["p0"], f"{path}.p0", D)
    if not isinstance(sec["harmonic_ground_state"], bool):
        raise ConfigError(f"{path}.harmonic_ground_state: expected true or false")
    if sec["harmonic_ground_state"]:
        if sec["omega"] is None or sec["A0_imag_diag"] is not None:
            raise ConfigError(f"{path}: harmonic_ground_state needs omega and excludes A0_imag_diag")
        omega = _vec(sec["omega"], f"{path}.omega", D)
        if min(omega) <= 0:
            raise ConfigError(f"{path}.omega: frequencies must be positive")
        return InitialStateSpec(q0, p0, None, True, omega)
    width = sec["A0_imag_diag"]
    if width is None:
        raise ConfigError(f"{path}: give A0_imag_diag or harmonic_ground_state")
    if isinstance(width, dict):
        factor = _section(width, f"{path}.A0_imag_diag", {"de_chi_factor": ...})["de_chi_factor"]
        if pot.kind != "coupled-morse" or pot.chi_cpl is None:
            raise ConfigError(f"{path}.A0_imag_diag.de_chi_factor: needs a coupled Morse coupling term")
        width = [float(_num(factor, f"{path}.A0_imag_diag.de_chi_factor")) * pot.de_cpl * c for c in pot.chi_cpl]
    else:
        width = _vec(width, f"{path}.A0_imag_diag", D)
    if min(width) <= 0:
        raise ConfigError(f"{path}.A0_imag_diag: entries must be positive")
    return InitialStateSpec(q0, p0, width, False, None)


@dataclass
class SchemeSpec:
    order: int = 2
    name: str | None = None

    def build(self) -> CompositionScheme:
        return default_scheme(self.order) if self.name is None else make_scheme(self.order, self.name)


def _parse_scheme(raw, path: str) -> SchemeSpec:
    sec = _section(raw, path, {"order": 2, "name": None})
    order = _num(sec["order"], f"{path}.order", positive=True, integer=True)
    if sec["name"] is not None and not isinstance(sec["name"], str):
        raise ConfigError(f"{path}.name: expected a string")
    spec = SchemeSpec(order, sec["name"])
    try:
        spec.build()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec


@dataclass
class RunSpec:
    method: str = "lca"
    splitting: str = "tvt"
    scheme: SchemeSpec = field(default_factory=SchemeSpec)
    integrator: str = "geometric"
    dt: float = 0.01
    n_steps: int = 1
    stride: int = 1

    def plan(self, dt: float | None = None, method: str | None = None, scheme: SchemeSpec | None = None,
             integrator: str | None = None) -> StepPlan:
        return StepPlan(MethodKind.parse(method or self.method), Splitting.parse(self.splitting),
                        (scheme or self.scheme).build(), self.dt if dt is None else dt,
                        integrator or self.integrator)


def _parse_run(raw) -> RunSpec:
    path = "run"
    sec = _section(raw, path, {"method": "lca", "splitting": "tvt", "scheme": None, "integrator": "geometric",
                               "dt": ..., "n_steps": None, "t_final": None, "stride": 1})
    dt = float(_num(sec["dt"], f"{path}.dt", positive=True))
    if (sec["n_steps"] is None) == (sec["t_final"] is None):
        raise ConfigError(f"{path}: give exactly one of n_steps and t_final")
    if sec["n_steps"] is not None:
        n = _num(sec["n_steps"], f"{path}.n_steps", integer=True)
    else:
        n = _steps_for(float(_num(sec["t_final"], f"{path}.t_final", positive=True)), dt, f"{path}.t_final")
    if n < 0:
        raise ConfigError(f"{path}.n_steps: must be nonnegative")
    stride = _num(sec["stride"], f"{path}.stride", positive=True, integer=True)
    return RunSpec(_choice(sec["method"], f"{path}.method", ("lha", "lca", "var")),
                   _choice(sec["splitting"], f"{path}.splitting", ("tvt", "vtv")),
                   _parse_scheme(sec["scheme"], f"{path}.scheme"),
                   _choice(sec["integrator"], f"{path}.integrator", ("geometric", "rk4")), dt, n, stride)


def _steps_for(t_final: float, dt: float, path: str) -> int:
    n = round(t_final / dt)
    if n < 1 or abs(n * dt - t_final) > 1e-9 * t_final:
        raise ConfigError(f"{path}: {t_final:g} is not a whole number of steps of {dt:g}")
    return n


@dataclass
class SpectrumSpec:
    methods: list = field(default_factory=lambda: ["lca"])
    n_steps: int | None = None
    hwhm: float = 10.0
    window: list | None = None
    e1g: float | None = None
    quantum: bool = False
    grid: list | None = None
    boundary_tol: float = 1e-8


def _parse_spectrum(raw, D: int) -> SpectrumSpec:
    path = "spectrum"
    sec = _section(raw, path, {"methods": ["lca"], "n_steps": None, "hwhm": 10.0, "window": None, "e1g": None,
                               "quantum": False, "grid": None, "boundary_tol": 1e-8})
    methods = sec["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError(f"{path}.methods: expected a nonempty list")
    methods = [_choice(m, f"{path}.methods[{i}]", ("lha", "lca", "var")) for i, m in enumerate(methods)]
    n = sec["n_steps"]
    if n is not None:
        n = _num(n, f"{path}.n_steps", positive=True, integer=True)
    window = sec["window"]
    if window is not None:
        window = _vec(window, f"{path}.window", 2)
        if window[1] <= window[0]:
            raise ConfigError(f"{path}.window: need low < high")
    e1g = sec["e1g"]
    if e1g is not None:
        e1g = float(_num(e1g, f"{path}.e1g"))
    quantum = sec["quantum"]
    if not isinstance(quantum, bool):
        raise ConfigError(f"{path}.quantum: expected true or false")
    grid = sec["grid"]
    if quantum:
        if D > 2:
            raise ConfigError(f"{path}.quantum: grid reference available only for D <= 2")
        if not isinstance(grid, list) or len(grid) != D:
            raise ConfigError(f"{path}.grid: expected {D} axes [low, high, points]")
        grid = [_vec(ax, f"{path}.grid[{i}]", 3) for i, ax in enumerate(grid)]
        for i, ax in enumerate(grid):
            if ax[2] != int(ax[2]) or ax[2] < 8 or ax[1] <= ax[0]:
                raise ConfigError(f"{path}.grid[{i}]: need low < high and an integer number of points >= 8")
            ax[2] = int(ax[2])
    elif grid is not None:
        raise ConfigError(f"{path}.grid: only meaningful with quantum: true")
    return SpectrumSpec(methods, n, float(_num(sec["hwhm"], f"{path}.hwhm", positive=True)), window, e1g,
                        quantum, grid, float(_num(sec["boundary_tol"], f"{path}.boundary_tol", positive=True)))


@dataclass
class SweepSpec:
    dt: list = field(default_factory=list)
    t_final: float | None = None
    schemes: list = field(default_factory=list)
    integrators: list = field(default_factory=lambda: ["geometric"])
    diagnostics: list = field(default_factory=lambda: ["norm", "effective_energy"])
    record_every: int = 0
    dps: int | None = None


SWEEP_DIAGNOSTICS = ("norm", "effective_energy", "energy", "reversibility", "convergence", "evaluations")


def _parse_sweep(raw) -> SweepSpec:
    path = "sweep"
    sec = _section(raw, path, {"dt": [], "t_final": None, "schemes": [], "integrators": ["geometric"],
                               "diagnostics": ["norm", "effective_energy"], "record_every": 0, "dps": None})
    dts = [float(_num(v, f"{path}.dt[{i}]", positive=True)) for i, v in enumerate(sec["dt"] or [])]
    t_final = sec["t_final"]
    if t_final is not None:
        t_final = float(_num(t_final, f"{path}.t_final", positive=True))
    if not isinstance(sec["schemes"], list):
        raise ConfigError(f"{path}.schemes: expected a list")
    schemes = [_parse_scheme(s, f"{path}.schemes[{i}]") for i, s in enumerate(sec["schemes"])]
    if not isinstance(sec["integrators"], list) or not sec["integrators"]:
        raise ConfigError(f"{path}.integrators: expected a nonempty list")
    integrators = [_choice(v, f"{path}.integrators[{i}]", ("geometric", "rk4"))
                   for i, v in enumerate(sec["integrators"])]
    if not isinstance(sec["diagnostics"], list):
        raise ConfigError(f"{path}.diagnostics: expected a list")
    diags = [_choice(v, f"{path}.diagnostics[{i}]", SWEEP_DIAGNOSTICS) for i, v in enumerate(sec["diagnostics"])]
    record_every = _num(sec["record_every"], f"{path}.record_every", integer=True)
    dps = sec["dps"]
    if dps is not None:
        dps = _num(dps, f"{path}.dps", positive=True, integer=True)
    return SweepSpec(dts, t_final, schemes, integrators, diags, record_every, dps)


@dataclass
class ExperimentConfig:
    task: str
    output: str
    potential: PotentialSpec
    initial_state: InitialStateSpec
    run: RunSpec
    hbar: float = 1.0
    mass: list | None = None
    spectrum: SpectrumSpec = field(default_factory=SpectrumSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    @property
    def dim(self) -> int:
        return len(self.potential.q_eq)

    def build_potential(self):
        return self.potential.build()

    def mass_matrix(self) -> np.ndarray:
        return as_mass_matrix(None if self.mass is None else np.diag(self.mass), self.dim)

    def build_initial_state(self) -> tuple[GaussianState, float]:
        """Initial state and its zero-point energy on the initial (harmonic) surface.

        The energy is ``nan`` when the state is not specified as a harmonic
        ground state.
        """
        init = self.initial_state
        m = self.mass_matrix()
        if init.harmonic_ground_state:
            k = np.diag(m) * np.asarray(init.omega) ** 2
            s0, zpe = harmonic_ground_state(HarmonicPotential(init.q0, k), m, self.hbar)
            return s0.evolve(p=np.asarray(init.p0, dtype=float)), zpe
        h = HellerParams(init.q0, init.p0, 1j * np.diag(init.A0_imag_diag), 0.0, self.hbar, m)
        return from_heller(h), float("nan")

    def to_dict(self) -> dict:
        """Normalized mapping that :func:`parse_config` accepts again."""
        out = _drop_none(asdict(self))
        if self.potential.kind == "harmonic":
            out["potential"] = {k: out["potential"][k] for k in ("kind", "q_eq", "V_eq", "k")}
        else:
            out["potential"].pop("k", None)
        return out


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_drop_none(v) for v in obj]
    return obj


def parse_config(raw) -> ExperimentConfig:
    """Validate a raw mapping (e.g. loaded YAML) into an :class:`ExperimentConfig`."""
    if isinstance(raw, dict) and "config" in raw and "config_sha256" in raw:
        raw = raw["config"]  # a run manifest
    sec = _section(raw, "", {"task": ..., "output": ..., "potential": ..., "initial_state": ..., "run": ...,
                             "hbar": 1.0, "mass": None, "spectrum": None, "sweep": None})
    task = _choice(sec["task"], "task", TASKS)
    if not isinstance(sec["output"], str) or not sec["output"]:
        raise ConfigError("output: expected a nonempty directory name")
    pot = _parse_potential(sec["potential"])
    D = len(pot.q_eq)
    init = _parse_initial(sec["initial_state"], pot)
    run = _parse_run(sec["run"])
    hbar = float(_num(sec["hbar"], "hbar", positive=True))
    mass = sec["mass"]
    if mass is not None:
        mass = _vec(mass, "mass", D)
        if min(mass) <= 0:
            raise ConfigError("mass: entries must be positive")
    spectrum = _parse_spectrum(sec["spectrum"], D)
    sweep = _parse_sweep(sec["sweep"])
    if task in ("convergence-sweep", "geometry-check", "symplecticity") and not sweep.dt:
        raise ConfigError(f"sweep.dt: task {task} needs a list of time steps")
    if task == "symplecticity" and D > 8:
        raise ConfigError("task symplecticity is limited to D <= 8")
    if sweep.dt and sweep.t_final is not None:
        for i, dt in enumerate(sweep.dt):
            _steps_for(sweep.t_final, dt, f"sweep.dt[{i}]")
    cfg = ExperimentConfig(task, sec["output"], pot, init, run, hbar, mass, spectrum, sweep)
    try:
        cfg.build_potential()
        cfg.build_initial_state()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def resolve_config_path(name) -> Path:
    """A file path, or the name of a bundled configuration."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("gwdgeom") / "configs" / path.name
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"configuration {name!r} not found (bundled: {', '.join(BUNDLED)})")


def load_config(name) -> tuple[ExperimentConfig, str]:
    """Parse a configuration file; returns the config and the hash of its normalized form."""
    path = resolve_config_path(name)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    cfg = parse_config(raw)
    return cfg, config_hash(cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
