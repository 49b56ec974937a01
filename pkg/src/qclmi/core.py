"""Shared domain types, configuration validation and time grids.

Conventions used throughout the package:

* phase-space points are ordered ``(q1, p1, q2, p2)``;
* each oscillator is ``H_k = (p_k**2 + omega_k**2 * q_k**2) / 2`` (unit mass);
* Husimi densities use the isotropic coherent-state width ``sqrt(hbar)``.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "UnstableModelError",
    "ConvergenceError",
    "PhasePoint",
    "ModelSpec",
    "SubsystemState",
    "DensitySpec",
    "TimeGrid",
    "Numerics",
    "ValidatedConfig",
    "EntropySeries",
    "MODEL_KINDS",
    "validate",
    "build_time_grid",
    "config_from_mapping",
    "config_to_mapping",
    "load_config",
    "dumps_config",
    "loads_config",
    "preset_path",
]

MODEL_KINDS = ("bilinear", "nelson", "rwa")
STATE_KINDS = ("gaussian", "fock")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class UnstableModelError(ConfigError):
    """Quadratic model with a non-oscillatory normal mode."""


class ConvergenceError(RuntimeError):
    """A numerical convergence diagnostic exceeded its threshold."""

    def __init__(self, message: str, diagnostic: str | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class PhasePoint:
    q1: float
    p1: float
    q2: float
    p2: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite phase point {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.q1, self.p1, self.q2, self.p2)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        q1, p1, q2, p2 = (float(v) for v in np.asarray(x, dtype=float).ravel())
        return cls(q1, p1, q2, p2)


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian family and parameters.

    ``kind`` is one of ``"bilinear"`` (``lam*q1*q2``), ``"nelson"``
    (``-q1*p1*p2 + q1**2*q2**2/2``) or ``"rwa"`` (``lam*(q1*q2 + p1*p2)``).
    """

    kind: str
    omega1: float = 1.0
    omega2: float = 1.0
    lam: float = 0.0
    hbar: float = 0.05

    @property
    def is_quadratic(self) -> bool:
        return self.kind in ("bilinear", "rwa")


@dataclass(frozen=True)
class SubsystemState:
    """Initial state of one oscillator: a coherent state or the Fock state ``|1>``."""

    kind: str = "gaussian"
    q: float = 0.0
    p: float = 0.0
    n: int = 1

    @property
    def center(self) -> tuple[float, float]:
        return (self.q, self.p)


@dataclass(frozen=True)
class DensitySpec:
    """Product initial state; its Husimi projection is the classical density."""

    first: SubsystemState = SubsystemState()
    second: SubsystemState = SubsystemState()

    @property
    def factors(self) -> tuple[SubsystemState, SubsystemState]:
        return (self.first, self.second)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.first.q, self.first.p, self.second.q, self.second.p])

    @property
    def is_gaussian(self) -> bool:
        return self.first.kind == "gaussian" and self.second.kind == "gaussian"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * t_max / n_steps`` for ``k = 0..n_steps``."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            raise ConfigError("must be an integer >= 1", "steps")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise ConfigError("must be positive and finite", "tmax")

    @property
    def dt_exact(self) -> Fraction:
        return Fraction(self.t_max) / self.n_steps

    @property
    def dt(self) -> float:
        return float(self.dt_exact)

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.n_steps + 1)
        t = self.t_max * k / self.n_steps
        t[-1] = self.t_max
        return t

    def __len__(self):
        return self.n_steps + 1


@dataclass(frozen=True)
class Numerics:
    """Resolution and sampling knobs; every default is recorded in run manifests."""

    grid_n: int = 64
    grid_n_integrated: int = 48
    grid_span_sigmas: float = 6.0
    mc_samples: int = 0
    mc_bins: int = 64
    rk4_dt: float = 1e-3
    fock_nmax: int = 40
    fock_check: bool = True
    seed: int = 12345
    quantum: str = "auto"
    energy: float = 0.05
    section_seeds: int = 13
    section_crossings: int = 200


@dataclass(frozen=True)
class ValidatedConfig:
    model: ModelSpec
    density: DensitySpec
    grid: TimeGrid
    numerics: Numerics = Numerics()
    flow_method: str = field(default="analytic")


def validate(
    model: ModelSpec,
    density: DensitySpec,
    grid: TimeGrid,
    numerics: Numerics | None = None,
) -> ValidatedConfig:
    """Check every invariant and pick the flow method for ``model``."""
    numerics = numerics or Numerics()
    if model.kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model {model.kind!r}", "model")
    for name, value in (("hbar", model.hbar), ("omega1", model.omega1), ("omega2", model.omega2)):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError("must be positive", name)
    if not math.isfinite(model.lam):
        raise ConfigError("must be finite", "lambda")
    if model.is_quadratic:
        _check_quadratic_stability(model)

    for idx, sub in enumerate(density.factors, start=1):
        if sub.kind not in STATE_KINDS:
            raise ConfigError(f"unknown state {sub.kind!r}", f"state{idx}")
        if not (math.isfinite(sub.q) and math.isfinite(sub.p)):
            raise ConfigError("center must be finite", f"center{idx}_q")
        if sub.kind == "fock":
            if sub.n != 1:
                raise ConfigError("only the n=1 Fock state is supported", f"state{idx}")
            if sub.q != 0.0 or sub.p != 0.0:
                raise ConfigError("Fock-Husimi factor is only defined at the origin", f"center{idx}_q")

    n = numerics
    if n.grid_n < 4 or n.grid_n_integrated < 4:
        raise ConfigError("quadrature needs at least 4 points per axis", "grid_n")
    if not n.grid_span_sigmas > 0:
        raise ConfigError("must be positive", "grid_span_sigmas")
    if n.mc_samples < 0:
        raise ConfigError("must be >= 0", "mc_samples")
    if n.mc_samples and n.mc_bins < 2:
        raise ConfigError("must be >= 2", "mc_bins")
    if not (n.rk4_dt > 0 and math.isfinite(n.rk4_dt)):
        raise ConfigError("must be positive", "rk4_dt")
    if n.fock_nmax < 1:
        raise ConfigError("must be >= 1", "fock_nmax")
    if n.quantum not in ("auto", "gaussian", "fock", "none"):
        raise ConfigError(f"unknown quantum route {n.quantum!r}", "quantum")
    if n.quantum == "gaussian" and not (model.is_quadratic and density.is_gaussian):
        raise ConfigError("gaussian route needs a quadratic model and coherent inputs", "quantum")
    if n.section_seeds < 1 or n.section_crossings < 1:
        raise ConfigError("must be >= 1", "section_seeds")

    method = "analytic" if model.is_quadratic else "rk4"
    return ValidatedConfig(model, density, grid, numerics, method)


def mode_coefficients(model: ModelSpec) -> tuple[tuple[float, float], tuple[float, float]]:
    """``(a, b)`` of ``(a p**2 + b q**2)/2`` for the (q1 +/- q2)/sqrt(2) modes.

    Only meaningful for quadratic models with ``omega1 == omega2``.
    """
    w2 = model.omega1 * model.omega1
    lam = model.lam
    if model.kind == "bilinear":
        return (1.0, w2 + lam), (1.0, w2 - lam)
    if model.kind == "rwa":
        return (1.0 + lam, w2 + lam), (1.0 - lam, w2 - lam)
    raise ValueError(f"{model.kind} is not quadratic")


def _check_quadratic_stability(model: ModelSpec) -> None:
    if model.omega1 == model.omega2:
        for a, b in mode_coefficients(model):
            # a*b < 0 is hyperbolic; a*b == 0 with a nonzero coefficient drifts freely.
            if a * b < 0 or (a * b == 0 and (a != 0 or b != 0)):
                raise UnstableModelError(
                    f"normal mode with (a, b) = ({a:g}, {b:g}) is not oscillatory", "lambda"
                )
        return
    M = np.diag([model.omega1**2, 1.0, model.omega2**2, 1.0])
    M[0, 2] = M[2, 0] = model.lam
    if model.kind == "rwa":
        M[1, 3] = M[3, 1] = model.lam
    J = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    ev = np.linalg.eigvals(J @ M)
    if np.max(np.abs(ev.real)) > 1e-9 * max(1.0, np.max(np.abs(ev))):
        raise UnstableModelError("quadratic form has a hyperbolic mode", "lambda")


def build_time_grid(t_max: float, n_steps: int) -> TimeGrid:
    return TimeGrid(float(t_max), int(n_steps))


@dataclass
class EntropySeries:
    """Per-time entropy records; columns absent from a run stay out of ``columns``."""

    times: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    BASE_COLUMNS = ("S1_cl", "S2_cl", "I_cl", "purity_check", "mc_stderr")

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def set(self, key: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.times.shape:
            raise ValueError(f"column {key} has shape {values.shape}, expected {self.times.shape}")
        self.columns[key] = values

    def header(self) -> list[str]:
        head = ["t"]
        for key in self.BASE_COLUMNS:
            head.append(key)
        head.extend(k for k in self.columns if k not in self.BASE_COLUMNS)
        return head

    def to_csv(self, manifest_name: str | None = None) -> str:
        head = self.header()
        nan = np.full(self.times.shape, np.nan)
        cols = [self.times] + [self.columns.get(k, nan) for k in head[1:]]
        lines = []
        if manifest_name:
            lines.append(f"# manifest={manifest_name}")
        lines.append(",".join(head))
        for row in zip(*cols):
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    if not math.isfinite(v):
        return "nan"
    return f"{v:.12g}"


# --- flat key=value configuration -------------------------------------------------

_NUMERIC_KEYS = {f.name: f for f in dataclasses.fields(Numerics)}


def config_from_mapping(data: Mapping[str, Any], env: Mapping[str, str] | None = None) -> ValidatedConfig:
    """Build a validated config from flat keys; ``SIM_SEED`` in ``env`` overrides ``seed``."""
    data = dict(data)
    known = {
        "model", "omega1", "omega2", "lambda", "hbar", "state1", "state2",
        "center1_q", "center1_p", "center2_q", "center2_p", "tmax", "steps",
    } | set(_NUMERIC_KEYS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}", unknown[0])

    def num(key, default, kind=float):
        if key not in data:
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        if kind is int:
            if float(value) != int(value):
                raise ConfigError(f"expected an integer, got {value!r}", key)
            return int(value)
        return float(value)

    if "model" not in data:
        raise ConfigError("missing", "model")
    kind = str(data["model"]).lower()
    model = ModelSpec(
        kind=kind,
        omega1=num("omega1", 1.0),
        omega2=num("omega2", num("omega1", 1.0)),
        lam=num("lambda", 0.0),
        hbar=num("hbar", 0.05),
    )
    subs = []
    for i in (1, 2):
        skind = str(data.get(f"state{i}", "gaussian")).lower()
        subs.append(SubsystemState(skind, num(f"center{i}_q", 0.0), num(f"center{i}_p", 0.0)))
    density = DensitySpec(*subs)
    if "tmax" not in data:
        raise ConfigError("missing", "tmax")
    grid = TimeGrid(num("tmax", 1.0), num("steps", 100, int))

    kwargs = {}
    for name, f in _NUMERIC_KEYS.items():
        if name not in data:
            continue
        if f.type in ("int", int):
            kwargs[name] = num(name, None, int)
        elif f.type in ("float", float):
            kwargs[name] = num(name, None)
        elif f.type in ("bool", bool):
            if not isinstance(data[name], bool):
                raise ConfigError(f"expected true/false, got {data[name]!r}", name)
            kwargs[name] = data[name]
        else:
            kwargs[name] = str(data[name]).lower()
    env = os.environ if env is None else env
    if env.get("SIM_SEED"):
        try:
            kwargs["seed"] = int(env["SIM_SEED"])
        except ValueError:
            raise ConfigError(f"SIM_SEED must be an integer, got {env['SIM_SEED']!r}", "seed")
    return validate(model, density, grid, Numerics(**kwargs))


def config_to_mapping(cfg: ValidatedConfig) -> dict[str, Any]:
    m, d, g = cfg.model, cfg.density, cfg.grid
    out: dict[str, Any] = {
        "model": m.kind,
        "omega1": m.omega1,
        "omega2": m.omega2,
        "lambda": m.lam,
        "hbar": m.hbar,
        "state1": d.first.kind,
        "state2": d.second.kind,
        "center1_q": d.first.q,
        "center1_p": d.first.p,
        "center2_q": d.second.q,
        "center2_p": d.second.p,
        "tmax": g.t_max,
        "steps": g.n_steps,
    }
    out.update(dataclasses.asdict(cfg.numerics))
    return out


def dumps_config(cfg: ValidatedConfig) -> str:
    """Flat TOML text; ``loads_config(dumps_config(c)) == c``."""
    lines = []
    for key, value in config_to_mapping(cfg).items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = f'"{value}"'
        elif isinstance(value, int):
            text = str(value)
        else:
            text = repr(float(value))
            if text in ("inf", "-inf", "nan"):
                raise ConfigError("non-finite value", key)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def loads_config(text: str, env: Mapping[str, str] | None = None) -> ValidatedConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError("only flat key = value entries are allowed", nested[0])
    return config_from_mapping(data, env=env)


def preset_path(name: str) -> str:
    here = os.path.join(os.path.dirname(__file__), "presets")
    stem = name[:-5] if name.endswith(".toml") else name
    return os.path.join(here, stem + ".toml")


def load_config(path: str, env: Mapping[str, str] | None = None) -> ValidatedConfig:
    """Read a config file; a bare preset name such as ``fig1`` is also accepted."""
    if not os.path.exists(path) and os.path.exists(preset_path(path)):
        path = preset_path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    return loads_config(text, env=env)
