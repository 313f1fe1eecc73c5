"""Scenario configuration files.

A scenario is one TOML document.  Parsing is strict: unknown keys and
wrongly typed values raise :class:`ConfigInvalid` naming the offending key
path, so a misspelt gain never silently falls back to a default.
Serialisation writes every set field back (``None`` fields are omitted) and
re-parsing the output gives an equal object.

``MORPHSIM_SEED`` in the environment overrides ``integration.seed``.
"""
from __future__ import annotations

import dataclasses
import math
import os
import sys
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid

SEED_ENV = "MORPHSIM_SEED"


@dataclass
class ConfigurationEntry:
    index: int
    nominal: list
    offset: list | None = None
    true: list | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None


@dataclass
class VehicleSection:
    mass: float = 1.4
    configurations: list[ConfigurationEntry] = field(default_factory=list)


@dataclass
class GainsSection:
    k_R: float = 0.0424
    k_Omega: float = 0.0296
    c: float | None = None
    G: list = field(default_factory=lambda: [0.9, 1.0, 1.1])
    phi_level: float | None = None


@dataclass
class RobustSection:
    delta_R: float | None = None
    eta: float = 3e-4
    eta_policy: str = "fixed"
    gamma: float = 0.5
    eta_max: float = 3e-4
    epsilon_smooth: float = 1e-6
    sign: str = "minus"
    law: str = "smooth"
    nu: float = 1e-3


@dataclass
class ControllerSection:
    case: str = "adaptive"
    adaptation_gain: float = 1.0
    robust: RobustSection | None = None


@dataclass
class DisturbanceSection:
    kind: str = "zero"
    amplitude: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    frequency: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    phase: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    table: list | None = None
    delta_R: float | None = None


@dataclass
class SwitchingSection:
    mode: str = "signal"
    breakpoints: list = field(default_factory=lambda: [[0.0, 1]])
    inside: int = 2
    outside: int = 1
    passage_duration: float = 1.0
    arrival_tolerance: float = 0.05
    rho: float = 0.05
    tau_s: float | None = None
    tau_d: float | None = None


@dataclass
class ReferenceSection:
    kind: str = "hold"
    attitude0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    amplitude: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    frequency: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    phase: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    w0: float = 0.5
    w1: float = 2.0
    sweep_time: float = 60.0
    r_des: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    v_des: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    tau: float | None = None
    yaw: float = 0.0
    k_x: float | None = None
    k_v: float | None = None


@dataclass
class InitialSection:
    attitude_error: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    random_error_angle: float | None = None
    Omega: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    pos: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    vel: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class IntegrationSection:
    dt: float = 1e-3
    horizon: float = 10.0
    seed: int = 0
    log_every: int = 1


@dataclass
class MonitorSection:
    tol: float = 1e-6
    layout: str = "printed"


@dataclass
class OutputSection:
    dir: str = "out"
    prefix: str | None = None


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    description: str = ""
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    gains: GainsSection = field(default_factory=GainsSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    disturbance: DisturbanceSection = field(default_factory=DisturbanceSection)
    switching: SwitchingSection = field(default_factory=SwitchingSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)
    initial: InitialSection = field(default_factory=InitialSection)
    integration: IntegrationSection = field(default_factory=IntegrationSection)
    monitors: MonitorSection = field(default_factory=MonitorSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- construction --------------------------------------------------
    def build(self):
        from .experiment import build_scenario

        return build_scenario(self)

    def to_dict(self) -> dict:
        return _to_dict(self)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def with_overrides(self, dt=None, horizon=None):
        new = dataclasses.replace(self, integration=dataclasses.replace(self.integration))
        if dt is not None:
            new.integration.dt = float(dt)
        if horizon is not None:
            new.integration.horizon = float(horizon)
        validate(new)
        return new


# --------------------------------------------------------------------------
# generic strict (de)serialisation
# --------------------------------------------------------------------------

_CHOICES = {
    "controller.case": ("known", "adaptive", "robust", "robust_baseline"),
    "controller.robust.eta_policy": ("fixed", "adaptive"),
    "controller.robust.sign": ("minus", "plus"),
    "controller.robust.law": ("smooth", "sign"),
    "disturbance.kind": ("zero", "sinusoidal", "table"),
    "switching.mode": ("signal", "schedule"),
    "reference.kind": ("hold", "sinusoid", "chirp", "min_jerk", "waypoint"),
    "monitors.layout": ("printed", "consistent"),
}


def _hints(cls):
    return typing.get_type_hints(cls)


def _strip_optional(tp):
    args = typing.get_args(tp)
    if args and type(None) in args:
        rest = [a for a in args if a is not type(None)]
        return rest[0], True
    return tp, False


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _convert(value, tp, path):
    tp, optional = _strip_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigInvalid("value is required", path)
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigInvalid("expected a table", path)
        return _from_dict(tp, value, path)
    if origin is list or tp is list:
        if not isinstance(value, list):
            raise ConfigInvalid("expected an array", path)
        (item,) = typing.get_args(tp) or (None,)
        if item is not None and dataclasses.is_dataclass(item):
            return [_convert(v, item, f"{path}[{k}]") for k, v in enumerate(value)]
        return [_plain(v, f"{path}[{k}]") for k, v in enumerate(value)]
    if tp is float:
        if not _is_number(value):
            raise ConfigInvalid(f"expected a number, got {value!r}", path)
        v = float(value)
        if not math.isfinite(v):
            raise ConfigInvalid("value must be finite", path)
        return v
    if tp is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigInvalid(f"expected an integer, got {value!r}", path)
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(f"expected true/false, got {value!r}", path)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(f"expected a string, got {value!r}", path)
        if path in _CHOICES and value not in _CHOICES[path]:
            raise ConfigInvalid(f"must be one of {list(_CHOICES[path])}, got {value!r}", path)
        return value
    raise ConfigInvalid(f"unsupported field type {tp}", path)


def _plain(v, path):
    if isinstance(v, list):
        return [_plain(x, f"{path}[{k}]") for k, x in enumerate(v)]
    if _is_number(v):
        return v
    raise ConfigInvalid(f"expected numbers, got {v!r}", path)


def _from_dict(cls, data, prefix=""):
    hints = _hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigInvalid("unknown key", path)
    kwargs = {}
    for f in dataclasses.fields(cls):
        path = f"{prefix}.{f.name}" if prefix else f.name
        if f.name in data:
            kwargs[f.name] = _convert(data[f.name], hints[f.name], path)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(str(exc), prefix or None) from None


def _to_dict(obj):
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if v is None:
            continue
        if dataclasses.is_dataclass(v):
            out[f.name] = _to_dict(v)
        elif isinstance(v, list) and v and dataclasses.is_dataclass(v[0]):
            out[f.name] = [_to_dict(x) for x in v]
        else:
            out[f.name] = v
    return out


# --------------------------------------------------------------------------
# semantic validation
# --------------------------------------------------------------------------


def _vec3(v, path):
    if len(v) != 3 or not all(_is_number(x) for x in v):
        raise ConfigInvalid("expected three numbers", path)


def _positive(v, path, strict=True):
    if v is None:
        return
    if (strict and not v > 0) or (not strict and v < 0):
        raise ConfigInvalid(f"must be {'positive' if strict else 'non-negative'}, got {v}", path)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Semantic checks beyond types (shapes, signs, cross-references)."""
    v = cfg.vehicle
    _positive(v.mass, "vehicle.mass")
    if not v.configurations:
        raise ConfigInvalid("at least one configuration is required", "vehicle.configurations")
    seen = set()
    for k, c in enumerate(v.configurations):
        base = f"vehicle.configurations[{k}]"
        if c.index in seen:
            raise ConfigInvalid(f"duplicate index {c.index}", f"{base}.index")
        seen.add(c.index)
        if len(c.nominal) != 6:
            raise ConfigInvalid("expected six inertia parameters", f"{base}.nominal")
        if c.true is not None and len(c.true) != 6:
            raise ConfigInvalid("expected six inertia parameters", f"{base}.true")
        if c.offset is not None:
            _vec3(c.offset, f"{base}.offset")
        if c.true is not None and c.offset is not None:
            raise ConfigInvalid("give either true or offset", f"{base}.true")
        _positive(c.lambda_min, f"{base}.lambda_min")
        _positive(c.lambda_max, f"{base}.lambda_max")
    g = cfg.gains
    for name in ("k_R", "k_Omega", "c", "phi_level"):
        _positive(getattr(g, name), f"gains.{name}")
    _vec3(g.G, "gains.G")
    if min(g.G) <= 0 or len(set(g.G)) != 3:
        raise ConfigInvalid("entries must be positive and distinct", "gains.G")
    _positive(cfg.controller.adaptation_gain, "controller.adaptation_gain")
    r = cfg.controller.robust
    if r is not None:
        _positive(r.delta_R, "controller.robust.delta_R", strict=False)
        _positive(r.eta, "controller.robust.eta")
        _positive(r.epsilon_smooth, "controller.robust.epsilon_smooth")
        if r.eta_policy == "adaptive" and not 0 < r.gamma < 1:
            raise ConfigInvalid("must lie in (0, 1)", "controller.robust.gamma")
    d = cfg.disturbance
    for name in ("amplitude", "frequency", "phase"):
        _vec3(getattr(d, name), f"disturbance.{name}")
    if d.kind == "table" and not d.table:
        raise ConfigInvalid("table disturbance needs rows", "disturbance.table")
    s = cfg.switching
    if s.mode == "signal":
        if not s.breakpoints:
            raise ConfigInvalid("needs at least one breakpoint", "switching.breakpoints")
        for k, bp in enumerate(s.breakpoints):
            if len(bp) != 2 or not _is_number(bp[0]) or not isinstance(bp[1], int):
                raise ConfigInvalid("expected [time, index]", f"switching.breakpoints[{k}]")
    _positive(s.rho, "switching.rho")
    _positive(s.passage_duration, "switching.passage_duration", strict=False)
    _positive(s.arrival_tolerance, "switching.arrival_tolerance")
    _positive(s.tau_s, "switching.tau_s", strict=False)
    _positive(s.tau_d, "switching.tau_d", strict=False)
    ref = cfg.reference
    for name in ("attitude0", "amplitude", "frequency", "phase", "r_des", "v_des"):
        _vec3(getattr(ref, name), f"reference.{name}")
    _positive(ref.tau, "reference.tau")
    _positive(ref.sweep_time, "reference.sweep_time")
    _positive(ref.k_x, "reference.k_x")
    _positive(ref.k_v, "reference.k_v")
    if s.mode == "schedule" and ref.kind not in ("min_jerk", "waypoint"):
        raise ConfigInvalid("scheduled switching needs a min_jerk or waypoint reference",
                            "switching.mode")
    ini = cfg.initial
    for name in ("attitude_error", "Omega", "pos", "vel"):
        _vec3(getattr(ini, name), f"initial.{name}")
    if ini.random_error_angle is not None and not 0 <= ini.random_error_angle < math.pi:
        raise ConfigInvalid("must lie in [0, pi)", "initial.random_error_angle")
    it = cfg.integration
    _positive(it.dt, "integration.dt")
    _positive(it.horizon, "integration.horizon")
    if it.log_every < 1:
        raise ConfigInvalid("must be >= 1", "integration.log_every")
    if it.seed < 0:
        raise ConfigInvalid("must be non-negative", "integration.seed")
    _positive(cfg.monitors.tol, "monitors.tol")
    return cfg


# --------------------------------------------------------------------------
# entry points
# --------------------------------------------------------------------------


def parse(data: dict) -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from a plain mapping."""
    if not isinstance(data, dict):
        raise ConfigInvalid("top level must be a table")
    cfg = _from_dict(ScenarioConfig, data)
    validate(cfg)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            cfg.integration.seed = int(env)
        except ValueError:
            raise ConfigInvalid(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"not valid TOML: {exc}") from None
    return parse(data)


def load(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"no such file: {path}")
    return loads(path.read_text())


def dumps(cfg: ScenarioConfig) -> str:
    return cfg.to_toml()


def bundled_names() -> list:
    """Names of the scenario files shipped with the package."""
    root = resources.files("morphsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_path(name) -> Path:
    """Filesystem path of a bundled scenario (``name`` with or without ``.toml``)."""
    if not name.endswith(".toml"):
        name += ".toml"
    p = resources.files("morphsim") / "scenarios" / name
    if not p.is_file():
        raise ConfigInvalid(f"no bundled scenario {name!r}; available: {bundled_names()}")
    return Path(str(p))


def load_bundled(name) -> ScenarioConfig:
    return load(bundled_path(name))


def resolve_seed(cfg: ScenarioConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.integration.seed)
