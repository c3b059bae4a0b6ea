"""Run configuration: typed sections with the experiment defaults, loadable from TOML."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONTROLLERS = ("tmpc", "dtmpc", "adtmpc")
SCENARIO_KINDS = ("restricted-tube", "regional-disturbance", "adaptation-cycles", "hover", "custom")
SCENARIO_ALIASES = {"a": "restricted-tube", "b": "regional-disturbance", "adapt": "adaptation-cycles",
                    "adaptation": "adaptation-cycles"}


class ConfigError(ValueError):
    """The configuration does not match the schema."""


@dataclass(frozen=True)
class PlantSection:
    preset: str = "plate"
    drag: float | None = None  # true drag override, kg m^2
    base_disturbance: float | None = None  # realized bound of the uniform part, rad/s^2 (None: D)
    resample_rate: float | None = None  # Hz; None resamples every inner step
    measurement_noise: float = 0.0  # rad, uniform bound on the measured angle


@dataclass(frozen=True)
class GainsSection:
    lam: float = 4.0
    eta: float = 0.1
    alpha_min: float = 40.0
    alpha_max: float = 140.0
    dalpha_max: float = 300.0


@dataclass(frozen=True)
class OcpSection:
    horizon: int = 45
    dt: float = 0.010
    Q: tuple[float, float] = (10.0, 0.1)
    Qf: tuple[float, float] = (10.0, 0.1)
    R: float = 1.0
    M: float = 0.01
    u_max: float = 2.0
    du_max: float = 4.5
    theta_dot_max: float = 15.0
    drag_nominal: float = 1.0e-3  # kg m^2
    drag_error: float = 1.0e-3  # kg m^2
    disturbance: float = 20.0  # D, rad/s^2
    latency: float = 0.100  # s, simulated solve time
    region_pad: float = 0.25  # rad
    cap_pad: float = 0.1  # rad
    max_iter: int = 30


@dataclass(frozen=True)
class ScenarioSection:
    kind: str = "regional-disturbance"
    controller: str = "dtmpc"
    setpoints: tuple[float, ...] | None = None  # rad; None: the kind's default
    omega_max_deg: float | None = None  # default cap; None: the kind's default
    region_bound: float = 20.0  # rad/s^2, regional disturbance level
    max_time: float = 20.0  # s, single-setpoint runs
    max_adapt_time: float = 150.0  # s, adaptation runs
    settle_angle_deg: float = 1.0
    settle_speed: float = 0.2  # rad/s
    settle_time: float = 2.0  # s
    quiescent_time: float = 15.0  # s without adaptation ends a cycling run
    quiescent_tol: float = 1e-3  # bound movement (fraction of prior width) that counts as adaptation
    inner_dt: float = 0.002  # s


@dataclass(frozen=True)
class SmidSection:
    enabled: bool = True
    disturbance: float | None = None  # None: the controller's D
    batch_size: int = 10  # rows per update window
    decimation: int = 10  # one row per this many 500 Hz samples (50 Hz)
    min_speed: float = 0.5  # rad/s
    prior_cd: tuple[float, float] = (0.0, 2.0e-3)
    prior_rel: tuple[float, float, float] = (0.05, 0.05, 0.05)  # I, L, L_cm relative half-widths


@dataclass(frozen=True)
class Config:
    plant: PlantSection = field(default_factory=PlantSection)
    gains: GainsSection = field(default_factory=GainsSection)
    ocp: OcpSection = field(default_factory=OcpSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    smid: SmidSection = field(default_factory=SmidSection)

    def __post_init__(self):
        validate(self)

    def replace(self, **sections: dict[str, Any]) -> "Config":
        """Copy with some fields of some sections changed, e.g. ``replace(plant={"preset": "none"})``."""
        new = {}
        for f in fields(self):
            sec = getattr(self, f.name)
            changes = sections.pop(f.name, None)
            new[f.name] = _section_from(type(sec), changes, base=sec) if changes else sec
        if sections:
            raise ConfigError(f"unknown section(s): {sorted(sections)}")
        return Config(**new)


def _coerce(name: str, typ: Any, value: Any) -> Any:
    text = str(typ)
    if value is None:
        if "None" in text:
            return None
        raise ConfigError(f"{name} may not be empty")
    if text.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        return tuple(float(v) for v in value)
    if "bool" in text:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if "int" in text and "float" not in text:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if "float" in text:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def _section_from(cls, data: dict | None, base=None):
    data = dict(data or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{cls.__name__}]: {sorted(unknown)}")
    kwargs = {k: _coerce(k, known[k].type, v) for k, v in data.items()}
    if base is not None:
        return dataclasses.replace(base, **kwargs)
    return cls(**kwargs)


SECTIONS = {"plant": PlantSection, "gains": GainsSection, "ocp": OcpSection,
            "scenario": ScenarioSection, "smid": SmidSection}


def from_dict(data: dict) -> Config:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    return Config(**{k: _section_from(cls, data.get(k)) for k, cls in SECTIONS.items()})


def load_config(path: str | Path | None) -> Config:
    """Defaults, overridden by the TOML file at ``path`` when given."""
    if path is None:
        return Config()
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data)


def normalize_kind(kind: str) -> str:
    kind = SCENARIO_ALIASES.get(kind.lower(), kind.lower())
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"unknown scenario {kind!r}; choose from {SCENARIO_KINDS}")
    return kind


def validate(cfg: Config) -> None:
    s, o, g, sm, p = cfg.scenario, cfg.ocp, cfg.gains, cfg.smid, cfg.plant
    normalize_kind(s.kind)
    if s.controller not in CONTROLLERS:
        raise ConfigError(f"controller must be one of {CONTROLLERS}")
    if o.horizon < 2 or not o.dt > 0 or o.latency < 0 or o.max_iter < 1:
        raise ConfigError("need horizon >= 2, dt > 0, latency >= 0, max_iter >= 1")
    if not (o.u_max > 0 and o.du_max > 0 and o.theta_dot_max > 0):
        raise ConfigError("ocp limits must be positive")
    if o.drag_error < 0 or o.disturbance < 0 or o.drag_nominal < 0:
        raise ConfigError("uncertainty bounds must be non-negative")
    if not (g.lam > 0 and g.eta > 0 and 0 < g.alpha_min <= g.alpha_max and g.dalpha_max > 0):
        raise ConfigError("invalid controller gains")
    if not s.inner_dt > 0 or s.inner_dt > o.dt:
        raise ConfigError("inner_dt must be positive and no longer than the planner step")
    if s.setpoints is not None and (len(s.setpoints) == 0 or not all(map(math.isfinite, s.setpoints))):
        raise ConfigError("setpoints must be a nonempty list of finite angles")
    if sm.prior_cd[0] > sm.prior_cd[1] or len(sm.prior_cd) != 2 or len(sm.prior_rel) != 3:
        raise ConfigError("smid priors must be [lo, hi] and three relative widths")
    if sm.batch_size < 1 or sm.decimation < 1 or sm.min_speed < 0:
        raise ConfigError("invalid smid batching")
    if p.measurement_noise < 0 or (p.base_disturbance is not None and p.base_disturbance < 0):
        raise ConfigError("noise and disturbance bounds must be non-negative")
