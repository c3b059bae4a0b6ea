"""Ground-truth pendulum with quadratic drag and injectable disturbance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class PendulumParams:
    """Physical parameters of the swinging arm (SI units)."""

    inertia: float  # kg m^2
    lever_arm: float  # m, where the thrust acts
    com_distance: float  # m
    mass: float  # kg
    gravity: float = 9.81
    drag: float = 0.0  # true drag coefficient, kg m^2

    def __post_init__(self):
        for name in ("inertia", "lever_arm", "com_distance", "mass", "gravity"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (math.isfinite(self.drag) and self.drag >= 0):
            raise ValueError(f"drag must be non-negative, got {self.drag}")
        if self.com_distance > self.lever_arm:
            raise ValueError("center of mass lies beyond the lever arm")

    @property
    def gravity_torque(self) -> float:
        """Peak gravity torque ``L_cm m g`` (N m)."""
        return self.com_distance * self.mass * self.gravity

    def with_drag(self, drag: float) -> "PendulumParams":
        return replace(self, drag=drag)


# CAD-derived hardware configurations; drag is the theoretical coefficient.
PRESETS: dict[str, PendulumParams] = {
    "none": PendulumParams(inertia=4.2e-3, lever_arm=0.23, com_distance=0.0921, mass=0.218, drag=0.204e-3),
    "plate": PendulumParams(inertia=6.9e-3, lever_arm=0.23, com_distance=0.0217, mass=0.309, drag=0.46e-3),
    "scoop": PendulumParams(inertia=7.6e-3, lever_arm=0.23, com_distance=0.0049, mass=0.343, drag=0.55e-3),
}
PRESET_ALIASES = {"no-attachments": "none", "flat-plate": "plate"}


def preset(name: str) -> PendulumParams:
    key = PRESET_ALIASES.get(name, name)
    try:
        return PRESETS[key]
    except KeyError:
        raise ValueError(f"unknown plant preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class PlantState:
    theta: float  # rad, unwrapped
    theta_dot: float  # rad/s
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.theta, self.theta_dot, self.t)):
            raise ValueError(f"non-finite plant state {self}")


def _accel(theta: float, omega: float, u: float, d: float, p: PendulumParams) -> float:
    return (p.lever_arm * u - p.drag * abs(omega) * omega - p.gravity_torque * math.sin(theta)) / p.inertia + d


def dynamics_accel(state: PlantState, u: float, d: float, params: PendulumParams) -> float:
    """Angular acceleration of the arm under thrust ``u`` (N) and disturbance ``d`` (rad/s^2)."""
    if not (math.isfinite(u) and math.isfinite(d)):
        raise ValueError(f"non-finite input u={u}, d={d}")
    return _accel(state.theta, state.theta_dot, u, d, params)


def rk4(theta: float, omega: float, u: float, d: float, dt: float, p: PendulumParams) -> tuple[float, float]:
    """One classical Runge-Kutta step with ``u`` and ``d`` held constant."""
    k1t, k1w = omega, _accel(theta, omega, u, d, p)
    k2t, k2w = omega + 0.5 * dt * k1w, _accel(theta + 0.5 * dt * k1t, omega + 0.5 * dt * k1w, u, d, p)
    k3t, k3w = omega + 0.5 * dt * k2w, _accel(theta + 0.5 * dt * k2t, omega + 0.5 * dt * k2w, u, d, p)
    k4t, k4w = omega + dt * k3w, _accel(theta + dt * k3t, omega + dt * k3w, u, d, p)
    return (theta + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t),
            omega + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w))


def integrate_step(state: PlantState, u: float, d_fn, dt: float, params: PendulumParams) -> PlantState:
    """Advance the plant by ``dt`` with zero-order-hold input.

    ``d_fn`` is either a number or a callable ``d_fn(state) -> float`` sampled
    once at the start of the step and held.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    d = d_fn(state) if callable(d_fn) else float(d_fn)
    if not (math.isfinite(u) and math.isfinite(d)):
        raise ValueError(f"non-finite input u={u}, d={d}")
    theta, omega = rk4(state.theta, state.theta_dot, u, d, dt, params)
    return PlantState(theta, omega, state.t + dt)


def mechanical_energy(state: PlantState, params: PendulumParams) -> float:
    return 0.5 * params.inertia * state.theta_dot**2 - params.gravity_torque * math.cos(state.theta)


# --------------------------------------------------------------- disturbances

PI = math.pi


@dataclass(frozen=True)
class Region:
    lo: float  # rad
    hi: float  # rad
    scale: float  # fraction of the region bound

    def __post_init__(self):
        if not 0.0 <= self.scale <= 1.0:
            raise ValueError("region scale must lie in [0, 1]")
        if self.hi < self.lo:
            raise ValueError("region upper edge below lower edge")

    def contains(self, theta: float, pad: float = 0.0) -> bool:
        return self.lo - pad <= theta <= self.hi + pad


# full strength over [2pi, 3pi], half strength on the shoulders
BANDED_REGIONS = (
    Region(2 * PI, 3 * PI, 1.0),
    Region(1.5 * PI, 2 * PI, 0.5),
    Region(3 * PI, 3.5 * PI, 0.5),
)


@dataclass(frozen=True)
class DisturbanceSpec:
    """Exogenous disturbance: a state-dependent regional part plus a uniform base part.

    The regional part is ``r * scale(theta) * region_bound`` with ``r ~ U(-1, 1)``;
    the base part is ``r_b * base_bound`` everywhere.  Both draws are held for
    ``1/resample_rate`` seconds (``None`` resamples every plant step).
    """

    regions: tuple[Region, ...] = ()
    region_bound: float = 0.0  # rad/s^2
    base_bound: float = 0.0  # rad/s^2
    resample_rate: float | None = None  # Hz
    seed: int = 0

    def __post_init__(self):
        if self.region_bound < 0 or self.base_bound < 0:
            raise ValueError("disturbance bounds must be non-negative")

    def scale(self, theta: float, pad: float = 0.0) -> float:
        return max((r.scale for r in self.regions if r.contains(theta, pad)), default=0.0)

    def region_level(self, theta: float, pad: float = 0.0) -> float:
        """Worst-case regional magnitude at ``theta`` (optionally over ``theta +- pad``)."""
        return self.scale(theta, pad) * self.region_bound

    @property
    def max_region_level(self) -> float:
        return max((r.scale for r in self.regions), default=0.0) * self.region_bound

    @property
    def bound(self) -> float:
        return self.base_bound + self.max_region_level


def sample_region_disturbance(theta: float, spec: DisturbanceSpec, rng: np.random.Generator) -> float:
    """One fresh draw of the regional disturbance at angle ``theta``."""
    r = rng.uniform(-1.0, 1.0)
    return r * spec.region_level(theta)


@dataclass
class DisturbanceSampler:
    """Stateful sampler that holds the random factors between resamples."""

    spec: DisturbanceSpec
    rng: np.random.Generator
    dt: float
    _hold_steps: int = field(init=False)
    _count: int = field(init=False, default=0)
    _r_region: float = field(init=False, default=0.0)
    _r_base: float = field(init=False, default=0.0)

    def __post_init__(self):
        rate = self.spec.resample_rate
        self._hold_steps = 1 if rate is None else max(1, int(round(1.0 / (rate * self.dt))))

    def __call__(self, theta: float) -> float:
        if self._count % self._hold_steps == 0:
            self._r_region = self.rng.uniform(-1.0, 1.0)
            self._r_base = self.rng.uniform(-1.0, 1.0)
        self._count += 1
        return self._r_region * self.spec.region_level(theta) + self._r_base * self.spec.base_bound
