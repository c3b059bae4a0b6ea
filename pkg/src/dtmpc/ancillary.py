"""Boundary-layer sliding control, tube dynamics and constraint tightening.

Specialised to the second-order pendulum: the sliding surface is
``s = (theta_dot - theta_dot*) + lam (theta - theta*)``, the boundary layer
``Phi`` is a first-order filter with bandwidth ``alpha`` driven by the
uncertainty bound, and the tube radius ``Omega`` is a first-order filter with
pole ``-lam`` driven by ``Phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .plant import DisturbanceSpec, PendulumParams, PlantState

# tube-radius dynamics  dOmega/dt = A_C * Omega + B_C * Phi  are (-lam, 1)
B_C = 1.0


class InfeasibleTightening(ValueError):
    """The tube is too wide for the hardware limits it has to fit inside.

    ``value`` carries the offending quantity when there is a single one.
    """

    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


@dataclass(frozen=True)
class ControllerGains:
    lam: float = 4.0  # 1/s, sliding-surface time constant
    eta: float = 0.1  # rad/s^2, reaching margin
    alpha_min: float = 40.0  # 1/s
    alpha_max: float = 140.0  # 1/s
    dalpha_max: float = 300.0  # 1/s^2

    def __post_init__(self):
        if not (self.lam > 0 and self.eta > 0 and self.dalpha_max > 0):
            raise ValueError("lam, eta and dalpha_max must be positive")
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")


@dataclass(frozen=True)
class UncertaintyModel:
    """What the controller believes about its model error.

    ``drag_nominal`` and ``drag_error`` are the best estimate and the error
    bound on the drag coefficient; ``disturbance`` is the bound ``D`` on the
    unstructured disturbance.  ``regions`` optionally describes a known
    state-dependent disturbance bound; ``region_pad`` widens each region so
    the planner anticipates it before the reference enters.
    """

    drag_nominal: float = 1.0e-3
    drag_error: float = 1.0e-3
    disturbance: float = 20.0
    regions: DisturbanceSpec | None = None
    region_pad: float = 0.0

    def __post_init__(self):
        if self.drag_error < 0 or self.disturbance < 0:
            raise ValueError("uncertainty bounds must be non-negative")

    def drag_bound(self, theta_dot: float, inertia: float) -> float:
        """Bound on the drag model error, ``(C~/I) theta_dot^2``."""
        return self.drag_error / inertia * theta_dot * theta_dot

    def region_bound(self, theta: float) -> float:
        if self.regions is None:
            return 0.0
        return self.regions.region_level(theta, self.region_pad)

    def drive(self, theta: float, theta_dot: float, inertia: float, eta: float,
              speed_margin: float = 0.0) -> float:
        """Total forcing of the boundary layer, ``Delta + D + eta``.

        The drag bound is taken at ``|theta_dot| + speed_margin`` so that it
        covers every speed inside the tube, not just the reference speed.
        """
        v = abs(theta_dot) + speed_margin
        return self.drag_bound(v, inertia) + self.region_bound(theta) + self.disturbance + eta

    def with_drag(self, nominal: float, error: float) -> "UncertaintyModel":
        return replace(self, drag_nominal=nominal, drag_error=error)


@dataclass(frozen=True)
class TubeState:
    phi: float  # boundary-layer thickness, rad/s
    radius: float  # tube radius Omega, rad
    alpha: float  # control bandwidth, 1/s

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("boundary layer thickness must be positive")
        if self.radius < 0:
            raise ValueError("tube radius must be non-negative")


@dataclass(frozen=True)
class ReferencePoint:
    theta: float
    theta_dot: float
    u: float
    alpha: float
    phi: float
    radius: float
    theta_ddot: float | None = None  # None: model-consistent with u

    @property
    def tube(self) -> TubeState:
        return TubeState(self.phi, self.radius, self.alpha)


def sat(z: float) -> float:
    return -1.0 if z < -1.0 else (1.0 if z > 1.0 else z)


def sliding_variable(state: PlantState, ref: ReferencePoint, lam: float) -> float:
    return (state.theta_dot - ref.theta_dot) + lam * (state.theta - ref.theta)


def nominal_accel(theta: float, theta_dot: float, u: float, nominal: PendulumParams, drag: float) -> float:
    """Acceleration predicted by the controller's model."""
    return (nominal.lever_arm * u - drag * abs(theta_dot) * theta_dot
            - nominal.gravity_torque * math.sin(theta)) / nominal.inertia


def blsc_input(state: PlantState, ref: ReferencePoint, tube: TubeState, gains: ControllerGains,
               model: UncertaintyModel, nominal: PendulumParams, u_max: float = math.inf) -> float:
    """Planned input plus the boundary-layer sliding correction, clamped to ``+-u_max``.

    When ``ref.theta_ddot`` is given and differs from the model-consistent
    acceleration of the reference, the difference is fed forward as well.
    """
    if not tube.phi > 0:
        raise ValueError("boundary layer thickness must be positive")
    I, L = nominal.inertia, nominal.lever_arm
    c_hat = model.drag_nominal
    e_dot = state.theta_dot - ref.theta_dot
    s = e_dot + gains.lam * (state.theta - ref.theta)
    k = tube.alpha * tube.phi
    corr = (nominal.gravity_torque / I * (math.sin(state.theta) - math.sin(ref.theta))
            + c_hat / I * (abs(state.theta_dot) * state.theta_dot - abs(ref.theta_dot) * ref.theta_dot)
            - gains.lam * e_dot
            - k * sat(s / tube.phi))
    if ref.theta_ddot is not None:
        corr += ref.theta_ddot - nominal_accel(ref.theta, ref.theta_dot, ref.u, nominal, c_hat)
    u = ref.u + I / L * corr
    return max(-u_max, min(u_max, u))


def phi_derivative(phi: float, alpha: float, delta: float, disturbance: float, eta: float) -> float:
    return -alpha * phi + delta + disturbance + eta


def steady_phi(alpha: float, delta: float, disturbance: float, eta: float) -> float:
    """Boundary-layer thickness at which ``phi_derivative`` vanishes."""
    return (delta + disturbance + eta) / alpha


def omega_derivative(radius: float, phi: float, lam: float) -> float:
    """Tube-radius rate ``-lam * Omega + Phi``."""
    return -lam * radius + B_C * phi


def speed_error_bound(phi: float, radius: float, lam: float) -> float:
    """Worst-case angular-speed tracking error, ``Phi + lam * Omega``."""
    return phi + lam * radius


def tighten_speed(phi: float, radius: float, lam: float, theta_dot_max: float) -> float:
    bound = theta_dot_max - speed_error_bound(phi, radius, lam)
    if bound <= 0:
        raise InfeasibleTightening(
            f"speed tube {speed_error_bound(phi, radius, lam):.4g} rad/s exceeds limit {theta_dot_max}")
    return bound


def ancillary_input_bound(radius: float, phi: float, alpha: float, speed_err_max: float,
                          theta_dot_max: float, nominal: PendulumParams, lam: float,
                          drag_nominal: float) -> float:
    """Largest feedback input the sliding controller can demand inside the tube (N)."""
    I, L = nominal.inertia, nominal.lever_arm
    return I / L * (nominal.gravity_torque / I * 2.0 * math.sin(radius / 2.0)
                    + drag_nominal / I * speed_err_max * 2.0 * theta_dot_max
                    + lam * speed_err_max
                    + alpha * phi)


def tighten_input(radius: float, phi: float, alpha: float, speed_err_max: float, theta_dot_max: float,
                  nominal: PendulumParams, gains: ControllerGains, u_max: float,
                  drag_nominal: float = 1.0e-3) -> float:
    bound = u_max - ancillary_input_bound(radius, phi, alpha, speed_err_max, theta_dot_max,
                                          nominal, gains.lam, drag_nominal)
    if bound <= 0:
        raise InfeasibleTightening(f"ancillary reserve leaves no input authority ({bound:.4g} N)")
    return bound
