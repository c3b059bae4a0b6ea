"""Scenario definitions: what the plant does, what the controller believes, and when a run ends."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..ancillary import ControllerGains, UncertaintyModel
from ..mpc import OcpConfig, ScpSettings, TubeLimit
from ..plant import BANDED_REGIONS, PI, DisturbanceSpec, PendulumParams, preset
from ..smid import ParamBox
from .config import Config, normalize_kind

# tube caps of the restricted-tube scenario over the same angle bands as the
# regional disturbance: tight on [2pi, 3pi], intermediate on the shoulders
RESTRICTED_CAPS = TubeLimit(0.2, ((2 * PI, 3 * PI, 0.05), (1.5 * PI, 2 * PI, 0.1), (3 * PI, 3.5 * PI, 0.1)))

DEFAULT_CAP_DEG = {"regional-disturbance": 7.5, "adaptation-cycles": 11.5, "hover": 7.5, "custom": 7.5}
DEFAULT_SETPOINTS = {
    "restricted-tube": (5 * PI,),
    "regional-disturbance": (5 * PI,),
    "adaptation-cycles": (5 * PI, PI),
    "hover": (0.0,),
    "custom": (5 * PI,),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    controller: str
    truth: PendulumParams  # simulated hardware
    ocp: OcpConfig  # planner problem, targeting the first setpoint
    disturbance: DisturbanceSpec  # realized exogenous disturbance
    setpoints: tuple[float, ...]
    cycle: bool  # alternate between setpoints until adaptation is quiescent
    latency: float
    inner_dt: float
    max_time: float
    settle_angle: float  # rad
    settle_speed: float
    settle_time: float
    quiescent_time: float
    quiescent_tol: float
    measurement_noise: float
    prior: ParamBox | None  # identification prior (adaptive runs)
    smid_disturbance: float
    smid_batch: int
    smid_decimation: int
    smid_min_speed: float
    adaptive: bool

    @property
    def nominal(self) -> PendulumParams:
        return self.ocp.nominal

    @property
    def truth_vector(self) -> tuple[float, float, float, float]:
        t = self.truth
        return (t.inertia, t.lever_arm, t.drag, t.com_distance)

    def rise_band(self, setpoint: float) -> float:
        """Angle band around the setpoint that counts as arrival: the tube cap there."""
        return self.ocp.omega_max(setpoint)


def build_scenario(config: Config, kind: str | None = None, controller: str | None = None,
                   preset_name: str | None = None) -> Scenario:
    """Assemble a scenario from configuration, optionally overriding kind, controller and preset."""
    sc = config.scenario
    kind = normalize_kind(kind or sc.kind)
    controller = controller or sc.controller
    if controller not in ("tmpc", "dtmpc", "adtmpc"):
        raise ValueError(f"unknown controller {controller!r}")
    p = config.plant
    base = preset(preset_name or p.preset)
    truth = base if p.drag is None else base.with_drag(p.drag)
    nominal = base.with_drag(0.0)  # the controller's drag knowledge lives in the uncertainty model

    o = config.ocp
    adaptive = controller == "adtmpc"
    drag_nominal, drag_error = o.drag_nominal, o.drag_error
    prior = None
    if adaptive or kind == "adaptation-cycles":
        lo, hi = config.smid.prior_cd
        drag_nominal, drag_error = 0.5 * (lo + hi), 0.5 * (hi - lo)
        rel = config.smid.prior_rel
        prior = ParamBox.around([base.inertia, base.lever_arm, 0.0, base.com_distance],
                                rel=(rel[0], rel[1], 0.0, rel[2]), cd=(lo, hi))

    region_bound = sc.region_bound if kind == "regional-disturbance" else 0.0
    regions = BANDED_REGIONS if region_bound > 0 else ()
    D = o.disturbance
    base_d = D if p.base_disturbance is None else p.base_disturbance
    realized = DisturbanceSpec(regions=regions, region_bound=region_bound, base_bound=base_d,
                               resample_rate=p.resample_rate)
    if kind == "hover":
        realized = DisturbanceSpec(base_bound=0.0 if p.base_disturbance is None else p.base_disturbance,
                                   resample_rate=p.resample_rate)
    model = UncertaintyModel(
        drag_nominal=drag_nominal, drag_error=drag_error, disturbance=D,
        regions=DisturbanceSpec(regions=regions, region_bound=region_bound) if regions else None,
        region_pad=o.region_pad if regions else 0.0)

    if kind == "restricted-tube":
        caps = RESTRICTED_CAPS if sc.omega_max_deg is None else TubeLimit(math.radians(sc.omega_max_deg))
    else:
        caps = TubeLimit(math.radians(sc.omega_max_deg or DEFAULT_CAP_DEG[kind]))

    g = config.gains
    gains = ControllerGains(lam=g.lam, eta=g.eta, alpha_min=g.alpha_min, alpha_max=g.alpha_max,
                            dalpha_max=g.dalpha_max)
    setpoints = tuple(sc.setpoints) if sc.setpoints is not None else DEFAULT_SETPOINTS[kind]
    ocp = OcpConfig(nominal=nominal, model=model, gains=gains, omega_max=caps, horizon=o.horizon, dt=o.dt,
                    Q=o.Q, Qf=o.Qf, R=o.R, M=o.M, u_max=o.u_max, du_max=o.du_max,
                    theta_dot_max=o.theta_dot_max, target=setpoints[0], cap_pad=o.cap_pad,
                    scp=ScpSettings(max_iter=o.max_iter))
    cycle = kind == "adaptation-cycles" and len(setpoints) > 1
    sm = config.smid
    return Scenario(
        name=f"{kind}/{controller}/{preset_name or p.preset}", kind=kind, controller=controller, truth=truth,
        ocp=ocp, disturbance=realized, setpoints=setpoints, cycle=cycle, latency=o.latency,
        inner_dt=sc.inner_dt, max_time=sc.max_adapt_time if cycle else sc.max_time,
        settle_angle=math.radians(sc.settle_angle_deg), settle_speed=sc.settle_speed,
        settle_time=sc.settle_time, quiescent_time=sc.quiescent_time, quiescent_tol=sc.quiescent_tol,
        measurement_noise=p.measurement_noise, prior=prior,
        smid_disturbance=D if sm.disturbance is None else sm.disturbance, smid_batch=sm.batch_size, smid_decimation=sm.decimation,
        smid_min_speed=sm.min_speed, adaptive=adaptive and sm.enabled)
