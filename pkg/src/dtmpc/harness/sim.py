"""Deterministic multi-rate closed loop: 500 Hz plant and sliding controller,
a planner with fixed simulated latency, and set-membership identification.

Planner timing: a solve started at step ``k`` plans from the point the
active plan predicts for step ``k + latency`` and is swapped in exactly then;
the next solve starts at the same instant.  Because the handoff point comes
from the previous plan rather than the measured state, plans depend only on
the configuration and on what identification has published, so identical
solver inputs are served from a shared cache.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .. import mpc
from ..ancillary import blsc_input, sliding_variable
from ..plant import DisturbanceSampler, PlantState, integrate_step
from ..smid import ParamBox, SetMembershipEstimator
from .scenarios import Scenario

STEP_COLUMNS = ("t", "theta", "theta_dot", "u", "u_star", "s", "phi", "omega", "alpha", "d", "theta_ref")


class RunAborted(RuntimeError):
    """A run could not continue (planner failure or a violated identification bound)."""


@dataclass(frozen=True)
class SolveRecord:
    t_start: float
    t_ready: float
    iterations: int
    status: str
    violation: float
    used: bool
    cached: bool


@dataclass(frozen=True)
class BoxRecord:
    t: float
    box: ParamBox


@dataclass(frozen=True)
class CycleRecord:
    start: float
    arrival: float  # first instant of the settled window
    setpoint: float
    cd_upper: float  # published drag upper bound when the cycle began


@dataclass
class RunLog:
    scenario: str
    seed: int
    steps: dict[str, np.ndarray]
    solves: list[SolveRecord]
    boxes: list[BoxRecord]
    cycles: list[CycleRecord]
    settled: bool
    end_time: float
    aborted: str | None = None

    def __len__(self) -> int:
        return len(self.steps["t"])

    def column(self, name: str) -> np.ndarray:
        return self.steps[name]

    @property
    def tracking_error(self) -> np.ndarray:
        return self.steps["theta"] - self.steps["theta_ref"]


class PlanCache:
    """Memo of planner outputs keyed by a digest of every solver input."""

    def __init__(self, max_entries: int = 20000):
        self.max_entries = max_entries
        self._store: OrderedDict[str, mpc.PlannedTrajectory] = OrderedDict()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(mode: str, cfg: mpc.OcpConfig, tube, prev: mpc.PlannedTrajectory, t0: float) -> str:
        h = hashlib.sha1()
        h.update(f"{mode}|{cfg!r}|{tube!r}|{t0!r}|{prev.t0!r}".encode())
        for name in ("theta", "theta_dot", "phi", "radius", "u", "alpha"):
            h.update(np.ascontiguousarray(getattr(prev, name)).tobytes())
        return h.hexdigest()

    def get(self, key: str):
        plan = self._store.get(key)
        if plan is not None:
            self._store.move_to_end(key)
            self.hits += 1
        return plan

    def put(self, key: str, plan) -> None:
        self.misses += 1
        self._store[key] = plan
        if len(self._store) > self.max_entries:
            self._store.popitem(last=False)


class Planner:
    """Runs one controller's optimizer, with optional caching."""

    def __init__(self, scenario: Scenario, cache: PlanCache | None):
        self.mode = "tmpc" if scenario.controller == "tmpc" else "dtmpc"
        self.cache = cache
        self.tube = mpc.tmpc_design(scenario.ocp) if self.mode == "tmpc" else None

    def initial_plan(self, theta: float, cfg: mpc.OcpConfig) -> mpc.PlannedTrajectory:
        return mpc.hold_plan(theta, cfg, 0.0, dynamic=self.mode == "dtmpc", tube=self.tube)

    def solve(self, prev: mpc.PlannedTrajectory, t0: float, cfg: mpc.OcpConfig):
        key = None
        if self.cache is not None:
            key = PlanCache.key(self.mode, cfg, self.tube, prev, t0)
            plan = self.cache.get(key)
            if plan is not None:
                return plan, True
        x0 = mpc.plan_initial_state(prev, t0)
        if self.mode == "tmpc":
            plan = mpc.solve_tmpc(x0, cfg, prev, t0, tube=self.tube)
        else:
            plan = mpc.solve_dtmpc(x0, cfg, prev, t0)
        if key is not None:
            self.cache.put(key, plan)
        return plan, False


def _model_from_box(model, box: ParamBox):
    lo, hi = box.interval("Cd")
    return replace(model, drag_nominal=0.5 * (lo + hi), drag_error=0.5 * (hi - lo))


@dataclass
class _Settler:
    """Tracks how long the state has stayed settled at the current setpoint."""

    angle: float
    speed: float
    hold: float
    since: float | None = None

    def update(self, t: float, theta: float, theta_dot: float, setpoint: float) -> bool:
        if abs(theta - setpoint) <= self.angle and abs(theta_dot) <= self.speed:
            if self.since is None:
                self.since = t
            return t - self.since >= self.hold - 1e-12
        self.since = None
        return False


def run_closed_loop(scenario: Scenario, seed: int, cache: PlanCache | None = None,
                    initial_theta: float = 0.0) -> RunLog:
    """Simulate one run; deterministic in ``(scenario, seed)``."""
    sc = scenario
    h = sc.inner_dt
    n_lat = max(1, int(round(sc.latency / h)))
    n_max = int(round(sc.max_time / h))
    rng = np.random.default_rng(seed)
    d_rng, noise_rng = rng.spawn(2) if hasattr(rng, "spawn") else (
        np.random.default_rng([seed, 1]), np.random.default_rng([seed, 2]))
    sampler = DisturbanceSampler(sc.disturbance, d_rng, h)
    planner = Planner(sc, cache)
    nominal, gains, u_max = sc.nominal, sc.ocp.gains, sc.ocp.u_max
    cfg = sc.ocp
    truth = np.array(sc.truth_vector)

    estimator = None
    boxes: list[BoxRecord] = []
    if sc.prior is not None:
        estimator = SetMembershipEstimator(sc.prior, sc.truth.mass, sc.truth.gravity, sc.smid_disturbance, h,
                                           batch_size=sc.smid_batch, decimation=sc.smid_decimation,
                                           min_speed=sc.smid_min_speed,
                                           enabled=sc.adaptive)
        boxes.append(BoxRecord(0.0, sc.prior))
        if not sc.prior.contains(truth):
            raise RunAborted("true parameters lie outside the identification prior")
    box_scale = None if sc.prior is None else np.maximum(sc.prior.width, 1e-300)
    last_adapt = 0.0

    state = PlantState(initial_theta, 0.0, 0.0)
    active = planner.initial_plan(initial_theta, cfg)
    pending_step = n_lat
    pending, cached = planner.solve(active, pending_step * h, cfg)
    solves: list[SolveRecord] = []
    cycles: list[CycleRecord] = []
    setpoint_idx = 0
    setpoint = sc.setpoints[0]
    cycle_start = 0.0
    cycle_cd = sc.prior.hi[2] if sc.prior is not None else math.nan
    settler = _Settler(sc.settle_angle, sc.settle_speed, sc.settle_time)
    cols = {name: [] for name in STEP_COLUMNS}
    settled = False
    aborted = None

    k = 0
    while k < n_max:
        t = k * h
        if k == pending_step:
            use = pending.usable
            solves.append(SolveRecord(t - n_lat * h, t, pending.iterations, pending.status.value,
                                      pending.violation, use, cached))
            if use:
                active = pending
            elif t >= active.t_end - 1e-12:
                aborted = f"planner failed at t={t:.3f} s and the previous plan has expired"
                break
            pending_step = k + n_lat
            pending, cached = planner.solve(active, pending_step * h, cfg)

        ref = active.reference(t)
        theta_meas = state.theta
        if sc.measurement_noise > 0:
            theta_meas += noise_rng.uniform(-sc.measurement_noise, sc.measurement_noise)
        meas = PlantState(theta_meas, state.theta_dot, t)
        u = blsc_input(meas, ref, ref.tube, gains, active.model, nominal, u_max)
        d = sampler(state.theta)
        cols["t"].append(t)
        cols["theta"].append(state.theta)
        cols["theta_dot"].append(state.theta_dot)
        cols["u"].append(u)
        cols["u_star"].append(ref.u)
        cols["s"].append(sliding_variable(state, ref, gains.lam))
        cols["phi"].append(ref.phi)
        cols["omega"].append(ref.radius)
        cols["alpha"].append(ref.alpha)
        cols["d"].append(d)
        cols["theta_ref"].append(ref.theta)

        if estimator is not None:
            before = estimator.published
            box = estimator.push(t, theta_meas, state.theta_dot, u)
            if box is not None and box != before:
                boxes.append(BoxRecord(t, box))
                if not box.contains(truth):
                    aborted = f"true parameters left the published box at t={t:.3f} s"
                    break
                if np.any((before.width - box.width) / box_scale > sc.quiescent_tol):
                    last_adapt = t
                if sc.adaptive:
                    cfg = cfg.with_model(_model_from_box(cfg.model, box))

        state = integrate_step(state, u, d, h, sc.truth)
        k += 1

        if settler.update(k * h, state.theta, state.theta_dot, setpoint):
            cycles.append(CycleRecord(cycle_start, settler.since, setpoint, cycle_cd))
            quiet = k * h - last_adapt >= sc.quiescent_time
            if not sc.cycle or quiet:
                settled = True
                break
            setpoint_idx = (setpoint_idx + 1) % len(sc.setpoints)
            setpoint = sc.setpoints[setpoint_idx]
            cfg = replace(cfg, target=setpoint)
            cycle_start = k * h
            cycle_cd = estimator.published.hi[2] if estimator is not None else math.nan
            settler.since = None

    steps = {name: np.asarray(v, float) for name, v in cols.items()}
    return RunLog(scenario=sc.name, seed=seed, steps=steps, solves=solves, boxes=boxes, cycles=cycles,
                  settled=settled, end_time=k * h, aborted=aborted)
