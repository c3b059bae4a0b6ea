"""Set-membership identification of the pendulum parameters.

The parameter vector is ``rho = (I, L, C_d, L_cm)``.  Every aligned
measurement gives the two half-spaces of

    | I theta_ddot - L u + C_d |theta_dot| theta_dot + L_cm m g sin(theta) | <= D I

and the box of admissible parameters is shrunk to the per-parameter extremes
of its intersection with a batch of such half-spaces (eight small LPs).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import convex

PARAM_NAMES = ("I", "L", "Cd", "Lcm")

# central second difference on the five-sample window (outer taps zero) and
# the weights of the held inputs it spans.  Under zero-order hold the stencil
# returns a convex combination of the per-step accelerations, so a disturbance
# bounded by D per step stays bounded by D in every row; the fourth-order
# five-point stencil has kernel weights summing to 7/6 in absolute value and
# would not.  Averaging over two steps instead of four keeps rows sharp.
STENCIL = np.array([0.0, 1.0, -2.0, 1.0, 0.0])
INPUT_WEIGHTS = np.array([0.0, 0.5, 0.5, 0.0])
DELAY = 2  # samples


@dataclass(frozen=True)
class ParamBox:
    """Interval bounds on ``(I, L, C_d, L_cm)`` in SI units."""

    lo: tuple[float, float, float, float]
    hi: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.lo) != 4 or len(self.hi) != 4:
            raise ValueError("a parameter box has four intervals")
        if any(not (math.isfinite(a) and math.isfinite(b)) or a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("every interval must be finite and nonempty")

    @classmethod
    def around(cls, values, rel: tuple[float, float, float, float] | None = None,
               cd: tuple[float, float] | None = None) -> "ParamBox":
        """Box of relative half-widths ``rel`` around ``values``, with an explicit drag interval."""
        v = np.asarray(values, float)
        r = np.zeros(4) if rel is None else np.asarray(rel, float)
        lo, hi = v - r * np.abs(v), v + r * np.abs(v)
        if cd is not None:
            lo[2], hi[2] = cd
        return cls(tuple(float(x) for x in lo), tuple(float(x) for x in hi))

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def interval(self, name: str) -> tuple[float, float]:
        i = PARAM_NAMES.index(name)
        return self.lo[i], self.hi[i]

    def contains(self, rho) -> bool:
        r = np.asarray(rho, float)
        return bool(np.all(self.lower <= r) and np.all(r <= self.upper))

    def intersect(self, other: "ParamBox") -> "ParamBox":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        hi = np.maximum(hi, lo)  # guard against round-off crossing
        return ParamBox(tuple(float(x) for x in lo), tuple(float(x) for x in hi))


@dataclass(frozen=True)
class Measurement:
    theta: float
    theta_dot: float
    theta_ddot: float
    u: float
    t: float


@dataclass(frozen=True)
class RegressorRow:
    """Coefficients of ``I theta_ddot - L u + C_d |w| w + L_cm m g sin(theta)`` and the bound ``D``.

    The residual is ``coeffs @ rho`` (no constant term: mass and gravity are
    known), and the row asserts ``|coeffs @ rho| <= D * I``.
    """

    coeffs: np.ndarray
    disturbance: float

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A, b)`` with ``A rho <= b`` equivalent to the absolute-value row."""
        d = np.array([self.disturbance, 0.0, 0.0, 0.0])
        A = np.vstack([self.coeffs - d, -self.coeffs - d])
        return A, np.zeros(2)


class Differentiator:
    """Ring buffer of 500 Hz samples producing time-aligned measurements.

    ``push(t, theta, theta_dot, u)`` records the state at ``t`` and the input
    held over the following step.  Once five samples are present it returns
    the measurement centred two samples back, otherwise ``None``.
    """

    def __init__(self, dt: float):
        if not dt > 0:
            raise ValueError("sample period must be positive")
        self.dt = dt
        self._buf: deque = deque(maxlen=5)

    def push(self, t: float, theta: float, theta_dot: float, u: float) -> Measurement | None:
        self._buf.append((t, theta, theta_dot, u))
        if len(self._buf) < 5:
            return None
        return differentiate_align(list(self._buf), self.dt)


def differentiate_align(samples, dt: float) -> Measurement | None:
    """Aligned measurement from the last five ``(t, theta, theta_dot, u)`` samples.

    The acceleration is the central second difference about the centre
    sample, which is exact for quadratics; angle and speed are the centre
    sample and the input is the kernel-weighted average of the held inputs.
    """
    if len(samples) < 5:
        return None
    s = np.asarray(samples[-5:], float)
    th = s[:, 1]
    acc = float(STENCIL @ th) / (dt * dt)
    u = float(INPUT_WEIGHTS @ s[:4, 3])
    c = s[DELAY]
    return Measurement(theta=float(c[1]), theta_dot=float(c[2]), theta_ddot=acc, u=u, t=float(c[0]))


def regressor_row(meas: Measurement, mass: float, gravity: float, disturbance: float) -> RegressorRow:
    w = meas.theta_dot
    coeffs = np.array([meas.theta_ddot, -meas.u, abs(w) * w, mass * gravity * math.sin(meas.theta)])
    return RegressorRow(coeffs, disturbance)


@dataclass(frozen=True)
class UpdateResult:
    box: ParamBox
    accepted: bool  # False when the batch was inconsistent with the box


def update_bounds(box: ParamBox, rows, pad: float = 1e-9) -> UpdateResult:
    """Shrink ``box`` to the extremes of ``box`` intersected with the rows.

    The LPs run in normalised coordinates ``rho = mid + half * x`` with
    ``x`` in the unit box and unit-norm rows.  Each extreme is widened by
    ``pad`` times the half-width so round-off cannot exclude a true value.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty batch")
    mid, half = box.midpoint, 0.5 * box.width
    A = np.vstack([r.halfspaces()[0] for r in rows])
    As = A * half[None, :]
    bs = -A @ mid
    norms = np.linalg.norm(As, axis=1)
    keep = norms > 1e-14 * max(1.0, float(norms.max(initial=0.0)))
    if np.any(bs[~keep] < -1e-12 * (1.0 + np.abs(A[~keep] @ mid))):
        return UpdateResult(box, False)
    As, bs = As[keep] / norms[keep, None], bs[keep] / norms[keep]
    lo, hi = box.lower.copy(), box.upper.copy()
    ones = np.ones(4)
    for i in range(4):
        if half[i] == 0.0:
            continue
        for sgn in (1.0, -1.0):
            c = np.zeros(4)
            c[i] = sgn
            res = convex.solve_lp(convex.LinearProgram(c, As, bs, -ones, ones))
            if res.status is not convex.Status.OPTIMAL:
                return UpdateResult(box, False)
            x = float(res.x[i])
            if sgn > 0:
                lo[i] = max(lo[i], mid[i] + half[i] * (x - pad))
            else:
                hi[i] = min(hi[i], mid[i] + half[i] * (x + pad))
    hi = np.maximum(hi, lo)
    return UpdateResult(ParamBox(tuple(map(float, lo)), tuple(map(float, hi))), True)


@dataclass
class Validator:
    """Publishes a bound only after two consecutive candidates confirm it.

    Per bound: when the newest candidate is at least as tight as the one
    before it, the older (looser) one is published; otherwise the published
    bound is held.  Published intervals therefore never widen.
    """

    published: ParamBox
    last: ParamBox | None = None

    def step(self, candidate: ParamBox | None) -> ParamBox:
        if candidate is None:
            self.last = None
            return self.published
        if self.last is not None:
            prev = self.last
            lo, hi = self.published.lower, self.published.upper
            up_lo = candidate.lower >= prev.lower
            up_hi = candidate.upper <= prev.upper
            lo = np.where(up_lo, np.maximum(lo, prev.lower), lo)
            hi = np.where(up_hi, np.minimum(hi, prev.upper), hi)
            hi = np.maximum(hi, lo)
            self.published = ParamBox(tuple(map(float, lo)), tuple(map(float, hi)))
        self.last = candidate
        return self.published


def validate_update(candidate: ParamBox | None, history: Validator) -> ParamBox:
    """Feed one candidate into the two-consecutive-results rule; returns the published box."""
    return history.step(candidate)


@dataclass
class SetMembershipEstimator:
    """Streaming identifier: 500 Hz samples in, validated boxes out at the update rate.

    Every ``decimation``-th aligned measurement becomes a row (50 Hz at the
    defaults) and each new row triggers an update over the ``batch_size``
    most recent rows, so the LPs stay small and consecutive candidates share
    data.  Rows slower than ``min_speed`` are dropped and do not trigger an
    update.
    """

    box: ParamBox
    mass: float
    gravity: float
    disturbance: float
    dt: float
    batch_size: int = 10
    min_speed: float = 0.5
    enabled: bool = True
    decimation: int = 10
    _diff: Differentiator = field(init=False)
    _rows: deque = field(init=False)
    _validator: Validator = field(init=False)
    _count: int = field(init=False, default=0)
    rejected: int = field(init=False, default=0)
    updates: int = field(init=False, default=0)

    def __post_init__(self):
        if self.batch_size < 1 or self.decimation < 1:
            raise ValueError("batch size and decimation must be positive")
        self._diff = Differentiator(self.dt)
        self._rows = deque(maxlen=self.batch_size)
        self._validator = Validator(self.box)

    @property
    def published(self) -> ParamBox:
        return self._validator.published

    def push(self, t: float, theta: float, theta_dot: float, u: float) -> ParamBox | None:
        """Record one sample; returns the published box after an update cycle, else ``None``."""
        meas = self._diff.push(t, theta, theta_dot, u)
        if meas is None:
            return None
        self._count += 1
        if self._count % self.decimation or abs(meas.theta_dot) < self.min_speed:
            return None
        self._rows.append(regressor_row(meas, self.mass, self.gravity, self.disturbance))
        if not self.enabled:
            return self.published
        self.updates += 1
        res = update_bounds(self.published, self._rows)
        if not res.accepted:
            self.rejected += 1
            self._rows.clear()  # an inconsistent window is not reused
        return self._validator.step(res.box if res.accepted else None)
