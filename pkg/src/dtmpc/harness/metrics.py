"""Run metrics: effort, rise time, speed, tracking error and ancillary input."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import CycleRecord, RunLog

# drag upper-bound bands for binning adaptation cycles, kg m^2, loosest first
CD_BANDS = ((4.0e-3, 6.0e-3), (2.0e-3, 4.0e-3), (0.0, 2.0e-3))


@dataclass(frozen=True)
class Metrics:
    effort: float  # N^2 s
    rise_time: float | None  # s; None when the setpoint band was never reached
    max_speed: float  # rad/s
    mean_error_deg: float
    mean_ancillary: float  # N
    cycle_time: float | None  # s, start to the first instant of steady state

    @property
    def reached(self) -> bool:
        return self.rise_time is not None


def _window(log: RunLog, start: float | None, end: float | None) -> np.ndarray:
    t = log.steps["t"]
    mask = np.ones(len(t), bool)
    if start is not None:
        mask &= t >= start - 1e-12
    if end is not None:
        mask &= t <= end + 1e-12
    return mask


def compute_metrics(log: RunLog, scenario=None, setpoint: float | None = None, band: float | None = None,
                    dt: float | None = None, start: float | None = None, end: float | None = None,
                    cycle_time: float | None = None) -> Metrics:
    """Metrics over ``[start, end]`` of a log (the whole log by default).

    ``setpoint`` and ``band`` default to the scenario's first setpoint and
    its tube cap; ``dt`` defaults to the scenario's inner step or the log's
    sample spacing.
    """
    st = log.steps
    if len(st["t"]) == 0:
        raise ValueError("empty log")
    if dt is None:
        dt = scenario.inner_dt if scenario is not None else (
            float(st["t"][1] - st["t"][0]) if len(st["t"]) > 1 else 0.0)
    if setpoint is None and scenario is not None:
        setpoint = scenario.setpoints[0]
    if band is None and scenario is not None and setpoint is not None:
        band = scenario.rise_band(setpoint)
    m = _window(log, start, end)
    t, u, us = st["t"][m], st["u"][m], st["u_star"][m]
    theta, ref = st["theta"][m], st["theta_ref"][m]
    rise = None
    if setpoint is not None and band is not None:
        hit = np.nonzero(np.abs(theta - setpoint) <= band)[0]
        if len(hit):
            rise = float(t[hit[0]] - t[0])
    if cycle_time is None and scenario is not None and log.cycles and start is None:
        cycle_time = log.cycles[0].arrival - log.cycles[0].start
    return Metrics(
        effort=float(np.sum(u * u) * dt),
        rise_time=rise,
        max_speed=float(np.max(np.abs(st["theta_dot"][m]))),
        mean_error_deg=math.degrees(float(np.mean(np.abs(theta - ref)))),
        mean_ancillary=float(np.mean(np.abs(u - us))),
        cycle_time=cycle_time,
    )


def cycle_metrics(log: RunLog, scenario) -> list[tuple[CycleRecord, Metrics]]:
    """Metrics of each completed cycle, from its setpoint switch to arrival."""
    out = []
    for c in log.cycles:
        out.append((c, compute_metrics(log, scenario, setpoint=c.setpoint, start=c.start, end=c.arrival,
                                       cycle_time=c.arrival - c.start)))
    return out


def band_of(cd_upper: float, bands=CD_BANDS) -> int | None:
    """Index of the band holding ``cd_upper`` (upper edges inclusive), or None."""
    for i, (lo, hi) in enumerate(bands):
        if (lo < cd_upper or (lo == 0.0 and cd_upper >= 0.0)) and cd_upper <= hi * (1 + 1e-12):
            return i
    return None


@dataclass(frozen=True)
class BandSummary:
    band: tuple[float, float]
    cycles: int
    mean_ancillary: float
    mean_error_deg: float
    mean_max_speed: float


def bin_cycles(per_cycle, bands=CD_BANDS) -> list[BandSummary]:
    """Average per-cycle metrics within each drag-bound band (NaN for empty bands)."""
    groups: list[list[Metrics]] = [[] for _ in bands]
    for cyc, met in per_cycle:
        i = band_of(cyc.cd_upper, bands)
        if i is not None:
            groups[i].append(met)
    out = []
    for b, g in zip(bands, groups):
        if g:
            out.append(BandSummary(b, len(g), float(np.mean([m.mean_ancillary for m in g])),
                                   float(np.mean([m.mean_error_deg for m in g])),
                                   float(np.mean([m.max_speed for m in g]))))
        else:
            out.append(BandSummary(b, 0, math.nan, math.nan, math.nan))
    return out


def trend_holds(summaries: list[BandSummary], min_bands: int = 2) -> bool:
    """Ancillary input and error non-increasing, speed non-decreasing across populated bands."""
    filled = [s for s in summaries if s.cycles > 0]
    if len(filled) < min_bands:
        return False
    return all(b.mean_ancillary <= a.mean_ancillary and b.mean_error_deg <= a.mean_error_deg
               and b.mean_max_speed >= a.mean_max_speed for a, b in zip(filled, filled[1:]))


def mean_metrics(items: list[Metrics]) -> Metrics:
    if not items:
        raise ValueError("no metrics to average")
    rises = [m.rise_time for m in items if m.rise_time is not None]
    cycles = [m.cycle_time for m in items if m.cycle_time is not None]
    return Metrics(
        effort=float(np.mean([m.effort for m in items])),
        rise_time=float(np.mean(rises)) if len(rises) == len(items) else None,
        max_speed=float(np.mean([m.max_speed for m in items])),
        mean_error_deg=float(np.mean([m.mean_error_deg for m in items])),
        mean_ancillary=float(np.mean([m.mean_ancillary for m in items])),
        cycle_time=float(np.mean(cycles)) if len(cycles) == len(items) else None,
    )
