"""Batch experiments: paired controller comparisons, adaptation runs and seed sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import Config, normalize_kind
from .metrics import CD_BANDS, BandSummary, Metrics, bin_cycles, compute_metrics, cycle_metrics, mean_metrics
from .scenarios import build_scenario
from .sim import PlanCache, RunLog, run_closed_loop

METRIC_ROWS = (  # (label, attribute, reported as)
    ("Control Effort", "effort", "reduction"),
    ("Rise Time", "rise_time", "reduction"),
    ("Maximum Speed", "max_speed", "increase"),
    ("Mean Tracking Error", "mean_error_deg", "increase"),
)


@dataclass
class Comparison:
    kind: str
    seeds: list[int]
    trials: dict[str, list[Metrics]]  # controller -> per-seed metrics
    logs: dict[str, list[RunLog]] = field(default_factory=dict)

    def mean(self, controller: str) -> Metrics:
        return mean_metrics(self.trials[controller])

    def ratio(self, attr: str) -> float:
        """DTMPC mean over TMPC mean of one metric."""
        a, b = getattr(self.mean("dtmpc"), attr), getattr(self.mean("tmpc"), attr)
        return a / b

    def table(self) -> list[dict]:
        rows = []
        for label, attr, kind in METRIC_ROWS:
            t, d = getattr(self.mean("tmpc"), attr), getattr(self.mean("dtmpc"), attr)
            row = {"metric": label, "tmpc": t, "dtmpc": d, "reduction_pct": None, "increase_pct": None}
            if t is not None and d is not None and t != 0:
                if kind == "reduction":
                    row["reduction_pct"] = 100.0 * (1.0 - d / t)
                else:
                    row["increase_pct"] = 100.0 * d / t
            rows.append(row)
        return rows

    def format(self) -> str:
        lines = [f"{self.kind}: averaged over {len(self.seeds)} trial(s)",
                 f"{'metric':<22}{'TMPC':>12}{'DTMPC':>12}{'reduction':>12}{'increase':>12}"]
        for r in self.table():
            def f(x, pct=False):
                if x is None:
                    return "---"
                return f"{x:.1f} %" if pct else f"{x:.4g}"
            lines.append(f"{r['metric']:<22}{f(r['tmpc']):>12}{f(r['dtmpc']):>12}"
                         f"{f(r['reduction_pct'], True):>12}{f(r['increase_pct'], True):>12}")
        return "\n".join(lines)


def run_comparison(config: Config, kind: str, trials: int, first_seed: int = 0, keep_logs: bool = False,
                   cache: PlanCache | None = None) -> Comparison:
    """Run TMPC and DTMPC on the same seeds."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    kind = normalize_kind(kind)
    seeds = list(range(first_seed, first_seed + trials))
    cmp = Comparison(kind=kind, seeds=seeds, trials={})
    for ctrl in ("tmpc", "dtmpc"):
        sc = build_scenario(config, kind=kind, controller=ctrl)
        cache_c = cache if cache is not None else PlanCache()
        mets, logs = [], []
        for s in seeds:
            log = run_closed_loop(sc, s, cache_c)
            mets.append(compute_metrics(log, sc))
            if keep_logs:
                logs.append(log)
        cmp.trials[ctrl] = mets
        if keep_logs:
            cmp.logs[ctrl] = logs
    return cmp


@dataclass
class AdaptationResult:
    log: RunLog
    scenario: object
    per_cycle: list
    bands: list[BandSummary]

    @property
    def final_box(self):
        return self.log.boxes[-1].box

    @property
    def prior(self):
        return self.log.boxes[0].box


def run_adaptation(config: Config, preset: str | None = None, seed: int = 0, controller: str = "adtmpc",
                   bands=CD_BANDS, cache: PlanCache | None = None) -> AdaptationResult:
    """Cycle between the setpoints until identification is quiescent."""
    sc = build_scenario(config, kind="adaptation-cycles", controller=controller, preset_name=preset)
    log = run_closed_loop(sc, seed, cache)
    per = cycle_metrics(log, sc)
    return AdaptationResult(log=log, scenario=sc, per_cycle=per, bands=bin_cycles(per, bands))


def band_baseline(config: Config, preset: str | None = None, seed: int = 0, bands=CD_BANDS,
                  cache: PlanCache | None = None) -> list[BandSummary]:
    """Non-adaptive DTMPC cycling with the drag bound fixed at each band's midpoint."""
    out = []
    for lo, hi in bands:
        upper = 0.5 * (lo + hi)
        cfg = config.replace(smid={"prior_cd": (0.0, upper)})
        res = run_adaptation(cfg, preset, seed, controller="dtmpc", bands=((lo, hi),), cache=cache)
        out.append(res.bands[0])
    return out


def sweep(config: Config, kind: str, controller: str, seeds, preset: str | None = None,
          cache: PlanCache | None = None) -> list[tuple[int, RunLog, Metrics]]:
    sc = build_scenario(config, kind=kind, controller=controller, preset_name=preset)
    cache = cache if cache is not None else PlanCache()
    out = []
    for s in seeds:
        log = run_closed_loop(sc, s, cache)
        out.append((s, log, compute_metrics(log, sc)))
    return out
