"""Command-line front end: ``run``, ``compare``, ``adapt`` and ``sweep``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from .config import CONTROLLERS, ConfigError, load_config
from .experiments import run_adaptation, run_comparison, sweep
from .logs import write_box_csv, write_run_csv, write_summary_csv
from .metrics import compute_metrics
from .scenarios import build_scenario
from .sim import PlanCache, run_closed_loop
from ..plant import PRESETS


def _metrics_row(seed, m, **extra) -> dict:
    return {"seed": seed, **extra, **asdict(m)}


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _print_metrics(label: str, m) -> None:
    rise = "n/a" if m.rise_time is None else f"{m.rise_time:.3f} s"
    print(f"{label}: effort {m.effort:.4f} N^2 s, rise {rise}, max speed {m.max_speed:.3f} rad/s, "
          f"error {m.mean_error_deg:.3f} deg, ancillary {m.mean_ancillary:.4f} N")


def cmd_run(args, config) -> int:
    sc = build_scenario(config, kind=args.scenario, controller=args.controller, preset_name=args.preset)
    run = run_closed_loop(sc, args.seed)
    m = compute_metrics(run, sc)
    _print_metrics(f"{sc.name} seed {args.seed}", m)
    if run.aborted:
        print(f"aborted: {run.aborted}")
    out = _out_dir(args)
    if out is not None:
        stem = f"{sc.kind}_{sc.controller}_seed{args.seed}"
        write_run_csv(run, out / f"{stem}.csv")
        if run.boxes:
            write_box_csv(run, out / f"{stem}_boxes.csv")
        write_summary_csv([_metrics_row(args.seed, m, controller=sc.controller)], out / f"{stem}_summary.csv")
    return 1 if run.aborted else 0


def cmd_compare(args, config) -> int:
    cmp = run_comparison(config.replace(plant={"preset": args.preset}) if args.preset else config,
                         args.scenario, args.trials, first_seed=args.seed, keep_logs=args.out is not None)
    print(cmp.format())
    out = _out_dir(args)
    if out is not None:
        rows = [_metrics_row(s, m, controller=c) for c, ms in cmp.trials.items() for s, m in zip(cmp.seeds, ms)]
        write_summary_csv(rows, out / f"{cmp.kind}_trials.csv")
        write_summary_csv(cmp.table(), out / f"{cmp.kind}_table.csv")
        for c, logs in cmp.logs.items():
            for s, run in zip(cmp.seeds, logs):
                write_run_csv(run, out / f"{cmp.kind}_{c}_seed{s}.csv")
    return 0


def cmd_adapt(args, config) -> int:
    controller = args.controller if args.controller != "tmpc" else "adtmpc"
    res = run_adaptation(config, args.preset, args.seed, controller=controller)
    prior, final = res.prior.interval("Cd"), res.final_box.interval("Cd")
    print(f"{res.scenario.name} seed {args.seed}: {len(res.log.cycles)} cycles in {res.log.end_time:.2f} s")
    print(f"C_d prior [{prior[0] * 1e3:.4f}, {prior[1] * 1e3:.4f}] g m^2 -> "
          f"final [{final[0] * 1e3:.4f}, {final[1] * 1e3:.4f}] g m^2 "
          f"({100 * (final[1] - final[0]) / (prior[1] - prior[0]):.1f}% of prior width)")
    for b in res.bands:
        lo, hi = b.band
        print(f"  C_d upper in [{lo * 1e3:.0f}, {hi * 1e3:.0f}] g m^2: {b.cycles} cycle(s), ancillary "
              f"{b.mean_ancillary:.4f} N, error {b.mean_error_deg:.3f} deg, max speed {b.mean_max_speed:.3f} rad/s")
    if res.log.aborted:
        print(f"aborted: {res.log.aborted}")
    out = _out_dir(args)
    if out is not None:
        stem = f"adapt_{res.scenario.controller}_{args.preset or config.plant.preset}_seed{args.seed}"
        write_run_csv(res.log, out / f"{stem}.csv")
        write_box_csv(res.log, out / f"{stem}_boxes.csv")
        rows = [{"cycle": i, "start": c.start, "arrival": c.arrival, "setpoint": c.setpoint,
                 "cd_upper": c.cd_upper, **asdict(m)} for i, (c, m) in enumerate(res.per_cycle)]
        if rows:
            write_summary_csv(rows, out / f"{stem}_cycles.csv")
    return 1 if res.log.aborted else 0


def cmd_sweep(args, config) -> int:
    seeds = range(args.seed, args.seed + args.trials)
    results = sweep(config, args.scenario, args.controller, seeds, preset=args.preset, cache=PlanCache())
    for s, run, m in results:
        _print_metrics(f"seed {s}", m)
    out = _out_dir(args)
    if out is not None:
        rows = [_metrics_row(s, m, controller=args.controller, aborted=run.aborted) for s, run, m in results]
        write_summary_csv(rows, out / "sweep_summary.csv")
        for s, run, _ in results:
            write_run_csv(run, out / f"sweep_{args.controller}_seed{s}.csv")
    return 1 if any(run.aborted for _, run, _ in results) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtmpc", description="Dynamic tube MPC pendulum simulations")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "run": (cmd_run, "simulate one scenario", "b"),
        "compare": (cmd_compare, "paired TMPC/DTMPC comparison", "a"),
        "adapt": (cmd_adapt, "adaptation cycles until identification is quiescent", "adapt"),
        "sweep": (cmd_sweep, "one controller over a batch of seeds", "b"),
    }
    for name, (fn, help_text, default_kind) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", default=default_kind,
                       help="restricted-tube (a), regional-disturbance (b), adaptation-cycles, hover, custom")
        p.add_argument("--controller", choices=CONTROLLERS, default="adtmpc" if name == "adapt" else "dtmpc")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=10 if name == "compare" else 1)
        p.add_argument("--out", default=None, help="directory for CSV output")
        p.add_argument("--config", default=None, help="TOML configuration file")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        return args.func(args, config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
