"""Command-line entry point: run trials, experiments, bandwidth analysis, plots.

Every command is deterministic given its flags and seed.  Exit status is 0
only when all requested work completed and every trial finished within the
simulation horizon.  The environment variable COOPSIM_SEED supplies the seed
when --seed is omitted.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import sim_engine
from .netsim import bandwidth_report
from .plotting import parse_trace_csv, speed_profile_svg
from .sim_engine import (
    ScenarioConfig,
    ScenarioMode,
    default_scenario,
    format_summary_table,
    load_scenario,
    run_experiment,
    run_trial,
    summary_csv,
    traces_csv,
    trials_csv,
)

DEFAULT_SEED = 42


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("COOPSIM_SEED")
    return int(env) if env else DEFAULT_SEED


def _load_base_scenario(spec: str, mode: ScenarioMode) -> ScenarioConfig:
    if spec == "default":
        return default_scenario(mode)
    cfg = load_scenario(spec)
    return dataclasses.replace(cfg, mode=mode)


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, ScenarioMode):
        return ScenarioMode(raw)
    raise ValueError(f"cannot override field of type {type(current).__name__}")


def apply_overrides(cfg: ScenarioConfig, overrides: Sequence[str]) -> ScenarioConfig:
    """Apply dotted-path key=value overrides, e.g. params.d_margin=5.0."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        objs = [cfg]
        for name in parts[:-1]:
            objs.append(getattr(objs[-1], name))
        leaf = parts[-1]
        value = _coerce(getattr(objs[-1], leaf), raw)
        patched = dataclasses.replace(objs[-1], **{leaf: value})
        for obj, name in zip(reversed(objs[:-1]), reversed(parts[:-1])):
            patched = dataclasses.replace(obj, **{name: patched})
        cfg = patched
    return cfg


def _parse_modes(value: str) -> list[ScenarioMode]:
    if value == "all":
        return list(ScenarioMode)
    return [ScenarioMode(value)]


def cmd_run(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    try:
        cfg = _load_base_scenario(args.scenario, ScenarioMode(args.mode))
        cfg = apply_overrides(cfg, args.override)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    ok = True
    trials = []
    for i, trial_seed in enumerate(sim_engine.trial_seeds(seed, args.trials)):
        tm = run_trial(cfg, trial_seed, trial_index=i)
        trials.append(tm)
        ok = ok and tm.all_finished
        times = ", ".join(
            f"v{vid}={t:.2f}s" if t is not None else f"v{vid}=DNF"
            for vid, t in sorted(tm.passing_times.items())
        )
        print(f"trial {i}: first_pass=v{tm.first_pass} {times} violations={tm.safety_violations}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"traces_{cfg.mode.value}.csv").write_text(traces_csv(trials))
        print(f"traces written to {out / f'traces_{cfg.mode.value}.csv'}")
    return 0 if ok else 1


def cmd_experiment(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    try:
        modes = _parse_modes(args.modes)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    summaries = []
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for mode in modes:
            cfg = _load_base_scenario(args.scenario, mode)
            cfg = apply_overrides(cfg, args.override)
            summary = run_experiment(cfg, args.trials, master_seed=seed)
            summaries.append(summary)
            (out / f"trials_{mode.value}.csv").write_text(trials_csv(summary))
            (out / f"traces_{mode.value}.csv").write_text(traces_csv(summary.trials))
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    (out / "summary.csv").write_text(summary_csv(summaries))
    print(format_summary_table(summaries))
    if all(s.all_finished for s in summaries):
        return 0
    print("error: some trials did not finish within the horizon", file=sys.stderr)
    return 1


def cmd_bandwidth(args: argparse.Namespace) -> int:
    report = bandwidth_report(
        packet_bytes=args.packet_bytes,
        points=args.points,
        rate_hz=args.rate,
        streams_per_car=args.streams,
        media_rate_bps=args.media,
    )
    lines = report.csv_lines() if args.format == "csv" else report.lines()
    print("\n".join(lines))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    traces_dir = Path(args.traces)
    files = sorted(traces_dir.glob("traces_*.csv"))
    if not files:
        print(f"error: no traces_*.csv files under {traces_dir}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        scenario = f.stem.removeprefix("traces_")
        rows = parse_trace_csv(f.read_text())
        svg = speed_profile_svg(rows, title=f"speed near the intersection: {scenario}")
        target = out / f"speed_profile_{scenario}.svg"
        target.write_text(svg)
        print(f"wrote {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    modes = [m.value for m in ScenarioMode]

    run = sub.add_parser("run", help="run one scenario mode and print per-trial metrics")
    run.add_argument("--scenario", default="default", help="scenario JSON file or 'default'")
    run.add_argument("--mode", default=ScenarioMode.STAND_ALONE.value, choices=modes)
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="directory for trace CSV output")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    run.set_defaults(func=cmd_run)

    exp = sub.add_parser("experiment", help="run scenario modes and write summary/trace CSVs")
    exp.add_argument("--scenario", default="default")
    exp.add_argument("--modes", default="all", help="'all' or one of: " + ", ".join(modes))
    exp.add_argument("--trials", type=int, default=10)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--out", default="results")
    exp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    exp.set_defaults(func=cmd_experiment)

    bw = sub.add_parser("bandwidth", help="print the network load analysis")
    size = bw.add_mutually_exclusive_group()
    size.add_argument("--packet-bytes", type=int, default=None, help="packet size (default: 1460)")
    size.add_argument("--points", type=int, default=None, help="derive size from path points")
    bw.add_argument("--rate", type=float, default=10.0, help="messages per second per stream")
    bw.add_argument("--streams", type=int, default=3, help="streams per car")
    bw.add_argument("--media", type=float, default=6.0e6, help="media data rate, bps")
    bw.add_argument("--format", choices=["text", "csv"], default="text")
    bw.set_defaults(func=cmd_bandwidth)

    plot = sub.add_parser("plot", help="render SVG speed profiles from trace CSVs")
    plot.add_argument("--traces", default="results", help="directory containing traces_*.csv")
    plot.add_argument("--out", default="results", help="output directory for SVG files")
    plot.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
