"""Command-line entry point.

Subcommands: `run` (single trial, headless or with the console bridge),
`batch` (seeded Monte Carlo), `replay` (verify a recorded event log through
the FSM), and `export-frames` (re-render a trial's depth frames to disk).

Exit codes: 0 success, 1 trial classified as a failure (single-trial mode)
or replay mismatch, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..autonomy import Human, ReplayMismatch, replay_events
from ..perception import write_depth_frame
from .batch import run_batch
from .logs import read_event_log, write_batch_summary, write_logs
from .scenario import ConfigError, ScenarioConfig, load_scenario, scenario_to_dict
from .trial import Outcome, classify_outcome, run_trial

logger = logging.getLogger("perchsim")


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(getattr(args, "scenario", None))
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    import dataclasses

    cfg = _load(args)
    if args.console:
        from .telemetry import Pacer, TelemetryBridge

        cfg = dataclasses.replace(cfg, confirm_policy=Human())
        pacer = Pacer(factor=args.speed)
        with TelemetryBridge(host=args.host, port=args.port, pacer=pacer) as bridge:
            print(f"operator console bridge: ws://{args.host}:{bridge.port}")
            print("waiting for operator confirmations; Ctrl-C aborts")
            result = run_trial(cfg, seed=args.seed, link=bridge, pacer=pacer)
    else:
        result = run_trial(cfg, seed=args.seed)

    print(f"seed {result.seed}: {result.outcome.value} (final state {result.final_state.value}, "
          f"{result.duration:.2f} s simulated)")
    for key in ("detect", "arrive", "trigger", "engage", "slip", "freefall", "recovery_complete",
                "hold_confirmed"):
        if key in result.timings:
            print(f"  {key:18s} t={result.timings[key]:8.3f} s")
    if args.out:
        paths = write_logs(result, args.out)
        if args.figures:
            from .report import render_trial_figure

            paths.append(render_trial_figure(result, cfg, args.out))
        for p in paths:
            print(f"  wrote {p}")
    return 0 if result.outcome is Outcome.PERCH_SUCCESS else 1


def cmd_batch(args) -> int:
    cfg = _load(args)
    summary, results = run_batch(
        cfg,
        n_trials=args.trials,
        seed_base=args.seed_base,
        parallelism=args.jobs,
        keep_details=bool(args.out),
    )
    print(f"{summary.n_trials} trials, seeds {summary.seed_base}.."
          f"{summary.seed_base + summary.n_trials - 1}")
    for name, count in sorted(summary.counts.items(), key=lambda kv: -kv[1]):
        lo, hi = summary.intervals[name]
        print(f"  {name:18s} {count:5d}  rate {summary.rates[name]:.3f}  95% [{lo:.3f}, {hi:.3f}]")
    if args.out:
        out = Path(args.out)
        for result in results:
            write_logs(result, out)
        path = write_batch_summary(summary, out)
        print(f"  wrote {path}")
        if args.figures:
            from .report import render_batch_figure

            print(f"  wrote {render_batch_figure(summary, out)}")
    return 0


def cmd_replay(args) -> int:
    cfg = _load(args)
    events = read_event_log(args.log)
    try:
        sequence = replay_events(events, cfg.make_autonomy())
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}")
        return 1
    outcome = classify_outcome(events)
    print(" -> ".join(s.value for s in sequence))
    print(f"replay consistent: {len(events)} events, outcome {outcome.value}")
    return 0


def cmd_export_frames(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dumped = []
    meta_path = out / f"frames_{args.trial}.jsonl"

    class FrameDump:
        def __init__(self):
            self.count = 0

        def __call__(self, frame, candidate, t):
            if self.count % args.every == 0:
                path = out / f"frame_{args.trial}_{self.count:05d}_{t:07.3f}.depth"
                write_depth_frame(frame, path)
                record = {"t": round(t, 4), "file": path.name}
                if candidate is not None:
                    record["bbox"] = [int(x) for x in candidate.bbox]
                    record["centroid"] = [round(float(x), 2) for x in candidate.centroid_px]
                dumped.append(record)
            self.count += 1

    result = run_trial(cfg, seed=args.trial, frame_hook=FrameDump())
    with open(meta_path, "w") as f:
        for record in dumped:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"trial seed {args.trial}: {result.outcome.value}; "
          f"{len(dumped)} frames under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perchsim",
        description="Deterministic tree-trunk perching simulator with failure recovery",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single trial")
    p.add_argument("--scenario", help="scenario YAML file (defaults built in)")
    p.add_argument("--seed", type=int, default=None, help="trial seed (default: scenario seed)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--headless", action="store_true", default=True,
                      help="no operator bridge (default)")
    mode.add_argument("--console", dest="console", action="store_true", default=False,
                      help="serve the operator WebSocket bridge and pace in real time")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8866)
    p.add_argument("--speed", type=float, default=1.0, help="initial sim-time speed factor")
    p.add_argument("--out", help="directory for event log, trace CSV, summary, figures")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a seeded Monte Carlo batch")
    p.add_argument("--scenario")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", help="directory for per-trial logs and the summary")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("replay", help="verify a recorded event log against the FSM")
    p.add_argument("--log", required=True, help="events JSONL file")
    p.add_argument("--scenario")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export-frames", help="re-render a trial's depth frames")
    p.add_argument("--trial", type=int, required=True, help="trial seed to re-render")
    p.add_argument("--scenario")
    p.add_argument("--out", default="frames")
    p.add_argument("--every", type=int, default=1, help="keep every Nth rendered frame")
    p.set_defaults(func=cmd_export_frames)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
