"""Trial artifacts on disk: JSONL event logs, CSV traces, JSON summaries.

Filenames embed the scenario hash (first 8 hex chars) and the seed, so
re-running a seed overwrites its own files and nothing else. Event logs are
written with canonical JSON formatting: identical trials produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Union

from ..autonomy import Event
from .batch import MonteCarloSummary
from .trial import TrialResult

TRACE_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "thrust", "pitch", "state"]


def _stem(result: TrialResult) -> str:
    return f"trial_{result.scenario_hash[:8]}_{result.seed}"


def write_event_log(events: Iterable[Event], path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e.to_dict(), sort_keys=True, separators=(",", ":")))
            f.write("\n")


def read_event_log(path: Union[str, Path]) -> list:
    events = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(Event.from_dict(json.loads(line)))
    return events


def write_trace_csv(result: TrialResult, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        for row in result.trace:
            writer.writerow(
                [f"{row[0]:.6f}"]
                + [f"{x:.9f}" for x in row[1:9]]
                + [row[9]]
            )


def write_logs(result: TrialResult, out_dir: Union[str, Path]) -> list:
    """Write the three per-trial files; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stem = _stem(result)
        events_path = out / f"{stem}.events.jsonl"
        trace_path = out / f"{stem}.traj.csv"
        summary_path = out / f"{stem}.summary.json"
        write_event_log(result.events, events_path)
        write_trace_csv(result, trace_path)
        with open(summary_path, "w") as f:
            json.dump(result.to_summary_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"writing trial logs under {out}: {exc}") from exc
    return [events_path, trace_path, summary_path]


def write_batch_summary(summary: MonteCarloSummary, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"batch_{summary.scenario_hash[:8]}_{summary.seed_base}_{summary.n_trials}.json"
        with open(path, "w") as f:
            json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"writing batch summary under {out}: {exc}") from exc
    return path
