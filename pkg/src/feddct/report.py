"""Trace CSV format and run summaries."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .engine import RoundReport

TRACE_COLUMNS = (
    "round", "virtual_time_s", "strategy", "selected_tier", "num_selected", "num_completed",
    "num_timed_out", "accuracy", "round_duration_s", "dmax_per_tier",
    # appended so a row round-trips into a RoundReport
    "participants", "timed_out_ids",
)

SMOOTHING_WINDOW = 60
SUSTAIN_REPORTS = 3


def _ids(values: Iterable[int]) -> str:
    return " ".join(str(v) for v in values)


def _parse_ids(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split())


def report_to_row(rep: RoundReport) -> list[str]:
    return [
        str(rep.round), repr(rep.virtual_time_s), rep.strategy, str(rep.selected_tier),
        str(rep.num_selected), str(rep.num_completed), str(rep.num_timed_out),
        repr(rep.accuracy), repr(rep.round_duration_s),
        ";".join(repr(d) for d in rep.dmax_per_tier),
        _ids(rep.participants), _ids(rep.timed_out),
    ]


def row_to_report(row: dict[str, str]) -> RoundReport:
    rep = RoundReport(
        round=int(row["round"]),
        virtual_time_s=float(row["virtual_time_s"]),
        strategy=row["strategy"],
        selected_tier=int(row["selected_tier"]),
        participants=_parse_ids(row["participants"]),
        timed_out=_parse_ids(row["timed_out_ids"]),
        dmax_per_tier=tuple(float(v) for v in row["dmax_per_tier"].split(";") if v),
        accuracy=float(row["accuracy"]),
        round_duration_s=float(row["round_duration_s"]),
    )
    counts = (rep.num_selected, rep.num_completed, rep.num_timed_out)
    if counts != (int(row["num_selected"]), int(row["num_completed"]), int(row["num_timed_out"])):
        raise ValueError(f"round {rep.round}: counts disagree with id lists")
    return rep


def format_trace(reports: Sequence[RoundReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for rep in reports:
        writer.writerow(report_to_row(rep))
    return buf.getvalue()


def write_trace(reports: Sequence[RoundReport], path: str | Path) -> None:
    Path(path).write_text(format_trace(reports))


def read_trace(path: str | Path) -> list[RoundReport]:
    with open(path, newline="") as fh:
        return [row_to_report(row) for row in csv.DictReader(fh)]


def smooth(values: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average over full windows; the plain mean if the series is shorter."""
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        return arr
    if len(arr) < window:
        return np.array([arr.mean()])
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    return (csum[window:] - csum[:-window]) / window


def time_to_target(
    reports: Sequence[RoundReport],
    target: float,
    sustain: int = SUSTAIN_REPORTS,
) -> Optional[float]:
    """Virtual time of the first report opening a run of ``sustain`` reports at or above ``target``."""
    streak = 0
    for i, rep in enumerate(reports):
        streak = streak + 1 if rep.accuracy >= target else 0
        if streak == sustain:
            return reports[i - sustain + 1].virtual_time_s
    return None


@dataclass(frozen=True)
class RunSummary:
    strategy: str
    best_accuracy: float
    time_to_target_s: Optional[float]
    rounds: int
    total_stragglers: int
    config_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def summarize(
    reports: Sequence[RoundReport],
    target: float,
    config_digest: str = "",
    window: int = SMOOTHING_WINDOW,
) -> RunSummary:
    if not reports:
        raise ValueError("empty trace")
    return RunSummary(
        strategy=reports[0].strategy,
        best_accuracy=float(smooth([r.accuracy for r in reports], window).max()),
        time_to_target_s=time_to_target(reports, target),
        rounds=len(reports),
        total_stragglers=sum(r.num_timed_out for r in reports),
        config_digest=config_digest,
    )
