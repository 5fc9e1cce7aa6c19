"""Command-line front end: single runs, strategy comparisons and parameter sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .core import IID, ConfigError, SimConfig, Strategy, load_config
from .engine import simulate
from .report import RunSummary, format_trace, summarize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

SWEEP_AXES = ("mu", "noniid_fraction", "base_delay_means_s", "strategy")
# fields allowed to differ between configs handed to ``compare``
COMPARABLE_FIELDS = ("strategy", "seed")

COMPARE_COLUMNS = ("strategy", "runs", "best_accuracy", "time_to_target_s", "impr_a", "impr_b")
SWEEP_COLUMNS = ("axis", "value", "strategy", "runs", "best_accuracy", "time_to_target_s",
                 "runs_reaching_target", "total_stragglers")


class IncompatibleConfigs(ConfigError):
    pass


def run_once(cfg: SimConfig) -> tuple[str, RunSummary]:
    """Simulate one config; return its trace CSV text and summary."""
    reports = simulate(cfg).reports
    return format_trace(reports), summarize(reports, cfg.target_accuracy, cfg.digest())


def _summaries(configs: Sequence[SimConfig], jobs: int) -> list[RunSummary]:
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_once, configs))
    else:
        results = [run_once(cfg) for cfg in configs]
    return [summary for _, summary in results]


def _median_time(values: Iterable[Optional[float]]) -> Optional[float]:
    # runs that never reached the target count as infinitely slow
    med = statistics.median(math.inf if v is None else v for v in values)
    return None if math.isinf(med) else med


def check_compatible(configs: Sequence[SimConfig]) -> None:
    if len(configs) < 2:
        raise ConfigError("configs", "compare needs at least two configs")
    ref = configs[0].to_dict()
    for cfg in configs[1:]:
        other = cfg.to_dict()
        diff = sorted(k for k in ref if k not in COMPARABLE_FIELDS and ref[k] != other[k])
        if diff:
            raise IncompatibleConfigs(diff[0], "configs differ in " + ", ".join(diff))


def improvement(subject_acc: float, subject_time: Optional[float],
                base_acc: float, base_time: Optional[float]) -> tuple[float, Optional[float]]:
    """Relative accuracy gain and relative time saving of ``subject`` over a baseline.

    Both are fractions: ``(acc - base_acc) / base_acc`` and
    ``(base_time - time) / base_time``. The time saving is None when either
    side never reached the target.
    """
    impr_a = (subject_acc - base_acc) / base_acc
    if subject_time is None or base_time is None or base_time == 0:
        return impr_a, None
    return impr_a, (base_time - subject_time) / base_time


def comparison_table(summaries: Sequence[RunSummary]) -> list[dict[str, Any]]:
    """Median summary per strategy, each row scored against the best other strategy.

    The best baseline for accuracy is the highest median accuracy; for time,
    the lowest median time among strategies that reached the target. A
    strategy alone in the table is compared with itself.
    """
    order: list[str] = []
    grouped: dict[str, list[RunSummary]] = {}
    for s in summaries:
        if s.strategy not in grouped:
            order.append(s.strategy)
        grouped.setdefault(s.strategy, []).append(s)
    medians = {
        name: (statistics.median(s.best_accuracy for s in runs), _median_time(s.time_to_target_s for s in runs))
        for name, runs in grouped.items()
    }
    rows = []
    for name in order:
        acc, ttt = medians[name]
        others = [medians[o] for o in order if o != name] or [medians[name]]
        base_acc = max(a for a, _ in others)
        reached = [t for _, t in others if t is not None]
        base_time = min(reached) if reached else None
        impr_a, impr_b = improvement(acc, ttt, base_acc, base_time)
        rows.append({"strategy": name, "runs": len(grouped[name]), "best_accuracy": acc,
                     "time_to_target_s": ttt, "impr_a": impr_a, "impr_b": impr_b})
    return rows


def _csv(columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else row[k]) for k in columns})
    return buf.getvalue()


def parse_axis_value(axis: str, text: str) -> Any:
    if axis == "mu":
        return float(text)
    if axis == "noniid_fraction":
        return IID if text == IID else float(text)
    if axis == "base_delay_means_s":
        return tuple(float(v) for v in text.split(","))
    if axis == "strategy":
        return Strategy(text)
    raise ConfigError("axis", f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" for v in value)
    if isinstance(value, Strategy):
        return value.value
    return str(value)


def sweep_configs(base: SimConfig, axis: str, values: Sequence[str], seeds: Sequence[int]) -> list[tuple[str, SimConfig]]:
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    if not values:
        raise ConfigError("values", "empty value list")
    out = []
    for text in values:
        try:
            value = parse_axis_value(axis, text)
        except ValueError as exc:
            raise ConfigError(axis, f"bad value {text!r}: {exc}") from None
        for seed in seeds:
            out.append((_format_value(value), base.replace(**{axis: value, "seed": seed})))
    return out


def sweep_table(axis: str, labelled: Sequence[tuple[str, RunSummary]]) -> list[dict[str, Any]]:
    grouped: dict[tuple[str, str], list[RunSummary]] = {}
    for label, s in labelled:
        grouped.setdefault((label, s.strategy), []).append(s)
    rows = []
    for (label, strategy), runs in grouped.items():
        rows.append({
            "axis": axis, "value": label, "strategy": strategy, "runs": len(runs),
            "best_accuracy": statistics.median(s.best_accuracy for s in runs),
            "time_to_target_s": _median_time(s.time_to_target_s for s in runs),
            "runs_reaching_target": sum(s.time_to_target_s is not None for s in runs),
            "total_stragglers": statistics.median(s.total_stragglers for s in runs),
        })
    return rows


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    trace, summary = run_once(cfg)
    (out / "trace.csv").write_text(trace)
    (out / "summary.json").write_text(summary.to_json())
    (out / "config.resolved.json").write_text(cfg.to_json())
    print(f"{summary.strategy}: best_accuracy={summary.best_accuracy:.4f} "
          f"time_to_target_s={summary.time_to_target_s} -> {out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    configs = [load_config(p) for p in args.configs]
    check_compatible(configs)
    rows = comparison_table(_summaries(configs, args.jobs))
    _emit(_csv(COMPARE_COLUMNS, rows), args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_config(args.config) if args.config else SimConfig()
    seeds = args.seeds if args.seeds else [base.seed]
    labelled = sweep_configs(base, args.axis, args.values, seeds)
    summaries = _summaries([cfg for _, cfg in labelled], args.jobs)
    rows = sweep_table(args.axis, [(label, s) for (label, _), s in zip(labelled, summaries)])
    _emit(_csv(SWEEP_COLUMNS, rows), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feddct", description="Virtual-time federated learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one config and write trace, summary and resolved config")
    p.add_argument("config", nargs="?", help="JSON config (defaults when omitted)")
    p.add_argument("-o", "--output", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="median table across strategies and seeds")
    p.add_argument("configs", nargs="+", help="JSON configs differing only in strategy and seed")
    p.add_argument("-o", "--out", default=None, help="CSV path (stdout when omitted)")
    p.add_argument("-j", "--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="one run per axis value and seed")
    p.add_argument("config", nargs="?", help="base JSON config (defaults when omitted)")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", nargs="+", required=True,
                   help="axis values; delay lists are comma separated, e.g. 5,10,15,20,25")
    p.add_argument("--seeds", nargs="+", type=int, default=None)
    p.add_argument("-o", "--out", default=None, help="CSV path (stdout when omitted)")
    p.add_argument("-j", "--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
