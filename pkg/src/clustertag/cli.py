"""Command-line front end: trace replay, layout/metric experiments,
temporal Monte Carlo runs, and detection campaigns.

Traces are JSON Lines, one event per line::

    {"op": "malloc", "id": 1, "size": 100}
    {"op": "free", "id": 1}

Scenario files are JSON arrays of violation specs (see ``parse_scenarios``).
Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import detect, metrics
from .config import STRATEGIES, RunConfig
from .errors import ClusterTagError, EmptyMultisetError, TraceParseError, TraceProtocolError
from .models import build_model
from .workload import random_ops

SNAPSHOT_EVERY = 512


# -- input parsing -----------------------------------------------------------

def iter_trace(lines):
    """Yield validated trace events from JSONL lines."""
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"bad JSON: {exc}", line=lineno) from exc
        op = event.get("op")
        if op == "malloc":
            if not isinstance(event.get("id"), int) or not isinstance(event.get("size"), int):
                raise TraceParseError("malloc needs integer id and size", line=lineno)
        elif op == "free":
            if not isinstance(event.get("id"), int):
                raise TraceParseError("free needs an integer id", line=lineno)
        else:
            raise TraceParseError(f"unknown op {op!r}", line=lineno)
        yield event


_VIOLATION_KINDS = {
    "adjacent-overflow": lambda spec: detect.AdjacentOverflow(int(spec["offset"])),
    "non-adjacent-overflow": lambda spec: detect.NonAdjacentOverflow(int(spec["offset"])),
    "use-after-free": lambda spec: detect.UseAfterFree(int(spec.get("rounds", 1))),
    "double-free": lambda spec: detect.DoubleFree(),
}


def parse_scenarios(text: str):
    """Parse a JSON scenario file into Scenario objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"bad scenario JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise TraceParseError("scenario file must be a JSON array")
    scenarios = []
    for i, spec in enumerate(raw):
        kind = spec.get("kind")
        make = _VIOLATION_KINDS.get(kind)
        if make is None:
            raise TraceParseError(f"scenario {i}: unknown kind {kind!r}")
        try:
            violation = make(spec)
        except (KeyError, ValueError, AssertionError) as exc:
            raise TraceParseError(f"scenario {i}: {exc}") from exc
        scenarios.append(detect.Scenario(
            name=spec.get("name", f"scenario-{i}"),
            violation=violation,
            trials=int(spec.get("trials", 500)),
            victim_size=int(spec.get("victim_size", 0x18)),
        ))
    return scenarios


# -- commands ----------------------------------------------------------------

def cmd_replay(config: RunConfig, trace_path: str, snapshot_every: int = SNAPSHOT_EVERY):
    """Replay a JSONL trace; returns the stats dict."""
    model = build_model(config)
    live: dict[int, int] = {}
    spatial = metrics.DistanceMultiset(unit=metrics.CHUNK_UNITS)

    def take_snapshot():
        for view in model.snapshot().values():
            spatial.merge(metrics.spatial_distances(view))

    with open(trace_path) as fh:
        for n, event in enumerate(iter_trace(fh), start=1):
            if event["op"] == "malloc":
                if event["id"] in live:
                    raise TraceProtocolError(f"id {event['id']} is already live")
                live[event["id"]] = model.allocate(event["size"], record_id=event["id"])
            else:
                addr = live.pop(event["id"], None)
                if addr is None:
                    raise TraceProtocolError(f"free of unknown id {event['id']}")
                model.deallocate(addr)
            if n % snapshot_every == 0:
                take_snapshot()
    take_snapshot()

    stats = model.stats()
    stats["final_live"] = stats.pop("live")
    stats["spatial"] = _objective_dict(spatial)
    if model.history is not None:
        stats["temporal"] = _objective_dict(metrics.temporal_distances(model.history))
    return stats


def _objective_dict(dist: metrics.DistanceMultiset):
    try:
        return metrics.objectives(dist).as_dict()
    except EmptyMultisetError:
        return {"min": None, "avg": None, "entropy_bits": None, "samples": 0}


def cmd_simulate_temporal(config: RunConfig, rounds: int, out_dir: Path):
    """Run both Monte Carlo arms; write histogram CSVs, return the stats dict."""
    report = {}
    for arm_index, strategy in enumerate((metrics.CIRCULAR_SHIFT, metrics.RANDOM_RETAG)):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, arm_index]))
        result = metrics.monte_carlo_temporal(
            strategy, rounds, rng,
            allocatable=config.allocatable_per_cluster,
            quarantine=config.quarantine)
        report[strategy] = result.as_dict()
        path = out_dir / f"temporal_hist_{strategy}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["distance", "count"])
            writer.writerows(result.samples.csv_rows())
        report[strategy]["histogram_csv"] = str(path)
    return report


def cmd_analyze_spatial(config: RunConfig, ops: int = 20000):
    """Analytic spatial model plus empirical objectives per strategy."""
    report = {"analytic": metrics.cluster_spatial_model(config.density).as_dict(),
              "empirical": {}}
    for strategy in STRATEGIES:
        tag_bits = 8 if strategy in ("clustertag", "random") else config.tag_bits
        cfg = RunConfig(seed=config.seed, density=config.density,
                        quarantine=config.quarantine, strategy=strategy,
                        tag_bits=tag_bits, record_history=False)
        model = build_model(cfg)
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 99]))
        random_ops(model, rng, ops)
        dist = metrics.DistanceMultiset(unit=metrics.CHUNK_UNITS)
        for view in model.snapshot().values():
            dist.merge(metrics.spatial_distances(view))
        report["empirical"][strategy] = _objective_dict(dist)
    return report


def cmd_detect(config: RunConfig, scenarios, model_names, out_path: Path,
               trials_override=None, warmup_ops=None):
    """Run campaigns per scenario per model; write the campaign CSV."""
    rows = []
    for name in model_names:
        tag_bits = 8 if name in ("clustertag", "random") else config.tag_bits
        cfg = RunConfig(seed=config.seed, density=config.density,
                        quarantine=config.quarantine, strategy=name,
                        tag_bits=tag_bits, warmup_ops=config.warmup_ops,
                        record_history=False)
        for scenario in scenarios:
            trials = trials_override or scenario.trials
            if scenario.name == "magma-sweep":
                result = detect.magma_scenario(cfg, config.seed,
                                               victim_size=scenario.victim_size,
                                               warmup_ops=warmup_ops)
                parameter = "sweep"
            else:
                result = detect.run_campaign(cfg, scenario.violation, trials,
                                             config.seed,
                                             victim_size=scenario.victim_size,
                                             warmup_ops=warmup_ops)
                parameter = scenario.violation.parameter
            rows.append([name, scenario.name, parameter, result.trials,
                         result.detected, result.classification,
                         f"{result.miss_rate:.6f}"])
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "violation", "offset_or_rounds", "trials",
                         "detected", "classification", "miss_rate"])
        writer.writerows(rows)
    return rows


# -- argument wiring ---------------------------------------------------------

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--density", type=int, default=5)
    common.add_argument("--quarantine", type=int, default=16)
    common.add_argument("--tag-bits", type=int, default=8, choices=(4, 8))
    common.add_argument("--strategy", default="clustertag", choices=STRATEGIES)
    common.add_argument("--output", default="json", choices=("json", "csv"))
    common.add_argument("--out-dir", default=".")

    parser = argparse.ArgumentParser(prog="clustertag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", parents=[common],
                       help="replay a JSONL malloc/free trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--snapshot-every", type=int, default=SNAPSHOT_EVERY)

    p = sub.add_parser("simulate-temporal", parents=[common],
                       help="Monte Carlo temporal collision distances, both arms")
    p.add_argument("--rounds", type=int, default=30000)

    p = sub.add_parser("analyze-spatial", parents=[common],
                       help="closed-form spatial model plus empirical objectives")
    p.add_argument("--ops", type=int, default=20000)

    p = sub.add_parser("detect", parents=[common],
                       help="vulnerability-injection campaigns")
    p.add_argument("--scenarios", help="scenario JSON file, or preset name "
                                       "'default' or 'magma'", default="default")
    p.add_argument("--models", default=None,
                   help="comma-separated model list or 'all' (default: --strategy)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)

    return parser


def _config_from(args) -> RunConfig:
    return RunConfig(seed=args.seed, density=args.density,
                     quarantine=args.quarantine, tag_bits=args.tag_bits,
                     strategy=args.strategy)


def _emit(args, payload) -> None:
    if args.output == "csv" and isinstance(payload, list):
        writer = csv.writer(sys.stdout)
        writer.writerows(payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    config = _config_from(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "replay":
        _emit(args, cmd_replay(config, args.trace, args.snapshot_every))
    elif args.command == "simulate-temporal":
        _emit(args, cmd_simulate_temporal(config, args.rounds, out_dir))
    elif args.command == "analyze-spatial":
        _emit(args, cmd_analyze_spatial(config, args.ops))
    elif args.command == "detect":
        if args.scenarios == "default":
            scenarios = list(detect.DEFAULT_SCENARIOS)
        elif args.scenarios == "magma":
            scenarios = [detect.Scenario("magma-sweep", None)]
        else:
            scenarios = parse_scenarios(Path(args.scenarios).read_text())
        if args.models in (None, ""):
            model_names = [args.strategy]
        elif args.models == "all":
            model_names = list(STRATEGIES)
        else:
            model_names = [m.strip() for m in args.models.split(",") if m.strip()]
            for m in model_names:
                if m not in STRATEGIES:
                    raise TraceParseError(f"unknown model {m!r}")
        rows = cmd_detect(config, scenarios, model_names, out_dir / "campaigns.csv",
                          trials_override=args.trials, warmup_ops=args.warmup)
        header = [["model", "violation", "offset_or_rounds", "trials",
                   "detected", "classification", "miss_rate"]]
        _emit(args, header + rows if args.output == "csv" else
              {"campaigns_csv": str(out_dir / "campaigns.csv"), "rows": len(rows)})
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:
        # argparse exits: usage problems are input errors
        return 0 if exc.code in (0, None) else 1
    except (TraceParseError, TraceProtocolError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, ClusterTagError) as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
