"""Command-line front end: ``partsched validate|run|analyze|generate-frame``.

Exit status: 0 on success, 1 when the input violates a domain rule (invalid
frame, infeasible partition set, cap violation, broken command chain), 2 on
usage, parse or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, trace as tracefile
from .cluster import merge_traces, run_cluster
from .frames import FrameError, Infeasible, generate_major_frame, utilization, validate_major_frame
from .model import ModelError, PartitionSpec, TraceLog, partition_label
from .scenario import ParseError, Scenario, ScenarioInvalid, bundled, format_duration, loads, parse_duration, \
    validate_scenario
from .sim import NodeSimulator

OUT_DIR_ENV = "PARTSCHED_OUT_DIR"

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV) or ".")


def _resolve_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    try:
        return bundled(name)
    except FileNotFoundError:
        raise UsageError(f"no such scenario file or bundled scenario: {name}") from None


def _read_scenario(name: str) -> Scenario:
    path = _resolve_scenario(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    return loads(text)


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        _write(Path(out), text)
    else:
        sys.stdout.write(text)


# -- validate ---------------------------------------------------------

def cmd_validate(args) -> int:
    sc = _read_scenario(args.scenario)
    ok = True
    for node in sc.nodes:
        try:
            frame = sc.node_frame(node.name)
        except Infeasible as exc:
            print(f"{node.name}: infeasible: {exc}")
            ok = False
            continue
        except FrameError as exc:
            print(f"{node.name}: {exc}")
            ok = False
            continue
        if frame is None:
            print(f"{node.name}: no partitions")
            continue
        report = validate_major_frame(frame)
        if report.valid:
            print(f"{node.name}: valid (H={format_duration(frame.hyperperiod)}, {len(frame.minors)} minor frames)")
        else:
            ok = False
            for v in report.violations:
                print(f"{node.name}: {v.format()}")
    for name, frame in sc.frames.items():
        report = validate_major_frame(frame)
        if report.valid:
            print(f"frame {name}: valid")
        else:
            ok = False
            for v in report.violations:
                print(f"frame {name}: {v.format()}")
    if ok:
        try:
            validate_scenario(sc)
        except ScenarioInvalid as exc:
            print(f"invalid: {exc}")
            ok = False
    return EXIT_OK if ok else EXIT_VIOLATION


# -- run --------------------------------------------------------------

def _empty_trace(sc: Scenario) -> TraceLog:
    logs = {n.name: NodeSimulator(sc, n.name).trace(0) for n in sc.nodes}
    return merge_traces(logs)


def summary_report(sc: Scenario, trace: TraceLog) -> dict:
    nodes = {}
    for name in trace.nodes:
        runs = analysis.execution_intervals(trace, name)
        busy = Counter()
        for ivs in runs.values():
            for iv in ivs:
                if iv.task is not None:
                    busy[iv.task] += iv.length
        kinds = Counter(e.kind.value for e in trace.events if e.node == name)
        try:
            jit = analysis.jitter_stats(trace, name)
            jitter = {"mean_us": jit.mean, "max_us": jit.max, "switches": jit.count}
        except analysis.InsufficientData:
            jitter = None
        nodes[name] = {"events": dict(sorted(kinds.items())), "exec_us": dict(sorted(busy.items())),
                       "frame_jitter": jitter}
    return {"scenario": sc.name, "horizon_us": trace.horizon, "seed": sc.seed, "nodes": nodes}


def cmd_run(args) -> int:
    sc = _read_scenario(args.scenario)
    validate_scenario(sc)
    until = sc.horizon if args.until is None else args.until
    if until < 0:
        raise UsageError("--until must not be negative")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if until == 0:
        trace = _empty_trace(sc)
    else:
        trace = merge_traces(run_cluster(sc, until, threads=args.threads, validate=False))
    out = _out_dir()
    trace_path = Path(args.trace_out) if args.trace_out else out / f"{sc.name}.trace"
    report_path = Path(args.report_out) if args.report_out else out / f"{sc.name}.report.json"
    _write(trace_path, tracefile.dumps(trace))
    _write(report_path, json.dumps(summary_report(sc, trace), indent=2, sort_keys=True) + "\n")
    print(f"trace: {trace_path}")
    print(f"report: {report_path}")
    return EXIT_OK


# -- analyze ----------------------------------------------------------

def _latency(trace: TraceLog, fmt: str) -> tuple[str, int]:
    try:
        records = analysis.emergency_latencies(trace)
    except analysis.IncompleteChain as exc:
        return f"incomplete chain: {exc}\n", EXIT_VIOLATION
    summary = analysis.latency_summary(records)
    if fmt == "json":
        doc = {"records": [{"command": r.command_id, "node": r.node, "received_us": r.send_ts,
                            "activated_us": r.activation_ts, "latency_us": r.latency} for r in records],
               "summary": summary}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n", EXIT_OK
    lines = [f"latency cmd={r.command_id} node={r.node} received={r.send_ts} activated={r.activation_ts} "
             f"latency_us={r.latency}" for r in records]
    lines.append(f"summary count={summary['count']} mean_us={summary['mean']:.3f} "
                 f"variance_us2={summary['variance']:.3f}")
    return "\n".join(lines) + "\n", EXIT_OK


def _jitter(trace: TraceLog, fmt: str) -> tuple[str, int]:
    rows = {}
    for node in trace.nodes:
        try:
            s = analysis.jitter_stats(trace, node)
            rows[node] = {"mean_us": s.mean, "max_us": s.max, "switches": s.count}
        except analysis.InsufficientData:
            rows[node] = None
    if fmt == "json":
        return json.dumps({"jitter": rows}, indent=2, sort_keys=True) + "\n", EXIT_OK
    lines = []
    for node, r in rows.items():
        lines.append(f"jitter node={node} insufficient-data" if r is None else
                     f"jitter node={node} switches={r['switches']} mean_us={r['mean_us']:.3f} max_us={r['max_us']}")
    return "\n".join(lines) + "\n", EXIT_OK


def _cap_audit(trace: TraceLog, fmt: str, slack: int) -> tuple[str, int]:
    found = analysis.cap_audit(trace, slack=slack)
    status = EXIT_VIOLATION if found else EXIT_OK
    if fmt == "json":
        doc = {"violations": [{"node": v.node, "task": v.task, "window_start_us": v.window_start,
                               "usage_us": v.usage, "ceiling_us": v.ceiling, "unexcused_us": v.unexcused}
                              for v in found]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n", status
    lines = [f"violation node={v.node} task={v.task} window_start={v.window_start} usage_us={v.usage} "
             f"ceiling_us={v.ceiling} unexcused_us={v.unexcused}" for v in found]
    lines.append(f"cap-audit violations={len(found)}")
    return "\n".join(lines) + "\n", status


def cmd_analyze(args) -> int:
    if not (args.latency or args.jitter or args.cap_audit or args.gantt):
        raise UsageError("choose at least one of --latency, --jitter, --cap-audit, --gantt")
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.trace}: {exc}") from None
    trace = tracefile.loads(text)
    chunks, status = [], EXIT_OK
    if args.latency:
        out, rc = _latency(trace, args.format)
        chunks.append(out)
        status = max(status, rc)
    if args.jitter:
        out, rc = _jitter(trace, args.format)
        chunks.append(out)
        status = max(status, rc)
    if args.cap_audit:
        out, rc = _cap_audit(trace, args.format, args.slack)
        chunks.append(out)
        status = max(status, rc)
    if args.gantt:
        chunks.append(analysis.export_gantt(trace, args.format))
    _emit("".join(chunks), args.out)
    return status


# -- generate-frame ---------------------------------------------------

def _partition_arg(text: str) -> PartitionSpec:
    try:
        pid, period, duration = text.split(":")
        return PartitionSpec(int(pid), parse_duration(period), parse_duration(duration))
    except (ValueError, ModelError) as exc:
        raise argparse.ArgumentTypeError(f"expected ID:PERIOD:DURATION, got {text!r} ({exc})") from None


def cmd_generate_frame(args) -> int:
    groups: list[tuple[str, list[PartitionSpec]]] = []
    if args.scenario:
        sc = _read_scenario(args.scenario)
        groups += [(n.name, list(n.partitions)) for n in sc.nodes if n.partitions]
    if args.partition:
        groups.append(("cli", list(args.partition)))
    if not groups:
        raise UsageError("give a scenario or at least one --partition ID:PERIOD:DURATION")
    lines, status = [], EXIT_OK
    for owner, parts in groups:
        try:
            frame = generate_major_frame(parts)
        except Infeasible as exc:
            lines.append(f"# {owner}: infeasible: {exc}")
            status = EXIT_VIOLATION
            continue
        except FrameError as exc:
            lines.append(f"# {owner}: {exc}")
            status = EXIT_VIOLATION
            continue
        report = validate_major_frame(frame)
        lines.append(f"# {owner}: H={format_duration(frame.hyperperiod)} utilization={float(utilization(parts)):.4f} "
                     f"{'valid' if report.valid else 'INVALID'}")
        lines.append(f"frame {owner} hyperperiod={format_duration(frame.hyperperiod)}")
        for p in frame.partitions:
            lines.append(f"frame_partition {owner} {p.id} period={format_duration(p.period)} "
                         f"duration={format_duration(p.duration)}")
        for m in frame.minors:
            lines.append(f"frame_minor {owner} {partition_label(m.partition)} offset={format_duration(m.offset)} "
                         f"duration={format_duration(m.duration)}")
    _emit("\n".join(lines) + "\n", args.out)
    return status


# -- entry point ------------------------------------------------------

def _duration_arg(text: str) -> int:
    try:
        return parse_duration(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partsched", description="Temporal-partition scheduler simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every node's major frame")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write trace + report",
                       epilog=f"Default outputs go to ${OUT_DIR_ENV} (or the current directory).")
    p.add_argument("scenario")
    p.add_argument("--until", type=_duration_arg, help="horizon override, e.g. 600ms")
    p.add_argument("--trace-out")
    p.add_argument("--report-out")
    p.add_argument("--threads", type=int, default=1, help="worker threads for multi-node runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="post-process a trace file")
    p.add_argument("trace")
    p.add_argument("--latency", action="store_true", help="emergency command latency per node")
    p.add_argument("--jitter", action="store_true", help="frame-switch jitter per node")
    p.add_argument("--cap-audit", action="store_true", help="list unexcused CPU-cap overruns")
    p.add_argument("--gantt", action="store_true", help="export per-CPU lanes")
    p.add_argument("--format", choices=analysis.GANTT_FORMATS, default="text")
    p.add_argument("--slack", type=_duration_arg, default=0, help="cap-audit tolerance")
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("generate-frame", help="build a major frame from partition specs")
    p.add_argument("scenario", nargs="?")
    p.add_argument("-p", "--partition", action="append", type=_partition_arg, metavar="ID:PERIOD:DURATION")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate_frame)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, tracefile.TraceFormatError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioInvalid, FrameError, ModelError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
