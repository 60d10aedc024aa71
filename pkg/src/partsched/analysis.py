"""Trace post-processing: latencies, jitter, cap audits, availability and
response times, and Gantt export."""
from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .frames import InvalidFrame, validate_major_frame
from .model import (
    BEST_EFFORT_PARTITION,
    MS,
    SYSTEM_PARTITION,
    Criticality,
    MajorFrame,
    SchedulerState,
    TaskMeta,
    TraceKind,
    TraceLog,
    detail_fields,
    is_application_partition,
    parse_partition_label,
    partition_label,
)


class AnalysisError(ValueError):
    pass


class IncompleteChain(AnalysisError):
    pass


class InsufficientData(AnalysisError):
    pass


class UnsupportedFormat(AnalysisError):
    pass


@dataclass(frozen=True)
class Interval:
    start: int
    end: int
    task: Optional[str]
    partition: int

    @property
    def length(self) -> int:
        return self.end - self.start


def _as_trace(traces) -> TraceLog:
    if isinstance(traces, TraceLog):
        return traces
    if isinstance(traces, dict):
        traces = list(traces.values())
    from .cluster import merge_traces
    return merge_traces({name: t for t in traces for name in t.nodes})


# -- interval reconstruction ------------------------------------------

def execution_intervals(trace: TraceLog, node: str) -> dict[int, list[Interval]]:
    """Per-CPU run intervals (idle has task None) covering ``[0, horizon)``."""
    cpus = trace.nodes[node].cpus if node in trace.nodes else 1
    current = {c: (0, None, BEST_EFFORT_PARTITION) for c in range(cpus)}
    out: dict[int, list[Interval]] = {c: [] for c in range(cpus)}
    for e in trace.events:
        if e.node != node or e.kind is not TraceKind.CONTEXT_SWITCH:
            continue
        start, task, part = current[e.cpu]
        if e.timestamp > start:
            out[e.cpu].append(Interval(start, e.timestamp, task, part))
        current[e.cpu] = (e.timestamp, e.next_task, e.partition)
    for c, (start, task, part) in current.items():
        if trace.horizon > start:
            out[c].append(Interval(start, trace.horizon, task, part))
    return out


def task_intervals(trace: TraceLog, node: str, task: str) -> list[Interval]:
    return [iv for ivs in execution_intervals(trace, node).values() for iv in ivs if iv.task == task]


def runnable_intervals(trace: TraceLog, node: str) -> dict[str, list[tuple[int, int]]]:
    """When each task was runnable, from wake/block records."""
    since: dict[str, int] = {}
    out: dict[str, list[tuple[int, int]]] = {}
    for e in trace.events:
        if e.node != node:
            continue
        if e.kind is TraceKind.TASK_WAKE:
            since.setdefault(e.next_task, e.timestamp)
        elif e.kind is TraceKind.TASK_BLOCK and e.prev_task in since:
            start = since.pop(e.prev_task)
            if e.timestamp > start:
                out.setdefault(e.prev_task, []).append((start, e.timestamp))
    for task, start in since.items():
        if trace.horizon > start:
            out.setdefault(task, []).append((start, trace.horizon))
    return out


def frame_windows(trace: TraceLog, node: str) -> list[Interval]:
    """Partition windows as actually switched, cut at reconfigurations."""
    out = []
    open_: Optional[tuple[int, int]] = None
    for e in trace.events:
        if e.node != node:
            continue
        if e.kind is TraceKind.FRAME_SWITCH:
            if open_ is not None and e.timestamp > open_[0]:
                out.append(Interval(open_[0], e.timestamp, None, open_[1]))
            open_ = (e.timestamp, e.partition)
        elif e.kind is TraceKind.RECONFIG and e.detail.startswith(SchedulerState.APP_INACTIVE.value):
            if open_ is not None and e.timestamp > open_[0]:
                out.append(Interval(open_[0], e.timestamp, None, open_[1]))
            open_ = None
    if open_ is not None and trace.horizon > open_[0]:
        out.append(Interval(open_[0], trace.horizon, None, open_[1]))
    return out


def _overlap(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> int:
    """Total overlap of two sorted lists of disjoint intervals."""
    i = j = total = 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _intersect(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    i = j = 0
    out = []
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _union(intervals: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for lo, hi in sorted(intervals):
        if hi <= lo:
            continue
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(lo, hi) for lo, hi in out]


def _subtract(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    j = 0
    for lo, hi in a:
        cur = lo
        while j < len(b) and b[j][1] <= cur:
            j += 1
        k = j
        while k < len(b) and b[k][0] < hi:
            if b[k][0] > cur:
                out.append((cur, b[k][0]))
            cur = max(cur, b[k][1])
            k += 1
        if cur < hi:
            out.append((cur, hi))
    return out


# -- emergency latency ------------------------------------------------

@dataclass(frozen=True)
class LatencyRecord:
    command_id: str
    node: str
    send_ts: int
    activation_ts: int

    @property
    def latency(self) -> int:
        return self.activation_ts - self.send_ts


def emergency_latencies(traces) -> list[LatencyRecord]:
    """Command reception to actuator activation, one record per node per command."""
    trace = _as_trace(traces)
    received: dict[str, int] = {}
    activations: dict[tuple[str, str], int] = {}
    for e in trace.events:
        if e.kind is TraceKind.MESSAGE_RECV:
            f = detail_fields(e.detail)
            if f.get("from") == "ground" and f.get("cmd") not in (None, "-"):
                received.setdefault(f["cmd"], e.timestamp)
        elif e.kind is TraceKind.ACTIVATION:
            cmd = detail_fields(e.detail).get("cmd")
            activations.setdefault((cmd, e.node), e.timestamp)
    if not received:
        raise IncompleteChain("trace holds no command reception")
    actuated_nodes = sorted({t.node for t in trace.tasks.values() if t.actuator}, key=list(trace.nodes).index)
    records = []
    for cmd, sent in received.items():
        for node in actuated_nodes:
            if (cmd, node) not in activations:
                raise IncompleteChain(f"command {cmd}: no activation on node {node}")
            records.append(LatencyRecord(cmd, node, sent, activations[(cmd, node)]))
    return records


def latency_summary(records: Sequence[LatencyRecord]) -> dict[str, float]:
    lat = [r.latency for r in records]
    if not lat:
        raise InsufficientData("no latency records")
    return {"count": len(lat), "mean": statistics.fmean(lat), "variance": statistics.pvariance(lat),
            "min": min(lat), "max": max(lat)}


# -- jitter -----------------------------------------------------------

@dataclass(frozen=True)
class JitterStats:
    mean: float
    max: int
    count: int
    deviations: tuple[int, ...]


def frame_switch_deviations(trace: TraceLog, node: str) -> list[int]:
    """Lateness of each frame switch against the ideal boundary sequence.

    Boundaries are rebuilt from the installed frame: the hyperperiod starts
    at install time plus offset (or at the first switch when no offset was
    set) and each minor frame lasts its configured duration.
    """
    meta = trace.nodes[node]
    frame = meta.frame
    install, offset = meta.boot, meta.offset
    ideal = None
    cursor = 0
    out = []
    for e in trace.events:
        if e.node != node:
            continue
        if e.kind is TraceKind.RECONFIG and e.detail.startswith(SchedulerState.APP_ACTIVE.value):
            frame = MajorFrame.from_text(detail_fields(e.detail)["frame"])
            install, offset, ideal = e.timestamp, None, None
        elif e.kind is TraceKind.FRAME_SWITCH:
            if frame is None:
                raise AnalysisError(f"node {node}: frame switch without an installed frame")
            if ideal is None:
                ideal = e.timestamp if offset is None else install + offset
                cursor = 0
            else:
                ideal += frame.minors[cursor].duration
                cursor = (cursor + 1) % len(frame.minors)
            out.append(e.timestamp - ideal)
    return out


def jitter_stats(trace: TraceLog, node: Optional[str] = None) -> JitterStats:
    nodes = [node] if node is not None else list(trace.nodes)
    devs = [d for n in nodes for d in frame_switch_deviations(trace, n)]
    if len(devs) < 2:
        raise InsufficientData("need at least two frame switches")
    return JitterStats(statistics.fmean(devs), max(devs), len(devs), tuple(devs))


# -- cap audit --------------------------------------------------------

@dataclass(frozen=True)
class CapViolation:
    node: str
    task: str
    window_start: int
    usage: int
    ceiling: int
    unexcused: int


def _ceiling(task: TaskMeta, frame: Optional[MajorFrame], window: int, cpus: int) -> Optional[int]:
    if frame is None or task.criticality is Criticality.BEST_EFFORT or task.cap_percent >= 100:
        return None
    if task.criticality is Criticality.CRITICAL:
        base = frame.hyperperiod
    else:
        spec = next((p for p in frame.partitions if p.id == task.partition), None)
        if spec is None:
            return None
        base = spec.duration * (frame.hyperperiod // spec.period)
    return task.cap_percent * base * window * cpus // 100


def _usage_crossing(runs: list[tuple[int, int]], limit: int) -> Optional[int]:
    """Instant at which cumulative run time first exceeds ``limit``."""
    used = 0
    for lo, hi in runs:
        if used + (hi - lo) > limit:
            return lo + (limit - used)
        used += hi - lo
    return None


def cap_audit(trace: TraceLog, scenario=None, slack: int = 0) -> list[CapViolation]:
    """Windows where a capped task ran past ceiling + ``slack`` while some
    other task that was allowed to run instead was ready."""
    if scenario is not None:
        tasks = {t.id: TaskMeta(t.id, t.node, t.criticality, t.priority, t.partition, t.cpu, t.cap, t.actuator)
                 for t in scenario.tasks}
        window_len = scenario.cap_window
    else:
        tasks = trace.tasks
        window_len = trace.cap_window
    violations = []
    for node, meta in trace.nodes.items():
        ev = trace.for_node(node)
        starts = [e.timestamp for e in ev if e.kind is TraceKind.CAP_WINDOW]
        if not starts:
            continue
        bounds = list(zip(starts, starts[1:] + [trace.horizon]))
        frames_at = [(meta.boot, meta.frame)] + [
            (e.timestamp, MajorFrame.from_text(detail_fields(e.detail)["frame"]))
            for e in ev if e.kind is TraceKind.RECONFIG and "frame=" in e.detail]
        inactive = [(e.timestamp, e.timestamp) for e in ev if e.kind is TraceKind.RECONFIG]
        runs = {c: ivs for c, ivs in execution_intervals(trace, node).items()}
        ready = runnable_intervals(trace, node)
        windows = frame_windows(trace, node)
        node_tasks = [t for t in tasks.values() if t.node == node]

        def frame_for(ts):
            return [f for t0, f in frames_at if t0 <= ts][-1]

        def exhausted_from(task: TaskMeta, lo: int, hi: int) -> int:
            """Instant the task went past its ceiling in window [lo, hi)."""
            ceil_ = _ceiling(task, frame_for(lo), window_len, meta.cpus)
            if ceil_ is None:
                return hi
            mine = _intersect([(iv.start, iv.end) for iv in runs[task.cpu] if iv.task == task.task_id],
                              [(lo, hi)])
            at = _usage_crossing(mine, ceil_)
            return hi if at is None else at

        for task in node_tasks:
            if task.cap_percent >= 100:
                continue
            mine_all = [(iv.start, iv.end) for iv in runs[task.cpu] if iv.task == task.task_id]
            for lo, hi in bounds:
                ceil_ = _ceiling(task, frame_for(lo), window_len, meta.cpus)
                if ceil_ is None:
                    continue
                mine = _intersect(mine_all, [(lo, hi)])
                usage = sum(b - a for a, b in mine)
                over_at = _usage_crossing(mine, ceil_ + slack)
                if over_at is None:
                    continue
                excess = _intersect(mine, [(over_at, hi)])
                competitors = []
                for other in node_tasks:
                    if other.task_id == task.task_id or other.cpu != task.cpu:
                        continue
                    avail = _intersect(ready.get(other.task_id, []), [(lo, exhausted_from(other, lo, hi))])
                    if other.criticality is Criticality.CRITICAL:
                        competitors += avail
                    elif other.criticality is Criticality.APPLICATION:
                        own = [(w.start, w.end) for w in windows if w.partition == other.partition]
                        if task.criticality is Criticality.CRITICAL or other.partition == task.partition:
                            competitors += _intersect(avail, own)
                    elif task.criticality is Criticality.CRITICAL:
                        competitors += avail
                unexcused = _overlap(excess, _union(competitors))
                if unexcused > 0:
                    violations.append(CapViolation(node, task.task_id, lo, usage, ceil_, unexcused))
        del inactive
    return violations


# -- availability and response time -----------------------------------

@dataclass(frozen=True)
class AvailabilityCurve:
    partition: int
    resolution: int
    hyperperiod: int
    samples: np.ndarray  # samples[k] = available time in [0, k*resolution)

    @property
    def horizon(self) -> int:
        return max(len(self.samples) - 1, 0) * self.resolution

    def at(self, t: int) -> int:
        if t % self.resolution:
            raise ValueError(f"{t} is not on the {self.resolution} us sample grid")
        return int(self.samples[t // self.resolution])


def partition_intervals(frame: MajorFrame, partition: int, horizon: int) -> list[tuple[int, int]]:
    """The partition's windows repeated from time 0 up to ``horizon``."""
    out = []
    own = [m for m in frame.minors if m.partition == partition]
    base = 0
    while base < horizon and own:
        for m in own:
            lo, hi = base + m.offset, min(base + m.end, horizon)
            if lo < hi:
                out.append((lo, hi))
        base += frame.hyperperiod
    return out


def availability_curve(frame: MajorFrame, critical_load: Sequence[tuple[int, int]], partition: int,
                       horizon: Optional[int] = None, resolution: int = MS) -> AvailabilityCurve:
    """Cumulative time the partition can use, net of critical load.

    ``critical_load`` holds ``(release, duration)`` busy intervals of the
    critical tasks on the CPU in question; they must not overlap.
    """
    report = validate_major_frame(frame)
    if not report.valid:
        raise InvalidFrame(report)
    if horizon is None:
        horizon = 10 * frame.hyperperiod
    if horizon <= 0:
        return AvailabilityCurve(partition, resolution, frame.hyperperiod, np.zeros(0, dtype=np.int64))
    busy = sorted((r, r + d) for r, d in critical_load if d > 0)
    for (_, a_end), (b_start, _) in zip(busy, busy[1:]):
        if b_start < a_end:
            raise ValueError("critical load intervals overlap")
    free = _subtract(partition_intervals(frame, partition, horizon), busy)
    n = horizon // resolution
    starts = np.array([lo for lo, _ in free], dtype=np.int64)
    ends = np.array([hi for _, hi in free], dtype=np.int64)
    samples = kernels.cumulative_at(starts, ends, resolution, n)
    return AvailabilityCurve(partition, resolution, frame.hyperperiod, samples)


@dataclass(frozen=True)
class Demand:
    """A task's worst-case budget per period."""

    budget: int
    period: int


UNBOUNDED = None


def response_time(task: Demand, higher_prio_peers: Sequence[Demand], curve: AvailabilityCurve,
                  horizon: Optional[int] = None) -> Optional[int]:
    """First sample instant where submitted load meets availability.

    Submitted load is the task's own budget plus ``ceil(t / T) * C`` for each
    higher-priority peer in the same partition. Returns ``UNBOUNDED`` (None)
    if the curves do not meet within ``horizon`` (default ten hyperperiods).
    """
    if horizon is None:
        horizon = 10 * curve.hyperperiod
    n = min(len(curve.samples) - 1, horizon // curve.resolution)
    if n < 1:
        return UNBOUNDED
    k = kernels.first_intersection(curve.samples[: n + 1], curve.resolution, task.budget,
                                   np.array([p.budget for p in higher_prio_peers], dtype=np.int64),
                                   np.array([p.period for p in higher_prio_peers], dtype=np.int64))
    return UNBOUNDED if k < 0 else k * curve.resolution


# -- gantt export -----------------------------------------------------

GANTT_VERSION = 1
GANTT_FORMATS = ("text", "json")


def gantt_lanes(trace: TraceLog) -> dict[str, list[Interval]]:
    lanes: dict[str, list[Interval]] = {}
    for node, meta in trace.nodes.items():
        lanes[f"{node}/frames"] = frame_windows(trace, node)
        for cpu, ivs in execution_intervals(trace, node).items():
            lanes[f"{node}/cpu{cpu}"] = [iv for iv in ivs if iv.task is not None]
    return lanes


def export_gantt(trace: TraceLog, format: str = "text") -> str:
    if format not in GANTT_FORMATS:
        raise UnsupportedFormat(f"unsupported gantt format {format!r}; choose from {GANTT_FORMATS}")
    lanes = gantt_lanes(trace)
    if format == "json":
        doc = {
            "version": GANTT_VERSION,
            "horizon": trace.horizon,
            "lanes": [
                {"name": name, "bars": [{"start": iv.start, "end": iv.end, "task": iv.task,
                                         "partition": partition_label(iv.partition)} for iv in ivs]}
                for name, ivs in lanes.items()
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    lines = [f"# partsched-gantt {GANTT_VERSION}", f"horizon {trace.horizon}"]
    for name, ivs in lanes.items():
        lines.append(f"lane {name}")
        for iv in ivs:
            lines.append(f"bar {name} start={iv.start} end={iv.end} task={iv.task or '-'} "
                         f"partition={partition_label(iv.partition)}")
    return "\n".join(lines) + "\n"


def parse_gantt(text: str, format: str = "text") -> dict[str, list[Interval]]:
    if format == "json":
        doc = json.loads(text)
        if doc.get("version") != GANTT_VERSION:
            raise UnsupportedFormat(f"gantt version {doc.get('version')}")
        return {lane["name"]: [Interval(b["start"], b["end"], b["task"], parse_partition_label(b["partition"]))
                               for b in lane["bars"]] for lane in doc["lanes"]}
    if format != "text":
        raise UnsupportedFormat(format)
    lines = text.splitlines()
    if not lines or lines[0] != f"# partsched-gantt {GANTT_VERSION}":
        raise UnsupportedFormat("not a partsched gantt document")
    lanes: dict[str, list[Interval]] = {}
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "lane":
            lanes[parts[1]] = []
        elif parts[0] == "bar":
            f = detail_fields(" ".join(parts[2:]))
            task = None if f["task"] == "-" else f["task"]
            lanes[parts[1]].append(Interval(int(f["start"]), int(f["end"]), task,
                                            parse_partition_label(f["partition"])))
    return lanes


def busy_time(intervals: Iterable[Interval], lo: int, hi: int) -> int:
    return sum(max(0, min(iv.end, hi) - max(iv.start, lo)) for iv in intervals)


__all__ = [
    "AvailabilityCurve", "CapViolation", "Demand", "IncompleteChain", "InsufficientData", "Interval",
    "JitterStats", "LatencyRecord", "UNBOUNDED", "UnsupportedFormat", "availability_curve", "busy_time",
    "cap_audit", "emergency_latencies", "execution_intervals", "export_gantt", "frame_switch_deviations",
    "frame_windows", "gantt_lanes", "jitter_stats", "latency_summary", "parse_gantt", "partition_intervals",
    "response_time", "runnable_intervals", "task_intervals",
]
