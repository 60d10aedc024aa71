"""Versioned, line-oriented trace files.

Layout::

    # partsched-trace 1
    horizon 3000000 cap=off cap_window=1
    node sat1 cpus=1 tick=4000 boot=0 offset=7000 frame=H=...;P=...;M=...
    task M2@sat1 node=sat1 crit=CRITICAL prio=80 partition=SYSTEM cpu=0 cap=100 actuator=1
    event<TAB>ts<TAB>node<TAB>cpu<TAB>kind<TAB>prev<TAB>next<TAB>partition<TAB>detail

Absent task references and offsets are written as ``-``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from .model import (
    Criticality,
    MajorFrame,
    ModelError,
    NodeMeta,
    TaskMeta,
    TraceEvent,
    TraceKind,
    TraceLog,
    detail_fields,
    parse_partition_label,
    partition_label,
)

TRACE_VERSION = 1
MAGIC = "# partsched-trace"


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UnsupportedVersion(TraceFormatError):
    pass


def _opt(value) -> str:
    return "-" if value is None else str(value)


def _unopt(text: str) -> Optional[str]:
    return None if text == "-" else text


def dumps(trace: TraceLog) -> str:
    lines = [f"{MAGIC} {TRACE_VERSION}",
             f"horizon {trace.horizon} cap={'on' if trace.cap_enabled else 'off'} cap_window={trace.cap_window}"]
    for name, m in trace.nodes.items():
        frame = "-" if m.frame is None else m.frame.to_text()
        lines.append(f"node {name} cpus={m.cpus} tick={m.tick} boot={m.boot} offset={_opt(m.offset)} frame={frame}")
    for t in trace.tasks.values():
        lines.append(f"task {t.task_id} node={t.node} crit={t.criticality.name} prio={t.priority} "
                     f"partition={partition_label(t.partition)} cpu={t.cpu} cap={t.cap_percent} "
                     f"actuator={int(t.actuator)}")
    for e in trace.events:
        lines.append("\t".join(("event", str(e.timestamp), e.node, str(e.cpu), e.kind.value, _opt(e.prev_task),
                                _opt(e.next_task), partition_label(e.partition), e.detail)))
    return "\n".join(lines) + "\n"


def loads(text: str) -> TraceLog:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise TraceFormatError("not a partsched trace (missing header)", 1)
    version_text = lines[0][len(MAGIC):].strip()
    if version_text != str(TRACE_VERSION):
        raise UnsupportedVersion(f"unsupported trace version {version_text!r}; expected {TRACE_VERSION}", 1)
    trace: Optional[TraceLog] = None
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            if line.startswith("event\t"):
                if trace is None:
                    raise TraceFormatError("event before horizon line", lineno)
                parts = line.split("\t", 8)
                if len(parts) != 9:
                    raise TraceFormatError(f"expected 9 tab-separated fields, got {len(parts)}", lineno)
                _, ts, node, cpu, kind, prev, nxt, part, detail = parts
                trace.events.append(TraceEvent(int(ts), node, int(cpu), TraceKind(kind), _unopt(prev),
                                               _unopt(nxt), parse_partition_label(part), detail))
                continue
            head, _, rest = line.partition(" ")
            if head == "horizon":
                value, _, tail = rest.partition(" ")
                f = detail_fields(tail)
                trace = TraceLog(int(value), cap_enabled=f.get("cap") == "on",
                                 cap_window=int(f.get("cap_window", 1)))
            elif head in ("node", "task"):
                if trace is None:
                    raise TraceFormatError(f"{head} before horizon line", lineno)
                name, _, tail = rest.partition(" ")
                f = detail_fields(tail)
                if head == "node":
                    frame = None if f["frame"] == "-" else MajorFrame.from_text(f["frame"])
                    offset = _unopt(f["offset"])
                    trace.nodes[name] = NodeMeta(int(f["cpus"]), int(f["tick"]), frame, int(f["boot"]),
                                                 None if offset is None else int(offset))
                else:
                    trace.tasks[name] = TaskMeta(name, f["node"], Criticality[f["crit"]], int(f["prio"]),
                                                 parse_partition_label(f["partition"]), int(f["cpu"]),
                                                 int(f["cap"]), f.get("actuator") == "1")
            else:
                raise TraceFormatError(f"unknown record {head!r}", lineno)
        except TraceFormatError:
            raise
        except (ValueError, KeyError, ModelError) as exc:
            raise TraceFormatError(f"malformed record: {exc}", lineno) from None
    if trace is None:
        raise TraceFormatError("missing horizon line", len(lines))
    return trace


def dump(trace: TraceLog, path) -> None:
    Path(path).write_text(dumps(trace))


def load(path) -> TraceLog:
    return loads(Path(path).read_text())
