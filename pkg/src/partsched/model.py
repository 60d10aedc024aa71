"""Shared domain types for the partitioned scheduler.

All times are integer microseconds.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import reduce
from math import gcd
from typing import Iterable, Optional
from urllib.parse import quote, unquote

US = 1
MS = 1_000
S = 1_000_000

MAX_RT_PRIO = 100
MAX_PARTITIONS = 64
DEFAULT_TICK = 4 * MS

# Reserved partition identifiers, all outside 1..64.
SYSTEM_PARTITION = 0
BEST_EFFORT_PARTITION = -1
IDLE_PARTITION = -2

_PARTITION_NAMES = {
    SYSTEM_PARTITION: "SYSTEM",
    BEST_EFFORT_PARTITION: "BEST_EFFORT",
    IDLE_PARTITION: "IDLE",
}


class ModelError(ValueError):
    pass


class EmptyPartitionSet(ModelError):
    pass


def partition_label(pid: int) -> str:
    return _PARTITION_NAMES.get(pid, str(pid))


def parse_partition_label(text: str) -> int:
    for pid, name in _PARTITION_NAMES.items():
        if text.upper() == name:
            return pid
    return int(text)


def is_application_partition(pid: int) -> bool:
    return 1 <= pid <= MAX_PARTITIONS


@enum.unique
class Criticality(enum.IntEnum):
    """Criticality levels; larger value dominates."""

    BEST_EFFORT = 0
    APPLICATION = 1
    CRITICAL = 2


class SchedulerState(enum.Enum):
    APP_ACTIVE = "APP_ACTIVE"
    APP_INACTIVE = "APP_INACTIVE"


class TraceKind(enum.Enum):
    CONTEXT_SWITCH = "CONTEXT_SWITCH"
    FRAME_SWITCH = "FRAME_SWITCH"
    RECONFIG = "RECONFIG"
    CAP_DISABLE = "CAP_DISABLE"
    CAP_REENABLE = "CAP_REENABLE"
    CAP_WINDOW = "CAP_WINDOW"
    MESSAGE_SEND = "MESSAGE_SEND"
    MESSAGE_RECV = "MESSAGE_RECV"
    TASK_WAKE = "TASK_WAKE"
    TASK_BLOCK = "TASK_BLOCK"
    ACTIVATION = "ACTIVATION"


def hyperperiod_of(periods: Iterable[int]) -> int:
    periods = list(periods)
    if not periods:
        raise EmptyPartitionSet("hyperperiod of an empty partition set")
    if any(p <= 0 for p in periods):
        raise ModelError(f"non-positive period in {periods}")
    return reduce(lambda a, b: a * b // gcd(a, b), periods)


@dataclass(frozen=True)
class PartitionSpec:
    id: int
    period: int
    duration: int
    name: str = ""

    def __post_init__(self):
        if not is_application_partition(self.id):
            raise ModelError(f"partition id {self.id} outside 1..{MAX_PARTITIONS}")
        if self.period <= 0 or self.duration <= 0:
            raise ModelError(f"partition {self.id}: period and duration must be positive")
        if self.duration > self.period:
            raise ModelError(f"partition {self.id}: duration {self.duration} exceeds period {self.period}")

    @property
    def label(self) -> str:
        return self.name or f"P{self.id}"


@dataclass(frozen=True, order=True)
class MinorFrame:
    offset: int
    duration: int
    partition: int

    @property
    def end(self) -> int:
        return self.offset + self.duration


@dataclass(frozen=True)
class MajorFrame:
    """A repeating schedule of minor frames.

    Construction does not validate the scheduling constraints; use
    :func:`partsched.frames.validate_major_frame` for that.
    """

    hyperperiod: int
    minors: tuple[MinorFrame, ...]
    partitions: tuple[PartitionSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "minors", tuple(self.minors))
        object.__setattr__(self, "partitions", tuple(self.partitions))
        ids = [p.id for p in self.partitions]
        if len(set(ids)) != len(ids):
            raise ModelError(f"duplicate partition ids in {ids}")
        if len(ids) > MAX_PARTITIONS:
            raise ModelError(f"{len(ids)} partitions exceeds the limit of {MAX_PARTITIONS}")

    @classmethod
    def build(cls, partitions, minors, hyperperiod: Optional[int] = None) -> "MajorFrame":
        partitions = tuple(partitions)
        if hyperperiod is None:
            hyperperiod = hyperperiod_of(p.period for p in partitions)
        return cls(hyperperiod, tuple(minors), partitions)

    def partition(self, pid: int) -> PartitionSpec:
        for p in self.partitions:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def minors_of(self, pid: int) -> list[MinorFrame]:
        return [m for m in self.minors if m.partition == pid]

    def to_text(self) -> str:
        """Compact single-line encoding, used inside traces."""
        parts = ",".join(f"{p.id}/{p.period}/{p.duration}" + (f"/{quote(p.name, safe='')}" if p.name else "")
                         for p in self.partitions)
        minors = ",".join(f"{partition_label(m.partition)}@{m.offset}+{m.duration}" for m in self.minors)
        return f"H={self.hyperperiod};P={parts};M={minors}"

    @classmethod
    def from_text(cls, text: str) -> "MajorFrame":
        fields = dict(item.split("=", 1) for item in text.split(";"))
        partitions = []
        for chunk in filter(None, fields.get("P", "").split(",")):
            pid, period, duration, *name = chunk.split("/")
            partitions.append(PartitionSpec(int(pid), int(period), int(duration), unquote(name[0]) if name else ""))
        minors = []
        for chunk in filter(None, fields.get("M", "").split(",")):
            label, rest = chunk.split("@")
            offset, duration = rest.split("+")
            minors.append(MinorFrame(int(offset), int(duration), parse_partition_label(label)))
        return cls(int(fields["H"]), tuple(minors), tuple(partitions))


@dataclass
class TaskControlBlock:
    task_id: str
    actor_id: str
    criticality: Criticality
    priority: int
    partition: int
    cpu_affinity: int = 0
    cap_percent: int = 100
    disabled: bool = False
    last_disabled_time: int = -1
    exec_time_in_window: int = 0
    total_exec_time: int = 0
    vruntime: int = 0

    def __post_init__(self):
        crit = self.criticality
        if crit is Criticality.CRITICAL and self.partition != SYSTEM_PARTITION:
            raise ModelError(f"task {self.task_id}: CRITICAL tasks belong to the SYSTEM partition")
        if crit is Criticality.BEST_EFFORT and self.partition != BEST_EFFORT_PARTITION:
            raise ModelError(f"task {self.task_id}: BEST_EFFORT tasks belong to the BEST_EFFORT partition")
        if crit is Criticality.APPLICATION and not is_application_partition(self.partition):
            raise ModelError(f"task {self.task_id}: APPLICATION task needs a partition in 1..{MAX_PARTITIONS}")
        if crit is not Criticality.BEST_EFFORT and not 0 <= self.priority < MAX_RT_PRIO:
            raise ModelError(f"task {self.task_id}: priority {self.priority} outside 0..{MAX_RT_PRIO - 1}")
        if not 0 < self.cap_percent <= 100:
            raise ModelError(f"task {self.task_id}: cap {self.cap_percent}% outside (0, 100]")


def check_actor_criticality(tasks: Iterable[TaskControlBlock]) -> None:
    """All tasks of one actor must share a criticality level."""
    seen: dict[str, Criticality] = {}
    for t in tasks:
        prev = seen.setdefault(t.actor_id, t.criticality)
        if prev is not t.criticality:
            raise ModelError(f"actor {t.actor_id} mixes {prev.name} and {t.criticality.name} tasks")


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int
    node: str
    cpu: int
    kind: TraceKind
    prev_task: Optional[str] = None
    next_task: Optional[str] = None
    partition: int = SYSTEM_PARTITION
    detail: str = ""

    def __post_init__(self):
        if self.kind is TraceKind.CONTEXT_SWITCH and self.prev_task == self.next_task:
            raise ModelError("context switch with prev == next")


def detail_fields(detail: str) -> dict[str, str]:
    """Parse a ``key=value key=value`` detail string."""
    out = {}
    for token in detail.split():
        if "=" in token:
            k, v = token.split("=", 1)
            out[k] = v
    return out


@dataclass
class NodeMeta:
    cpus: int
    tick: int
    frame: Optional[MajorFrame]
    boot: int = 0
    offset: Optional[int] = None


@dataclass(frozen=True)
class TaskMeta:
    task_id: str
    node: str
    criticality: Criticality
    priority: int
    partition: int
    cpu: int
    cap_percent: int
    actuator: bool = False


@dataclass
class TraceLog:
    """Events plus the metadata needed to interpret them offline."""

    horizon: int
    events: list[TraceEvent] = field(default_factory=list)
    nodes: dict[str, NodeMeta] = field(default_factory=dict)
    tasks: dict[str, TaskMeta] = field(default_factory=dict)
    cap_enabled: bool = False
    cap_window: int = 1

    def for_node(self, node: str) -> list[TraceEvent]:
        return [e for e in self.events if e.node == node]

    def of_kind(self, kind: TraceKind, node: Optional[str] = None) -> list[TraceEvent]:
        return [e for e in self.events if e.kind is kind and (node is None or e.node == node)]
