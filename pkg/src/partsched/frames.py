"""Major-frame validation, gap filling, and generation."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import reduce
from math import gcd
from typing import Iterable, Sequence

from .model import (
    IDLE_PARTITION,
    MajorFrame,
    MinorFrame,
    ModelError,
    PartitionSpec,
    hyperperiod_of,
)

C0 = "C0"
C1 = "C1"
C2 = "C2"
K1 = "K1_FITS_HYPERPERIOD"
K2 = "K2_NO_OVERLAP"
CONSTRAINTS = (C0, C1, C2, K1, K2)


class FrameError(ModelError):
    pass


class MalformedFrame(FrameError):
    pass


class InvalidFrame(FrameError):
    def __init__(self, report: "FrameValidationReport"):
        self.report = report
        super().__init__("invalid major frame: " + "; ".join(v.format() for v in report.violations))


class Infeasible(FrameError):
    def __init__(self, message: str, partition: int | None = None):
        self.partition = partition
        super().__init__(message)


@dataclass(frozen=True)
class Violation:
    constraint: str
    detail: str
    offending_frames: tuple[int, ...] = ()

    def format(self) -> str:
        frames = ",".join(map(str, self.offending_frames))
        return f"{self.constraint}: {self.detail}" + (f" [minors {frames}]" if frames else "")


@dataclass
class FrameValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def constraints(self) -> list[str]:
        return [v.constraint for v in self.violations]


def _check_well_formed(frame: MajorFrame) -> None:
    if frame.hyperperiod <= 0:
        raise MalformedFrame(f"hyperperiod {frame.hyperperiod} must be positive")
    known = {p.id for p in frame.partitions} | {IDLE_PARTITION}
    prev = None
    for i, m in enumerate(frame.minors):
        if m.offset < 0 or m.duration <= 0:
            raise MalformedFrame(f"minor {i} has offset {m.offset}, duration {m.duration}")
        if m.partition not in known:
            raise MalformedFrame(f"minor {i} references unknown partition {m.partition}")
        if prev is not None and m.offset < prev:
            raise MalformedFrame(f"minor {i} at offset {m.offset} is out of order")
        prev = m.offset


def validate_major_frame(frame: MajorFrame) -> FrameValidationReport:
    """Check C0, C1, C2, then the two kernel checks. Never short-circuits."""
    _check_well_formed(frame)
    report = FrameValidationReport()
    add = report.violations.append
    H = frame.hyperperiod
    minors = frame.minors

    if frame.partitions:
        lcm = hyperperiod_of(p.period for p in frame.partitions)
        if H != lcm:
            add(Violation(C0, f"hyperperiod {H} != lcm of partition periods {lcm}"))
    else:
        add(Violation(C0, "no partitions"))

    indices = {p.id: [i for i, m in enumerate(minors) if m.partition == p.id] for p in frame.partitions}

    for p in frame.partitions:
        idx = indices[p.id]
        if idx and minors[idx[0]].offset > p.period:
            add(Violation(C1, f"partition {p.id} first offset {minors[idx[0]].offset} > period {p.period}",
                          (idx[0],)))

    for p in frame.partitions:
        idx = indices[p.id]
        expected = H // p.period
        if len(idx) != expected:
            add(Violation(C2, f"partition {p.id} has {len(idx)} minor frames, expected {expected}", tuple(idx)))
        for a, b in zip(idx, idx[1:]):
            gap = minors[b].offset - minors[a].offset
            if gap != p.period:
                add(Violation(C2, f"partition {p.id} executions {gap} apart, period is {p.period}", (a, b)))
        wrong = tuple(i for i in idx if minors[i].duration != p.duration)
        if wrong:
            add(Violation(C2, f"partition {p.id} window length differs from duration {p.duration}", wrong))

    late = tuple(i for i, m in enumerate(minors) if m.end > H)
    if late:
        add(Violation(K1, f"minor frames end after hyperperiod {H}", late))

    for i in range(len(minors) - 1):
        if minors[i].end > minors[i + 1].offset:
            add(Violation(K2, f"minor {i} ends at {minors[i].end} after minor {i + 1} starts at "
                              f"{minors[i + 1].offset}", (i, i + 1)))
    return report


def fill_empty(frame: MajorFrame) -> MajorFrame:
    """Tile ``[0, H)`` by inserting IDLE minor frames into the gaps."""
    report = validate_major_frame(frame)
    if not report.valid:
        raise InvalidFrame(report)
    out = []
    cursor = 0
    for m in frame.minors:
        if m.offset > cursor:
            out.append(MinorFrame(cursor, m.offset - cursor, IDLE_PARTITION))
        out.append(m)
        cursor = m.end
    if cursor < frame.hyperperiod:
        out.append(MinorFrame(cursor, frame.hyperperiod - cursor, IDLE_PARTITION))
    if len(out) == len(frame.minors):
        return frame
    return MajorFrame(frame.hyperperiod, tuple(out), frame.partitions)


class _Timeline:
    """Sorted disjoint busy intervals over one hyperperiod."""

    def __init__(self):
        self.starts: list[int] = []
        self.ends: list[int] = []

    def free(self, start: int, end: int) -> bool:
        i = bisect.bisect_right(self.starts, start)
        if i > 0 and self.ends[i - 1] > start:
            return False
        return i == len(self.starts) or self.starts[i] >= end

    def add(self, start: int, end: int) -> None:
        i = bisect.bisect_right(self.starts, start)
        self.starts.insert(i, start)
        self.ends.insert(i, end)

    def remove(self, start: int) -> None:
        i = bisect.bisect_left(self.starts, start)
        del self.starts[i]
        del self.ends[i]


def generate_major_frame(partitions: Sequence[PartitionSpec], search_budget: int = 200_000) -> MajorFrame:
    """Place every partition at a fixed stride, earliest offsets first.

    Partitions are placed in rate-monotonic order. Candidate offsets lie on
    the grid spanned by the gcd of all periods and durations, which is where
    any left-justified feasible placement must sit, so the depth-first
    search is complete up to ``search_budget`` placement probes.
    """
    partitions = list(partitions)
    if not partitions:
        raise Infeasible("no partitions to schedule")
    if len({p.id for p in partitions}) != len(partitions):
        raise ModelError("duplicate partition ids")
    H = hyperperiod_of(p.period for p in partitions)
    # utilization sum <= 1, in exact integer arithmetic
    if sum(p.duration * (H // p.period) for p in partitions) > H:
        worst = max(partitions, key=lambda p: p.duration * (H // p.period))
        raise Infeasible("utilization exceeds 1", worst.id)

    order = sorted(partitions, key=lambda p: (p.period, -p.duration, p.id))
    grid = reduce(gcd, [p.period for p in order] + [p.duration for p in order])
    timeline = _Timeline()
    offsets: dict[int, int] = {}
    probes = 0
    deepest = 0

    def fits(p: PartitionSpec, o: int) -> bool:
        return all(timeline.free(o + k * p.period, o + k * p.period + p.duration)
                   for k in range(H // p.period))

    def place(level: int) -> bool:
        nonlocal probes, deepest
        if level == len(order):
            return True
        deepest = max(deepest, level)
        p = order[level]
        for o in range(0, p.period - p.duration + 1, grid):
            probes += 1
            if probes > search_budget:
                return False
            if not fits(p, o):
                continue
            for k in range(H // p.period):
                timeline.add(o + k * p.period, o + k * p.period + p.duration)
            offsets[p.id] = o
            if place(level + 1):
                return True
            for k in range(H // p.period):
                timeline.remove(o + k * p.period)
            del offsets[p.id]
        return False

    if not place(0):
        failed = order[deepest]
        why = "search budget exhausted" if probes > search_budget else "no stride-aligned placement"
        raise Infeasible(f"{why} for partition {failed.id}", failed.id)

    minors = sorted(
        MinorFrame(offsets[p.id] + k * p.period, p.duration, p.id)
        for p in partitions
        for k in range(H // p.period)
    )
    return MajorFrame(H, tuple(minors), tuple(sorted(partitions, key=lambda p: p.id)))


def utilization(partitions: Iterable[PartitionSpec]) -> float:
    return sum(p.duration / p.period for p in partitions)
