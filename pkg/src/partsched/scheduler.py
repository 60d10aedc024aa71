"""The node scheduler: frame clock, criticality-ordered dispatch, CPU caps,
and online major-frame reconfiguration.

One :class:`Scheduler` owns all CPUs of a node. It is driven externally
(by :mod:`partsched.sim` or a test) and never advances time on its own.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .frames import InvalidFrame, fill_empty, validate_major_frame
from .model import (
    BEST_EFFORT_PARTITION,
    DEFAULT_TICK,
    IDLE_PARTITION,
    MAX_RT_PRIO,
    SYSTEM_PARTITION,
    Criticality,
    MajorFrame,
    ModelError,
    SchedulerState,
    TaskControlBlock,
    TraceEvent,
    TraceKind,
    is_application_partition,
)
from .runqueue import PickStats, RunQueueSet, pick_next_task

log = logging.getLogger(__name__)


class SchedulerError(ModelError):
    pass


class ConcurrentUpdate(SchedulerError):
    pass


class OffsetAfterStart(SchedulerError):
    pass


class ReconfigDenied(SchedulerError):
    pass


@dataclass
class FrameClock:
    frame: Optional[MajorFrame] = None  # gap-filled
    firstrun: bool = False
    install_time: int = 0
    start_offset: Optional[int] = None
    hp_start: int = 0
    mf_start: int = 0
    cur_index: int = 0
    next_switch: int = 0
    hyperperiods: int = 0

    @property
    def started(self) -> bool:
        return self.frame is not None and not self.firstrun

    @property
    def cur_frame(self):
        return self.frame.minors[self.cur_index] if self.started else None

    @property
    def partition(self) -> Optional[int]:
        return self.frame.minors[self.cur_index].partition if self.started else None


@dataclass
class CapAccounting:
    window_length: int = 1  # major frames
    window_start: int = 0
    frames_in_window: int = 0


@dataclass
class FrameSwitchOutcome:
    started: bool = False
    switches: list[int] = field(default_factory=list)  # partitions entered, in order
    wraps: int = 0
    cap_reset: bool = False


@dataclass(frozen=True)
class Dispatch:
    cpu: int
    prev: Optional[TaskControlBlock]
    next: Optional[TaskControlBlock]

    @property
    def switched(self) -> bool:
        return self.prev is not self.next


def cap_ceiling(task: TaskControlBlock, frame: Optional[MajorFrame], window: CapAccounting,
                num_cpus: int) -> Optional[int]:
    """Execution ceiling of ``task`` per cap window, or None when unbounded.

    An application task's base is its partition's total window time per
    major frame; a critical task's base is the hyperperiod. Either is scaled
    by the window length in major frames and the CPU count.
    """
    if frame is None or task.criticality is Criticality.BEST_EFFORT:
        return None
    if task.criticality is Criticality.CRITICAL:
        base = frame.hyperperiod
    else:
        try:
            spec = frame.partition(task.partition)
        except KeyError:
            return None
        base = spec.duration * (frame.hyperperiod // spec.period)
    return task.cap_percent * base * window.window_length * num_cpus // 100


class Scheduler:
    def __init__(self, node: str = "n0", num_cpus: int = 1, tick: int = DEFAULT_TICK,
                 cap_enabled: bool = False, cap_window: int = 1,
                 sink: Optional[Callable[[TraceEvent], None]] = None):
        if num_cpus < 1:
            raise SchedulerError("need at least one CPU")
        if cap_window < 1:
            raise SchedulerError("cap window must span at least one major frame")
        self.node = node
        self.num_cpus = num_cpus
        self.tick = tick
        self.cap_enabled = cap_enabled
        self.rqs = [RunQueueSet(c) for c in range(num_cpus)]
        self.tasks: dict[str, TaskControlBlock] = {}
        self.state = SchedulerState.APP_ACTIVE
        self.clock = FrameClock()
        self.cap = CapAccounting(window_length=cap_window)
        self.pick_stats = PickStats()
        self.events: list[TraceEvent] = []
        self._sink = sink if sink is not None else self.events.append
        self._runnable: set[str] = set()
        self._disabled: set[str] = set()
        self._last_charge = [0] * num_cpus
        self._updating = False

    # -- bookkeeping ---------------------------------------------------

    def emit(self, ts: int, kind: TraceKind, cpu: int = 0, prev=None, next=None,
             partition: int = SYSTEM_PARTITION, detail: str = "") -> None:
        self._sink(TraceEvent(ts, self.node, cpu, kind, prev, next, partition, detail))

    def add_task(self, task: TaskControlBlock) -> None:
        if task.task_id in self.tasks:
            raise SchedulerError(f"duplicate task {task.task_id}")
        if not 0 <= task.cpu_affinity < self.num_cpus:
            raise SchedulerError(f"task {task.task_id}: no CPU {task.cpu_affinity}")
        self.tasks[task.task_id] = task

    def remove_task(self, task_id: str, now: int) -> None:
        self.block(task_id, now)
        del self.tasks[task_id]

    def is_runnable(self, task_id: str) -> bool:
        return task_id in self._runnable

    def current(self, cpu: int) -> Optional[TaskControlBlock]:
        return self.rqs[cpu].current_task

    def wake(self, task_id: str, now: int) -> bool:
        task = self.tasks[task_id]
        if task_id in self._runnable:
            return False
        self._runnable.add(task_id)
        self.rqs[task.cpu_affinity].enqueue(task)
        self.emit(now, TraceKind.TASK_WAKE, task.cpu_affinity, next=task_id, partition=task.partition)
        return True

    def block(self, task_id: str, now: int) -> bool:
        task = self.tasks[task_id]
        if task_id not in self._runnable:
            return False
        self._runnable.discard(task_id)
        self.rqs[task.cpu_affinity].remove(task)
        self.emit(now, TraceKind.TASK_BLOCK, task.cpu_affinity, prev=task_id, partition=task.partition)
        return True

    def yield_task(self, task_id: str) -> None:
        task = self.tasks[task_id]
        queue = self.rqs[task.cpu_affinity].queue_for(task.partition)
        if task_id in self._runnable and hasattr(queue, "requeue_tail"):
            queue.requeue_tail(task)

    def charge(self, cpu: int, now: int) -> None:
        dt = now - self._last_charge[cpu]
        if dt < 0:
            raise SchedulerError(f"time moved backwards on cpu {cpu}: {self._last_charge[cpu]} -> {now}")
        task = self.rqs[cpu].current_task
        if task is not None and dt:
            task.exec_time_in_window += dt
            task.total_exec_time += dt
            if task.criticality is Criticality.BEST_EFFORT:
                task.vruntime += dt
        self._last_charge[cpu] = now

    def charge_all(self, now: int) -> None:
        for cpu in range(self.num_cpus):
            self.charge(cpu, now)

    def ceiling(self, task: TaskControlBlock) -> Optional[int]:
        return cap_ceiling(task, self.clock.frame, self.cap, self.num_cpus)

    # -- frame clock ---------------------------------------------------

    @property
    def current_partition(self) -> Optional[int]:
        return self.clock.partition

    def install_frame(self, frame: MajorFrame, now: int, offset: Optional[int] = None) -> None:
        """Boot-time frame installation; emits no trace events."""
        report = validate_major_frame(frame)
        if not report.valid:
            raise InvalidFrame(report)
        self._install(fill_empty(frame), now)
        if offset is not None:
            self.set_hyperperiod_offset(offset)

    def _install(self, filled: MajorFrame, now: int) -> None:
        self.clock = FrameClock(frame=filled, firstrun=True, install_time=now,
                                hyperperiods=self.clock.hyperperiods)

    def set_hyperperiod_offset(self, offset: int) -> None:
        if offset < 0:
            raise SchedulerError("hyperperiod offset must be non-negative")
        if self.clock.frame is None or not self.clock.firstrun:
            raise OffsetAfterStart("frame clock already started or no frame installed")
        self.clock.start_offset = offset

    def _reset_cap_window(self, now: int) -> None:
        self.cap.window_start = now
        self.cap.frames_in_window = 0
        for t in self.tasks.values():
            t.exec_time_in_window = 0
        if self.cap_enabled:
            self.emit(now, TraceKind.CAP_WINDOW, 0, detail=f"start={now}")

    def global_tick(self, now: int) -> FrameSwitchOutcome:
        """Advance the minor-frame cursor; only CPU 0 runs this."""
        out = FrameSwitchOutcome()
        clock = self.clock
        if clock.frame is None:
            return out
        minors = clock.frame.minors
        self.charge_all(now)
        if clock.firstrun:
            start = now if clock.start_offset is None else clock.install_time + clock.start_offset
            if now < start:
                return out
            clock.firstrun = False
            clock.hp_start = clock.mf_start = start
            clock.cur_index = 0
            clock.next_switch = start + minors[0].duration
            clock.hyperperiods += 1
            out.started = True
            out.switches.append(minors[0].partition)
            self.emit(now, TraceKind.FRAME_SWITCH, 0, partition=minors[0].partition,
                      detail=f"minor=0 hp={clock.hyperperiods} hp_start={start} start")
            self._reset_cap_window(now)
            out.cap_reset = True
        while now >= clock.next_switch:
            clock.mf_start = clock.next_switch
            clock.cur_index = (clock.cur_index + 1) % len(minors)
            clock.next_switch += minors[clock.cur_index].duration
            detail = f"minor={clock.cur_index}"
            if clock.cur_index == 0:
                clock.hp_start = clock.mf_start
                clock.hyperperiods += 1
                out.wraps += 1
                detail += f" hp={clock.hyperperiods} hp_start={clock.hp_start}"
            out.switches.append(minors[clock.cur_index].partition)
            self.emit(now, TraceKind.FRAME_SWITCH, 0, partition=minors[clock.cur_index].partition,
                      detail=detail)
            if clock.cur_index == 0:
                self.cap.frames_in_window += 1
                if self.cap.frames_in_window >= self.cap.window_length:
                    self._reset_cap_window(now)
                    out.cap_reset = True
        return out

    # -- dispatch ------------------------------------------------------

    def _pick(self, cpu: int):
        rq = self.rqs[cpu]
        ws = self.cap.window_start
        _, task = pick_next_task(rq, SYSTEM_PARTITION, self.cap_enabled, ws, self.pick_stats)
        if task is None and self.state is SchedulerState.APP_ACTIVE:
            part = self.clock.partition
            if part is not None and is_application_partition(part):
                _, task = pick_next_task(rq, part, self.cap_enabled, ws, self.pick_stats)
            if task is None:
                task = rq.best_effort_queue.pick()
        if task is None and len(rq.system_queue):
            # capped critical work runs only when nothing else is ready
            idx = rq.system_queue.first_index()
            task = rq.system_queue.queues[idx][0]
        return task

    def _update_disabled_bit(self, task: TaskControlBlock, now: int) -> None:
        if task.cap_percent >= 100 or task.disabled:
            return
        ceiling = self.ceiling(task)
        if ceiling is not None and task.exec_time_in_window >= ceiling:
            task.disabled = True
            task.last_disabled_time = now
            self._disabled.add(task.task_id)
            self.emit(now, TraceKind.CAP_DISABLE, task.cpu_affinity, prev=task.task_id,
                      partition=task.partition, detail=f"exec={task.exec_time_in_window} ceiling={ceiling}")

    def schedule(self, cpu: int, now: int) -> Dispatch:
        rq = self.rqs[cpu]
        self.charge(cpu, now)
        prev = rq.current_task
        if self.cap_enabled and prev is not None:
            self._update_disabled_bit(prev, now)
        nxt = self._pick(cpu)
        if nxt is not None and nxt.task_id in self._disabled and not nxt.disabled:
            self._disabled.discard(nxt.task_id)
            self.emit(now, TraceKind.CAP_REENABLE, cpu, next=nxt.task_id, partition=nxt.partition)
        if nxt is not prev:
            rq.current_task = nxt
            self.emit(now, TraceKind.CONTEXT_SWITCH, cpu,
                      prev.task_id if prev else None, nxt.task_id if nxt else None,
                      nxt.partition if nxt else IDLE_PARTITION)
        return Dispatch(cpu, prev, nxt)

    # -- reconfiguration -----------------------------------------------

    def update_major_frame(self, frame: MajorFrame, now: int, privileged: bool = True) -> MajorFrame:
        """Install ``frame`` online; the active minor frame is abandoned.

        Application dispatch is suspended for the duration of the update and
        the hyperperiod restarts at the next global tick.
        """
        if not privileged:
            raise ReconfigDenied("caller lacks reconfiguration privilege")
        if self._updating:
            raise ConcurrentUpdate("major frame update already in progress")
        report = validate_major_frame(frame)
        if not report.valid:
            raise InvalidFrame(report)
        self._updating = True
        try:
            self.charge_all(now)
            self.state = SchedulerState.APP_INACTIVE
            self.emit(now, TraceKind.RECONFIG, 0, detail=SchedulerState.APP_INACTIVE.value)
            filled = fill_empty(frame)
            self._install(filled, now)
            self.state = SchedulerState.APP_ACTIVE
            self.emit(now, TraceKind.RECONFIG, 0,
                      detail=f"{SchedulerState.APP_ACTIVE.value} frame={filled.to_text()}")
            log.debug("node %s: major frame replaced at %d", self.node, now)
        finally:
            self._updating = False
        return filled
