"""Deterministic discrete-event simulation of one node."""
from __future__ import annotations

import enum
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Optional

from .frames import fill_empty
from .model import (
    NodeMeta,
    TaskMeta,
    TraceEvent,
    TraceKind,
    TraceLog,
)
from .scenario import (
    CommandInjection,
    CpuBound,
    EventDriven,
    OneShot,
    Periodic,
    ReconfigInjection,
    Scenario,
    ScenarioInvalid,
    validate_scenario,
)
from .scheduler import Scheduler


class SimError(RuntimeError):
    pass


class HorizonZero(SimError):
    pass


class PastTimestamp(SimError):
    pass


class EventType(enum.Enum):
    INSTALL = "INSTALL"
    TICK = "TICK"
    TASK_RELEASE = "TASK_RELEASE"
    TASK_BLOCK = "TASK_BLOCK"  # a job phase ran out; the task may block
    MESSAGE_ARRIVAL = "MESSAGE_ARRIVAL"
    INJECT_RECONFIG = "INJECT_RECONFIG"
    INJECT_COMMAND = "INJECT_COMMAND"


@dataclass(frozen=True)
class Message:
    msg_id: str
    src: str
    dst: str
    command: Optional[str] = None
    reconfig_frame: Optional[str] = None
    sent_at: int = 0


class EventQueue:
    """Pending events ordered by (timestamp, insertion sequence)."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, at: int, kind: EventType, payload: Any = None) -> None:
        if at < self.now:
            raise PastTimestamp(f"event at {at} is before current time {self.now}")
        heapq.heappush(self._heap, (at, next(self._seq), kind, payload))

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def pop(self):
        at, _, kind, payload = heapq.heappop(self._heap)
        self.now = at
        return at, kind, payload


@dataclass
class _Phase:
    remaining: int
    action: Optional[tuple] = None


@dataclass
class _Job:
    phases: list
    released: int


@dataclass
class _Runtime:
    spec: Any
    jobs: deque = field(default_factory=deque)
    gen: int = 0
    armed: int = -1
    releases: int = 0
    completions: list = field(default_factory=list)  # (release_ts, finish_ts)

    @property
    def infinite(self) -> bool:
        return isinstance(self.spec.workload, CpuBound)


class NodeSimulator:
    """Runs one node of a scenario.

    Cross-node messages are appended to :attr:`outbox`; the cluster driver
    delivers them. Local messages are delivered in place.
    """

    def __init__(self, scenario: Scenario, node: str, offset: Optional[int] = None):
        self.scenario = scenario
        self.spec = scenario.node(node)
        self.name = node
        self.events: list[TraceEvent] = []
        self.sched = Scheduler(node, self.spec.cpus, scenario.tick, scenario.cap_enabled,
                               scenario.cap_window, sink=self.events.append)
        self.queue = EventQueue()
        self.now = 0
        self.outbox: list[Message] = []
        self.frame = scenario.node_frame(node)
        self.offset = self.spec.offset if offset is None else offset
        self.node_of = {t.id: t.node for t in scenario.tasks}
        self.out_edges: dict[str, list[str]] = {}
        for e in scenario.edges:
            self.out_edges.setdefault(e.src, []).append(e.dst)
        self.rt: dict[str, _Runtime] = {}
        self._msg_seq = itertools.count()
        self._finished = False
        boot = self.spec.skew

        for t in scenario.tasks_on(node):
            self.sched.add_task(t.tcb())
            self.rt[t.id] = _Runtime(t)
        if self.frame is not None:
            self.queue.push(boot, EventType.INSTALL)
        self.queue.push(boot, EventType.TICK)
        for t in scenario.tasks_on(node):
            w = t.workload
            if isinstance(w, CpuBound):
                self.queue.push(boot, EventType.TASK_RELEASE, t.id)
            elif isinstance(w, Periodic):
                self.queue.push(max(boot, w.offset), EventType.TASK_RELEASE, t.id)
            elif isinstance(w, OneShot):
                self.queue.push(max(boot, w.at), EventType.TASK_RELEASE, t.id)
        for inj in scenario.injections:
            if isinstance(inj, ReconfigInjection) and inj.node == node:
                self.queue.push(inj.at, EventType.INJECT_RECONFIG, inj)
            elif isinstance(inj, CommandInjection) and self.node_of[inj.task] == node:
                self.queue.push(inj.at, EventType.INJECT_COMMAND, inj)

    # -- public ------------------------------------------------------

    def inject(self, at: int, kind: EventType, payload: Any = None) -> None:
        if at < self.now:
            raise PastTimestamp(f"cannot inject at {at}; simulated time is {self.now}")
        self.queue.push(at, kind, payload)

    def peek_time(self) -> Optional[int]:
        return self.queue.peek_time()

    def run_until(self, bound: int) -> None:
        """Process every pending event with timestamp < ``bound``."""
        while True:
            t = self.queue.peek_time()
            if t is None or t >= bound:
                return
            self._advance(t)
            resched: set[int] = set()
            while self.queue.peek_time() == t:
                _, kind, payload = self.queue.pop()
                self._handle(t, kind, payload, resched)
            for cpu in sorted(resched):
                self._dispatch(cpu, t)

    def finish(self, horizon: int) -> None:
        if not self._finished:
            self._advance(horizon)
            self.sched.charge_all(horizon)
            self._finished = True

    def trace(self, horizon: int) -> TraceLog:
        meta = NodeMeta(self.spec.cpus, self.scenario.tick, self._filled_initial_frame(),
                        self.spec.skew, self.offset)
        tasks = {t.id: TaskMeta(t.id, t.node, t.criticality, t.priority, t.partition, t.cpu, t.cap, t.actuator)
                 for t in self.scenario.tasks_on(self.name)}
        return TraceLog(horizon, list(self.events), {self.name: meta}, tasks,
                        self.scenario.cap_enabled, self.scenario.cap_window)

    def _filled_initial_frame(self):
        return None if self.frame is None else fill_empty(self.frame)

    # -- internals ---------------------------------------------------

    def _advance(self, t: int) -> None:
        dt = t - self.now
        if dt < 0:
            raise SimError(f"time moved backwards: {self.now} -> {t}")
        if dt:
            for cpu in range(self.spec.cpus):
                task = self.sched.current(cpu)
                if task is None:
                    continue
                rt = self.rt[task.task_id]
                if rt.jobs:
                    phase = rt.jobs[0].phases[0]
                    phase.remaining -= dt
                    if phase.remaining < 0:
                        raise SimError(f"task {task.task_id} overran its phase")
        self.now = t

    def _emit(self, kind: TraceKind, cpu: int = 0, prev=None, next=None, partition=0, detail="") -> None:
        self.events.append(TraceEvent(self.now, self.name, cpu, kind, prev, next, partition, detail))

    def _wake(self, task_id: str, resched: set[int]) -> None:
        if self.sched.wake(task_id, self.now):
            resched.add(self.sched.tasks[task_id].cpu_affinity)

    def _add_job(self, task_id: str, phases: list[_Phase], resched: set[int]) -> None:
        rt = self.rt[task_id]
        rt.jobs.append(_Job(phases, self.now))
        rt.releases += 1
        self._wake(task_id, resched)
        task = self.sched.tasks[task_id]
        if self.sched.current(task.cpu_affinity) is task:
            self._arm(task_id)

    def _handle(self, t: int, kind: EventType, payload, resched: set[int]) -> None:
        if kind is EventType.TICK:
            self.sched.global_tick(t)
            resched.update(range(self.spec.cpus))
            self.queue.push(t + self.scenario.tick, EventType.TICK)
        elif kind is EventType.INSTALL:
            self.sched.install_frame(self.frame, t, self.offset)
        elif kind is EventType.TASK_RELEASE:
            spec = self.rt[payload].spec
            w = spec.workload
            if isinstance(w, CpuBound):
                self.rt[payload].releases += 1
                self._wake(payload, resched)
            elif isinstance(w, Periodic):
                self._add_job(payload, [_Phase(w.budget, ("handled", None))], resched)
                self.queue.push(t + w.period, EventType.TASK_RELEASE, payload)
            elif isinstance(w, OneShot):
                self._add_job(payload, [_Phase(w.busy, ("handled", None))], resched)
        elif kind is EventType.TASK_BLOCK:
            task_id, gen = payload
            self._phase_done(task_id, gen, resched)
        elif kind is EventType.MESSAGE_ARRIVAL:
            self._receive(payload, resched)
        elif kind is EventType.INJECT_COMMAND:
            msg = Message(f"ground#{payload.command_id}", "ground", payload.task, payload.command_id, sent_at=t)
            self._receive(msg, resched)
        elif kind is EventType.INJECT_RECONFIG:
            if payload.caller is None:
                self._reconfigure(payload.frame, resched)
            else:
                msg = Message(f"operator#{next(self._msg_seq)}", "operator", payload.caller,
                              reconfig_frame=payload.frame, sent_at=t)
                self._receive(msg, resched)
        else:  # pragma: no cover
            raise SimError(f"unknown event {kind}")

    def _receive(self, msg: Message, resched: set[int]) -> None:
        spec = self.rt[msg.dst].spec
        self._emit(TraceKind.MESSAGE_RECV, spec.cpu, next=msg.dst, partition=spec.partition,
                   detail=f"from={msg.src} msg={msg.msg_id} cmd={msg.command or '-'}")
        w = spec.workload
        if not isinstance(w, EventDriven):
            return
        action = ("reconfig", msg.reconfig_frame) if msg.reconfig_frame else ("handled", msg.command)
        phases = [_Phase(w.service, action)]
        if w.followup:
            phases.append(_Phase(w.followup))
        self._add_job(msg.dst, phases, resched)

    def _arm(self, task_id: str) -> None:
        rt = self.rt[task_id]
        if rt.armed == rt.gen or not rt.jobs:
            return
        rt.armed = rt.gen
        self.queue.push(self.now + rt.jobs[0].phases[0].remaining, EventType.TASK_BLOCK, (task_id, rt.gen))

    def _phase_done(self, task_id: str, gen: int, resched: set[int]) -> None:
        rt = self.rt[task_id]
        if gen != rt.gen:
            return
        rt.gen += 1
        job = rt.jobs[0]
        phase = job.phases.pop(0)
        if phase.remaining != 0:
            raise SimError(f"task {task_id}: phase ended with {phase.remaining} us left")
        if phase.action is not None:
            self._act(task_id, phase.action, resched)
        if not job.phases:
            rt.jobs.popleft()
            rt.completions.append((job.released, self.now))
        if rt.jobs:
            self._arm(task_id)
        elif not rt.infinite:
            if self.sched.block(task_id, self.now):
                resched.add(rt.spec.cpu)

    def _act(self, task_id: str, action: tuple, resched: set[int]) -> None:
        what, arg = action
        spec = self.rt[task_id].spec
        if what == "reconfig":
            self._reconfigure(arg, resched)
            return
        if spec.actuator and arg is not None:
            self._emit(TraceKind.ACTIVATION, spec.cpu, next=task_id, partition=spec.partition, detail=f"cmd={arg}")
        for dst in self.out_edges.get(task_id, ()):
            msg = Message(f"{task_id}#{next(self._msg_seq)}", task_id, dst, arg, sent_at=self.now)
            self._emit(TraceKind.MESSAGE_SEND, spec.cpu, prev=task_id, partition=spec.partition,
                       detail=f"to={dst} msg={msg.msg_id} cmd={arg or '-'}")
            if self.node_of[dst] == self.name:
                self.queue.push(self.now, EventType.MESSAGE_ARRIVAL, msg)
            else:
                self.outbox.append(msg)

    def _reconfigure(self, frame_name: str, resched: set[int]) -> None:
        self.sched.update_major_frame(self.scenario.frames[frame_name], self.now, privileged=self.spec.reconfig)
        resched.update(range(self.spec.cpus))

    def _dispatch(self, cpu: int, t: int) -> None:
        d = self.sched.schedule(cpu, t)
        if d.switched and d.prev is not None:
            self.rt[d.prev.task_id].gen += 1
        if d.next is not None:
            self._arm(d.next.task_id)


def run_node(scenario: Scenario, node: Optional[str] = None, until: Optional[int] = None,
             validate: bool = True) -> TraceLog:
    """Simulate one node in isolation over ``[0, until)``."""
    if validate:
        validate_scenario(scenario)
    if node is None:
        if len(scenario.nodes) != 1:
            raise ScenarioInvalid("scenario has several nodes; name one")
        node = scenario.nodes[0].name
    horizon = scenario.horizon if until is None else until
    if horizon <= 0:
        raise HorizonZero("horizon must be positive")
    sim = NodeSimulator(scenario, node)
    sim.run_until(horizon)
    sim.finish(horizon)
    return sim.trace(horizon)
