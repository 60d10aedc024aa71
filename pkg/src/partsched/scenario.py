"""Declarative scenarios and their line-oriented text format.

One statement per line; ``#`` starts a comment. Durations accept ``us``,
``ms`` and ``s`` suffixes (bare integers are microseconds)::

    scenario name=fig3 horizon=600ms tick=4ms cap=on cap_window=1 seed=0
    node n1 cpus=1
    partition n1 1 period=60ms duration=60ms
    minor n1 1 offset=0 duration=60ms
    task 1001 node=n1 crit=APPLICATION partition=1 prio=72 cap=20 workload=cpu_bound
    link n1 n2 latency=10ms jitter=0
    edge C1 T1 kind=p2p
    frame F2 hyperperiod=240ms
    frame_partition F2 1 period=240ms duration=120ms
    frame_minor F2 1 offset=0 duration=120ms
    reconfig at=330ms node=n1 frame=F2 caller=reconf
    command at=2037ms task=C1 id=scatter
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional, Union

from .frames import FrameError, generate_major_frame, validate_major_frame
from .model import (
    BEST_EFFORT_PARTITION,
    DEFAULT_TICK,
    MS,
    S,
    SYSTEM_PARTITION,
    Criticality,
    MajorFrame,
    MinorFrame,
    ModelError,
    PartitionSpec,
    TaskControlBlock,
    check_actor_criticality,
    parse_partition_label,
    partition_label,
)

FORMAT_VERSION = 1


class ScenarioInvalid(ModelError):
    pass


class ParseError(ScenarioInvalid):
    def __init__(self, message: str, line: int = 0, field: str = ""):
        self.line = line
        self.field = field
        where = f"line {line}" + (f", field {field!r}" if field else "")
        super().__init__(f"{where}: {message}")


# -- workloads --------------------------------------------------------

@dataclass(frozen=True)
class CpuBound:
    pass


@dataclass(frozen=True)
class Periodic:
    period: int
    budget: int
    offset: int = 0

    def __post_init__(self):
        if self.budget <= 0 or self.period <= 0 or self.budget > self.period:
            raise ModelError(f"periodic workload needs 0 < budget <= period, got {self.budget}/{self.period}")


@dataclass(frozen=True)
class EventDriven:
    service: int
    followup: int = 0

    def __post_init__(self):
        if self.service < 0 or self.followup < 0:
            raise ModelError("service and followup times must be non-negative")


@dataclass(frozen=True)
class OneShot:
    at: int
    busy: int

    def __post_init__(self):
        if self.busy <= 0 or self.at < 0:
            raise ModelError("one-shot workload needs at >= 0 and busy > 0")


@dataclass(frozen=True)
class Idle:
    """No self-generated work; the task only reacts to nothing."""


Workload = Union[CpuBound, Periodic, EventDriven, OneShot, Idle]


# -- scenario ---------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    id: str
    node: str
    criticality: Criticality
    priority: int
    partition: int
    workload: Workload = CpuBound()
    actor: str = ""
    cpu: int = 0
    cap: int = 100
    actuator: bool = False

    @property
    def actor_id(self) -> str:
        return self.actor or self.id

    def tcb(self) -> TaskControlBlock:
        return TaskControlBlock(self.id, self.actor_id, self.criticality, self.priority,
                                self.partition, self.cpu, self.cap)


@dataclass(frozen=True)
class NodeSpec:
    name: str
    cpus: int = 1
    partitions: tuple[PartitionSpec, ...] = ()
    minors: tuple[MinorFrame, ...] = ()
    hyperperiod: Optional[int] = None
    offset: Optional[int] = None
    skew: int = 0
    reconfig: bool = False


@dataclass(frozen=True)
class LinkSpec:
    src: str
    dst: str
    latency: int
    jitter: int = 0


@dataclass(frozen=True)
class EdgeSpec:
    src: str
    dst: str
    kind: str = "p2p"  # or "group"


@dataclass(frozen=True)
class ReconfigInjection:
    at: int
    node: str
    frame: str
    caller: Optional[str] = None


@dataclass(frozen=True)
class CommandInjection:
    at: int
    task: str
    command_id: str


Injection = Union[ReconfigInjection, CommandInjection]


@dataclass
class Scenario:
    name: str = "scenario"
    horizon: int = S
    tick: int = DEFAULT_TICK
    cap_enabled: bool = False
    cap_window: int = 1
    seed: int = 0
    hp_sync: bool = False
    nodes: list[NodeSpec] = field(default_factory=list)
    tasks: list[TaskSpec] = field(default_factory=list)
    links: list[LinkSpec] = field(default_factory=list)
    edges: list[EdgeSpec] = field(default_factory=list)
    frames: dict[str, MajorFrame] = field(default_factory=dict)
    injections: list[Injection] = field(default_factory=list)

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def tasks_on(self, node: str) -> list[TaskSpec]:
        return [t for t in self.tasks if t.node == node]

    def node_frame(self, name: str) -> Optional[MajorFrame]:
        """The node's configured frame, generated when no minors are given."""
        spec = self.node(name)
        if not spec.partitions:
            return None
        if spec.minors:
            return MajorFrame.build(spec.partitions, spec.minors, spec.hyperperiod)
        return generate_major_frame(spec.partitions)

    def without_task(self, task_id: str) -> "Scenario":
        return replace(self, tasks=[t for t in self.tasks if t.id != task_id],
                       edges=[e for e in self.edges if task_id not in (e.src, e.dst)])


def validate_scenario(sc: Scenario) -> None:
    """Referential integrity plus frame validation; raises ScenarioInvalid."""
    names = [n.name for n in sc.nodes]
    if not names:
        raise ScenarioInvalid("scenario has no nodes")
    if len(set(names)) != len(names):
        raise ScenarioInvalid(f"duplicate node names in {names}")
    if sc.tick <= 0:
        raise ScenarioInvalid("tick must be positive")
    for n in sc.nodes:
        if n.cpus < 1:
            raise ScenarioInvalid(f"node {n.name}: needs at least one CPU")
        try:
            frame = sc.node_frame(n.name)
        except FrameError as exc:
            raise ScenarioInvalid(f"node {n.name}: {exc}") from exc
        if frame is not None:
            report = validate_major_frame(frame)
            if not report.valid:
                raise ScenarioInvalid(f"node {n.name}: " + "; ".join(v.format() for v in report.violations))
    ids = [t.id for t in sc.tasks]
    if len(set(ids)) != len(ids):
        raise ScenarioInvalid("duplicate task ids")
    tcbs = []
    for t in sc.tasks:
        if t.node not in names:
            raise ScenarioInvalid(f"task {t.id}: unknown node {t.node}")
        node = sc.node(t.node)
        if not 0 <= t.cpu < node.cpus:
            raise ScenarioInvalid(f"task {t.id}: node {t.node} has no CPU {t.cpu}")
        try:
            tcbs.append(t.tcb())
        except ModelError as exc:
            raise ScenarioInvalid(str(exc)) from exc
        if t.criticality is Criticality.APPLICATION and t.partition not in {p.id for p in node.partitions}:
            raise ScenarioInvalid(f"task {t.id}: node {t.node} has no partition {t.partition}")
    try:
        check_actor_criticality(tcbs)
    except ModelError as exc:
        raise ScenarioInvalid(str(exc)) from exc
    node_of = {t.id: t.node for t in sc.tasks}
    links = {(l.src, l.dst) for l in sc.links}
    for l in sc.links:
        if l.src not in names or l.dst not in names:
            raise ScenarioInvalid(f"link {l.src}->{l.dst}: unknown node")
        if l.latency < 0 or l.jitter < 0:
            raise ScenarioInvalid(f"link {l.src}->{l.dst}: negative latency or jitter")
    for e in sc.edges:
        if e.src not in node_of or e.dst not in node_of:
            raise ScenarioInvalid(f"edge {e.src}->{e.dst}: unknown task")
        if e.kind not in ("p2p", "group"):
            raise ScenarioInvalid(f"edge {e.src}->{e.dst}: unknown kind {e.kind}")
        a, b = node_of[e.src], node_of[e.dst]
        if a != b and (a, b) not in links:
            raise ScenarioInvalid(f"edge {e.src}->{e.dst}: no link {a}->{b}")
    for inj in sc.injections:
        if inj.at < 0:
            raise ScenarioInvalid("injection at negative time")
        if isinstance(inj, ReconfigInjection):
            if inj.node not in names:
                raise ScenarioInvalid(f"reconfig: unknown node {inj.node}")
            if not sc.node(inj.node).reconfig:
                raise ScenarioInvalid(f"reconfig: node {inj.node} lacks reconfiguration privilege")
            if inj.frame not in sc.frames:
                raise ScenarioInvalid(f"reconfig: unknown frame {inj.frame}")
            report = validate_major_frame(sc.frames[inj.frame])
            if not report.valid:
                raise ScenarioInvalid(f"frame {inj.frame}: " + "; ".join(v.format() for v in report.violations))
            if inj.caller is not None:
                caller = sc.task(inj.caller) if inj.caller in node_of else None
                if caller is None or caller.node != inj.node or caller.criticality is not Criticality.CRITICAL \
                        or not isinstance(caller.workload, EventDriven):
                    raise ScenarioInvalid(f"reconfig caller {inj.caller} must be an event-driven CRITICAL "
                                          f"task on {inj.node}")
        elif inj.task not in node_of:
            raise ScenarioInvalid(f"command: unknown task {inj.task}")


# -- text format ------------------------------------------------------

_UNITS = {"us": 1, "ms": MS, "s": S}


def parse_duration(text: str) -> int:
    text = text.strip()
    for suffix in ("us", "ms", "s"):
        if text.endswith(suffix):
            number, scale = text[: -len(suffix)], _UNITS[suffix]
            break
    else:
        number, scale = text, 1
    try:
        value = Decimal(number) * scale
    except InvalidOperation:
        raise ValueError(f"bad duration {text!r}") from None
    if value != value.to_integral_value():
        raise ValueError(f"duration {text!r} is not a whole number of microseconds")
    return int(value)


def format_duration(us: int) -> str:
    if us == 0:
        return "0"
    for suffix, scale in (("s", S), ("ms", MS)):
        if us % scale == 0:
            return f"{us // scale}{suffix}"
    return f"{us}us"


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("on", "yes", "true", "1"):
        return True
    if low in ("off", "no", "false", "0"):
        return False
    raise ValueError(f"bad boolean {text!r}")


class _Line:
    def __init__(self, lineno: int, tokens: list[str]):
        self.lineno = lineno
        self.positional = [t for t in tokens if "=" not in t]
        self.kv = dict(t.split("=", 1) for t in tokens if "=" in t)
        self.used: set[str] = set()

    def pos(self, i: int, what: str) -> str:
        try:
            return self.positional[i]
        except IndexError:
            raise ParseError(f"missing {what}", self.lineno) from None

    def get(self, key: str, conv=str, default=...):
        self.used.add(key)
        if key not in self.kv:
            if default is ...:
                raise ParseError("missing required field", self.lineno, key)
            return default
        try:
            return conv(self.kv[key])
        except (ValueError, KeyError, ModelError) as exc:
            raise ParseError(str(exc), self.lineno, key) from None

    def finish(self):
        extra = set(self.kv) - self.used
        if extra:
            raise ParseError(f"unknown field(s) {sorted(extra)}", self.lineno, sorted(extra)[0])


def _workload(line: _Line) -> Workload:
    kind = line.get("workload", str, "cpu_bound")
    dur = parse_duration
    if kind == "cpu_bound":
        return CpuBound()
    if kind == "periodic":
        return Periodic(line.get("period", dur), line.get("budget", dur), line.get("offset", dur, 0))
    if kind == "event":
        return EventDriven(line.get("service", dur), line.get("followup", dur, 0))
    if kind == "oneshot":
        return OneShot(line.get("at", dur), line.get("busy", dur))
    if kind == "none":
        return Idle()
    raise ParseError(f"unknown workload {kind!r}", line.lineno, "workload")


def _crit(text: str) -> Criticality:
    return Criticality[text.upper()]


def loads(text: str) -> Scenario:
    sc = Scenario()
    nodes: dict[str, dict] = {}
    frames: dict[str, dict] = {}
    node_order: list[str] = []
    frame_order: list[str] = []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            tokens = shlex.split(body)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        head, line = tokens[0], _Line(lineno, tokens[1:])
        dur = parse_duration
        if head == "scenario":
            if seen_header:
                raise ParseError("duplicate scenario header", lineno)
            seen_header = True
            version = line.get("version", int, FORMAT_VERSION)
            if version != FORMAT_VERSION:
                raise ParseError(f"unsupported scenario version {version}", lineno, "version")
            sc.name = line.get("name", str, sc.name)
            sc.horizon = line.get("horizon", dur, sc.horizon)
            sc.tick = line.get("tick", dur, sc.tick)
            sc.cap_enabled = line.get("cap", _bool, False)
            sc.cap_window = line.get("cap_window", int, 1)
            sc.seed = line.get("seed", int, 0)
            sc.hp_sync = line.get("hp_sync", _bool, False)
        elif head == "node":
            name = line.pos(0, "node name")
            if name in nodes:
                raise ParseError(f"duplicate node {name}", lineno)
            node_order.append(name)
            nodes[name] = dict(
                name=name, cpus=line.get("cpus", int, 1), hyperperiod=line.get("hyperperiod", dur, None),
                offset=line.get("offset", dur, None), skew=line.get("skew", dur, 0),
                reconfig=line.get("reconfig", _bool, False), partitions=[], minors=[])
        elif head in ("partition", "frame_partition"):
            owner = line.pos(0, "owner")
            table = nodes if head == "partition" else frames
            if owner not in table:
                raise ParseError(f"unknown {'node' if head == 'partition' else 'frame'} {owner}", lineno)
            try:
                table[owner]["partitions"].append(PartitionSpec(
                    int(line.pos(1, "partition id")), line.get("period", dur), line.get("duration", dur),
                    line.get("name", str, "")))
            except ModelError as exc:
                raise ParseError(str(exc), lineno) from None
        elif head in ("minor", "frame_minor"):
            owner = line.pos(0, "owner")
            table = nodes if head == "minor" else frames
            if owner not in table:
                raise ParseError(f"unknown {'node' if head == 'minor' else 'frame'} {owner}", lineno)
            try:
                pid = parse_partition_label(line.pos(1, "partition id"))
            except ValueError:
                raise ParseError("bad partition id", lineno) from None
            table[owner]["minors"].append(MinorFrame(line.get("offset", dur), line.get("duration", dur), pid))
        elif head == "frame":
            name = line.pos(0, "frame name")
            if name in frames:
                raise ParseError(f"duplicate frame {name}", lineno)
            frame_order.append(name)
            frames[name] = dict(hyperperiod=line.get("hyperperiod", dur, None), partitions=[], minors=[])
        elif head == "task":
            crit = line.get("crit", _crit)
            default_part = {Criticality.CRITICAL: "SYSTEM", Criticality.BEST_EFFORT: "BEST_EFFORT"}.get(crit)
            try:
                sc.tasks.append(TaskSpec(
                    id=line.pos(0, "task id"), node=line.get("node"), criticality=crit,
                    priority=line.get("prio", int, 0),
                    partition=line.get("partition", parse_partition_label, None if default_part is None
                                       else parse_partition_label(default_part)),
                    workload=_workload(line), actor=line.get("actor", str, ""), cpu=line.get("cpu", int, 0),
                    cap=line.get("cap", int, 100), actuator=line.get("actuator", _bool, False)))
            except ModelError as exc:
                raise ParseError(str(exc), lineno) from None
            if sc.tasks[-1].partition is None:
                raise ParseError("missing required field", lineno, "partition")
        elif head == "link":
            try:
                sc.links.append(LinkSpec(line.pos(0, "source node"), line.pos(1, "target node"),
                                         line.get("latency", dur), line.get("jitter", dur, 0)))
            except ModelError as exc:
                raise ParseError(str(exc), lineno) from None
        elif head == "edge":
            sc.edges.append(EdgeSpec(line.pos(0, "source task"), line.pos(1, "target task"),
                                     line.get("kind", str, "p2p")))
        elif head == "reconfig":
            sc.injections.append(ReconfigInjection(line.get("at", dur), line.get("node"), line.get("frame"),
                                                   line.get("caller", str, None)))
        elif head == "command":
            sc.injections.append(CommandInjection(line.get("at", dur), line.get("task"), line.get("id")))
        else:
            raise ParseError(f"unknown statement {head!r}", lineno)
        line.finish()
    if not seen_header:
        raise ParseError("missing scenario header", 1)
    for name in node_order:
        d = nodes[name]
        sc.nodes.append(NodeSpec(d["name"], d["cpus"], tuple(d["partitions"]), tuple(sorted(d["minors"])),
                                 d["hyperperiod"], d["offset"], d["skew"], d["reconfig"]))
    for name in frame_order:
        d = frames[name]
        try:
            sc.frames[name] = MajorFrame.build(d["partitions"], sorted(d["minors"]), d["hyperperiod"])
        except ModelError as exc:
            raise ScenarioInvalid(f"frame {name}: {exc}") from None
    return sc


def load(path) -> Scenario:
    sc = loads(Path(path).read_text())
    validate_scenario(sc)
    return sc


def _kv(**fields) -> str:
    out = []
    for k, v in fields.items():
        if v is None:
            continue
        text = str(v)
        out.append(f"{k}={shlex.quote(text) if text else shlex.quote('')}")
    return " ".join(out)


def _workload_fields(w: Workload) -> dict:
    fd = format_duration
    if isinstance(w, CpuBound):
        return {"workload": "cpu_bound"}
    if isinstance(w, Periodic):
        return {"workload": "periodic", "period": fd(w.period), "budget": fd(w.budget), "offset": fd(w.offset)}
    if isinstance(w, EventDriven):
        return {"workload": "event", "service": fd(w.service), "followup": fd(w.followup)}
    if isinstance(w, OneShot):
        return {"workload": "oneshot", "at": fd(w.at), "busy": fd(w.busy)}
    return {"workload": "none"}


def dumps(sc: Scenario) -> str:
    fd = format_duration
    onoff = {True: "on", False: "off"}
    lines = [
        "scenario " + _kv(version=FORMAT_VERSION, name=sc.name, horizon=fd(sc.horizon), tick=fd(sc.tick),
                          cap=onoff[sc.cap_enabled], cap_window=sc.cap_window, seed=sc.seed,
                          hp_sync=onoff[sc.hp_sync])
    ]
    for n in sc.nodes:
        lines.append(f"node {n.name} " + _kv(
            cpus=n.cpus, hyperperiod=None if n.hyperperiod is None else fd(n.hyperperiod),
            offset=None if n.offset is None else fd(n.offset), skew=fd(n.skew), reconfig=onoff[n.reconfig]))
        for p in n.partitions:
            lines.append(f"partition {n.name} {p.id} " + _kv(period=fd(p.period), duration=fd(p.duration),
                                                               name=p.name or None))
        for m in n.minors:
            lines.append(f"minor {n.name} {partition_label(m.partition)} "
                         + _kv(offset=fd(m.offset), duration=fd(m.duration)))
    for name, f in sc.frames.items():
        lines.append(f"frame {name} " + _kv(hyperperiod=fd(f.hyperperiod)))
        for p in f.partitions:
            lines.append(f"frame_partition {name} {p.id} " + _kv(period=fd(p.period), duration=fd(p.duration),
                                                                  name=p.name or None))
        for m in f.minors:
            lines.append(f"frame_minor {name} {partition_label(m.partition)} "
                         + _kv(offset=fd(m.offset), duration=fd(m.duration)))
    for t in sc.tasks:
        lines.append(f"task {t.id} " + _kv(
            node=t.node, actor=t.actor or None, crit=t.criticality.name, partition=partition_label(t.partition),
            prio=t.priority, cap=t.cap, cpu=t.cpu, actuator=onoff[t.actuator] if t.actuator else None,
            **_workload_fields(t.workload)))
    for l in sc.links:
        lines.append(f"link {l.src} {l.dst} " + _kv(latency=fd(l.latency), jitter=fd(l.jitter)))
    for e in sc.edges:
        lines.append(f"edge {e.src} {e.dst} " + _kv(kind=e.kind))
    for inj in sc.injections:
        if isinstance(inj, ReconfigInjection):
            lines.append("reconfig " + _kv(at=fd(inj.at), node=inj.node, frame=inj.frame, caller=inj.caller))
        else:
            lines.append("command " + _kv(at=fd(inj.at), task=inj.task, id=inj.command_id))
    return "\n".join(lines) + "\n"


def dump(sc: Scenario, path) -> None:
    Path(path).write_text(dumps(sc))


BUNDLED_DIR = Path(__file__).with_name("scenarios")


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package (``fig3`` or ``fig3.scn``)."""
    if not name.endswith(".scn"):
        name += ".scn"
    path = BUNDLED_DIR / name
    if not path.exists():
        raise FileNotFoundError(name)
    return path
