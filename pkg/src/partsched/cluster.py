"""Multi-node runs over a shared simulated timeline."""
from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .model import MS, TraceLog
from .scenario import (
    CommandInjection,
    CpuBound,
    EdgeSpec,
    EventDriven,
    LinkSpec,
    NodeSpec,
    Periodic,
    Scenario,
    ScenarioInvalid,
    TaskSpec,
    validate_scenario,
)
from .model import Criticality, PartitionSpec, SYSTEM_PARTITION
from .sim import EventType, HorizonZero, NodeSimulator

POINT_TO_POINT = "p2p"
GROUP_PUBLISH = "group"


class UnsupportedParams(ValueError):
    pass


@dataclass
class InteractionGraph:
    edges: list[EdgeSpec] = field(default_factory=list)

    def targets(self, task_id: str) -> list[str]:
        return [e.dst for e in self.edges if e.src == task_id]

    def publish(self, src: str, subscribers, kind: str = GROUP_PUBLISH) -> None:
        for dst in subscribers:
            self.edges.append(EdgeSpec(src, dst, kind))

    def connect(self, src: str, dst: str) -> None:
        self.edges.append(EdgeSpec(src, dst, POINT_TO_POINT))


class _Channel:
    """One directed link; delivery keeps send order."""

    def __init__(self, spec: LinkSpec, seed: int):
        self.spec = spec
        self.rng = random.Random(f"{seed}:{spec.src}:{spec.dst}")
        self.last_arrival = 0

    def arrival(self, sent_at: int) -> int:
        jitter = self.rng.randint(0, self.spec.jitter) if self.spec.jitter else 0
        at = max(sent_at + self.spec.latency + jitter, self.last_arrival)
        self.last_arrival = at
        return at


def aligned_offsets(scenario: Scenario) -> dict[str, int]:
    """Per-node offsets that make every first hyperperiod start together.

    Nodes boot at their skew; all start at the latest boot time.
    """
    start = max(n.skew for n in scenario.nodes)
    return {n.name: start - n.skew for n in scenario.nodes}


def hp_start_times(scenario: Scenario, offsets: Optional[dict[str, int]] = None) -> dict[str, Optional[int]]:
    """Planned first-hyperperiod start per node (None when tick-determined)."""
    if offsets is None:
        offsets = aligned_offsets(scenario) if scenario.hp_sync else {}
    out = {}
    for n in scenario.nodes:
        off = offsets.get(n.name, n.offset)
        out[n.name] = None if off is None else n.skew + off
    return out


def run_cluster(scenario: Scenario, until: Optional[int] = None, threads: int = 1,
                validate: bool = True) -> dict[str, TraceLog]:
    """Run every node; returns one trace per node.

    Nodes advance in windows no longer than the smallest link latency, so no
    message can arrive inside a window that its receiver already processed.
    """
    if validate:
        validate_scenario(scenario)
    horizon = scenario.horizon if until is None else until
    if horizon <= 0:
        raise HorizonZero("horizon must be positive")
    offsets = aligned_offsets(scenario) if scenario.hp_sync else {}
    sims = {n.name: NodeSimulator(scenario, n.name, offsets.get(n.name)) for n in scenario.nodes}
    order = [n.name for n in scenario.nodes]
    node_of = {t.id: t.node for t in scenario.tasks}
    channels = {(l.src, l.dst): _Channel(l, scenario.seed) for l in scenario.links}
    lookahead = max(1, min((l.latency for l in scenario.links), default=horizon))

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while True:
            pending = [t for t in (s.peek_time() for s in sims.values()) if t is not None]
            if not pending or min(pending) >= horizon:
                break
            bound = min(horizon, min(pending) + lookahead)
            if pool is None:
                for name in order:
                    sims[name].run_until(bound)
            else:
                list(pool.map(lambda name: sims[name].run_until(bound), order))
            for name in order:
                sim = sims[name]
                outgoing, sim.outbox = sim.outbox, []
                for msg in outgoing:
                    dst_node = node_of[msg.dst]
                    channel = channels.get((name, dst_node))
                    if channel is None:
                        raise ScenarioInvalid(f"no link {name}->{dst_node}")
                    sims[dst_node].inject(channel.arrival(msg.sent_at), EventType.MESSAGE_ARRIVAL, msg)
    finally:
        if pool is not None:
            pool.shutdown()
    traces = {}
    for name in order:
        sims[name].finish(horizon)
        traces[name] = sims[name].trace(horizon)
    return traces


def merge_traces(traces: dict[str, TraceLog]) -> TraceLog:
    """Combine per-node traces, ordered by timestamp then node order."""
    logs = list(traces.values())
    if not logs:
        raise ValueError("nothing to merge")
    merged = TraceLog(logs[0].horizon, cap_enabled=logs[0].cap_enabled, cap_window=logs[0].cap_window)
    keyed = []
    for rank, (name, log) in enumerate(traces.items()):
        merged.nodes.update(log.nodes)
        merged.tasks.update(log.tasks)
        keyed.extend(((e.timestamp, rank, i), e) for i, e in enumerate(log.events))
    keyed.sort(key=lambda pair: pair[0])
    merged.events = [e for _, e in keyed]
    return merged


# -- the three-satellite scatter experiment ----------------------------

SCATTER_COMMAND_AT = 2037 * MS
SCATTER_SKEWS = (0, 3 * MS, 7 * MS)
SCATTER_LINK_LATENCY = 10 * MS
THRUSTER_BURN = 500 * MS


def scatter_scenario(hyperperiod: int, ipa_load_percent: int, horizon: int = 3000 * MS,
                     command_at: int = SCATTER_COMMAND_AT) -> Scenario:
    """Three nodes running the flight-control chain beside image processing.

    Each node gets a short partition for orbital maintenance and two
    partitions holding two image-processing actors each. Loads up to 50%
    are periodic jobs filling that share of their partition; 100% is
    CPU-bound.
    """
    if hyperperiod not in (100 * MS, 250 * MS):
        raise UnsupportedParams(f"hyperperiod must be 100 ms or 250 ms, got {hyperperiod}")
    if not (0 < ipa_load_percent <= 50 or ipa_load_percent == 100):
        raise UnsupportedParams(f"IPA load must be in (0, 50] or exactly 100, got {ipa_load_percent}")
    short = hyperperiod // 5
    long = (hyperperiod - short) // 2
    partitions = (
        PartitionSpec(1, hyperperiod, short, "OrbitalMaintenance"),
        PartitionSpec(2, hyperperiod, long, "IPA-A"),
        PartitionSpec(3, hyperperiod, long, "IPA-B"),
    )
    names = [f"sat{i}" for i in range(1, 4)]
    nodes = [NodeSpec(name, 1, partitions, skew=skew) for name, skew in zip(names, SCATTER_SKEWS)]
    crit = Criticality.CRITICAL
    tasks: list[TaskSpec] = []
    graph = InteractionGraph()
    # command proxy and command publisher exist only on the cluster leader
    leader = names[0]
    tasks.append(TaskSpec("C1@sat1", leader, crit, 90, SYSTEM_PARTITION, EventDriven(2 * MS),
                          actor="CommandProxy@sat1"))
    tasks.append(TaskSpec("T1@sat1", leader, crit, 85, SYSTEM_PARTITION, EventDriven(3 * MS),
                          actor="TrajectoryPlanning@sat1"))
    graph.connect("C1@sat1", "T1@sat1")
    for i, name in enumerate(names, 1):
        tasks += [
            TaskSpec(f"T2@{name}", name, crit, 85, SYSTEM_PARTITION, EventDriven(2 * MS),
                     actor=f"TrajectoryPlanning@{name}"),
            TaskSpec(f"M2@{name}", name, crit, 80, SYSTEM_PARTITION, EventDriven(5 * MS, THRUSTER_BURN),
                     actor=f"ModuleProxy@{name}", actuator=True),
            TaskSpec(f"M1@{name}", name, crit, 75, SYSTEM_PARTITION, Periodic(1000 * MS, 1 * MS, 500 * MS),
                     actor=f"ModuleProxy@{name}"),
            TaskSpec(f"O1@{name}", name, Criticality.APPLICATION, 60, 1, EventDriven(2 * MS),
                     actor=f"OrbitalMaintenance@{name}"),
            TaskSpec(f"O2@{name}", name, Criticality.APPLICATION, 60, 1, EventDriven(1 * MS),
                     actor=f"OrbitalMaintenance@{name}"),
        ]
        graph.connect(f"T2@{name}", f"M2@{name}")
        graph.connect(f"M1@{name}", f"O1@{name}")
        for k in range(1, 5):
            part = 2 if k <= 2 else 3
            if ipa_load_percent == 100:
                workload = CpuBound()
            else:
                workload = Periodic(hyperperiod, long * ipa_load_percent // 100 // 2)
            tasks.append(TaskSpec(f"IPA{k}@{name}", name, Criticality.APPLICATION, 50, part, workload,
                                  actor=f"IPA{k}@{name}"))
    graph.publish("T1@sat1", [f"T2@{n}" for n in names])
    for name in names:
        graph.publish(f"O1@{name}", [f"O2@{n}" for n in names])
    links = [LinkSpec(a, b, SCATTER_LINK_LATENCY) for a in names for b in names if a != b]
    label = {(250 * MS, 40): 1, (250 * MS, 100): 2, (100 * MS, 100): 3}.get((hyperperiod, ipa_load_percent), 0)
    return Scenario(
        name=f"scatter_{label}" if label else f"scatter_{hyperperiod // MS}ms_{ipa_load_percent}",
        horizon=horizon, hp_sync=True, nodes=nodes, tasks=tasks, links=links, edges=graph.edges,
        injections=[CommandInjection(command_at, "C1@sat1", "scatter")],
    )


def scatter_variant(number: int, **kwargs) -> Scenario:
    """Scenario 1, 2 or 3 of the scatter experiment."""
    params = {1: (250 * MS, 40), 2: (250 * MS, 100), 3: (100 * MS, 100)}
    if number not in params:
        raise UnsupportedParams(f"no scatter scenario {number}")
    return scatter_scenario(*params[number], **kwargs)
