import pytest
from hypothesis import given, strategies as st

from partsched.cluster import scatter_variant
from partsched.model import MS, S, Criticality, PartitionSpec
from partsched.scenario import (
    BUNDLED_DIR,
    CommandInjection,
    CpuBound,
    EventDriven,
    Idle,
    NodeSpec,
    OneShot,
    ParseError,
    Periodic,
    Scenario,
    ScenarioInvalid,
    TaskSpec,
    bundled,
    dumps,
    format_duration,
    load,
    loads,
    parse_duration,
    validate_scenario,
)

BUNDLED = ["fig1", "fig2", "fig3", "scatter_1", "scatter_2", "scatter_3"]


def test_durations():
    assert parse_duration("250ms") == 250 * MS
    assert parse_duration("1.5s") == 1500 * MS
    assert parse_duration("7") == 7
    assert parse_duration("12us") == 12
    with pytest.raises(ValueError):
        parse_duration("0.5us")
    with pytest.raises(ValueError):
        parse_duration("abc")


@given(st.integers(0, 10 ** 12))
def test_duration_round_trip(us):
    assert parse_duration(format_duration(us)) == us


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load_and_round_trip(name):
    sc = load(bundled(name))
    text = dumps(sc)
    assert dumps(loads(text)) == text
    assert loads(text) == sc


def test_bundled_dir_complete():
    assert sorted(p.stem for p in BUNDLED_DIR.glob("*.scn")) == sorted(BUNDLED)
    assert bundled("fig3.scn") == bundled("fig3")
    with pytest.raises(FileNotFoundError):
        bundled("nope")


def test_scatter_files_match_generator():
    for n in (1, 2, 3):
        assert load(bundled(f"scatter_{n}")) == scatter_variant(n)


def test_parse_errors_carry_line_and_field():
    with pytest.raises(ParseError) as exc:
        loads("scenario name=x\nnode n1 cpus=two\n")
    assert exc.value.line == 2 and exc.value.field == "cpus"
    with pytest.raises(ParseError) as exc:
        loads("scenario name=x\nbogus 1\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError) as exc:
        loads("scenario name=x colour=red\n")
    assert exc.value.field == "colour"
    with pytest.raises(ParseError):
        loads("node n1\n")
    with pytest.raises(ParseError):
        loads("scenario version=9\n")


def test_validation_catches_dangling_references():
    base = "scenario name=x\nnode n1\npartition n1 1 period=10ms duration=5ms\n"
    with pytest.raises(ScenarioInvalid):
        validate_scenario(loads(base + "task t node=n2 crit=APPLICATION partition=1\n"))
    with pytest.raises(ScenarioInvalid):
        validate_scenario(loads(base + "task t node=n1 crit=APPLICATION partition=2\n"))
    with pytest.raises(ScenarioInvalid):
        validate_scenario(loads(base + "task t node=n1 crit=APPLICATION partition=1 cpu=1\n"))
    with pytest.raises(ScenarioInvalid):
        validate_scenario(loads(base + "task t node=n1 crit=APPLICATION partition=1\nedge t u\n"))
    with pytest.raises(ScenarioInvalid):
        validate_scenario(loads(base + "command at=1ms task=ghost id=c\n"))
    with pytest.raises(ScenarioInvalid):  # no reconfig privilege
        validate_scenario(loads(base + "frame f\nframe_partition f 1 period=10ms duration=5ms\n"
                                       "frame_minor f 1 offset=0 duration=5ms\nreconfig at=1ms node=n1 frame=f\n"))


def test_validation_rejects_invalid_frames():
    text = ("scenario name=x\nnode n1\npartition n1 1 period=1s duration=500ms\n"
            "partition n1 2 period=1s duration=300ms\nminor n1 1 offset=0 duration=500ms\n"
            "minor n1 2 offset=400ms duration=300ms\n")
    with pytest.raises(ScenarioInvalid, match="K2_NO_OVERLAP"):
        validate_scenario(loads(text))


def test_mixed_actor_criticality_rejected():
    text = ("scenario name=x\nnode n1\npartition n1 1 period=10ms duration=5ms\n"
            "task a node=n1 actor=A crit=CRITICAL\ntask b node=n1 actor=A crit=APPLICATION partition=1\n")
    with pytest.raises(ScenarioInvalid, match="mixes"):
        validate_scenario(loads(text))


def test_generated_frame_when_no_minors():
    sc = loads("scenario name=x\nnode n1\npartition n1 1 period=2s duration=250ms\n"
               "partition n1 2 period=4s duration=1s\n")
    frame = sc.node_frame("n1")
    assert frame.hyperperiod == 4 * S and len(frame.minors) == 3


names = st.text("abcdefghij0123456789", min_size=1, max_size=6)
workloads = st.one_of(
    st.just(CpuBound()), st.just(Idle()),
    st.builds(lambda p, b, o: Periodic(p * MS, min(b, p) * MS, o * MS), st.integers(1, 1000), st.integers(1, 1000),
              st.integers(0, 100)),
    st.builds(lambda s, f: EventDriven(s * MS, f * MS), st.integers(0, 50), st.integers(0, 500)),
    st.builds(lambda a, b: OneShot(a * MS, b * MS), st.integers(0, 1000), st.integers(1, 100)),
)


@st.composite
def scenarios(draw):
    nnodes = draw(st.integers(1, 3))
    nodes = []
    for i in range(nnodes):
        parts = tuple(PartitionSpec(k + 1, draw(st.sampled_from([100, 200, 400])) * MS, 50 * MS,
                                    draw(st.sampled_from(["", "Alpha", "IPA-B"])))
                      for k in range(draw(st.integers(0, 2))))
        nodes.append(NodeSpec(f"n{i}", draw(st.integers(1, 4)), parts,
                              offset=draw(st.one_of(st.none(), st.integers(0, 10).map(lambda v: v * MS))),
                              skew=draw(st.integers(0, 10)) * MS, reconfig=draw(st.booleans())))
    tasks = []
    for j in range(draw(st.integers(0, 5))):
        node = draw(st.sampled_from(nodes))
        crit = draw(st.sampled_from(list(Criticality)))
        if crit is Criticality.APPLICATION and not node.partitions:
            crit = Criticality.CRITICAL
        if crit is Criticality.APPLICATION:
            partition = draw(st.sampled_from([p.id for p in node.partitions]))
        else:
            partition = 0 if crit is Criticality.CRITICAL else -1
        tasks.append(TaskSpec(f"t{j}@{node.name}", node.name, crit, draw(st.integers(0, 99)), partition,
                              draw(workloads), actor=draw(st.sampled_from(["", f"A{j}"])),
                              cpu=draw(st.integers(0, node.cpus - 1)), cap=draw(st.integers(1, 100)),
                              actuator=draw(st.booleans())))
    injections = []
    if tasks:
        injections.append(CommandInjection(draw(st.integers(0, 5000)) * MS, tasks[0].id, draw(names)))
    return Scenario(name=draw(names), horizon=draw(st.integers(1, 10)) * S, cap_enabled=draw(st.booleans()),
                    cap_window=draw(st.integers(1, 3)), seed=draw(st.integers(0, 99)), hp_sync=draw(st.booleans()),
                    nodes=nodes, tasks=tasks, injections=injections)


@given(scenarios())
def test_load_save_load_identity(sc):
    text = dumps(sc)
    again = loads(text)
    assert again == sc
    assert dumps(again) == text
