from math import gcd

import pytest
from hypothesis import given, strategies as st

from partsched.model import (
    BEST_EFFORT_PARTITION,
    IDLE_PARTITION,
    MS,
    S,
    SYSTEM_PARTITION,
    Criticality,
    EmptyPartitionSet,
    MajorFrame,
    MinorFrame,
    ModelError,
    PartitionSpec,
    TaskControlBlock,
    TraceEvent,
    TraceKind,
    check_actor_criticality,
    detail_fields,
    hyperperiod_of,
    parse_partition_label,
    partition_label,
)


def test_hyperperiod_examples():
    assert hyperperiod_of([2 * S, 2 * S, 4 * S, 8 * S]) == 8 * S
    assert hyperperiod_of([5 * S]) == 5 * S
    assert hyperperiod_of([3 * S, 4 * S, 6 * S]) == 12 * S


def test_hyperperiod_errors():
    with pytest.raises(EmptyPartitionSet):
        hyperperiod_of([])
    with pytest.raises(ModelError):
        hyperperiod_of([0, 5])


@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=6))
def test_hyperperiod_matches_pairwise_lcm(periods):
    expected = periods[0]
    for p in periods[1:]:
        expected = expected * p // gcd(expected, p)
    h = hyperperiod_of(periods)
    assert h == expected
    assert all(h % p == 0 for p in periods)


def test_criticality_total_order():
    assert Criticality.CRITICAL > Criticality.APPLICATION > Criticality.BEST_EFFORT
    levels = list(Criticality)
    for a in levels:
        for b in levels:
            assert (a < b) + (a == b) + (a > b) == 1


@pytest.mark.parametrize("period,duration", [(0, 0), (10, 0), (10, 11), (-5, 1)])
def test_partition_spec_rejects_bad_timing(period, duration):
    with pytest.raises(ModelError):
        PartitionSpec(1, period, duration)


@pytest.mark.parametrize("pid", [0, -1, 65])
def test_partition_spec_rejects_reserved_ids(pid):
    with pytest.raises(ModelError):
        PartitionSpec(pid, 10, 5)


def test_major_frame_limits_partitions():
    with pytest.raises(ModelError):
        MajorFrame(10, (), (PartitionSpec(1, 10, 5), PartitionSpec(1, 10, 5)))


def test_partition_labels_round_trip():
    for pid in (SYSTEM_PARTITION, BEST_EFFORT_PARTITION, IDLE_PARTITION, 1, 64):
        assert parse_partition_label(partition_label(pid)) == pid
    assert partition_label(IDLE_PARTITION) == "IDLE"


@given(st.lists(st.tuples(st.integers(1, 64), st.integers(1, 100)), min_size=1, max_size=5,
                unique_by=lambda t: t[0]),
       st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 100), st.sampled_from([1, 2, -2])), max_size=6),
       st.lists(st.text(max_size=8), min_size=5, max_size=5))
def test_major_frame_text_round_trip(parts, minors, names):
    partitions = tuple(PartitionSpec(pid, 100 * d, d, name) for (pid, d), name in zip(parts, names))
    frame = MajorFrame(12345, tuple(sorted(MinorFrame(*m) for m in minors)), partitions)
    assert MajorFrame.from_text(frame.to_text()) == frame


def test_tcb_criticality_partition_rules():
    TaskControlBlock("c", "a", Criticality.CRITICAL, 50, SYSTEM_PARTITION)
    TaskControlBlock("b", "a2", Criticality.BEST_EFFORT, 0, BEST_EFFORT_PARTITION)
    TaskControlBlock("x", "a3", Criticality.APPLICATION, 99, 64)
    with pytest.raises(ModelError):
        TaskControlBlock("c", "a", Criticality.CRITICAL, 50, 1)
    with pytest.raises(ModelError):
        TaskControlBlock("c", "a", Criticality.APPLICATION, 50, SYSTEM_PARTITION)
    with pytest.raises(ModelError):
        TaskControlBlock("c", "a", Criticality.BEST_EFFORT, 0, 3)
    with pytest.raises(ModelError):
        TaskControlBlock("c", "a", Criticality.APPLICATION, 100, 1)
    with pytest.raises(ModelError):
        TaskControlBlock("c", "a", Criticality.APPLICATION, 10, 1, cap_percent=0)


def test_actor_criticality_must_be_uniform():
    same = [TaskControlBlock("t1", "A", Criticality.CRITICAL, 1, SYSTEM_PARTITION),
            TaskControlBlock("t2", "A", Criticality.CRITICAL, 2, SYSTEM_PARTITION)]
    check_actor_criticality(same)
    mixed = same + [TaskControlBlock("t3", "A", Criticality.APPLICATION, 2, 1)]
    with pytest.raises(ModelError):
        check_actor_criticality(mixed)


def test_context_switch_requires_distinct_tasks():
    with pytest.raises(ModelError):
        TraceEvent(0, "n", 0, TraceKind.CONTEXT_SWITCH, "a", "a")
    TraceEvent(0, "n", 0, TraceKind.CONTEXT_SWITCH, "a", None)


def test_detail_fields():
    assert detail_fields("minor=2 hp=3 start") == {"minor": "2", "hp": "3"}
    assert detail_fields("frame=H=5;P=1/5/5") == {"frame": "H=5;P=1/5/5"}


def test_minor_frame_end():
    assert MinorFrame(250 * MS, 250 * MS, 2).end == 500 * MS
