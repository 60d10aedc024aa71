import pytest
from hypothesis import assume, given, strategies as st

from oracles import exhaustive_feasible, tick_walk_violations
from partsched.frames import (
    C0,
    C1,
    C2,
    K1,
    K2,
    Infeasible,
    InvalidFrame,
    MalformedFrame,
    fill_empty,
    generate_major_frame,
    utilization,
    validate_major_frame,
)
from partsched.model import IDLE_PARTITION, MS, S, MajorFrame, MinorFrame, PartitionSpec

FIG1_PARTS = (PartitionSpec(1, 2 * S, 250 * MS), PartitionSpec(2, 2 * S, 250 * MS),
              PartitionSpec(3, 4 * S, 1 * S), PartitionSpec(4, 8 * S, 1500 * MS))


def fig1_frame():
    ms = MS
    minors = [MinorFrame(o * ms, 250 * ms, 1) for o in (0, 2000, 4000, 6000)]
    minors += [MinorFrame(o * ms, 250 * ms, 2) for o in (250, 2250, 4250, 6250)]
    minors += [MinorFrame(o * ms, 1000 * ms, 3) for o in (500, 4500)]
    minors += [MinorFrame(2500 * ms, 1500 * ms, 4)]
    return MajorFrame(8 * S, tuple(sorted(minors)), FIG1_PARTS)


def test_fig1_layout_valid():
    report = validate_major_frame(fig1_frame())
    assert report.valid, report.violations
    assert tick_walk_violations(fig1_frame()) == set()


def test_single_full_partition_valid():
    frame = MajorFrame(S, (MinorFrame(0, S, 1),), (PartitionSpec(1, S, S),))
    assert validate_major_frame(frame).valid


def test_overlap_reported_as_k2():
    parts = (PartitionSpec(1, S, 500 * MS), PartitionSpec(2, S, 300 * MS))
    frame = MajorFrame(S, (MinorFrame(0, 500 * MS, 1), MinorFrame(400 * MS, 300 * MS, 2)), parts)
    report = validate_major_frame(frame)
    assert report.constraints() == [K2]
    assert report.violations[0].offending_frames == (0, 1)


def test_missing_instance_reported_as_c2():
    p = PartitionSpec(1, 2 * S, 250 * MS)
    frame = MajorFrame(8 * S, tuple(MinorFrame(k * 2 * S, 250 * MS, 1) for k in range(3)), (p,))
    assert C2 in validate_major_frame(frame).constraints()


def test_all_checks_run_without_short_circuit():
    # wrong hyperperiod, late first offset, bad stride, past-H end and overlap at once
    parts = (PartitionSpec(1, 4 * MS, 2 * MS), PartitionSpec(2, 8 * MS, 3 * MS))
    minors = (MinorFrame(5 * MS, 2 * MS, 1), MinorFrame(6 * MS, 3 * MS, 2), MinorFrame(12 * MS, 2 * MS, 1))
    report = validate_major_frame(MajorFrame(12 * MS, minors, parts))
    assert set(report.constraints()) == {C0, C1, C2, K1, K2}
    assert report.constraints() == sorted(report.constraints(), key=[C0, C1, C2, K1, K2].index)
    late = MajorFrame(4 * MS, (MinorFrame(3 * MS, 2 * MS, 1),), (PartitionSpec(1, 4 * MS, 2 * MS),))
    assert K1 in validate_major_frame(late).constraints()


def test_malformed_frames_raise():
    p = (PartitionSpec(1, 10, 2),)
    with pytest.raises(MalformedFrame):
        validate_major_frame(MajorFrame(10, (MinorFrame(5, 2, 1), MinorFrame(0, 2, 1)), p))
    with pytest.raises(MalformedFrame):
        validate_major_frame(MajorFrame(10, (MinorFrame(-1, 2, 1),), p))
    with pytest.raises(MalformedFrame):
        validate_major_frame(MajorFrame(10, (MinorFrame(0, 2, 7),), p))


def test_fill_empty_examples():
    parts = (PartitionSpec(1, S, 250 * MS), PartitionSpec(2, S, 250 * MS))
    frame = MajorFrame(S, (MinorFrame(0, 250 * MS, 1), MinorFrame(500 * MS, 250 * MS, 2)), parts)
    filled = fill_empty(frame)
    idle = [m for m in filled.minors if m.partition == IDLE_PARTITION]
    assert idle == [MinorFrame(250 * MS, 250 * MS, IDLE_PARTITION), MinorFrame(750 * MS, 250 * MS, IDLE_PARTITION)]
    assert fill_empty(filled) is filled
    fig1 = fill_empty(fig1_frame())
    assert sum(m.duration for m in fig1.minors) == 8 * S
    assert all(a.end == b.offset for a, b in zip(fig1.minors, fig1.minors[1:]))
    assert set(fig1_frame().minors) <= set(fig1.minors)


def test_fill_empty_rejects_invalid():
    parts = (PartitionSpec(1, S, 500 * MS), PartitionSpec(2, S, 300 * MS))
    frame = MajorFrame(S, (MinorFrame(0, 500 * MS, 1), MinorFrame(400 * MS, 300 * MS, 2)), parts)
    with pytest.raises(InvalidFrame):
        fill_empty(frame)


def test_generate_examples():
    frame = generate_major_frame(FIG1_PARTS)
    assert validate_major_frame(frame).valid
    assert tick_walk_violations(frame) == set()
    single = generate_major_frame([PartitionSpec(1, S, S)])
    assert single.minors == (MinorFrame(0, S, 1),)
    with pytest.raises(Infeasible):
        generate_major_frame([PartitionSpec(1, 2 * S, 1200 * MS), PartitionSpec(2, 2 * S, 1200 * MS)])


def test_generate_reports_failing_partition():
    # utilization 1 but strides collide: (2, 1) twice plus (4, 1) cannot fit
    parts = [PartitionSpec(1, 2 * S, 1 * S), PartitionSpec(2, 4 * S, 1 * S), PartitionSpec(3, 4 * S, 1500 * MS)]
    with pytest.raises(Infeasible) as exc:
        generate_major_frame(parts)
    assert exc.value.partition in {1, 2, 3}
    assert exhaustive_feasible(parts, 250 * MS) is None


def test_generate_is_deterministic():
    assert generate_major_frame(FIG1_PARTS) == generate_major_frame(FIG1_PARTS)


partition_sets = st.lists(
    st.tuples(st.sampled_from([1, 2, 4, 8]), st.integers(1, 32)), min_size=1, max_size=5,
).map(lambda specs: [PartitionSpec(i + 1, p * S, min(d, 4 * p) * 250 * MS) for i, (p, d) in enumerate(specs)])


@given(partition_sets)
def test_generated_frames_pass_validation_and_oracle(parts):
    assume(sum(p.duration * (8 * S // p.period) for p in parts) <= 8 * S)
    try:
        frame = generate_major_frame(parts)
    except Infeasible:
        assert exhaustive_feasible(parts, 250 * MS) is None
        return
    assert validate_major_frame(frame).valid
    assert tick_walk_violations(frame) == set()


@given(partition_sets)
def test_utilization_above_one_is_infeasible(parts):
    assume(utilization(parts) > 1)
    with pytest.raises(Infeasible):
        generate_major_frame(parts)


@given(partition_sets, st.data())
def test_validator_agrees_with_tick_walk_on_perturbed_frames(parts, data):
    assume(sum(p.duration * (8 * S // p.period) for p in parts) <= 8 * S)
    try:
        frame = generate_major_frame(parts)
    except Infeasible:
        return
    i = data.draw(st.integers(0, len(frame.minors) - 1))
    shift = data.draw(st.sampled_from([-500, -250, 250, 500, 1000])) * MS
    moved = frame.minors[i]
    if moved.offset + shift < 0:
        return
    minors = sorted(frame.minors[:i] + frame.minors[i + 1:] + (MinorFrame(moved.offset + shift, moved.duration,
                                                                          moved.partition),))
    mutated = MajorFrame(frame.hyperperiod, tuple(minors), frame.partitions)
    report = validate_major_frame(mutated)
    assert report.valid == (tick_walk_violations(mutated) == set())
    assert set(report.constraints()) == tick_walk_violations(mutated)


@given(partition_sets)
def test_fill_empty_idempotent_and_tiles(parts):
    assume(sum(p.duration * (8 * S // p.period) for p in parts) <= 8 * S)
    try:
        frame = generate_major_frame(parts)
    except Infeasible:
        return
    filled = fill_empty(frame)
    assert fill_empty(filled) == filled
    assert filled.minors[0].offset == 0
    assert all(a.end == b.offset for a, b in zip(filled.minors, filled.minors[1:]))
    assert filled.minors[-1].end == filled.hyperperiod
