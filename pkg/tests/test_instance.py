import random

import pytest

from coevo_fjsp.instance import (
    EmptyMachineSet,
    InstanceFormatError,
    MachineIdOutOfRange,
    MachineIdOutOfRangeError,
    MalformedHeaderError,
    NonPositiveLowerBound,
    NonPositiveTime,
    NonPositiveTimeError,
    TruncatedJobLineError,
    load_instance,
    make_instance,
    parse_fjs,
    parse_lb_registry,
    serialize_fjs,
    validate,
)
from oracles import random_jobs, reference_parse


def test_smallest_instance():
    inst = parse_fjs("1 1\n1 1 1 5\n")
    assert inst.job_count == 1
    assert inst.ops_per_job == (1,)
    assert inst.eligible(0, 0) == (0,)
    assert inst.proc_time(0, 0, 0) == 5
    assert inst.factory_count == 1


def test_two_job_example_matches_reference_parser():
    text = "2 2\n1 2 1 3 2 4\n1 1 2 6\n"
    inst = parse_fjs(text)
    n_jobs, n_machines, jobs = reference_parse(text)
    assert inst.job_count == n_jobs == 2
    assert inst.machine_count == n_machines
    assert dict(inst.operations[0][0]) == jobs[0][0] == {0: 3, 1: 4}
    assert dict(inst.operations[1][0]) == jobs[1][0] == {1: 6}


def test_header_average_token_ignored():
    inst = parse_fjs("1 2 1.5\n1 2 1 3 2 4\n")
    assert inst.machine_count == 2


def test_blank_lines_skipped():
    inst = parse_fjs("\n2 1\n\n1 1 1 2\n1 1 1 3\n\n")
    assert inst.op_count == 2


@pytest.mark.parametrize(
    "text, exc, line",
    [
        ("1 1\n1 1 1 0\n", NonPositiveTimeError, 2),
        ("x 1\n1 1 1 5\n", MalformedHeaderError, 1),
        ("", MalformedHeaderError, None),
        ("1 1\n2 1 1 5\n", TruncatedJobLineError, 2),
        ("2 1\n1 1 1 5\n", TruncatedJobLineError, None),
        ("1 2\n1 1 3 5\n", MachineIdOutOfRangeError, 2),
        ("1 2\n1 1 0 5\n", MachineIdOutOfRangeError, 2),
        ("1 1\n1 1 1 5 7\n", InstanceFormatError, 2),
    ],
)
def test_parse_errors_name_line(text, exc, line):
    with pytest.raises(exc) as info:
        parse_fjs(text)
    if line is not None:
        assert info.value.line == line
        assert f"line {line}" in str(info.value)


def test_validate_clean():
    assert validate(parse_fjs("2 2\n1 2 1 3 2 4\n1 1 2 6\n")) == []


def test_validate_empty_machine_set():
    inst = make_instance([[{0: 1}, {}]], machine_count=1)
    assert validate(inst) == [EmptyMachineSet(0, 1)]


def test_validate_negative_time():
    inst = make_instance([[{0: -1}]], machine_count=1)
    assert validate(inst) == [NonPositiveTime(0, 0, 0)]


def test_validate_machine_range_and_lb():
    inst = make_instance([[{3: 2}]], machine_count=2, known_lb=0)
    assert validate(inst) == [MachineIdOutOfRange(0, 0, 3), NonPositiveLowerBound(0)]


def test_round_trip_random():
    rng = random.Random(3)
    for _ in range(200):
        jobs = random_jobs(rng, rng.randint(1, 6), 4, rng.randint(1, 5))
        inst = make_instance(jobs, machine_count=5)
        again = parse_fjs(serialize_fjs(inst))
        assert again == inst
        assert again.op_count == sum(len(j) for j in jobs)


def test_flat_index_is_canonical():
    inst = make_instance([[{0: 1}, {0: 1}], [{0: 1}], [{0: 1}, {0: 1}, {0: 1}]])
    assert [inst.flat_index(i, j) for i, j in inst.all_ops()] == list(range(6))
    assert inst.op_at(3) == (2, 0)


def test_lb_registry_and_load(tmp_path):
    reg = parse_lb_registry("# comment\nfoo\t12\n\nBar\t7\n")
    assert reg == {"foo": 12, "Bar": 7}
    with pytest.raises(InstanceFormatError):
        parse_lb_registry("foo 12\n")
    with pytest.raises(InstanceFormatError):
        parse_lb_registry("foo\t0\n")
    p = tmp_path / "foo.fjs"
    p.write_text("1 1\n1 1 1 5\n")
    inst = load_instance(p, factory_count=2, lb_registry=reg)
    assert inst.known_lb == 12 and inst.factory_count == 2 and inst.name == "foo"
