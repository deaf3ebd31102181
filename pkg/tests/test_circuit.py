"""Circuit IR: text round-trips, validation, layer counting."""
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcc.circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    Instruction,
    RecRef,
    count_layers,
    parse,
    serialize,
    validate,
)


def test_parse_simple_gate():
    c = parse("QUBITS 2\nCZ 0 1\n")
    assert c.instructions == (Instruction("CZ", (0, 1)),)
    assert c.num_qubits == 2


def test_parse_detector_records():
    c = parse("QUBITS 1\nMZ 0\nMZ 0\nMZ 0\nDETECTOR rec[-1] rec[-3]\n")
    det = c.instructions[-1]
    assert det.name == "DETECTOR"
    assert det.targets == (RecRef(-1), RecRef(-3))


def test_parse_rejects_unknown_instruction():
    with pytest.raises(CircuitError):
        parse("FROB 0\n")


def test_parse_rejects_dangling_record():
    with pytest.raises(CircuitError) as err:
        parse("QUBITS 1\nMZ 0\nDETECTOR rec[-2]\n")
    assert "unresolvable" in str(err.value)


def test_parse_comments_and_blanks():
    c = parse("# hello\nQUBITS 3\n\nH 0  # trailing\nTICK\n")
    assert [i.name for i in c.instructions] == ["H", "TICK"]


def build_sample() -> Circuit:
    b = CircuitBuilder(4, metadata={"distance": 3, "basis": "Z"})
    b.append("RZ", [0, 1, 2, 3])
    b.tick()
    b.append("H", [0])
    b.append("CNOT", [0, 1, 2, 3])
    b.tick()
    b.append("DEPOLARIZE1", [0, 1], arg=0.001)
    b.append("MZ", [1, 3])
    b.detector([RecRef(-1), RecRef(-2)], coords=(0, 0, "Z"))
    b.observable(0, [RecRef(-1)])
    return b.build()


def test_roundtrip_identity():
    c = build_sample()
    assert parse(serialize(c)) == c
    # serialization is deterministic
    assert serialize(c) == serialize(build_sample())


def test_roundtrip_float_probabilities_exact():
    b = CircuitBuilder(1)
    for p in (0.001, 1 / 3, 5e-4, 0.123456789012345):
        b.append("X_ERROR", [0], arg=p)
    c = b.build()
    again = parse(serialize(c))
    assert again == c


def test_validate_clean_circuit():
    assert validate(build_sample()) == []


def test_validate_unresolvable_record():
    c = Circuit(1, (Instruction("MZ", (0,)), Instruction("DETECTOR", (RecRef(-99),))))
    report = validate(c)
    assert any("unresolvable" in r for r in report)


def test_validate_probability_range():
    c = Circuit(1, (Instruction("DEPOLARIZE1", (0,), arg=1.2),))
    report = validate(c)
    assert any("probability out of range" in r for r in report)


def test_validate_target_bounds_and_degenerate_pair():
    c = Circuit(2, (Instruction("CZ", (0, 5)), Instruction("CZ", (1, 1))))
    report = validate(c)
    assert any("out of range" in r for r in report)
    assert any("one qubit" in r for r in report)


def test_validate_detector_without_records():
    c = Circuit(1, (Instruction("DETECTOR", ()),))
    assert any("no record" in r for r in validate(c))


def test_validate_observable_density():
    b = CircuitBuilder(1)
    b.append("MZ", [0])
    b.observable(1, [RecRef(-1)])
    assert any("not dense" in r for r in validate(b.build()))


def test_count_layers_empty():
    assert count_layers(Circuit(0)) == {
        "two_qubit_layers": 0,
        "measurement_rounds": 0,
    }


def test_count_layers_single_layer():
    c = parse("QUBITS 4\nCZ 0 1 2 3\n")
    assert count_layers(c)["two_qubit_layers"] == 1


def test_count_layers_conflicting_gates_split():
    # both gates touch qubit 1 within one segment: two layers
    c = parse("QUBITS 3\nCZ 0 1\nCZ 1 2\n")
    assert count_layers(c)["two_qubit_layers"] == 2


def test_count_layers_tick_separated():
    c = parse("QUBITS 3\nCZ 0 1\nTICK\nCZ 1 2\nTICK\nMZ 0\nTICK\nMZ 1\n")
    out = count_layers(c)
    assert out["two_qubit_layers"] == 2
    assert out["measurement_rounds"] == 2


def test_recref_must_be_negative():
    with pytest.raises(ValueError):
        RecRef(0)


def test_builder_absolute_record_refs():
    b = CircuitBuilder(2)
    b.append("MZ", [0])
    b.append("MZ", [1])
    assert b.rec(0) == RecRef(-2)
    assert b.rec(1) == RecRef(-1)


_names = st.sampled_from(["H", "S", "X", "Z", "MZ", "MX", "RZ", "RX"])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(_names, st.integers(0, 7)),
        min_size=0,
        max_size=30,
    )
)
def test_roundtrip_property(ops):
    b = CircuitBuilder(8)
    for name, q in ops:
        b.append(name, [q])
    c = b.build()
    assert parse(serialize(c)) == c
