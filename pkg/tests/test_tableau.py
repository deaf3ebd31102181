"""Affine-sign tableau simulator: algebraic identities and determinism."""
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcc.circuit import CircuitBuilder, RecRef
from sdcc.tableau import (
    AffineTableau,
    express_as_prior_records,
    form_const,
    form_vars,
    is_deterministic,
    run_noiseless,
)


def test_measure_zero_state():
    t = AffineTableau(1)
    assert t.measure_z(0) == 0


def test_measure_one_state():
    t = AffineTableau(1)
    t.x_gate(0)
    out = t.measure_z(0)
    assert is_deterministic(out) and form_const(out) == 1


def test_measure_plus_in_x_deterministic():
    t = AffineTableau(1)
    t.h(0)
    out = t.measure_x(0)
    assert is_deterministic(out) and form_const(out) == 0


def test_measure_plus_in_z_random():
    t = AffineTableau(1)
    t.h(0)
    out = t.measure_z(0)
    assert not is_deterministic(out)


def test_repeated_measurement_agrees():
    t = AffineTableau(1)
    t.h(0)
    first = t.measure_z(0)
    second = t.measure_z(0)
    assert first == second


def test_bell_pair_correlated():
    t = AffineTableau(2)
    t.h(0)
    t.cnot(0, 1)
    a = t.measure_z(0)
    b = t.measure_z(1)
    assert not is_deterministic(a)
    assert a == b  # perfectly correlated


def test_hsxh_is_z():
    # H S S H = H Z H = X
    t = AffineTableau(1)
    t.h(0)
    t.s(0)
    t.s(0)
    t.h(0)
    out = t.measure_z(0)
    assert is_deterministic(out) and form_const(out) == 1


def test_s_sdag_identity():
    t = AffineTableau(1)
    t.h(0)
    t.s(0)
    t.s_dag(0)
    t.h(0)
    out = t.measure_z(0)
    assert is_deterministic(out) and form_const(out) == 0


def test_sdag_conjugates_x_to_minus_y():
    # S† X S = -Y, so S X S† on |0> measured in Y basis gives +1:
    # verify via S Y S† = -X instead: prepare |+>, apply S twice -> Z|+>=|->
    t = AffineTableau(1)
    t.h(0)
    t.s(0)
    t.s(0)
    out = t.measure_x(0)
    assert is_deterministic(out) and form_const(out) == 1


def test_y_gate_matches_sxsdag():
    # Y = S X S† up to global phase: compare action on both axes
    for basis in ("z", "x"):
        t1, t2 = AffineTableau(1), AffineTableau(1)
        if basis == "x":
            t1.h(0)
            t2.h(0)
        t1.y_gate(0)
        t2.s(0)
        t2.x_gate(0)
        t2.s_dag(0)
        m1 = t1.measure_z(0) if basis == "z" else t1.measure_x(0)
        m2 = t2.measure_z(0) if basis == "z" else t2.measure_x(0)
        assert m1 == m2


def test_cz_symmetry():
    t = AffineTableau(2)
    t.h(0)
    t.h(1)
    t.cz(0, 1)
    t.cz(1, 0)
    t.h(0)
    t.h(1)
    for q in (0, 1):
        out = t.measure_z(q)
        assert is_deterministic(out) and form_const(out) == 0


def test_reset_after_random_measurement():
    t = AffineTableau(1)
    t.h(0)
    t.reset_z(0)
    out = t.measure_z(0)
    assert is_deterministic(out) and form_const(out) == 0


def test_reset_x():
    t = AffineTableau(1)
    t.reset_x(0)
    out = t.measure_x(0)
    assert is_deterministic(out) and form_const(out) == 0


def test_reset_disentangles():
    t = AffineTableau(2)
    t.h(0)
    t.cnot(0, 1)
    t.reset_z(0)
    a = t.measure_z(0)
    assert is_deterministic(a) and form_const(a) == 0
    b = t.measure_z(1)
    assert not is_deterministic(b)  # partner still random


def test_ghz_parity_detectors():
    b = CircuitBuilder(3)
    b.append("RZ", [0, 1, 2])
    b.append("H", [0])
    b.append("CNOT", [0, 1, 0, 2])
    b.append("MZ", [0, 1, 2])
    b.detector([RecRef(-3), RecRef(-2)], coords=(0, 0, "Z"))
    b.detector([RecRef(-2), RecRef(-1)], coords=(1, 0, "Z"))
    run = run_noiseless(b.build())
    assert run.all_detectors_deterministic
    assert run.detector_values == [0, 0]
    assert not is_deterministic(run.measurements[0])


def test_observable_value():
    b = CircuitBuilder(1)
    b.append("X", [0])
    b.append("MZ", [0])
    b.observable(0, [RecRef(-1)])
    run = run_noiseless(b.build())
    assert is_deterministic(run.observables[0])
    assert run.observable_values[0] == 1


def test_noise_instructions_skipped():
    b = CircuitBuilder(1)
    b.append("X_ERROR", [0], arg=0.5)
    b.append("MZ", [0])
    run = run_noiseless(b.build())
    assert run.measurements == [0]


def test_express_bell_partner():
    t = AffineTableau(2)
    t.h(0)
    t.cnot(0, 1)
    ms = [t.measure_z(0), t.measure_z(1)]
    assert express_as_prior_records(ms, 1, [0]) == [0]


def test_express_deterministic_is_empty():
    t = AffineTableau(1)
    ms = [t.measure_z(0)]
    assert express_as_prior_records(ms, 0, []) == []


def test_express_impossible():
    t = AffineTableau(2)
    t.h(0)
    t.h(1)
    ms = [t.measure_z(0), t.measure_z(1)]
    assert express_as_prior_records(ms, 1, [0]) is None


def test_express_prefers_recent():
    # three GHZ qubits measured: record 2 can be explained by 0 or 1;
    # the most recent candidate must be chosen.
    t = AffineTableau(3)
    t.h(0)
    t.cnot(0, 1)
    t.cnot(0, 2)
    ms = [t.measure_z(0), t.measure_z(1), t.measure_z(2)]
    assert express_as_prior_records(ms, 2, [0, 1]) == [1]


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["h", "s", "cnot", "cz", "x", "z"]),
            st.integers(0, 3),
            st.integers(0, 3),
        ),
        max_size=25,
    )
)
def test_stabilizer_weight_conservation(ops):
    """Unitaries never make measurement outcomes inconsistent:
    measuring every qubit twice in a row gives identical forms."""
    t = AffineTableau(4)
    for name, a, b in ops:
        if name in ("cnot", "cz"):
            if a == b:
                continue
            getattr(t, name)(a, b)
        elif name in ("x", "z"):
            getattr(t, name + "_gate")(a)
        else:
            getattr(t, name)(a)
    for q in range(4):
        assert t.measure_z(q) == t.measure_z(q)
