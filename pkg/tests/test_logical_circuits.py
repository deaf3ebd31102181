"""Logical-level circuit builders: Clifford benchmarking sequences,
arbitrary-state injection, and lattice-surgery teleportation."""
import math

import numpy as np
import pytest

from sdcc.builders import (
    _bell_routes,
    _injection_pairs,
    _transversal_s_pattern,
    clifford_compose,
    clifford_elements,
    clifford_inverse,
    injection_circuit,
    lrb_circuit,
    lrb_circuits,
    plan_cycle,
    stabilizer_label_map,
    teleportation_circuit,
)
from sdcc.circuit import validate
from sdcc.dense import dense_expectations
from sdcc.geometry import build_triangular_code
from sdcc.simulator import stabilizer_reference

# ---------------------------------------------------------------------------
# independent 2x2 matrix oracle for the single-qubit Clifford group
# ---------------------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_P = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def matrix_of(elem):
    m = _P[elem.pauli]
    for ch in reversed(elem.rotation):
        m = (_H if ch == "H" else _S) @ m
    return m


def same_up_to_phase(a, b):
    inner = np.trace(a.conj().T @ b)
    return abs(abs(inner) - 2.0) < 1e-9


class TestCliffordGroup:
    def test_has_24_distinct_elements(self):
        elems = clifford_elements()
        assert len(elems) == 24
        mats = [matrix_of(e) for e in elems]
        for i in range(24):
            for j in range(i + 1, 24):
                assert not same_up_to_phase(mats[i], mats[j])

    def test_composition_matches_matrix_product(self):
        elems = clifford_elements()
        rng = np.random.default_rng(20240817)
        for _ in range(1000):
            a, b = (elems[int(i)] for i in rng.integers(0, 24, 2))
            c = clifford_compose(a, b)
            assert same_up_to_phase(matrix_of(c), matrix_of(a) @ matrix_of(b))

    def test_inverse(self):
        for e in clifford_elements():
            inv = clifford_inverse(e)
            assert same_up_to_phase(
                matrix_of(clifford_compose(inv, e)), np.eye(2)
            )

    def test_label_map_matches_conjugation(self):
        for e in clifford_elements():
            m = matrix_of(e)
            for p, q in stabilizer_label_map(e).items():
                conj = m @ _P[p] @ m.conj().T
                # unsigned: conjugated Pauli is +/- the mapped one
                assert abs(abs(np.trace(conj @ _P[q])) - 2.0) < 1e-8

    def test_s_pattern_phase_sums(self):
        layout = build_triangular_code(3)
        s_set, sdag_set = _transversal_s_pattern(layout)
        sign = {q: 1 for q in s_set} | {q: -1 for q in sdag_set}
        assert sorted(sign) == sorted(q.index for q in layout.data_qubits)
        for tile in layout.tiles:
            assert sum(sign[q] for q in tile.data_support) % 4 == 0
        assert sum(sign[q] for q in layout.logical_x) % 4 == 1


# ---------------------------------------------------------------------------
# randomized benchmarking circuits
# ---------------------------------------------------------------------------

class TestBenchmarkingCircuits:
    def test_random_sequences_are_deterministic(self):
        for circuit, seq in lrb_circuits(3, 6, 8, seed=11):
            validate(circuit)
            ref = stabilizer_reference(circuit)
            assert all(ref.detectors_deterministic)
            assert all(v == 0 for v in ref.detector_values)
            # the recovery returns the logical qubit to |0>, so the
            # observable reports no logical flip
            assert ref.observable_values[0] == 0

    def test_recovery_metadata(self):
        elems = clifford_elements()
        seq = (elems[5], elems[17], elems[9])
        circuit = lrb_circuit(seq)
        total = elems[0]
        for e in seq:
            total = clifford_compose(e, total)
        assert circuit.meta["recovery"] == clifford_inverse(total).name
        assert circuit.meta["sequence"] == ",".join(e.name for e in seq)

    def test_identity_sequence_is_memory_like(self):
        circuit = lrb_circuit(())
        ref = stabilizer_reference(circuit)
        assert all(ref.detectors_deterministic)
        assert ref.observable_values[0] == 0


# ---------------------------------------------------------------------------
# state injection
# ---------------------------------------------------------------------------

_AXES = [
    # (theta, phi, tomography basis, expected reported bit)
    (0.0, 0.0, "Z", 0),
    (math.pi, 0.0, "Z", 1),
    (math.pi / 2, 0.0, "X", 0),
    (math.pi / 2, math.pi, "X", 1),
    (math.pi / 2, math.pi / 2, "Y", 0),
    (math.pi / 2, -math.pi / 2, "Y", 1),
]


class TestInjection:
    def test_pair_matching_tiles_outer_stabilizers(self):
        layout = build_triangular_code(3)
        inj, pairs = _injection_pairs(layout)
        assert inj in layout.logical_x
        flat = [q for pr in pairs for q in pr]
        assert sorted(flat + [inj]) == sorted(
            q.index for q in layout.data_qubits
        )
        for tile in layout.tiles:
            sup = set(tile.data_support)
            if inj in sup:
                continue
            assert all(len(sup & set(pr)) != 1 for pr in pairs)

    def test_bell_route_gate_counts(self):
        layout = build_triangular_code(3)
        plan = plan_cycle(layout, "original")
        _, pairs = _injection_pairs(layout)
        routes = _bell_routes(layout, plan, pairs)
        assert len(routes) == 3
        for _, aux, plus in routes:
            # |0>-seeded intermediaries need three CNOTs, |+>-seeded four
            assert aux in (
                plan.reset_x_wires if plus else plan.reset_z_wires
            )

    @pytest.mark.parametrize("theta,phi,tomo,expected", _AXES)
    def test_pauli_axis_states_read_back_exactly(
        self, theta, phi, tomo, expected
    ):
        circuit = injection_circuit(theta, phi, tomo)
        validate(circuit)
        ref = stabilizer_reference(circuit)
        assert all(ref.detectors_deterministic)
        assert all(v == 0 for v in ref.detector_values)
        reported = ref.observable_values[0] ^ circuit.meta["observable_flip"]
        assert reported == expected

    def test_axis_states_deterministic_in_every_basis(self):
        for theta, phi, _, _ in _AXES:
            for tomo in "XYZ":
                ref = stabilizer_reference(injection_circuit(theta, phi, tomo))
                assert all(ref.detectors_deterministic)
                assert all(v == 0 for v in ref.detector_values)

    def test_magic_state_tomography(self):
        theta = math.acos(1 / math.sqrt(3))
        phi = math.pi / 4
        bloch = {}
        for tomo in "XYZ":
            circuit = injection_circuit(theta, phi, tomo)
            exp = dense_expectations(circuit)
            assert all(abs(d - 1.0) < 1e-10 for d in exp.detector_expectations)
            sign = -1.0 if circuit.meta["observable_flip"] else 1.0
            bloch[tomo] = sign * exp.observables[0]
        target = 1 / math.sqrt(3)
        for tomo in "XYZ":
            assert abs(bloch[tomo] - target) < 1e-10

    def test_detectors_stay_zero_exactly_for_dense_states(self):
        # a non-stabilizer state must not perturb any emitted detector
        circuit = injection_circuit(0.7, 1.1, "Z")
        exp = dense_expectations(circuit)
        for d in exp.detector_expectations:
            assert abs(d - 1.0) < 1e-10  # E[(-1)^bit] = +1 means bit 0


# ---------------------------------------------------------------------------
# teleportation
# ---------------------------------------------------------------------------

_MATCHED = {("0", "Z"): 0, ("1", "Z"): 1, ("+", "X"): 0, ("-", "X"): 1}


class TestTeleportation:
    @pytest.mark.parametrize("inp", ["0", "1", "+", "-"])
    @pytest.mark.parametrize("tomo", ["X", "Y", "Z"])
    def test_determinism_and_readback(self, inp, tomo):
        circuit = teleportation_circuit(inp, tomo)
        validate(circuit)
        assert circuit.num_qubits == 30
        ref = stabilizer_reference(circuit)
        assert all(ref.detectors_deterministic)
        assert all(v == 0 for v in ref.detector_values)
        obs = ref.observable_values[0]
        if (inp, tomo) in _MATCHED:
            reported = obs ^ circuit.meta["observable_flip"]
            assert reported == _MATCHED[(inp, tomo)]
        else:
            # tomography transverse to the input axis is genuinely random
            assert obs is None

    def test_detector_census(self):
        circuit = teleportation_circuit("0", "Z")
        coords = [
            ins.coords
            for ins in circuit.instructions
            if ins.name == "DETECTOR"
        ]
        assert len(coords) == len(set(coords))
        # merge cycles carry the two interface stabilizers and, in steady
        # state, every merged-code stabilizer yields a detector
        merge_tiles = {c[0] for c in coords if c[1] == 3}
        assert {"V1", "V2"} <= merge_tiles
        assert merge_tiles >= set(range(6))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            teleportation_circuit("2", "Z")
        with pytest.raises(ValueError):
            teleportation_circuit("0", "W")
