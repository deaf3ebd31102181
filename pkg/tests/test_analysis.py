"""Post-processing math: fits, tomography, post-selection, channel bounds."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcc.analysis import (
    DetectionStats,
    detection_probabilities,
    fit_lrb,
    fit_memory,
    lambda_factor,
    observable_expectation,
    postselect,
    project_physical,
    state_fidelity,
    teleport_bound,
    tomography,
)
from sdcc.simulator import ShotBatch


def make_batch(detectors, observables=None):
    detectors = np.asarray(detectors, dtype=np.uint8)
    if observables is None:
        observables = np.zeros((detectors.shape[0], 1), dtype=np.uint8)
    return ShotBatch(
        detectors=detectors, observable_flips=np.asarray(observables, np.uint8)
    )


# ---------------------------------------------------------------------------
# detection probabilities
# ---------------------------------------------------------------------------

class TestDetectionProbabilities:
    COORDS = [(0, 1, "Z"), (0, 1, "X"), (1, 2, "Z")]

    def test_silent_batch_is_all_zero(self):
        batch = make_batch(np.zeros((50, 3)))
        stats = detection_probabilities(batch, self.COORDS)
        assert all(p == 0.0 for p, _ in stats.probabilities.values())

    def test_always_firing_detector(self):
        dets = np.zeros((40, 3), dtype=np.uint8)
        dets[:, 1] = 1
        stats = detection_probabilities(make_batch(dets), self.COORDS)
        assert stats.probabilities[(0, 1, "X")][0] == 1.0
        assert stats.probabilities[(0, 1, "Z")][0] == 0.0

    def test_weight_class_aggregation(self):
        dets = np.zeros((10, 3), dtype=np.uint8)
        dets[:5, 0] = 1  # tile 0 fires half the time
        stats = detection_probabilities(
            make_batch(dets), self.COORDS, tile_weights={0: 4, 1: 6}
        )
        assert stats.by_weight[4] == pytest.approx(0.25)
        assert stats.by_weight[6] == 0.0

    def test_coordinate_mismatch_rejected(self):
        with pytest.raises(ValueError):
            detection_probabilities(make_batch(np.zeros((5, 3))), [(0, 1, "Z")])


# ---------------------------------------------------------------------------
# memory decay fit
# ---------------------------------------------------------------------------

class TestFitMemory:
    def test_exact_model_inversion(self):
        eps0, epc = -0.5, 0.03
        pts = [(n, eps0 * (1 - 2 * epc) ** n + 0.5) for n in (1, 3, 5, 7, 9)]
        fit = fit_memory(pts)
        assert abs(fit.epc - epc) < 1e-6
        assert abs(fit.eps0 - eps0) < 1e-6
        assert not fit.degenerate

    def test_zero_error_per_cycle_is_flat(self):
        pts = [(n, -0.4 + 0.5) for n in (1, 2, 3, 4)]
        fit = fit_memory(pts)
        assert abs(fit.epc) < 1e-6
        assert abs(fit.eps0 - (-0.4)) < 1e-6

    def test_degenerate_data_flagged(self):
        fit = fit_memory([(n, 0.5) for n in (1, 3, 5)])
        assert fit.degenerate
        assert fit.epc_stderr >= 0.25

    def test_requires_three_cycle_counts(self):
        with pytest.raises(ValueError):
            fit_memory([(1, 0.1), (2, 0.2)])


class TestLambda:
    def test_simple_ratio(self):
        value, _ = lambda_factor([0.04, 0.04, 0.04], 0.02)
        assert value == pytest.approx(2.0)

    def test_equal_inputs(self):
        value, _ = lambda_factor([0.03, 0.03], 0.03)
        assert value == pytest.approx(1.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lambda_factor([0.04], 0.0)

    def test_stderr_propagation(self):
        value, err = lambda_factor(
            [0.04], 0.02, epc3_stderr=[0.004], epc5_stderr=0.002
        )
        rel = math.sqrt((0.004 / 0.04) ** 2 + (0.002 / 0.02) ** 2)
        assert err == pytest.approx(value * rel)


# ---------------------------------------------------------------------------
# benchmarking fit
# ---------------------------------------------------------------------------

class TestFitLRB:
    @staticmethod
    def decay(a, p, ns):
        return [(n, a * p**n + 0.5) for n in ns]

    def test_equal_decays_give_zero_error(self):
        ns = (1, 3, 6, 10)
        fit = fit_lrb(self.decay(0.5, 0.9, ns), self.decay(0.5, 0.9, ns))
        assert abs(fit.e_c) < 1e-9

    def test_formula_arithmetic(self):
        ns = (1, 2, 4, 8)
        fit = fit_lrb(self.decay(0.5, 0.9, ns), self.decay(0.5, 0.8, ns))
        assert fit.e_c == pytest.approx(1.0 / 18.0, abs=1e-9)

    def test_noisy_synthetic_recovery(self):
        p_id, p_c = 0.98, 0.95
        rng = np.random.default_rng(5)
        ns = (2, 5, 10, 20, 40, 80)
        shots = 20000

        def noisy(a, p):
            pts = []
            for n in ns:
                mean = a * p**n + 0.5
                pts.append((n, rng.binomial(shots, mean) / shots))
            return pts

        fit = fit_lrb(noisy(0.5, p_id), noisy(0.5, p_c))
        truth = (1 - p_c / p_id) / 2
        assert abs(fit.e_c - truth) < 5 * max(fit.e_c_stderr, 1e-4)
        assert not fit.degenerate


# ---------------------------------------------------------------------------
# tomography
# ---------------------------------------------------------------------------

_T_STATE = np.array(
    [
        math.cos(math.acos(1 / math.sqrt(3)) / 2),
        math.sin(math.acos(1 / math.sqrt(3)) / 2)
        * complex(math.cos(math.pi / 4), math.sin(math.pi / 4)),
    ]
)


class TestTomography:
    def test_pure_zero_state(self):
        dm, fid = tomography((0, 0, 1), np.array([1, 0]))
        assert fid == pytest.approx(1.0)
        assert dm.physical

    def test_maximally_mixed(self):
        dm, fid = tomography((0, 0, 0), np.array([1, 0]))
        assert fid == pytest.approx(0.5)

    def test_magic_axis_state(self):
        s = 1 / math.sqrt(3)
        _, fid = tomography((s, s, s), _T_STATE)
        assert fid == pytest.approx(1.0, abs=1e-12)

    def test_nonphysical_input_projected(self):
        dm, fid = tomography((1.0, 1.0, 1.0), _T_STATE)
        assert not dm.physical
        vals = np.linalg.eigvalsh(dm.matrix)
        assert vals.min() >= -1e-12
        assert np.trace(dm.matrix).real == pytest.approx(1.0)
        assert fid <= 1.0

    def test_impossible_bloch_rejected(self):
        with pytest.raises(ValueError):
            tomography((1.0, 1.0, 1.1), _T_STATE)

    def test_pure_target_fidelity_is_overlap(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.normal(size=3)
            v *= rng.uniform(0, 1) / np.linalg.norm(v)
            dm, fid = tomography(tuple(v), _T_STATE)
            overlap = np.real(_T_STATE.conj() @ dm.matrix @ _T_STATE)
            assert fid == pytest.approx(float(overlap), abs=1e-12)
            # symmetric in its arguments for pure states
            target_dm = np.outer(_T_STATE, _T_STATE.conj())
            assert state_fidelity(target_dm, dm.matrix) == pytest.approx(
                fid, abs=1e-7
            )

    @settings(deadline=None, max_examples=50)
    @given(st.tuples(*[st.floats(-1, 1)] * 3))
    def test_projection_idempotent(self, bloch):
        if sum(v * v for v in bloch) > 3:
            return
        rho = 0.5 * np.array(
            [
                [1 + bloch[2], bloch[0] - 1j * bloch[1]],
                [bloch[0] + 1j * bloch[1], 1 - bloch[2]],
            ]
        )
        proj = project_physical(rho)
        again = project_physical(proj)
        assert np.allclose(proj, again, atol=1e-12)
        assert np.linalg.eigvalsh(proj).min() >= -1e-12
        assert np.trace(proj).real == pytest.approx(1.0)

    @settings(deadline=None, max_examples=50)
    @given(st.tuples(*[st.floats(-1, 1)] * 3), st.tuples(*[st.floats(-1, 1)] * 3))
    def test_projection_distance_nonincreasing(self, bloch, other):
        r = math.sqrt(sum(v * v for v in other)) or 1.0
        other = tuple(v / max(r, 1.0) for v in other)  # a physical state
        def dm(b):
            return 0.5 * np.array(
                [
                    [1 + b[2], b[0] - 1j * b[1]],
                    [b[0] + 1j * b[1], 1 - b[2]],
                ]
            )
        rho, sigma = dm(bloch), dm(other)
        proj = project_physical(rho)
        assert np.linalg.norm(proj - sigma) <= np.linalg.norm(rho - sigma) + 1e-9


# ---------------------------------------------------------------------------
# post-selection
# ---------------------------------------------------------------------------

class TestPostselect:
    def test_silent_batch_keeps_everything(self):
        batch = make_batch(np.zeros((20, 4)))
        kept, fraction = postselect(batch)
        assert fraction == 1.0
        assert kept.shots == 20

    def test_noisy_batch_drops_everything(self):
        batch = make_batch(np.ones((20, 4)))
        kept, fraction = postselect(batch)
        assert fraction == 0.0
        assert kept.shots == 0

    def test_partial_selection_by_subset(self):
        dets = np.zeros((10, 3), dtype=np.uint8)
        dets[:4, 0] = 1
        dets[4:6, 2] = 1
        batch = make_batch(dets)
        _, frac_all = postselect(batch)
        kept, frac_sub = postselect(batch, detectors=[0])
        assert frac_all == pytest.approx(0.4)
        assert frac_sub == pytest.approx(0.6)
        assert kept.shots == 6


# ---------------------------------------------------------------------------
# teleportation bound
# ---------------------------------------------------------------------------

def depolarizing_counts(q, shots=10**6):
    """Exact expected agree/disagree counts of a depolarizing channel."""
    corr = 1 - 4 * q / 3  # each Pauli correlation
    agree = shots * (1 + corr) / 2
    return {k: (agree, shots - agree) for k in "01+-"}


class TestTeleportBound:
    def test_perfect_channel(self):
        report = teleport_bound({k: (1000, 0) for k in "01+-"})
        assert report.entanglement_fidelity_bound == pytest.approx(1.0)
        assert report.average_fidelity_bound == pytest.approx(1.0)

    def test_depolarizing_closed_form(self):
        q = 0.12
        report = teleport_bound(depolarizing_counts(q))
        assert report.entanglement_fidelity_bound == pytest.approx(
            1 - 4 * q / 3, abs=1e-9
        )
        # the bound under-estimates the true entanglement fidelity 1 - q
        assert report.entanglement_fidelity_bound <= 1 - q

    def test_worked_example(self):
        report = teleport_bound(depolarizing_counts(0.3))
        assert report.entanglement_fidelity_bound == pytest.approx(0.6)
        assert report.average_fidelity_bound == pytest.approx(0.73333333333)

    def test_monotone_and_bounded(self):
        base = {k: (900, 100) for k in "01+-"}
        low = teleport_bound(base)
        better = dict(base, **{"0": (950, 50)})
        high = teleport_bound(better)
        assert low.entanglement_fidelity_bound < high.entanglement_fidelity_bound
        assert high.entanglement_fidelity_bound <= 1.0

    def test_empty_cell_rejected(self):
        with pytest.raises(ValueError):
            teleport_bound({"0": (0, 0), "1": (1, 0), "+": (1, 0), "-": (1, 0)})
        with pytest.raises(ValueError):
            teleport_bound({"0": (1, 0), "1": (1, 0), "+": (1, 0)})


class TestObservableExpectation:
    def test_flip_applies(self):
        bits = np.array([0, 0, 1, 1], dtype=np.uint8)
        value, err = observable_expectation(bits)
        assert value == pytest.approx(0.0)
        flipped, _ = observable_expectation(np.zeros(4, np.uint8), flip=1)
        assert flipped == pytest.approx(-1.0)
