"""Simulation backends: noiseless reference and batched Pauli-frame sampling.

The reference simulator runs the affine-sign tableau once and reports, for
every measurement, whether it is deterministic (and its value).  The frame
sampler then propagates only Pauli error frames against that reference:
detector bits are XORs of record *flips*, which equal the detector values
because every emitted detector is deterministic-zero in the noiseless
circuit (enforced by the builders and asserted here).

Randomness is counter-based: each noise instruction draws from a Philox
stream keyed by (seed, instruction index), so results are byte-identical
regardless of execution order or thread count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, RecRef
from .tableau import NonCliffordError, form_const, is_deterministic, run_noiseless


_HALF_PI = math.pi / 2


def _clifford_angle(angle: float) -> bool:
    return abs(angle / _HALF_PI - round(angle / _HALF_PI)) < 1e-12


@dataclass(frozen=True)
class ReferenceSample:
    """Per-measurement noiseless values; None marks a random outcome."""

    measurements: tuple[int | None, ...]
    detector_values: tuple[int, ...]
    detectors_deterministic: tuple[bool, ...]
    observable_values: dict[int, int | None]


def stabilizer_reference(circuit: Circuit) -> ReferenceSample:
    """Noiseless reference frame of a Clifford circuit."""
    prep = circuit.meta.get("prep")
    if prep is not None and not (
        _clifford_angle(prep["theta"]) and _clifford_angle(prep["phi"])
    ):
        raise NonCliffordError(
            "circuit prepares a non-stabilizer state; use the dense simulator"
        )
    run = run_noiseless(circuit)
    return ReferenceSample(
        measurements=tuple(
            form_const(f) if is_deterministic(f) else None
            for f in run.measurements
        ),
        detector_values=tuple(
            form_const(f) if is_deterministic(f) else -1
            for f in run.detectors
        ),
        detectors_deterministic=tuple(
            is_deterministic(f) for f in run.detectors
        ),
        observable_values={
            k: (form_const(f) if is_deterministic(f) else None)
            for k, f in run.observables.items()
        },
    )


@dataclass
class ShotBatch:
    """Bit matrices of detector values and observable flips for N shots."""

    detectors: np.ndarray  # uint8, shape (shots, num_detectors)
    observable_flips: np.ndarray  # uint8, shape (shots, num_observables)
    seed: int | None = None
    observable_reference: tuple[int, ...] = ()

    @property
    def shots(self) -> int:
        return self.detectors.shape[0]

    @property
    def num_detectors(self) -> int:
        return self.detectors.shape[1]

    @property
    def num_observables(self) -> int:
        return self.observable_flips.shape[1]

    def __eq__(self, other) -> bool:  # pragma: no cover - convenience
        return (
            isinstance(other, ShotBatch)
            and np.array_equal(self.detectors, other.detectors)
            and np.array_equal(self.observable_flips, other.observable_flips)
        )


def _philox(seed: int, instruction_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, instruction_index], dtype=np.uint64))
    )


def sample_pauli_frame(
    circuit: Circuit, shots: int, seed: int,
    injected_frames: dict[int, tuple[np.ndarray, np.ndarray]] | None = None,
) -> ShotBatch:
    """Sample detector/observable-flip bits of a noisy Clifford circuit.

    ``injected_frames`` optionally maps instruction index -> (fx, fz) frame
    masks of shape (num_qubits, shots) XORed in just before that instruction
    executes; used for fault propagation and planted-error tests.  Frame
    propagation is state-independent, so an arbitrary declared preparation is
    tolerated on that path; plain sampling of a non-stabilizer circuit is
    rejected because its observable needs the dense reference.
    """
    prep = circuit.meta.get("prep")
    if (
        prep is not None
        and injected_frames is None
        and not (
            _clifford_angle(prep.get("theta", 0.0))
            and _clifford_angle(prep.get("phi", 0.0))
        )
    ):
        raise NonCliffordError(
            "non-stabilizer preparation; use the dense simulator"
        )
    n = circuit.num_qubits
    fx = np.zeros((n, shots), dtype=np.uint8)
    fz = np.zeros((n, shots), dtype=np.uint8)
    record_flips: list[np.ndarray] = []
    det_bits: list[np.ndarray] = []
    obs: dict[int, np.ndarray] = {}

    def resolve(ref: RecRef) -> np.ndarray:
        return record_flips[len(record_flips) + ref.offset]

    for idx, ins in enumerate(circuit.instructions):
        if injected_frames and idx in injected_frames:
            ifx, ifz = injected_frames[idx]
            fx ^= ifx
            fz ^= ifz
        name = ins.name
        if name == "TICK":
            continue
        if name == "DETECTOR":
            bits = np.zeros(shots, dtype=np.uint8)
            for ref in ins.targets:
                bits ^= resolve(ref)
            det_bits.append(bits)
        elif name == "OBSERVABLE_INCLUDE":
            k = int(ins.arg)
            acc = obs.setdefault(k, np.zeros(shots, dtype=np.uint8))
            for ref in ins.targets:
                acc ^= resolve(ref)
        elif name == "MZ":
            for q in ins.targets:
                record_flips.append(fx[q].copy())
                fz[q] = 0
        elif name == "MX":
            for q in ins.targets:
                record_flips.append(fz[q].copy())
                fx[q] = 0
        elif name == "RZ" or name == "RX":
            for q in ins.targets:
                fx[q] = 0
                fz[q] = 0
        elif name == "H":
            for q in ins.targets:
                fx[q], fz[q] = fz[q].copy(), fx[q].copy()
        elif name in ("S", "S_DAG"):
            for q in ins.targets:
                fz[q] ^= fx[q]
        elif name in ("X", "Y", "Z"):
            pass  # Pauli gates only re-sign the frame
        elif name == "CNOT":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                fx[b] ^= fx[a]
                fz[a] ^= fz[b]
        elif name == "CZ":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                fz[a] ^= fx[b]
                fz[b] ^= fx[a]
        elif name == "X_ERROR":
            if ins.arg > 0:
                rng = _philox(seed, idx)
                hits = rng.random((len(ins.targets), shots)) < ins.arg
                for row, q in enumerate(ins.targets):
                    fx[q] ^= hits[row]
        elif name == "Z_ERROR":
            if ins.arg > 0:
                rng = _philox(seed, idx)
                hits = rng.random((len(ins.targets), shots)) < ins.arg
                for row, q in enumerate(ins.targets):
                    fz[q] ^= hits[row]
        elif name == "DEPOLARIZE1":
            if ins.arg > 0:
                rng = _philox(seed, idx)
                u = rng.random((len(ins.targets), shots))
                err = u < ins.arg
                kind = np.minimum((u * (3 / ins.arg)).astype(np.uint8), 2)
                for row, q in enumerate(ins.targets):
                    fx[q] ^= err[row] & (kind[row] != 2)
                    fz[q] ^= err[row] & (kind[row] != 0)
        elif name == "DEPOLARIZE2":
            if ins.arg > 0:
                rng = _philox(seed, idx)
                pairs = list(zip(ins.targets[::2], ins.targets[1::2]))
                u = rng.random((len(pairs), shots))
                err = u < ins.arg
                kind = np.minimum(
                    (u * (15 / ins.arg)).astype(np.uint8), 14
                ) + 1  # 1..15: bits (xa, za, xb, zb)
                for row, (a, b) in enumerate(pairs):
                    fx[a] ^= err[row] & ((kind[row] >> 3) & 1).astype(bool)
                    fz[a] ^= err[row] & ((kind[row] >> 2) & 1).astype(bool)
                    fx[b] ^= err[row] & ((kind[row] >> 1) & 1).astype(bool)
                    fz[b] ^= err[row] & (kind[row] & 1).astype(bool)
        else:  # pragma: no cover
            raise NotImplementedError(name)

    detectors = (
        np.stack(det_bits, axis=1)
        if det_bits
        else np.zeros((shots, 0), dtype=np.uint8)
    )
    num_obs = max(obs) + 1 if obs else 0
    flips = np.zeros((shots, num_obs), dtype=np.uint8)
    for k, bits in obs.items():
        flips[:, k] = bits
    return ShotBatch(detectors=detectors, observable_flips=flips, seed=seed)
