"""Dense state-vector simulation for small (<= 16 qubit) circuits.

Two modes:

* ``dense_expectations``: exact, noiseless.  Branches on every random
  measurement outcome (zero-probability branches pruned) and returns the
  exact expectation of (-1)^parity for every observable and detector.
* ``dense_sample``: Monte Carlo with Pauli-noise branching; returns raw
  detector values and raw observable parities per shot.  Each shot draws
  from a Philox stream keyed by (seed, shot index).

Supports an arbitrary single-qubit preparation declared in circuit metadata
``prep = {"qubit": q, "theta": t, "phi": p, "at": instruction_index}``: the
rotation ``RZ(phi) @ RY(theta)`` is applied just before the instruction at
index ``at`` executes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .simulator import ShotBatch

MAX_QUBITS = 16

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_1Q = {"H": _H, "S": _S, "S_DAG": _S.conj(), "X": _X, "Y": _Y, "Z": _Z}


def prep_unitary(theta: float, phi: float) -> np.ndarray:
    """RZ(phi) @ RY(theta): |0> -> cos(t/2)|0> + e^{i phi} sin(t/2)|1>."""
    ry = np.array(
        [
            [math.cos(theta / 2), -math.sin(theta / 2)],
            [math.sin(theta / 2), math.cos(theta / 2)],
        ],
        dtype=np.complex128,
    )
    rz = np.array(
        [[np.exp(-0.5j * phi), 0], [0, np.exp(0.5j * phi)]],
        dtype=np.complex128,
    )
    return rz @ ry


def _apply_1q(state: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    view = state.reshape(2 ** (n - q - 1), 2, 2**q)
    return np.einsum("ab,ibj->iaj", u, view).reshape(-1)


def _apply_cnot(state: np.ndarray, c: int, t: int, n: int) -> np.ndarray:
    idx = np.arange(2**n)
    src = np.where((idx >> c) & 1 == 1, idx ^ (1 << t), idx)
    return state[src]


def _apply_cz(state: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    idx = np.arange(2**n)
    signs = np.where(((idx >> a) & 1) & ((idx >> b) & 1), -1.0, 1.0)
    return state * signs


def _prob_one(state: np.ndarray, q: int, n: int) -> float:
    view = state.reshape(2 ** (n - q - 1), 2, 2**q)
    return float(np.sum(np.abs(view[:, 1, :]) ** 2))


def _project(state: np.ndarray, q: int, n: int, bit: int) -> np.ndarray:
    view = state.reshape(2 ** (n - q - 1), 2, 2**q).copy()
    view[:, 1 - bit, :] = 0
    out = view.reshape(-1)
    return out / np.linalg.norm(out)


# ---------------------------------------------------------------------------
# Step flattening: one atomic operation per step
# ---------------------------------------------------------------------------

def _flatten(circuit: Circuit, with_noise: bool) -> tuple[list[tuple], int, int]:
    """Atomic steps, number of detectors, number of observables."""
    prep = circuit.meta.get("prep")
    steps: list[tuple] = []
    rec = 0
    det = 0
    obs_count = 0
    for idx, ins in enumerate(circuit.instructions):
        if prep is not None and prep.get("at", 0) == idx:
            steps.append(
                ("u1", prep["qubit"], prep_unitary(prep["theta"], prep["phi"]))
            )
        name = ins.name
        if name == "TICK":
            continue
        if ins.is_noise:
            if with_noise and ins.arg > 0:
                if name == "DEPOLARIZE2":
                    for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                        steps.append(("dep2", a, b, ins.arg))
                else:
                    kind = {
                        "DEPOLARIZE1": "dep1",
                        "X_ERROR": "xerr",
                        "Z_ERROR": "zerr",
                    }[name]
                    for q in ins.targets:
                        steps.append((kind, q, ins.arg))
        elif name in _1Q:
            for q in ins.targets:
                steps.append(("u1", q, _1Q[name]))
        elif name == "CNOT":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                steps.append(("cnot", a, b))
        elif name == "CZ":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                steps.append(("cz", a, b))
        elif name in ("MZ", "MX"):
            for q in ins.targets:
                steps.append(("measure", q, name == "MX"))
                rec += 1
        elif name in ("RZ", "RX"):
            for q in ins.targets:
                steps.append(("reset", q, name == "RX"))
        elif name == "DETECTOR":
            refs = [rec + r.offset for r in ins.targets]
            steps.append(("detector", det, refs))
            det += 1
        elif name == "OBSERVABLE_INCLUDE":
            k = int(ins.arg)
            obs_count = max(obs_count, k + 1)
            refs = [rec + r.offset for r in ins.targets]
            steps.append(("obs", k, refs))
        else:  # pragma: no cover
            raise NotImplementedError(name)
    if prep is not None and prep.get("at", 0) >= len(circuit.instructions):
        raise ValueError("prep insertion point beyond end of circuit")
    return steps, det, obs_count


def _check_size(circuit: Circuit) -> int:
    n = circuit.num_qubits
    if n > MAX_QUBITS:
        raise ValueError(
            f"{n} qubits exceeds the dense-simulator cap of {MAX_QUBITS}"
        )
    return n


# ---------------------------------------------------------------------------
# Exact mode
# ---------------------------------------------------------------------------

@dataclass
class DenseExpectations:
    """E[(-1)^parity] per observable index and per detector."""

    observables: dict[int, float]
    detector_expectations: list[float]


def dense_expectations(circuit: Circuit, atol: float = 1e-12) -> DenseExpectations:
    n = _check_size(circuit)
    if any(ins.is_noise and ins.arg for ins in circuit.instructions):
        raise ValueError("exact mode requires a noiseless circuit")
    steps, num_det, num_obs = _flatten(circuit, with_noise=False)

    init = np.zeros(2**n, dtype=np.complex128)
    init[0] = 1.0
    obs_acc = {k: 0.0 for k in range(num_obs)}
    det_acc = [0.0] * num_det

    # stack of pending branches: (step pointer, weight, state, records, obs)
    stack: list[tuple[int, float, np.ndarray, list[int], dict[int, int]]] = [
        (0, 1.0, init, [], {k: 0 for k in range(num_obs)})
    ]
    while stack:
        ptr, weight, state, records, obs = stack.pop()
        while ptr < len(steps):
            step = steps[ptr]
            kind = step[0]
            if kind == "u1":
                state = _apply_1q(state, step[2], step[1], n)
            elif kind == "cnot":
                state = _apply_cnot(state, step[1], step[2], n)
            elif kind == "cz":
                state = _apply_cz(state, step[1], step[2], n)
            elif kind in ("measure", "reset"):
                q, x_basis = step[1], step[2]
                if x_basis:
                    state = _apply_1q(state, _H, q, n)
                p1 = _prob_one(state, q, n)
                branch_bits = []
                if p1 < 1 - atol:
                    branch_bits.append((0, 1 - p1))
                if p1 > atol:
                    branch_bits.append((1, p1))
                if len(branch_bits) == 2:
                    bit, pb = branch_bits[1]
                    bstate = _finish_mr(
                        _project(state, q, n, bit), q, n, bit, x_basis, kind
                    )
                    brec = records + [bit] if kind == "measure" else list(records)
                    stack.append((ptr + 1, weight * pb, bstate, brec, dict(obs)))
                bit, pb = branch_bits[0]
                state = _finish_mr(
                    _project(state, q, n, bit), q, n, bit, x_basis, kind
                )
                weight *= pb
                if kind == "measure":
                    records.append(bit)
            elif kind == "detector":
                val = 0
                for r in step[2]:
                    val ^= records[r]
                det_acc[step[1]] += weight * (1.0 - 2.0 * val)
            elif kind == "obs":
                for r in step[2]:
                    obs[step[1]] ^= records[r]
            ptr += 1
        for k, v in obs.items():
            obs_acc[k] += weight * (1.0 - 2.0 * v)
    return DenseExpectations(observables=obs_acc, detector_expectations=det_acc)


def _finish_mr(
    state: np.ndarray, q: int, n: int, bit: int, x_basis: bool, kind: str
) -> np.ndarray:
    """Undo the basis change; for resets, return the qubit to |0>/|+>."""
    if kind == "reset" and bit == 1:
        state = _apply_1q(state, _X, q, n)
    if x_basis:
        state = _apply_1q(state, _H, q, n)
    return state


# ---------------------------------------------------------------------------
# Sampled mode
# ---------------------------------------------------------------------------

def dense_sample(circuit: Circuit, shots: int, seed: int) -> ShotBatch:
    """Monte Carlo sampling with Pauli-noise branching.

    Returned detector bits and observable bits are RAW parities (not flips
    against a reference).
    """
    n = _check_size(circuit)
    steps, num_det, num_obs = _flatten(circuit, with_noise=True)

    detectors = np.zeros((shots, num_det), dtype=np.uint8)
    observables = np.zeros((shots, num_obs), dtype=np.uint8)

    for shot in range(shots):
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, shot], dtype=np.uint64))
        )
        state = np.zeros(2**n, dtype=np.complex128)
        state[0] = 1.0
        records: list[int] = []
        for step in steps:
            kind = step[0]
            if kind == "u1":
                state = _apply_1q(state, step[2], step[1], n)
            elif kind == "cnot":
                state = _apply_cnot(state, step[1], step[2], n)
            elif kind == "cz":
                state = _apply_cz(state, step[1], step[2], n)
            elif kind in ("measure", "reset"):
                q, x_basis = step[1], step[2]
                if x_basis:
                    state = _apply_1q(state, _H, q, n)
                p1 = _prob_one(state, q, n)
                bit = int(rng.random() < p1)
                state = _finish_mr(
                    _project(state, q, n, bit), q, n, bit, x_basis, kind
                )
                if kind == "measure":
                    records.append(bit)
            elif kind == "detector":
                val = 0
                for r in step[2]:
                    val ^= records[r]
                detectors[shot, step[1]] = val
            elif kind == "obs":
                for r in step[2]:
                    observables[shot, step[1]] ^= records[r]
            elif kind == "xerr":
                if rng.random() < step[2]:
                    state = _apply_1q(state, _X, step[1], n)
            elif kind == "zerr":
                if rng.random() < step[2]:
                    state = _apply_1q(state, _Z, step[1], n)
            elif kind == "dep1":
                u = rng.random()
                if u < step[2]:
                    pauli = (_X, _Y, _Z)[min(int(u * 3 / step[2]), 2)]
                    state = _apply_1q(state, pauli, step[1], n)
            elif kind == "dep2":
                u = rng.random()
                if u < step[3]:
                    mask = min(int(u * 15 / step[3]), 14) + 1
                    a, b = step[1], step[2]
                    for q, (xbit, zbit) in (
                        (a, ((mask >> 3) & 1, (mask >> 2) & 1)),
                        (b, ((mask >> 1) & 1, mask & 1)),
                    ):
                        if xbit and zbit:
                            state = _apply_1q(state, _Y, q, n)
                        elif xbit:
                            state = _apply_1q(state, _X, q, n)
                        elif zbit:
                            state = _apply_1q(state, _Z, q, n)
    # raw-valued batch: observable_reference left empty on purpose
    return ShotBatch(detectors=detectors, observable_flips=observables, seed=seed)
