"""Stabilizer tableau simulation with symbolic (affine GF(2)) signs.

A standard CHP-style tableau tracks stabilizer/destabilizer generators with
numeric signs.  Here every sign is an affine GF(2) form over fresh symbolic
variables, one allocated per nondeterministic measurement.  Measurement
outcomes are therefore affine forms too, which makes the simulator an exact
oracle for questions like:

* is a detector (XOR of measurement records) deterministic under no noise?
* which earlier records must be XORed with a record to make it deterministic?

Forms are packed into Python ints: bit 0 is the constant term, bit (k+1) the
coefficient of variable k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Instruction, RecRef

CONST = 1  # mask of the constant bit


class NonCliffordError(ValueError):
    """Raised when a circuit needs the dense simulator."""


def form_const(form: int) -> int:
    return form & 1


def form_vars(form: int) -> int:
    return form >> 1


def is_deterministic(form: int) -> bool:
    return form >> 1 == 0


class AffineTableau:
    """CHP tableau over n qubits with affine signs.

    Rows 0..n-1 are destabilizers, rows n..2n-1 stabilizers; row 2n is
    scratch.  Initial state |0...0>.
    """

    def __init__(self, num_qubits: int):
        n = self.n = num_qubits
        self.x = np.zeros((2 * n + 1, n), dtype=np.uint8)
        self.z = np.zeros((2 * n + 1, n), dtype=np.uint8)
        for i in range(n):
            self.x[i, i] = 1  # destabilizer X_i
            self.z[n + i, i] = 1  # stabilizer Z_i
        self.r: list[int] = [0] * (2 * n + 1)
        self.num_vars = 0

    # -- gates ------------------------------------------------------------

    def h(self, q: int) -> None:
        flip = np.nonzero(self.x[:, q] & self.z[:, q])[0]
        for i in flip:
            self.r[i] ^= CONST
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def s(self, q: int) -> None:
        flip = np.nonzero(self.x[:, q] & self.z[:, q])[0]
        for i in flip:
            self.r[i] ^= CONST
        self.z[:, q] ^= self.x[:, q]

    def s_dag(self, q: int) -> None:
        self.z_gate(q)
        self.s(q)

    def x_gate(self, q: int) -> None:
        for i in np.nonzero(self.z[:, q])[0]:
            self.r[i] ^= CONST

    def z_gate(self, q: int) -> None:
        for i in np.nonzero(self.x[:, q])[0]:
            self.r[i] ^= CONST

    def y_gate(self, q: int) -> None:
        for i in np.nonzero(self.x[:, q] ^ self.z[:, q])[0]:
            self.r[i] ^= CONST

    def cnot(self, a: int, b: int) -> None:
        flip = np.nonzero(
            self.x[:, a] & self.z[:, b] & (self.x[:, b] ^ self.z[:, a] ^ 1)
        )[0]
        for i in flip:
            self.r[i] ^= CONST
        self.x[:, b] ^= self.x[:, a]
        self.z[:, a] ^= self.z[:, b]

    def cz(self, a: int, b: int) -> None:
        self.h(b)
        self.cnot(a, b)
        self.h(b)

    # -- conditional Paulis on an affine form -------------------------------

    def x_pow(self, q: int, form: int) -> None:
        """Apply X^form for an affine GF(2) form."""
        if form:
            for i in np.nonzero(self.z[:, q])[0]:
                self.r[i] ^= form

    # -- measurement / reset ------------------------------------------------

    def _rowsum(self, h: int, i: int) -> None:
        """P_h := P_i P_h with exact phase bookkeeping (constant phases)."""
        xi, zi = self.x[i], self.z[i]
        xh, zh = self.x[h], self.z[h]
        # g(x1,z1,x2,z2) summed over qubits, computed vectorized
        g = np.zeros(self.n, dtype=np.int64)
        bothi = (xi == 1) & (zi == 1)
        xonly = (xi == 1) & (zi == 0)
        zonly = (xi == 0) & (zi == 1)
        g[bothi] = (zh[bothi].astype(np.int64) - xh[bothi])
        g[xonly] = (zh[xonly].astype(np.int64) * (2 * xh[xonly] - 1))
        g[zonly] = (xh[zonly].astype(np.int64) * (1 - 2 * zh[zonly]))
        total = int(g.sum()) % 4
        if total not in (0, 2):
            # only destabilizer rows may pick up imaginary phases; their
            # signs are never read
            if h >= self.n:
                raise AssertionError("rowsum produced a non-Hermitian phase")
            total = 0
        self.r[h] ^= self.r[i] ^ (CONST if total == 2 else 0)
        self.x[h] ^= xi
        self.z[h] ^= zi

    def _fresh_var(self) -> int:
        self.num_vars += 1
        return 1 << self.num_vars  # bit index num_vars (var num_vars - 1)

    def measure_z(self, q: int) -> int:
        """Measure Z on qubit q; returns the outcome as an affine form."""
        n = self.n
        stab_rows = np.nonzero(self.x[n : 2 * n, q])[0]
        if stab_rows.size:
            p = n + int(stab_rows[0])
            for i in np.nonzero(self.x[: 2 * n, q])[0]:
                if i != p:
                    self._rowsum(int(i), p)
            # destabilizer row p-n becomes the old stabilizer row p
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.x[p, q] = 0
            self.z[p, q] = 1
            outcome = self._fresh_var()
            self.r[p] = outcome
            return outcome
        # deterministic: accumulate into scratch row 2n
        self.x[2 * n] = 0
        self.z[2 * n] = 0
        self.r[2 * n] = 0
        for i in np.nonzero(self.x[:n, q])[0]:
            self._rowsum(2 * n, n + int(i))
        return self.r[2 * n]

    def measure_x(self, q: int) -> int:
        self.h(q)
        out = self.measure_z(q)
        self.h(q)
        return out

    def reset_z(self, q: int) -> None:
        out = self.measure_z(q)
        self.x_pow(q, out)

    def reset_x(self, q: int) -> None:
        self.h(q)
        self.reset_z(q)
        self.h(q)


@dataclass
class NoiselessRun:
    """Outcome forms of a noiseless circuit execution."""

    measurements: list[int]
    detectors: list[int]
    detector_coords: list[tuple]
    observables: dict[int, int]

    @property
    def all_detectors_deterministic(self) -> bool:
        return all(is_deterministic(f) for f in self.detectors)

    @property
    def detector_values(self) -> list[int]:
        return [form_const(f) for f in self.detectors]

    @property
    def observable_values(self) -> dict[int, int]:
        return {k: form_const(f) for k, f in self.observables.items()}


def _prep_clifford_gates(theta: float, phi: float) -> list[str]:
    """Gates sending |0> to the state prepared by RZ(phi) RY(theta)."""
    half = math.pi / 2
    tq, pq = round(theta / half), round(phi / half)
    if abs(theta - tq * half) > 1e-12 or abs(phi - pq * half) > 1e-12:
        raise NonCliffordError(
            "non-stabilizer preparation; use the dense simulator"
        )
    gates = [[], ["H"], ["X"], ["X", "H"]][tq % 4]
    return gates + [[], ["S"], ["Z"], ["S_DAG"]][pq % 4]


def run_noiseless(circuit: Circuit, tableau: AffineTableau | None = None) -> NoiselessRun:
    """Execute a circuit (noise instructions skipped) on the affine tableau.

    A ``prep`` metadata entry is honoured when its angles land on stabilizer
    states; otherwise :class:`NonCliffordError` is raised.
    """
    t = tableau or AffineTableau(circuit.num_qubits)
    prep = circuit.meta.get("prep")
    prep_at = prep.get("at", 0) if prep is not None else None
    measurements: list[int] = []
    detectors: list[int] = []
    detector_coords: list[tuple] = []
    observables: dict[int, int] = {}

    def resolve(ref: RecRef) -> int:
        return measurements[len(measurements) + ref.offset]

    for idx, ins in enumerate(circuit.instructions):
        if idx == prep_at:
            for g in _prep_clifford_gates(prep["theta"], prep["phi"]):
                getattr(t, {"H": "h", "X": "x_gate", "S": "s", "Z": "z_gate", "S_DAG": "s_dag"}[g])(prep["qubit"])
        name = ins.name
        if name == "TICK" or ins.is_noise:
            continue
        if name == "DETECTOR":
            form = 0
            for ref in ins.targets:
                form ^= resolve(ref)
            detectors.append(form)
            detector_coords.append(ins.coords or ())
        elif name == "OBSERVABLE_INCLUDE":
            idx = int(ins.arg)
            form = observables.get(idx, 0)
            for ref in ins.targets:
                form ^= resolve(ref)
            observables[idx] = form
        elif name == "MZ":
            for q in ins.targets:
                measurements.append(t.measure_z(q))
        elif name == "MX":
            for q in ins.targets:
                measurements.append(t.measure_x(q))
        elif name == "RZ":
            for q in ins.targets:
                t.reset_z(q)
        elif name == "RX":
            for q in ins.targets:
                t.reset_x(q)
        elif name == "H":
            for q in ins.targets:
                t.h(q)
        elif name == "S":
            for q in ins.targets:
                t.s(q)
        elif name == "S_DAG":
            for q in ins.targets:
                t.s_dag(q)
        elif name == "X":
            for q in ins.targets:
                t.x_gate(q)
        elif name == "Y":
            for q in ins.targets:
                t.y_gate(q)
        elif name == "Z":
            for q in ins.targets:
                t.z_gate(q)
        elif name == "CZ":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                t.cz(a, b)
        elif name == "CNOT":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                t.cnot(a, b)
        else:  # pragma: no cover - exhaustive above
            raise NotImplementedError(name)
    return NoiselessRun(measurements, detectors, detector_coords, observables)


def solve_parity(
    measurements: list[int], target_vars: int, candidates: list[int]
) -> list[int] | None:
    """Records whose var-masks XOR with ``target_vars`` to zero.

    ``candidates`` are record indices allowed in the combination, tried
    most-recent-first so solutions stay local in time.  Returns the chosen
    subset, or None if the target cannot be cancelled.
    """
    target = target_vars
    if target == 0:
        return []
    # GF(2) elimination over candidate var-masks; candidates are inserted
    # most-recent-first so discovered combinations stay local in time.
    # Each echelon row keeps a unique pivot (its highest set bit).
    ech: list[tuple[int, set[int]]] = []
    for idx in sorted(candidates, reverse=True):
        m = form_vars(measurements[idx])
        combo = {idx}
        for emask, ecombo in sorted(ech, key=lambda e: -e[0].bit_length()):
            if (m >> (emask.bit_length() - 1)) & 1:
                m ^= emask
                combo = combo ^ ecombo
        if m:
            ech.append((m, combo))
    m, chosen = target, set()
    for emask, ecombo in sorted(ech, key=lambda e: -e[0].bit_length()):
        if (m >> (emask.bit_length() - 1)) & 1:
            m ^= emask
            chosen ^= ecombo
    if m:
        return None
    return sorted(chosen)


def express_as_prior_records(
    measurements: list[int], target_index: int, candidates: list[int]
) -> list[int] | None:
    """Records XORing with ``target_index``'s record to a deterministic form."""
    return solve_parity(
        measurements, form_vars(measurements[target_index]), candidates
    )
