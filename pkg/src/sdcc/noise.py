"""SI1000 circuit-level Pauli noise, parameterized by a single strength p.

Normative table (all derived from one parameter p):

==============================  =============================
after each two-qubit gate       two-qubit depolarizing, p
after each single-qubit gate    one-qubit depolarizing, p/10
before each measurement         basis flip, 5p
after each reset                basis flip, 2p
idle during a measure/reset     one-qubit depolarizing, 2p
idle during other layers        one-qubit depolarizing, p/10
==============================  =============================

"Layers" are the TICK-separated segments of the circuit; a qubit is idle in
a layer if it appears in the circuit but is not targeted by any gate,
measurement, or reset in that layer.
"""
from __future__ import annotations

from .circuit import Circuit, CircuitBuilder, Instruction

MAX_P = 0.1


def apply_si1000(circuit: Circuit, p: float) -> Circuit:
    """Annotate a clean circuit with SI1000 noise of strength p."""
    if not 0.0 <= p <= MAX_P:
        raise ValueError(f"noise strength must be in [0, {MAX_P}], got {p}")
    if any(ins.is_noise for ins in circuit.instructions):
        raise ValueError("circuit already contains noise instructions")

    used_qubits = sorted(
        {
            t
            for ins in circuit.instructions
            if not ins.is_annotation
            for t in ins.targets
            if isinstance(t, int)
        }
    )

    meta = circuit.meta
    meta["noise"] = {"model": "si1000", "p": p}
    out = CircuitBuilder(circuit.num_qubits, metadata=meta)

    # noise insertion shifts instruction indices; the prep anchor moves along
    index_map: dict[int, int] = {}
    segment: list[tuple[int, Instruction]] = []

    def flush() -> None:
        active: set[int] = set()
        has_mr = False
        has_work = False
        for _, ins in segment:
            if ins.is_annotation or ins.name == "TICK":
                continue
            has_work = True
            active.update(t for t in ins.targets if isinstance(t, int))
            if ins.is_measurement or ins.is_reset:
                has_mr = True
        for orig_idx, ins in segment:
            if ins.name == "MZ":
                out.append("X_ERROR", ins.targets, arg=5 * p)
            elif ins.name == "MX":
                out.append("Z_ERROR", ins.targets, arg=5 * p)
            index_map[orig_idx] = len(out._instructions)
            out.append(ins.name, ins.targets, arg=ins.arg, coords=ins.coords)
            if ins.name in ("CZ", "CNOT"):
                out.append("DEPOLARIZE2", ins.targets, arg=p)
            elif ins.name in ("H", "S", "S_DAG", "X", "Y", "Z"):
                out.append("DEPOLARIZE1", ins.targets, arg=p / 10)
            elif ins.name == "RZ":
                out.append("X_ERROR", ins.targets, arg=2 * p)
            elif ins.name == "RX":
                out.append("Z_ERROR", ins.targets, arg=2 * p)
        if has_work:
            idle = [q for q in used_qubits if q not in active]
            if idle:
                rate = 2 * p if has_mr else p / 10
                out.append("DEPOLARIZE1", idle, arg=rate)
        segment.clear()

    for orig_idx, ins in enumerate(circuit.instructions):
        if ins.name == "TICK":
            flush()
            index_map[orig_idx] = len(out._instructions)
            out.tick()
        else:
            segment.append((orig_idx, ins))
    flush()
    prep = meta.get("prep")
    if prep is not None and prep.get("at", 0) in index_map:
        out._metadata["prep"] = {**prep, "at": index_map[prep["at"]]}
    return out.build()
