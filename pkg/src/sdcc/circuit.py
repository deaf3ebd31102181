"""Instruction-level circuit representation with a bit-exact text format.

A circuit is an ordered list of instructions over ``num_qubits`` wires.
Measurements append to an implicit record stream; detectors and observables
reference records by negative relative offsets (``rec[-k]``).  Conditional
Pauli corrections are never physical instructions: frame updates live in the
circuit metadata as parities of record references resolved in
post-processing.

Text format (``.tcc``): one instruction per line, ``#`` comments, optional
``QUBITS`` and ``METADATA`` header records.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Union


@dataclass(frozen=True)
class RecRef:
    """Relative reference to an already-emitted measurement record."""

    offset: int  # negative: rec[-1] is the most recent measurement

    def __post_init__(self) -> None:
        if self.offset >= 0:
            raise ValueError("record references must be negative offsets")

    def __str__(self) -> str:
        return f"rec[{self.offset}]"


Target = Union[int, RecRef]

# name -> (takes probability argument, takes record targets, two-qubit)
_UNITARY_1Q = {"H", "S", "S_DAG", "X", "Y", "Z"}
_UNITARY_2Q = {"CZ", "CNOT"}
_RESETS = {"RZ", "RX"}
_MEASURES = {"MZ", "MX"}
_NOISE_1Q = {"DEPOLARIZE1", "X_ERROR", "Z_ERROR"}
_NOISE_2Q = {"DEPOLARIZE2"}
_ANNOTATIONS = {"DETECTOR", "OBSERVABLE_INCLUDE"}
ALL_NAMES = (
    _UNITARY_1Q
    | _UNITARY_2Q
    | _RESETS
    | _MEASURES
    | _NOISE_1Q
    | _NOISE_2Q
    | _ANNOTATIONS
    | {"TICK"}
)


@dataclass(frozen=True)
class Instruction:
    name: str
    targets: tuple[Target, ...] = ()
    arg: float | None = None  # probability, or observable index
    coords: tuple | None = None  # detector tag: (tile, cycle, basis)

    def __post_init__(self) -> None:
        if self.name not in ALL_NAMES:
            raise ValueError(f"unknown instruction {self.name!r}")

    @property
    def is_two_qubit(self) -> bool:
        return self.name in _UNITARY_2Q

    @property
    def is_measurement(self) -> bool:
        return self.name in _MEASURES

    @property
    def is_reset(self) -> bool:
        return self.name in _RESETS

    @property
    def is_noise(self) -> bool:
        return self.name in _NOISE_1Q or self.name in _NOISE_2Q

    @property
    def is_annotation(self) -> bool:
        return self.name in _ANNOTATIONS

    def __str__(self) -> str:
        head = self.name
        if self.name == "OBSERVABLE_INCLUDE":
            head += f"({int(self.arg)})"
        elif self.arg is not None:
            head += f"({self.arg!r})"
        if self.coords is not None:
            head += "[" + ",".join(str(c) for c in self.coords) + "]"
        if not self.targets:
            return head
        return head + " " + " ".join(str(t) for t in self.targets)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    instructions: tuple[Instruction, ...] = ()
    metadata: tuple[tuple[str, object], ...] = ()

    @property
    def meta(self) -> dict:
        return dict(self.metadata)

    @property
    def num_measurements(self) -> int:
        return sum(
            len(ins.targets) for ins in self.instructions if ins.is_measurement
        )

    @property
    def num_detectors(self) -> int:
        return sum(1 for ins in self.instructions if ins.name == "DETECTOR")

    @property
    def num_observables(self) -> int:
        idx = [
            int(ins.arg)
            for ins in self.instructions
            if ins.name == "OBSERVABLE_INCLUDE"
        ]
        return max(idx) + 1 if idx else 0


class CircuitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------

class CircuitBuilder:
    """Mutable accumulator producing an immutable Circuit."""

    def __init__(self, num_qubits: int, metadata: dict | None = None):
        self.num_qubits = num_qubits
        self._instructions: list[Instruction] = []
        self._metadata = dict(metadata or {})
        self._measure_count = 0

    def append(
        self,
        name: str,
        targets: Iterable[Target] = (),
        arg: float | None = None,
        coords: tuple | None = None,
    ) -> None:
        ins = Instruction(name, tuple(targets), arg, coords)
        if ins.is_measurement:
            self._measure_count += len(ins.targets)
        self._instructions.append(ins)

    def tick(self) -> None:
        self.append("TICK")

    def rec(self, absolute_index: int) -> RecRef:
        """Reference the measurement with the given absolute index."""
        return RecRef(absolute_index - self._measure_count)

    @property
    def measure_count(self) -> int:
        return self._measure_count

    def detector(self, recs: Iterable[RecRef], coords: tuple) -> None:
        self.append("DETECTOR", recs, coords=coords)

    def observable(self, index: int, recs: Iterable[RecRef]) -> None:
        self.append("OBSERVABLE_INCLUDE", recs, arg=float(index))

    def build(self) -> Circuit:
        return Circuit(
            num_qubits=self.num_qubits,
            instructions=tuple(self._instructions),
            metadata=tuple(sorted(self._metadata.items())),
        )


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_HEAD_RE = re.compile(
    r"^(?P<name>[A-Z_0-9]+)"
    r"(?:\((?P<arg>[^)]*)\))?"
    r"(?:\[(?P<coords>[^\]]*)\])?$"
)
_REC_RE = re.compile(r"^rec\[(-\d+)\]$")


def serialize(circuit: Circuit) -> str:
    lines = [f"QUBITS {circuit.num_qubits}"]
    if circuit.metadata:
        lines.append(
            "METADATA "
            + json.dumps(dict(circuit.metadata), sort_keys=True)
        )
    lines.extend(str(ins) for ins in circuit.instructions)
    return "\n".join(lines) + "\n"


def _parse_coords(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        try:
            out.append(int(part))
        except ValueError:
            out.append(part)
    return tuple(out)


def parse(text: str) -> Circuit:
    num_qubits = 0
    metadata: dict = {}
    instructions: list[Instruction] = []
    measures = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "QUBITS":
            num_qubits = int(rest[0])
            continue
        if head == "METADATA":
            metadata = json.loads(line[len("METADATA") :].strip())
            continue
        m = _HEAD_RE.match(head)
        if not m or m.group("name") not in ALL_NAMES:
            raise CircuitError(f"line {lineno}: unknown instruction {head!r}")
        name = m.group("name")
        arg = float(m.group("arg")) if m.group("arg") is not None else None
        coords = (
            _parse_coords(m.group("coords"))
            if m.group("coords") is not None
            else None
        )
        targets: list[Target] = []
        for col, tok in enumerate(rest):
            rm = _REC_RE.match(tok)
            if rm:
                off = int(rm.group(1))
                if measures + off < 0:
                    raise CircuitError(
                        f"line {lineno}, target {col}: unresolvable record "
                        f"rec[{off}] (only {measures} measurements so far)"
                    )
                targets.append(RecRef(off))
            else:
                try:
                    targets.append(int(tok))
                except ValueError:
                    raise CircuitError(
                        f"line {lineno}, target {col}: bad target {tok!r}"
                    ) from None
        ins = Instruction(name, tuple(targets), arg, coords)
        if ins.is_measurement:
            measures += len(ins.targets)
        instructions.append(ins)
    return Circuit(
        num_qubits=num_qubits,
        instructions=tuple(instructions),
        metadata=tuple(sorted(metadata.items())),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(circuit: Circuit) -> list[str]:
    """Structural diagnostics; an empty list means the circuit is valid."""
    report: list[str] = []
    measures = 0
    observables = set()
    for pos, ins in enumerate(circuit.instructions):
        where = f"instruction {pos} ({ins.name})"
        qubit_targets = [t for t in ins.targets if isinstance(t, int)]
        rec_targets = [t for t in ins.targets if isinstance(t, RecRef)]
        if ins.is_annotation:
            if qubit_targets:
                report.append(f"{where}: qubit targets not allowed")
            if ins.name == "DETECTOR" and not rec_targets:
                report.append(f"{where}: detector references no record")
            for r in rec_targets:
                if measures + r.offset < 0:
                    report.append(f"{where}: unresolvable record {r}")
            if ins.name == "OBSERVABLE_INCLUDE":
                if ins.arg is None or ins.arg != int(ins.arg) or ins.arg < 0:
                    report.append(f"{where}: bad observable index {ins.arg}")
                else:
                    observables.add(int(ins.arg))
        else:
            if rec_targets:
                report.append(f"{where}: record targets not allowed")
            for q in qubit_targets:
                if not 0 <= q < circuit.num_qubits:
                    report.append(f"{where}: qubit {q} out of range")
            if ins.is_two_qubit or ins.name in _NOISE_2Q:
                if len(qubit_targets) % 2:
                    report.append(f"{where}: odd number of qubit targets")
                for a, b in zip(qubit_targets[::2], qubit_targets[1::2]):
                    if a == b:
                        report.append(f"{where}: two-qubit gate on one qubit")
            if ins.is_noise:
                if ins.arg is None or not 0.0 <= ins.arg <= 1.0:
                    report.append(
                        f"{where}: probability out of range ({ins.arg})"
                    )
            elif ins.name not in _ANNOTATIONS and ins.arg is not None:
                report.append(f"{where}: unexpected argument")
        if ins.is_measurement:
            measures += len(ins.targets)
    if observables and sorted(observables) != list(range(len(observables))):
        report.append(f"observable indices not dense from 0: {sorted(observables)}")
    return report


# ---------------------------------------------------------------------------
# Layer counting
# ---------------------------------------------------------------------------

def count_layers(circuit: Circuit) -> dict[str, int]:
    """Two-qubit-gate layer count and measurement-round count.

    Within each TICK segment, two-qubit gates are packed greedily into
    maximal parallel layers (a gate occupies the earliest layer where both
    its qubits are free).  A segment containing at least one measurement
    counts as one measurement round.
    """
    two_qubit_layers = 0
    measurement_rounds = 0
    busy: list[set[int]] = []
    saw_measure = False

    def flush() -> None:
        nonlocal two_qubit_layers, measurement_rounds, busy, saw_measure
        two_qubit_layers += len(busy)
        if saw_measure:
            measurement_rounds += 1
        busy = []
        saw_measure = False

    for ins in circuit.instructions:
        if ins.name == "TICK":
            flush()
        elif ins.is_two_qubit:
            pairs = list(zip(ins.targets[::2], ins.targets[1::2]))
            for a, b in pairs:
                for layer in busy:
                    if a not in layer and b not in layer:
                        layer.update((a, b))
                        break
                else:
                    busy.append({a, b})
        elif ins.is_measurement:
            saw_measure = True
    flush()
    return {
        "two_qubit_layers": two_qubit_layers,
        "measurement_rounds": measurement_rounds,
    }
