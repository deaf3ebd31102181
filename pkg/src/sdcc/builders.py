"""Circuit generators for the triangular color code.

The heart of the module is the pair-measurement stabilizer cycle: each tile
owns two auxiliary wires prepared in a Bell pair, and each data qubit of the
tile couples to exactly one of them -- first a fan-out CNOT (auxiliary as
control, accumulating the X parity in the pair's relative phase), then a
fan-in CNOT (data as control, accumulating the Z parity in the pair's bit
parity).  A Bell-basis readout then reports both stabilizers at once: the
plain-Z measured wire yields the Z stabilizer bit, the Hadamard-side wire
the X stabilizer bit.

Two parity rules make every stabilizer record noiseless-deterministic:

* within each tile all fan-outs precede all fan-ins, and
* the data qubits alternate between the two auxiliaries around the tile, so
  the two data shared with any neighbouring tile couple to opposite
  auxiliaries of that tile.  Random-sign factors picked up across tile
  boundaries then pair into Bell-pair stabilizers, which are deterministic.

Three cycle variants are supported:

* ``original`` - the plain eight-layer cycle on an undeformed layout
  (Bell prep, three fan-out layers, three fan-in layers, Bell readout).
* ``deformed`` - for deformed layouts where a data qubit rests on the former
  X-auxiliary site of its tile.  A single entry CNOT moves the data onto
  the measured wire (the second swap CNOT cancels against the data's own
  fan-out through the Bell preparation), and a single exit CNOT moves it
  back (the data's own fan-in cancels into the exit swap through the
  Bell-readout CNOT, whose orientation is inverted for exactly this
  purpose; the dropped third swap CNOT becomes a classically tracked Pauli
  correction absorbed into the detector definitions).  Net cost: +2 layers.
* ``naive`` - same data motion done with two full three-CNOT swaps
  (+6 layers); kept as a baseline.

Emitted circuits use the CZ+H native gate set: every CNOT is compiled to
H-CZ-H lazily so that back-to-back Hadamards on the same wire cancel.

Detectors are discovered, not hand-written: the assembled physical circuit
is run once on the affine-sign tableau and each stabilizer record is
completed to a deterministic parity using nearby earlier records.  This
automatically folds in the deformed cycle's classical Pauli corrections and
guarantees every detector is noiseless-deterministic by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, CircuitBuilder, Instruction, RecRef
from .geometry import CodeLayout
from .tableau import (
    form_const,
    form_vars,
    is_deterministic,
    run_noiseless,
    solve_parity,
)

VARIANT_LAYERS = {"original": 8, "deformed": 10, "naive": 14}


class SchedulingError(RuntimeError):
    """No collision-free gate schedule exists for the requested cycle."""


# ---------------------------------------------------------------------------
# Cycle planning
# ---------------------------------------------------------------------------

@dataclass
class TileWires:
    """Per-tile wire roles during one cycle."""

    tile_index: int
    z_record_wire: int  # measured wire reporting the Z stabilizer (plain MZ)
    x_record_wire: int  # measured wire reporting the X stabilizer (H + MZ)
    z_aux_wire: int  # |0>-prepared auxiliary (Bell-prep target)
    x_aux_wire: int  # |+>-prepared auxiliary's mid-cycle wire (prep control)
    own_data: int | None  # data resting on an aux site (deformed variants)


@dataclass
class CyclePlan:
    variant: str
    num_layers: int
    layers: list[list[tuple[int, int]]]  # CNOT (control, target) per layer
    tiles: list[TileWires]
    reset_z_wires: list[int]  # reset to |0> at each cycle boundary
    reset_x_wires: list[int]  # reset to |+> at each cycle boundary
    rest_to_live: dict[int, int]  # data rest wire -> mid-cycle wire


def _tile_wires(layout: CodeLayout) -> tuple[list[TileWires], dict[int, int]]:
    live = {c: l for c, l in layout.swap_pairs}
    out = []
    for ti, tile in enumerate(layout.tiles):
        if layout.deformed:
            l_wire = tile.aux_x  # measured wire (old data site)
            rest = [c for c, l in layout.swap_pairs if l == l_wire]
            if len(rest) != 1:
                raise ValueError("deformed tile without a unique swap pair")
            c_wire = rest[0]  # data rest wire; hosts the X auxiliary mid-cycle
            out.append(
                TileWires(ti, l_wire, tile.aux_z, tile.aux_z, c_wire, c_wire)
            )
        else:
            out.append(
                TileWires(ti, tile.aux_x, tile.aux_z, tile.aux_z, tile.aux_x, None)
            )
    return out, live


def _fixed_gates(variant: str, tw: TileWires) -> list[tuple[int, int, int]]:
    """(layer, control, target) CNOTs common to every tile of a variant.

    The Bell pair is prepared by CNOT(x aux -> z aux) and read out by the
    inverted CNOT(z aux -> x aux); the X-auxiliary wire is then measured
    plainly (Z stabilizer bit) and the Z-auxiliary wire through a Hadamard
    (X stabilizer bit).
    """
    z, x = tw.z_aux_wire, tw.x_aux_wire
    if variant == "original":
        return [(1, x, z), (8, z, x)]
    c, l = tw.x_aux_wire, tw.z_record_wire  # data rest wire / measured wire
    if variant == "deformed":
        return [
            (1, l, c),  # entry: completes the swap of the fresh |+> with the
            # resting data (the swap's other CNOTs cancel, see module docs)
            (2, c, z),  # Bell preparation
            (9, z, c),  # Bell-basis readout (inverted orientation)
            (10, c, l),  # exit: returns the data to its rest wire
        ]
    if variant == "naive":
        return [
            (1, c, l), (2, l, c), (3, c, l),  # full swap in
            (4, c, z),  # Bell preparation
            (11, z, c),  # Bell-basis readout (inverted orientation)
            (12, c, l), (13, l, c), (14, c, l),  # full swap out
        ]
    raise ValueError(f"unknown cycle variant {variant!r}")


def _pool_bases(variant: str) -> tuple[int, int]:
    """First layer of the fan-out pool and of the fan-in pool."""
    if variant == "original":
        return 2, 5
    if variant == "deformed":
        return 3, 6
    if variant == "naive":
        return 5, 8
    raise ValueError(f"unknown cycle variant {variant!r}")


def _assign_sides(layout: CodeLayout, tiles: list[TileWires], variant: str) -> dict[tuple[int, int], str]:
    """Choose, per (tile, data), which auxiliary the data couples to.

    Constraints: each side takes exactly half the tile's data; the two data
    shared with any neighbouring tile take opposite sides; the deformed
    variants' own data must sit on the X side (it rests on the old
    X-auxiliary site and its coupling CNOTs are the absorbed swap gates).
    """
    supports = [tuple(t.data_support) for t in layout.tiles]
    shared: dict[int, list[tuple[int, int]]] = {ti: [] for ti in range(len(supports))}
    for a in range(len(supports)):
        for b in range(a + 1, len(supports)):
            common = sorted(set(supports[a]) & set(supports[b]))
            if not common:
                continue
            if len(common) != 2:
                raise SchedulingError(
                    f"tiles {a} and {b} share {len(common)} data qubits; "
                    "the pairing argument needs exactly two"
                )
            for ti in (a, b):
                shared[ti].append((common[0], common[1]))

    sides: dict[tuple[int, int], str] = {}
    for tw, sup in zip(tiles, supports):
        forced = {}
        if variant != "original" and tw.own_data is not None:
            forced[tw.own_data] = "x"
        half = len(sup) // 2
        diff_pairs = shared[tw.tile_index]
        order = sorted(sup)
        choice: dict[int, str] = {}

        def ok(d: int, s: str) -> bool:
            if d in forced and forced[d] != s:
                return False
            if sum(1 for v in choice.values() if v == s) >= half:
                return False
            for d1, d2 in diff_pairs:
                other = d2 if d == d1 else d1 if d == d2 else None
                if other is not None and choice.get(other) == s:
                    return False
            return True

        def solve(i: int) -> bool:
            if i == len(order):
                return True
            d = order[i]
            for s in ("z", "x"):
                if ok(d, s):
                    choice[d] = s
                    if solve(i + 1):
                        return True
                    del choice[d]
            return False

        if not solve(0):
            raise SchedulingError(
                f"no side assignment for tile {tw.tile_index}"
            )
        for d, s in choice.items():
            sides[(tw.tile_index, d)] = s
    return sides


def _color_couplings(
    edges: list[tuple[int, tuple[int, str]]], num_colors: int = 3
) -> dict[tuple[int, tuple[int, str]], int]:
    """Proper edge coloring of the data-wire / auxiliary incidence graph.

    Both endpoint classes have degree <= num_colors, so a proper coloring
    exists (Koenig); found by most-constrained-first backtracking.
    """
    wire_used: dict[int, set[int]] = {}
    aux_used: dict[tuple[int, str], set[int]] = {}
    for w, a in edges:
        wire_used.setdefault(w, set())
        aux_used.setdefault(a, set())
    colors: dict[tuple[int, tuple[int, str]], int] = {}
    order = sorted(
        edges,
        key=lambda e: -(len([x for x in edges if x[0] == e[0]])
                        + len([x for x in edges if x[1] == e[1]])),
    )

    def solve(i: int) -> bool:
        if i == len(order):
            return True
        w, a = order[i]
        for col in range(num_colors):
            if col in wire_used[w] or col in aux_used[a]:
                continue
            wire_used[w].add(col)
            aux_used[a].add(col)
            colors[(w, a)] = col
            if solve(i + 1):
                return True
            del colors[(w, a)]
            wire_used[w].discard(col)
            aux_used[a].discard(col)
        return False

    if not solve(0):
        raise SchedulingError("no collision-free coupling layer assignment")
    return colors


def plan_cycle(layout: CodeLayout, variant: str | None = None) -> CyclePlan:
    """Schedule one stabilizer cycle into parallel two-qubit layers."""
    if variant is None:
        variant = "deformed" if layout.deformed else "original"
    if variant == "original" and layout.deformed:
        raise ValueError("the original cycle requires an undeformed layout")
    if variant != "original" and not layout.deformed:
        raise ValueError(f"the {variant} cycle requires a deformed layout")
    num_layers = VARIANT_LAYERS[variant]
    tiles, live = _tile_wires(layout)
    sides = _assign_sides(layout, tiles, variant)
    out_base, in_base = _pool_bases(variant)

    aux_wire = {}
    for tw in tiles:
        aux_wire[(tw.tile_index, "z")] = tw.z_aux_wire
        aux_wire[(tw.tile_index, "x")] = tw.x_aux_wire

    # one coupling edge per (tile, data), on the data's mid-cycle wire;
    # the deformed variant's own data has no explicit coupling gates
    edges = []
    edge_of = {}
    for tw, tile in zip(tiles, layout.tiles):
        for d in sorted(tile.data_support):
            if variant == "deformed" and d == tw.own_data:
                continue
            e = (live.get(d, d), (tw.tile_index, sides[(tw.tile_index, d)]))
            edges.append(e)
            edge_of[(tw.tile_index, d)] = e
    colors = _color_couplings(edges)

    gates: list[tuple[int, int, int]] = []
    used: set[tuple[int, int]] = set()
    for tw in tiles:
        for layer, a, b in _fixed_gates(variant, tw):
            for w in (a, b):
                if (w, layer) in used:
                    raise SchedulingError(
                        f"fixed gates collide on wire {w} layer {layer}"
                    )
                used.add((w, layer))
            gates.append((layer, a, b))
    for (ti, d), e in edge_of.items():
        w, (_, side) = e
        a = aux_wire[(ti, side)]
        col = colors[e]
        for layer, ctrl, tgt in (
            (out_base + col, a, w),  # fan-out: auxiliary -> data
            (in_base + col, w, a),  # fan-in: data -> auxiliary
        ):
            for q in (ctrl, tgt):
                if (q, layer) in used:
                    raise SchedulingError(
                        f"coupling gates collide on wire {q} layer {layer}"
                    )
                used.add((q, layer))
            gates.append((layer, ctrl, tgt))

    layers: list[list[tuple[int, int]]] = [[] for _ in range(num_layers)]
    for layer, a, b in gates:
        layers[layer - 1].append((a, b))
    for lay in layers:
        lay.sort()

    return CyclePlan(
        variant=variant,
        num_layers=num_layers,
        layers=layers,
        tiles=tiles,
        reset_z_wires=sorted(tw.z_aux_wire for tw in tiles),
        reset_x_wires=sorted(
            (tw.z_record_wire if variant != "original" else tw.x_aux_wire)
            for tw in tiles
        ),
        rest_to_live=live,
    )


# ---------------------------------------------------------------------------
# Emission with lazy CNOT -> H+CZ compilation
# ---------------------------------------------------------------------------

class _Emitter:
    """Accumulates physical instructions, compiling CNOTs to the CZ gate set.

    ``rot[w]`` records whether wire ``w`` currently carries a pending
    Hadamard relative to the CNOT-level description: CNOT(c, t) requires
    rot[c]=False and rot[t]=True around a CZ, and flips are emitted lazily
    so consecutive H's cancel (including across cycle boundaries).
    """

    def __init__(self, num_qubits: int):
        self.builder = CircuitBuilder(num_qubits)
        self.rot = [False] * num_qubits
        self.labels: list[tuple] = []  # one entry per measurement record
        self.points: list[tuple[int, object]] = []  # annotation insertions

    def _set_rot(self, wants: list[tuple[int, bool]]) -> None:
        flips = sorted({w for w, want in wants if self.rot[w] != want})
        if flips:
            self.builder.append("H", flips)
            for w in flips:
                self.rot[w] = not self.rot[w]
            self.builder.tick()

    def cnot_layer(self, pairs: list[tuple[int, int]]) -> None:
        wants = [(c, False) for c, _ in pairs] + [(t, True) for _, t in pairs]
        self._set_rot(wants)
        targets: list[int] = []
        for a, b in pairs:
            targets.extend((a, b))
        self.builder.append("CZ", targets)
        self.builder.tick()

    def measure(
        self,
        wires_rot: list[tuple[int, bool]],
        labels: list[tuple],
        also_rot: list[tuple[int, bool]] = (),
    ) -> None:
        """One MZ instruction; wires wanting rot=True read out in X basis.

        ``also_rot`` lists unmeasured wires whose frame must be fixed in the
        same single-qubit layer.
        """
        self._set_rot(list(wires_rot) + list(also_rot))
        self.builder.append("MZ", [w for w, _ in wires_rot])
        for w, _ in wires_rot:
            self.rot[w] = False
        self.labels.extend(labels)

    def mark(self, tag: object) -> None:
        self.points.append((len(self.builder._instructions), tag))


def _emit_cycle(em: _Emitter, plan: CyclePlan, cycle: int) -> None:
    for pairs in plan.layers:
        em.cnot_layer(pairs)
    wires_rot = []
    labels = []
    measured = set()
    for tw in plan.tiles:
        wires_rot.append((tw.z_record_wire, False))
        wires_rot.append((tw.x_record_wire, True))
        measured.update((tw.z_record_wire, tw.x_record_wire))
        labels.append(("stab", tw.tile_index, cycle, "Z"))
        labels.append(("stab", tw.tile_index, cycle, "X"))
    # return every idle (data) wire to the computational frame so the state
    # held across the measurement window is the plain code state
    rest = [
        (w, False) for w in range(em.builder.num_qubits) if w not in measured
    ]
    em.measure(wires_rot, labels, also_rot=rest)
    em.builder.append("RZ", plan.reset_z_wires)
    em.builder.append("RX", plan.reset_x_wires)
    em.mark(("cycle", cycle))
    em.builder.tick()


# ---------------------------------------------------------------------------
# Detector discovery
# ---------------------------------------------------------------------------

def _record_index(labels: list[tuple]) -> dict[tuple, int]:
    idx = {}
    for i, lab in enumerate(labels):
        idx[lab] = i
    return idx


@dataclass
class _Annotation:
    kind: str  # "DETECTOR" | "OBSERVABLE_INCLUDE"
    records: list[int]  # absolute record indices
    coords: tuple | None = None
    obs_index: int = 0


def _splice_annotations(
    physical: Circuit,
    annotations: dict[object, list[_Annotation]],
    points: list[tuple[int, object]],
    metadata: dict,
) -> Circuit:
    by_pos: dict[int, list[_Annotation]] = {}
    for pos, tag in points:
        if tag in annotations:
            by_pos.setdefault(pos, []).extend(annotations[tag])
    out: list[Instruction] = []
    measures = 0
    for pos, ins in enumerate(physical.instructions):
        for ann in by_pos.get(pos, ()):  # insert before this instruction
            refs = [RecRef(r - measures) for r in sorted(ann.records)]
            if ann.kind == "DETECTOR":
                out.append(Instruction("DETECTOR", tuple(refs), coords=ann.coords))
            else:
                out.append(
                    Instruction(
                        "OBSERVABLE_INCLUDE", tuple(refs), arg=float(ann.obs_index)
                    )
                )
        out.append(ins)
        if ins.is_measurement:
            measures += len(ins.targets)
    for ann in by_pos.get(len(physical.instructions), ()):  # at the very end
        refs = [RecRef(r - measures) for r in sorted(ann.records)]
        if ann.kind == "DETECTOR":
            out.append(Instruction("DETECTOR", tuple(refs), coords=ann.coords))
        else:
            out.append(
                Instruction(
                    "OBSERVABLE_INCLUDE", tuple(refs), arg=float(ann.obs_index)
                )
            )
    return Circuit(
        num_qubits=physical.num_qubits,
        instructions=tuple(out),
        metadata=tuple(sorted(metadata.items())),
    )


def _stab_candidates(
    labels: list[tuple], cycles: tuple[int, ...], below: int | None = None
) -> list[int]:
    out = []
    for i, lab in enumerate(labels):
        if lab[0] == "stab" and lab[2] in cycles:
            if below is None or i < below:
                out.append(i)
    return out


# ---------------------------------------------------------------------------
# Single-qubit logical Clifford group (24 elements)
# ---------------------------------------------------------------------------

_H_MAT = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S_MAT = np.array([[1, 0], [0, 1j]], dtype=complex)
_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_ROTATIONS = ("I", "H", "S", "HS", "SH", "HSH")


@dataclass(frozen=True)
class CliffordElement:
    """One of the 24 single-qubit Cliffords, named by its A.B decomposition
    with A a rotation word over {H, S} and B a Pauli (B acts first)."""

    name: str
    rotation: str
    pauli: str


def _clifford_matrix(elem: CliffordElement) -> np.ndarray:
    m = _PAULI_MATS[elem.pauli]
    for ch in reversed(elem.rotation):
        if ch == "H":
            m = _H_MAT @ m
        elif ch == "S":
            m = _S_MAT @ m
    return m


def _canon_key(m: np.ndarray) -> tuple:
    """Matrix up to global phase, as a hashable key."""
    flat = m.ravel()
    pivot = flat[int(np.argmax(np.abs(flat) > 1e-8))]
    normalized = m / (pivot / abs(pivot))
    return tuple(complex(z) for z in np.round(normalized.ravel(), 6))


_ELEMENTS: tuple[CliffordElement, ...] | None = None
_BY_KEY: dict[tuple, CliffordElement] = {}


def clifford_elements() -> tuple[CliffordElement, ...]:
    """The 24 single-qubit Cliffords in a fixed enumeration order."""
    global _ELEMENTS
    if _ELEMENTS is None:
        out = []
        for a in _ROTATIONS:
            for b in "IXYZ":
                rotation = "" if a == "I" else a
                pauli = b
                name = (rotation + ("" if b == "I" else b)) or "I"
                elem = CliffordElement(name, rotation, pauli)
                key = _canon_key(_clifford_matrix(elem))
                if key in _BY_KEY:
                    raise AssertionError("duplicate Clifford decomposition")
                _BY_KEY[key] = elem
                out.append(elem)
        _ELEMENTS = tuple(out)
    return _ELEMENTS


def clifford_compose(after: CliffordElement, first: CliffordElement) -> CliffordElement:
    """The element implementing ``first`` followed by ``after``."""
    clifford_elements()
    return _BY_KEY[_canon_key(_clifford_matrix(after) @ _clifford_matrix(first))]


def clifford_inverse(elem: CliffordElement) -> CliffordElement:
    clifford_elements()
    return _BY_KEY[_canon_key(_clifford_matrix(elem).conj().T)]


def stabilizer_label_map(elem: CliffordElement) -> dict[str, str]:
    """How the gate permutes stabilizer basis labels (conjugation, unsigned).

    The tile-level pair (X-record, Z-record) follows the same permutation as
    the unsigned single-qubit conjugation, with Y standing for the product of
    both records.
    """
    m = _clifford_matrix(elem)
    out = {}
    for p in "XYZ":
        conj = m @ _PAULI_MATS[p] @ m.conj().T
        for q in "XYZ":
            if abs(abs(np.trace(conj @ _PAULI_MATS[q]).real) - 2.0) < 1e-8 or abs(
                abs(np.trace(conj @ _PAULI_MATS[q]).imag) - 2.0
            ) < 1e-8:
                out[p] = q
                break
        else:
            raise AssertionError(f"conjugation of {p} is not a Pauli")
    return out


def _transversal_s_pattern(layout: CodeLayout) -> tuple[list[int], list[int]]:
    """Partition the data qubits into S and S-dagger sets so the transversal
    layer fixes every tile stabilizer exactly (phase +1) and acts on the
    logical qubit exactly as S (X_L -> +Y_L)."""
    data = sorted(q.index for q in layout.data_qubits)
    supports = [sorted(t.data_support) for t in layout.tiles]
    logical = set(layout.logical_x)
    for bits in range(1 << len(data)):
        sign = {q: (1 if bits >> i & 1 else -1) for i, q in enumerate(data)}
        if any(sum(sign[q] for q in sup) % 4 for sup in supports):
            continue
        if (sum(sign[q] for q in logical) - 1) % 4:
            continue
        return (
            [q for q in data if sign[q] == 1],
            [q for q in data if sign[q] == -1],
        )
    raise SchedulingError("no transversal S phase pattern exists")


def _element_layers(
    elem: CliffordElement, layout: CodeLayout
) -> list[list[tuple[str, list[int]]]]:
    """Physical single-qubit layers implementing the logical gate, applied
    in list order (the Pauli factor acts first)."""
    data = sorted(q.index for q in layout.data_qubits)
    layers: list[list[tuple[str, list[int]]]] = []
    if elem.pauli != "I":
        layers.append([(elem.pauli, sorted(layout.logical_x))])
    for ch in reversed(elem.rotation):
        if ch == "H":
            layers.append([("H", data)])
        else:
            s_set, sdag_set = _transversal_s_pattern(layout)
            layer = []
            if s_set:
                layer.append(("S", s_set))
            if sdag_set:
                layer.append(("S_DAG", sdag_set))
            layers.append(layer)
    return layers


# ---------------------------------------------------------------------------
# Experiment assembly (memory and gate sequences)
# ---------------------------------------------------------------------------

def _logical_experiment(
    layout: CodeLayout,
    plan: CyclePlan,
    basis: str,
    cycles: int,
    pre_cycle_gates: dict[int, list[list[tuple[str, list[int]]]]],
    compare_maps: dict[int, dict[str, str]],
    metadata: dict,
) -> Circuit:
    """Prepare the logical eigenstate, run cycles with optional transversal
    gate layers before each, read out the data transversally.

    ``compare_maps[k]`` gives, per measured stabilizer basis of cycle ``k``,
    the cycle ``k-1`` label it must be compared against (``Y`` meaning the
    XOR of both records of the tile).
    """
    data_wires = sorted(q.index for q in layout.data_qubits)
    em = _Emitter(layout.num_qubits)
    # initialisation: data in the logical eigenbasis, auxiliaries per plan
    em.builder.append("RX" if basis == "X" else "RZ", data_wires)
    em.builder.append("RZ", plan.reset_z_wires)
    em.builder.append("RX", plan.reset_x_wires)
    em.builder.tick()
    for k in range(1, cycles + 1):
        for layer in pre_cycle_gates.get(k, ()):
            for name, wires in layer:
                em.builder.append(name, wires)
            em.builder.tick()
        _emit_cycle(em, plan, k)
    # transversal readout at the rest positions
    em._set_rot([(w, False) for w in data_wires])
    em.builder.append("MX" if basis == "X" else "MZ", data_wires)
    for w in data_wires:
        em.labels.append(("final", w))
    em.mark("final")

    physical = em.builder.build()
    run = run_noiseless(physical)
    forms = run.measurements
    labels = em.labels
    rec_of = _record_index(labels)

    annotations: dict[object, list[_Annotation]] = {}
    for k in range(1, cycles + 1):
        dets: list[_Annotation] = []
        for tw in plan.tiles:
            for b in ("Z", "X"):
                # compare against the previous cycle's record of the
                # (gate-transported) stabilizer so a persistent data error
                # fires each detector only once, at the cycle it appeared
                seed = {rec_of[("stab", tw.tile_index, k, b)]}
                if k > 1:
                    prev = compare_maps.get(k, {}).get(b, b)
                    for pb in ("X", "Z") if prev == "Y" else (prev,):
                        seed.add(rec_of[("stab", tw.tile_index, k - 1, pb)])
                target = 0
                for r in seed:
                    target ^= form_vars(forms[r])
                cands = [
                    c
                    for c in _stab_candidates(labels, (k - 1, k), below=max(seed))
                    if c not in seed
                ]
                extra = solve_parity(forms, target, cands)
                if extra is None:
                    continue  # genuinely random (e.g. first-cycle cross basis)
                dets.append(
                    _Annotation(
                        "DETECTOR",
                        sorted(seed ^ set(extra)),
                        coords=(tw.tile_index, k, b),
                    )
                )
        annotations[("cycle", k)] = dets

    final_dets: list[_Annotation] = []
    for tw, tile in zip(plan.tiles, layout.tiles):
        seed = {rec_of[("final", q)] for q in tile.data_support}
        # compare the readout parity with the tile's last stabilizer record
        seed.add(rec_of[("stab", tw.tile_index, cycles, basis)])
        target = 0
        for r in seed:
            target ^= form_vars(forms[r])
        cands = [
            c for c in _stab_candidates(labels, (cycles - 1, cycles)) if c not in seed
        ]
        extra = solve_parity(forms, target, cands)
        if extra is None:
            raise AssertionError(
                f"boundary parity of tile {tw.tile_index} is not deterministic"
            )
        final_dets.append(
            _Annotation(
                "DETECTOR",
                sorted(seed ^ set(extra)),
                coords=(tw.tile_index, cycles + 1, basis),
            )
        )
    logical = layout.logical_z if basis == "Z" else layout.logical_x
    obs_recs = [rec_of[("final", q)] for q in logical]
    target = 0
    for r in obs_recs:
        target ^= form_vars(forms[r])
    extra = solve_parity(
        forms, target, _stab_candidates(labels, tuple(range(1, cycles + 1)))
    )
    if extra is None:
        raise AssertionError("logical readout is not deterministic")
    final_dets.append(
        _Annotation(
            "OBSERVABLE_INCLUDE", sorted(set(obs_recs) ^ set(extra)), obs_index=0
        )
    )
    annotations["final"] = final_dets

    return _splice_annotations(physical, annotations, em.points, metadata)


def memory_experiment(
    layout_or_distance: CodeLayout | int,
    basis: str = "Z",
    cycles: int = 1,
    deformed: bool = False,
    naive: bool = False,
) -> Circuit:
    """Logical memory: prepare, run stabilizer cycles, read out the data.

    ``basis`` selects the prepared and measured logical eigenbasis.  The
    returned circuit carries one logical observable (index 0) and detectors
    tagged ``(tile, cycle, stabilizer basis)``; final-readout boundary
    detectors use cycle index ``cycles + 1``.
    """
    from .geometry import apply_deformation, build_triangular_code

    if isinstance(layout_or_distance, CodeLayout):
        layout = layout_or_distance
    else:
        layout = build_triangular_code(layout_or_distance)
        if deformed or naive:
            layout = apply_deformation(layout)
    if deformed and naive:
        raise ValueError("deformed and naive are mutually exclusive")
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    if cycles < 1:
        raise ValueError("at least one stabilizer cycle is required")
    variant = (
        "naive" if naive else ("deformed" if layout.deformed else "original")
    )
    plan = plan_cycle(layout, variant)
    return _logical_experiment(
        layout,
        plan,
        basis,
        cycles,
        pre_cycle_gates={},
        compare_maps={},
        metadata={
            "kind": "memory",
            "distance": layout.distance,
            "basis": basis,
            "cycles": cycles,
            "variant": variant,
            "layers_per_cycle": plan.num_layers,
        },
    )


# ---------------------------------------------------------------------------
# Logical randomized benchmarking
# ---------------------------------------------------------------------------

def lrb_circuit(
    sequence: tuple[CliffordElement, ...], distance: int = 3
) -> Circuit:
    """One benchmarking run: prepare the logical zero state, apply each
    Clifford as a transversal layer followed by a stabilizer cycle, apply the
    recovery (the inverse of the composite) before one final cycle, and read
    out the data in Z.  Detector comparisons across a gate follow the
    stabilizer-label permutation of its inverse."""
    from .geometry import build_triangular_code

    if distance != 3:
        raise ValueError("benchmarking circuits are generated at distance 3")
    layout = build_triangular_code(distance)
    plan = plan_cycle(layout, "original")
    identity = clifford_elements()[0]
    pre_gates: dict[int, list] = {}
    compare: dict[int, dict[str, str]] = {}
    total = identity
    for k, elem in enumerate(sequence, start=1):
        if elem.name != "I":
            pre_gates[k] = _element_layers(elem, layout)
        compare[k] = stabilizer_label_map(clifford_inverse(elem))
        total = clifford_compose(elem, total)
    recovery = clifford_inverse(total)
    k_final = len(sequence) + 1
    if recovery.name != "I":
        pre_gates[k_final] = _element_layers(recovery, layout)
    compare[k_final] = stabilizer_label_map(total)
    return _logical_experiment(
        layout,
        plan,
        "Z",
        k_final,
        pre_gates,
        compare,
        metadata={
            "kind": "lrb",
            "distance": distance,
            "basis": "Z",
            "cycles": k_final,
            "variant": "original",
            "sequence": ",".join(e.name for e in sequence),
            "recovery": recovery.name,
        },
    )


# ---------------------------------------------------------------------------
# Arbitrary-state injection
# ---------------------------------------------------------------------------

def _perfect_matchings(items: list[int]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        for m in _perfect_matchings(rest[:i] + rest[i + 1 :]):
            yield [(first, partner)] + m


def _injection_pairs(layout: CodeLayout) -> tuple[int, list[tuple[int, int]]]:
    """Injection qubit and the Bell-pair matching of the remaining data.

    The pair holding the two other logical-support qubits forces the injection
    qubit's X and Z to extend to the logical operators.  The remaining pairs
    are matched so every tile away from the injection qubit has its support
    tiled by whole pairs, making its stabilizers deterministic from the start.
    """
    data = sorted(q.index for q in layout.data_qubits)
    logical = set(layout.logical_x)
    for q in sorted(logical):
        forced = tuple(sorted(logical - {q}))
        rest = [d for d in data if d not in logical]
        for matching in _perfect_matchings(rest):
            pairs = [forced] + [tuple(sorted(m)) for m in matching]
            ok = True
            for tile in layout.tiles:
                sup = set(tile.data_support)
                if q in sup:
                    continue
                if any(len(sup & set(pr)) == 1 for pr in pairs):
                    ok = False
                    break
            if ok:
                return q, pairs
    raise SchedulingError("no Bell-pair matching covers the outer tiles")


def _bell_routes(
    layout: CodeLayout, plan: CyclePlan, pairs: list[tuple[int, int]]
) -> list[tuple[tuple[int, int], int, bool]]:
    """Assign each Bell pair an intermediate auxiliary wire.

    Returns (pair, auxiliary wire, starts_in_plus) triples; |0>-initialized
    auxiliaries are preferred since their growth circuit needs one fewer
    two-qubit gate.
    """
    z_aux = set(plan.reset_z_wires)
    x_aux = set(plan.reset_x_wires)
    taken: set[int] = set()
    routes = []
    for a, b in pairs:
        cands: list[int] = []
        for tile, tw in zip(layout.tiles, plan.tiles):
            sup = set(tile.data_support)
            if a in sup and b in sup:
                cands.extend((tw.z_aux_wire, tw.x_aux_wire))
        zc = [m for m in cands if m in z_aux and m not in taken]
        xc = [m for m in cands if m in x_aux and m not in taken]
        if zc:
            chosen, plus = zc[0], False
        elif xc:
            chosen, plus = xc[0], True
        else:
            raise SchedulingError(f"no free auxiliary adjacent to pair {(a, b)}")
        taken.add(chosen)
        routes.append(((a, b), chosen, plus))
    return routes


def injection_circuit(theta: float, phi: float, tomo_basis: str = "Z") -> Circuit:
    """Grow an arbitrary single-qubit state into the distance-3 code.

    The injection qubit is prepared as RZ(phi) RY(theta) |0> (declared in the
    ``prep`` metadata and applied by the simulators); the six other data
    qubits are initialized pairwise into Bell states through intermediate
    auxiliary qubits, one stabilizer cycle projects into the code, and all
    data qubits are read out transversally in ``tomo_basis``.  Emitted
    detectors are exactly the parities that are deterministic for every
    injected state; the observable estimates the logical Pauli, up to the
    classical sign recorded as ``observable_flip`` in the metadata.
    """
    from .geometry import build_triangular_code

    if tomo_basis not in ("X", "Y", "Z"):
        raise ValueError(f"tomo_basis must be 'X', 'Y' or 'Z', got {tomo_basis!r}")
    layout = build_triangular_code(3)
    plan = plan_cycle(layout, "original")
    inj, pairs = _injection_pairs(layout)
    routes = _bell_routes(layout, plan, pairs)
    data_wires = sorted(q.index for q in layout.data_qubits)

    rz_data, rx_data = [inj], []
    route_gates: list[list[tuple[int, int]]] = []
    for (a, b), m, plus in routes:
        if plus:
            # Bell(m, a) from the auxiliary's |+>, then swap m <-> b; the
            # auxiliary ends back in |+> ready for the stabilizer cycle
            rz_data.append(a)
            rx_data.append(b)
            route_gates.append([(m, a), (m, b), (b, m), (m, b)])
        else:
            # Bell(a, m) from |+> on a, then move m's half onto b; the
            # auxiliary ends back in |0>
            rx_data.append(a)
            rz_data.append(b)
            route_gates.append([(a, m), (m, b), (b, m)])

    em = _Emitter(layout.num_qubits)
    em.builder.append("RZ", sorted(rz_data))
    em.builder.append("RX", sorted(rx_data))
    em.builder.append("RZ", plan.reset_z_wires)
    em.builder.append("RX", plan.reset_x_wires)
    prep_at = len(em.builder._instructions)  # anchored on the first tick;
    # annotations are spliced later in the circuit, so the index is stable
    em.builder.tick()
    for layer in range(max(len(g) for g in route_gates)):
        em.cnot_layer(sorted(g[layer] for g in route_gates if len(g) > layer))
    _emit_cycle(em, plan, 1)

    em._set_rot([(w, False) for w in data_wires])
    if tomo_basis == "Y":
        # S_DAG then H rotates +Y eigenstates onto |0>, so the plain Z
        # readout reports the per-qubit Y outcome with a + sign
        em.builder.append("S_DAG", data_wires)
        em.builder.tick()
        em.builder.append("H", data_wires)
        em.builder.tick()
    em.builder.append("MX" if tomo_basis == "X" else "MZ", data_wires)
    em.labels.extend(("final", w) for w in data_wires)
    em.mark("final")
    physical = em.builder.build()

    # Determinism analysis: replace the injected state by one half of a Bell
    # pair with a hidden steering qubit.  A parity that is deterministic for
    # the maximally mixed input is deterministic for every input state, and
    # the steering qubit's readout form is exactly the input's tomography bit.
    steer = layout.num_qubits
    shadow = list(physical.instructions)
    shadow[prep_at:prep_at] = [
        Instruction("H", (inj,)),
        Instruction("CNOT", (inj, steer)),
    ]
    if tomo_basis == "Y":
        shadow += [
            Instruction("S_DAG", (steer,)),
            Instruction("H", (steer,)),
            Instruction("MZ", (steer,)),
        ]
    else:
        shadow.append(
            Instruction("MX" if tomo_basis == "X" else "MZ", (steer,))
        )
    run = run_noiseless(Circuit(layout.num_qubits + 1, tuple(shadow)))
    forms = run.measurements
    steer_form = forms[-1]
    rec_of = _record_index(em.labels)
    # solving over forms shifted by one bit folds the constant term into the
    # elimination, so solutions are parities that are exactly 0, not merely
    # deterministic
    full = [f << 1 for f in forms]
    stab_recs = _stab_candidates(em.labels, (1,))

    dets: list[_Annotation] = []
    for tw in plan.tiles:
        for b in ("Z", "X"):
            seed = rec_of[("stab", tw.tile_index, 1, b)]
            extra = solve_parity(
                full, forms[seed], [c for c in stab_recs if c != seed]
            )
            if extra is None:
                if is_deterministic(forms[seed]):
                    raise AssertionError(
                        "deterministic stabilizer reads 1 at injection"
                    )
                continue  # depends on the injected state
            dets.append(
                _Annotation(
                    "DETECTOR",
                    sorted({seed} ^ set(extra)),
                    coords=(tw.tile_index, 1, b),
                )
            )

    final_dets: list[_Annotation] = []
    for tw, tile in zip(plan.tiles, layout.tiles):
        seed = {rec_of[("final", q)] for q in tile.data_support}
        target = 0
        for r in seed:
            target ^= forms[r]
        extra = solve_parity(full, target, stab_recs)
        if extra is None:
            raise AssertionError(
                f"boundary parity of tile {tw.tile_index} is not deterministic"
            )
        final_dets.append(
            _Annotation(
                "DETECTOR",
                sorted(seed ^ set(extra)),
                coords=(tw.tile_index, 2, tomo_basis),
            )
        )

    obs_recs = [rec_of[("final", q)] for q in sorted(layout.logical_x)]
    residual = steer_form
    for r in obs_recs:
        residual ^= forms[r]
    extra = solve_parity(forms, form_vars(residual), stab_recs)
    if extra is None:
        raise AssertionError("logical tomography readout is not reconstructible")
    for r in extra:
        residual ^= forms[r]
    if not is_deterministic(residual):
        raise AssertionError("observable does not track the injected state")
    # Bell pairs anticorrelate in Y (Y (x) Y = -1 on the pair), so steering
    # in the Y basis flips the reported bit once more
    flip = form_const(residual) ^ (1 if tomo_basis == "Y" else 0)
    final_dets.append(
        _Annotation(
            "OBSERVABLE_INCLUDE", sorted(set(obs_recs) ^ set(extra)), obs_index=0
        )
    )

    return _splice_annotations(
        physical,
        {("cycle", 1): dets, "final": final_dets},
        em.points,
        metadata={
            "kind": "injection",
            "distance": 3,
            "basis": tomo_basis,
            "cycles": 1,
            "variant": "original",
            "theta": float(theta),
            "phi": float(phi),
            "observable_flip": flip,
            "prep": {
                "qubit": inj,
                "theta": float(theta),
                "phi": float(phi),
                "at": prep_at,
            },
        },
    )


def lrb_circuits(
    distance: int,
    n_cliffords: int,
    num_sequences: int,
    seed: int,
) -> list[tuple[Circuit, tuple[CliffordElement, ...]]]:
    """Random benchmarking sequences of a given length with their circuits."""
    if distance != 3:
        raise ValueError("benchmarking circuits are generated at distance 3")
    if n_cliffords < 0:
        raise ValueError("sequence length must be non-negative")
    rng = np.random.default_rng(seed)
    elements = clifford_elements()
    out = []
    for _ in range(num_sequences):
        seq = tuple(
            elements[int(i)] for i in rng.integers(0, len(elements), n_cliffords)
        )
        out.append((lrb_circuit(seq, distance), seq))
    return out


# ---------------------------------------------------------------------------
# Logical state teleportation by lattice surgery
# ---------------------------------------------------------------------------

_TELEPORT_INPUTS = {
    "0": ("Z", None),
    "1": ("Z", "X"),
    "+": ("X", None),
    "-": ("X", "Z"),
}


def _greedy_edge_layers(
    stabs: list[tuple[int, frozenset, object]], fan_out: bool
) -> list[list[tuple[int, int]]]:
    """Schedule auxiliary-data couplings into parallel CNOT layers.

    ``stabs`` holds (auxiliary wire, data support, label) triples.  Each
    coupling greedily takes the smallest layer free on both endpoints.
    ``fan_out`` selects auxiliary -> data orientation (X-type readout from
    a |+> auxiliary); otherwise data -> auxiliary (Z-type).
    """
    busy: dict[int, set[int]] = {}
    layers: list[list[tuple[int, int]]] = []
    for aux, support, _ in stabs:
        for d in sorted(support):
            c = 0
            while c in busy.get(aux, set()) or c in busy.get(d, set()):
                c += 1
            busy.setdefault(aux, set()).add(c)
            busy.setdefault(d, set()).add(c)
            while len(layers) <= c:
                layers.append([])
            layers[c].append((aux, d) if fan_out else (d, aux))
    return [sorted(lay) for lay in layers]


def _emit_patch_cycles(
    em: _Emitter,
    plan: CyclePlan,
    cycle: int,
    offsets: tuple[int, int],
    tile_bases: tuple[int, int],
) -> None:
    """One pair-measurement cycle on both patches simultaneously."""
    for layer in plan.layers:
        em.cnot_layer(sorted((a + o, b + o) for o in offsets for a, b in layer))
    wires_rot: list[tuple[int, bool]] = []
    labels: list[tuple] = []
    measured: set[int] = set()
    for o, base in zip(offsets, tile_bases):
        for tw in plan.tiles:
            wires_rot.append((tw.z_record_wire + o, False))
            wires_rot.append((tw.x_record_wire + o, True))
            measured.update((tw.z_record_wire + o, tw.x_record_wire + o))
            labels.append(("stab", tw.tile_index + base, cycle, "Z"))
            labels.append(("stab", tw.tile_index + base, cycle, "X"))
    rest = [
        (w, False) for w in range(em.builder.num_qubits) if w not in measured
    ]
    em.measure(wires_rot, labels, also_rot=rest)
    em.builder.append(
        "RZ", sorted(w + o for o in offsets for w in plan.reset_z_wires)
    )
    em.builder.append(
        "RX", sorted(w + o for o in offsets for w in plan.reset_x_wires)
    )
    em.mark(("cycle", cycle))
    em.builder.tick()


def _emit_merge_cycle(
    em: _Emitter,
    cycle: int,
    merge_z: list[tuple[int, frozenset, object]],
    merge_x: list[tuple[int, frozenset, object]],
    bell: tuple[int, int],
    first: bool,
    last: bool,
) -> None:
    """One merged-code cycle: every stabilizer reads out through its own
    auxiliary (Z fan-in first, then X fan-out, so each phase measures the
    intended operator exactly).  The first merge cycle starts by entangling
    the interface pair into a Bell state; the last one rotates the pair into
    the Bell basis and reads it out alongside the auxiliaries."""
    if first:
        em.cnot_layer([bell])
    for pairs in _greedy_edge_layers(merge_z, fan_out=False):
        em.cnot_layer(pairs)
    for pairs in _greedy_edge_layers(merge_x, fan_out=True):
        em.cnot_layer(pairs)
    if last:
        em.cnot_layer([bell])
    wires_rot: list[tuple[int, bool]] = []
    labels: list[tuple] = []
    for aux, _, t in merge_z:
        wires_rot.append((aux, False))
        labels.append(("stab", t, cycle, "Z"))
    for aux, _, t in merge_x:
        wires_rot.append((aux, True))
        labels.append(("stab", t, cycle, "X"))
    if last:
        wires_rot += [(bell[0], True), (bell[1], False)]
        labels += [("stab", "bell", cycle, "X"), ("stab", "bell", cycle, "Z")]
    measured = {w for w, _ in wires_rot}
    rest = [
        (w, False) for w in range(em.builder.num_qubits) if w not in measured
    ]
    em.measure(wires_rot, labels, also_rot=rest)
    em.builder.append("RZ", sorted(aux for aux, _, _ in merge_z))
    em.builder.append("RX", sorted(aux for aux, _, _ in merge_x))
    em.mark(("cycle", cycle))
    em.builder.tick()


def teleportation_circuit(input_state: str, tomo_basis: str = "Z") -> Circuit:
    """Teleport a logical state between two distance-3 patches.

    The sending patch is prepared in ``input_state`` (one of ``0 1 + -``)
    and the receiving patch in logical zero; after one separate stabilizer
    cycle per patch, three merge cycles measure the joint logical X parity
    by lattice surgery: the facing boundary tile of each patch expands by
    two interface data qubits (prepared in a Bell state at the start of the
    merge and read out in the Bell basis at its end) and two X-only
    interface stabilizers span the facing logical boundaries.  A final
    split cycle separates the patches again; the sender reads out in Z and
    the receiver in ``tomo_basis``.

    The emitted observable is the receiver's logical tomography bit with
    every teleportation frame correction (joint-X merge outcome and
    sender Z readout) folded in; its classical sign is recorded as
    ``observable_flip`` in the metadata.  Detectors are discovered exactly
    as the record parities that are deterministic for *every* input state,
    by steering the sender's logical qubit through half a hidden logical
    Bell pair.
    """
    from .geometry import build_triangular_code

    if input_state not in _TELEPORT_INPUTS:
        raise ValueError(
            f"input_state must be one of '0', '1', '+', '-', got {input_state!r}"
        )
    if tomo_basis not in ("X", "Y", "Z"):
        raise ValueError(f"tomo_basis must be 'X', 'Y' or 'Z', got {tomo_basis!r}")
    init_basis, pauli = _TELEPORT_INPUTS[input_state]

    layout = build_triangular_code(3)
    plan = plan_cycle(layout, "original")
    off = layout.num_qubits  # wire offset of the receiving patch
    i1, i2 = 2 * off, 2 * off + 1  # interface data pair
    v1_aux, v2_aux = 2 * off + 2, 2 * off + 3
    num_qubits = 2 * off + 4
    logical = sorted(layout.logical_x)  # same support as logical Z
    data1 = sorted(q.index for q in layout.data_qubits)
    data2 = [q + off for q in data1]

    # Merged stabilizer set for the merge cycles.  The boundary tile holding
    # the first two logical-support qubits expands by both interface qubits;
    # the two X-only interface stabilizers split the facing logical
    # boundaries so that V1 * V2 * X_i1 X_i2 equals the joint logical X and
    # every Z-type stabilizer (and the preserved joint logical Z) overlaps
    # each V evenly.
    supports = [set(t.data_support) for t in layout.tiles]
    expand = next(
        tw.tile_index
        for tw, sup in zip(plan.tiles, supports)
        if {logical[0], logical[1]} <= sup
    )
    merge_z: list[tuple[int, frozenset, object]] = []
    merge_x: list[tuple[int, frozenset, object]] = []
    for patch, o in enumerate((0, off)):
        for tw, sup in zip(plan.tiles, supports):
            s = {q + o for q in sup}
            if tw.tile_index == expand:
                s |= {i1, i2}
            t = tw.tile_index + 3 * patch
            merge_z.append((tw.z_aux_wire + o, frozenset(s), t))
            merge_x.append((tw.x_aux_wire + o, frozenset(s), t))
    v1 = frozenset({logical[0], logical[0] + off, i1})
    v2 = frozenset(
        {logical[1], logical[2], logical[1] + off, logical[2] + off, i2}
    )
    joint_x = frozenset(logical) | {q + off for q in logical}
    if (v1 ^ v2 ^ {i1, i2}) != joint_x:
        raise SchedulingError("interface stabilizers do not compose to the joint X")
    for _, sup, t in merge_z:
        for v in (v1, v2):
            if len(sup & v) % 2:
                raise SchedulingError(
                    f"interface stabilizer anticommutes with Z stabilizer {t}"
                )
    merge_x.append((v1_aux, v1, "V1"))
    merge_x.append((v2_aux, v2, "V2"))

    em = _Emitter(num_qubits)
    em.builder.append("RZ" if init_basis == "Z" else "RX", data1)
    em.builder.append(
        "RZ",
        sorted(
            data2
            + [i2]
            + [w + o for o in (0, off) for w in plan.reset_z_wires]
        ),
    )
    em.builder.append(
        "RX",
        sorted(
            [i1, v1_aux, v2_aux]
            + [w + o for o in (0, off) for w in plan.reset_x_wires]
        ),
    )
    steer_at = len(em.builder._instructions)  # anchored on the first tick
    em.builder.tick()
    pauli_drop: set[int] = set()
    if pauli is not None:
        pauli_drop.add(len(em.builder._instructions))
        em.builder.append(pauli, logical)
        em.builder.tick()
    _emit_patch_cycles(em, plan, 1, (0, off), (0, 3))
    for k in (2, 3, 4):
        _emit_merge_cycle(
            em, k, merge_z, merge_x, (i1, i2), first=(k == 2), last=(k == 4)
        )
    _emit_patch_cycles(em, plan, 5, (0, off), (0, 3))

    # transversal readout: sender in Z, receiver in the tomography basis
    if tomo_basis == "Y":
        em._set_rot([(w, False) for w in data1 + data2])
        em.builder.append("S_DAG", data2)
        em.builder.tick()
        em.builder.append("H", data2)
        em.builder.tick()
        em.builder.append("MZ", data1 + data2)
        em.labels.extend(("final", w) for w in data1 + data2)
    else:
        em.measure(
            [(w, False) for w in data1]
            + [(w, tomo_basis == "X") for w in data2],
            [("final", w) for w in data1 + data2],
        )
    em.mark("final")
    physical = em.builder.build()

    # Determinism analysis on a steered shadow: the sender's logical input is
    # replaced by half a logical Bell pair with a hidden steering qubit
    # (controlled joint-logical-Pauli from a |+> steer onto the unexcited
    # eigenbasis preparation), and the input Pauli layer is dropped.  A
    # parity deterministic for the maximally mixed logical input is
    # deterministic for every input, and the record sets transfer to the
    # physical circuit unchanged because the input layer is a logical Pauli.
    steer = num_qubits
    steering = [
        Instruction("H", (steer,)),
        Instruction(
            "CNOT" if init_basis == "Z" else "CZ",
            tuple(t for q in logical for t in (steer, q)),
        ),
    ]
    # the hidden pair correlates steer basis P with receiver basis P for a
    # Z-basis preparation (Y anticorrelated); an X-basis preparation holds
    # the Hadamard-rotated pair, swapping the X and Z roles (Y correlated)
    steer_basis = (
        tomo_basis
        if init_basis == "Z"
        else {"X": "Z", "Z": "X", "Y": "Y"}[tomo_basis]
    )
    shadow = [
        ins
        for idx, ins in enumerate(physical.instructions)
        if idx not in pauli_drop
    ]
    shadow[steer_at:steer_at] = steering
    if steer_basis == "Y":
        shadow += [
            Instruction("S_DAG", (steer,)),
            Instruction("H", (steer,)),
            Instruction("MZ", (steer,)),
        ]
    else:
        shadow.append(
            Instruction("MX" if steer_basis == "X" else "MZ", (steer,))
        )
    run = run_noiseless(Circuit(num_qubits + 1, tuple(shadow)))
    forms = run.measurements
    steer_form = forms[-1]
    labels = em.labels
    rec_of = _record_index(labels)
    # shifting forms by one bit folds the constant term into the
    # elimination, so solutions are parities that are exactly 0
    full = [f << 1 for f in forms]

    annotations: dict[object, list[_Annotation]] = {}
    for k in range(1, 6):
        dets: list[_Annotation] = []
        pool = _stab_candidates(labels, (k - 1, k))
        for seed, lab in enumerate(labels):
            if lab[0] != "stab" or lab[2] != k:
                continue
            extra = solve_parity(
                full, forms[seed], [c for c in pool if c < seed]
            )
            if extra is None:
                continue  # depends on the input state or the merge outcome
            dets.append(
                _Annotation(
                    "DETECTOR",
                    sorted({seed} ^ set(extra)),
                    coords=(lab[1], k, lab[3]),
                )
            )
        annotations[("cycle", k)] = dets

    final_dets: list[_Annotation] = []
    pool45 = _stab_candidates(labels, (4, 5))
    for patch, o, basis in ((0, 0, "Z"), (1, off, tomo_basis)):
        for tw, sup in zip(plan.tiles, supports):
            seed = {rec_of[("final", q + o)] for q in sup}
            target = 0
            for r in seed:
                target ^= forms[r]
            extra = solve_parity(full, target, pool45)
            if extra is None:
                raise AssertionError(
                    f"boundary parity of tile {tw.tile_index + 3 * patch}"
                    " is not deterministic"
                )
            final_dets.append(
                _Annotation(
                    "DETECTOR",
                    sorted(seed ^ set(extra)),
                    coords=(tw.tile_index + 3 * patch, 6, basis),
                )
            )

    obs_recs = [rec_of[("final", q + off)] for q in logical]
    residual = steer_form
    for r in obs_recs:
        residual ^= forms[r]
    cands = _stab_candidates(labels, (1, 2, 3, 4, 5)) + [
        rec_of[("final", q)] for q in data1
    ]
    extra = solve_parity(forms, form_vars(residual), cands)
    if extra is None:
        raise AssertionError("teleported readout is not reconstructible")
    for r in extra:
        residual ^= forms[r]
    if not is_deterministic(residual):
        raise AssertionError("observable does not track the input state")
    flip = form_const(residual) ^ (
        1 if (init_basis == "Z" and tomo_basis == "Y") else 0
    )
    final_dets.append(
        _Annotation(
            "OBSERVABLE_INCLUDE", sorted(set(obs_recs) ^ set(extra)), obs_index=0
        )
    )
    annotations["final"] = final_dets

    return _splice_annotations(
        physical,
        annotations,
        em.points,
        metadata={
            "kind": "teleportation",
            "distance": 3,
            "input_state": input_state,
            "basis": tomo_basis,
            "cycles": 5,
            "variant": "original",
            "observable_flip": flip,
        },
    )
