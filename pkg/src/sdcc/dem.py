"""Detector error model extraction.

Every noise channel in a circuit is decomposed into independent Pauli
components (a 1-qubit depolarizing channel of strength p into three
components of probability p/3, a 2-qubit one into fifteen of p/15; flip
channels are single components).  Each component is injected as a Pauli
frame at its circuit position and propagated to its symptom: the set of
detectors it flips and the observables it flips.  Components sharing a
symptom are merged with p' = p1 + p2 - 2*p1*p2.

Propagation is batched: one frame-simulator shot lane per component,
processed in chunks to bound memory.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Instruction
from .simulator import sample_pauli_frame

_PROB_CAP = 0.5 - 1e-9

# Pauli strings for the 15 two-qubit depolarizing components, bit order
# (x_a, z_a, x_b, z_b) matching the frame sampler's decomposition.
_PAULI_1Q = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


@dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...]
    provenance: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        if not (0.0 < self.probability <= 0.5):
            raise ValueError(f"mechanism probability {self.probability} out of (0, 1/2]")
        if not self.detectors and not self.observables:
            raise ValueError("mechanism with empty symptom")


@dataclass(frozen=True)
class DetectorErrorModel:
    num_detectors: int
    num_observables: int
    mechanisms: tuple[ErrorMechanism, ...]
    silent_components: int = 0

    def __post_init__(self) -> None:
        seen = set()
        for m in self.mechanisms:
            key = (m.detectors, m.observables)
            if key in seen:
                raise ValueError(f"duplicate mechanism signature {key}")
            seen.add(key)


def merge_probability(p1: float, p2: float) -> float:
    """Probability that an odd number of the two independent faults occur."""
    return p1 + p2 - 2.0 * p1 * p2


def _pauli_components(
    circuit: Circuit,
) -> list[tuple[int, tuple[int, ...], tuple[int, ...], float, str]]:
    """(instruction index, X-flipped qubits, Z-flipped qubits, prob, label)."""
    comps = []
    for idx, ins in enumerate(circuit.instructions):
        if not ins.is_noise or not ins.arg:
            continue
        p = ins.arg
        if ins.name == "X_ERROR":
            for q in ins.targets:
                comps.append((idx, (q,), (), p, f"X{q}"))
        elif ins.name == "Z_ERROR":
            for q in ins.targets:
                comps.append((idx, (), (q,), p, f"Z{q}"))
        elif ins.name == "DEPOLARIZE1":
            for q in ins.targets:
                for pauli, (xb, zb) in _PAULI_1Q.items():
                    comps.append(
                        (idx, (q,) if xb else (), (q,) if zb else (), p / 3, f"{pauli}{q}")
                    )
        elif ins.name == "DEPOLARIZE2":
            for a, b in zip(ins.targets[::2], ins.targets[1::2]):
                for mask in range(1, 16):
                    xa, za = (mask >> 3) & 1, (mask >> 2) & 1
                    xb, zb = (mask >> 1) & 1, mask & 1
                    xs = tuple(q for q, bit in ((a, xa), (b, xb)) if bit)
                    zs = tuple(q for q, bit in ((a, za), (b, zb)) if bit)
                    pa = "IXZY"[xa + 2 * za]
                    pb = "IXZY"[xb + 2 * zb]
                    comps.append((idx, xs, zs, p / 15, f"{pa}{a}*{pb}{b}"))
    return comps


def _silence_noise(circuit: Circuit) -> Circuit:
    """Same circuit with every noise probability set to zero.

    Instruction indices are preserved so injected frames land at the same
    positions as the original noise channels.
    """
    out = []
    for ins in circuit.instructions:
        if ins.is_noise and ins.arg:
            out.append(Instruction(ins.name, ins.targets, 0.0, ins.coords))
        else:
            out.append(ins)
    return Circuit(circuit.num_qubits, tuple(out), circuit.metadata)


def propagate_faults(
    circuit: Circuit,
    faults: list[tuple[int, tuple[int, ...], tuple[int, ...]]],
    chunk: int = 4096,
) -> tuple[np.ndarray, np.ndarray]:
    """Symptoms of planted faults: (detectors, observables) bit matrices.

    Each fault is (instruction index, X-flipped qubits, Z-flipped qubits),
    injected just before that instruction executes in an otherwise
    noiseless run.
    """
    clean = _silence_noise(circuit)
    n = circuit.num_qubits
    det_rows, obs_rows = [], []
    for start in range(0, len(faults), chunk):
        batch_faults = faults[start : start + chunk]
        shots = len(batch_faults)
        injected: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for lane, (idx, xs, zs) in enumerate(batch_faults):
            fx, fz = injected.setdefault(
                idx,
                (
                    np.zeros((n, shots), dtype=np.uint8),
                    np.zeros((n, shots), dtype=np.uint8),
                ),
            )
            for q in xs:
                fx[q, lane] ^= 1
            for q in zs:
                fz[q, lane] ^= 1
        batch = sample_pauli_frame(clean, shots, seed=0, injected_frames=injected)
        det_rows.append(batch.detectors)
        obs_rows.append(batch.observable_flips)
    if not det_rows:
        return (
            np.zeros((0, circuit.num_detectors), dtype=np.uint8),
            np.zeros((0, circuit.num_observables), dtype=np.uint8),
        )
    return np.concatenate(det_rows), np.concatenate(obs_rows)


def extract_dem(circuit: Circuit) -> DetectorErrorModel:
    """Detector error model of a noisy Clifford circuit."""
    comps = _pauli_components(circuit)
    dets, obs = propagate_faults(circuit, [(i, xs, zs) for i, xs, zs, _, _ in comps])
    merged: dict[tuple, tuple[float, list]] = {}
    silent = 0
    for lane, (idx, _, _, p, label) in enumerate(comps):
        d = tuple(int(i) for i in np.nonzero(dets[lane])[0])
        o = tuple(int(i) for i in np.nonzero(obs[lane])[0])
        if not d and not o:
            silent += 1
            continue
        key = (d, o)
        if key in merged:
            q, prov = merged[key]
            merged[key] = (merge_probability(q, p), prov + [(idx, label)])
        else:
            merged[key] = (p, [(idx, label)])
    mechanisms = []
    for (d, o), (p, prov) in sorted(merged.items()):
        if p > _PROB_CAP:
            warnings.warn(
                f"mechanism probability {p} clamped to 1/2; weights degenerate",
                stacklevel=2,
            )
            p = _PROB_CAP
        mechanisms.append(ErrorMechanism(p, d, o, tuple(prov)))
    return DetectorErrorModel(
        num_detectors=circuit.num_detectors,
        num_observables=circuit.num_observables,
        mechanisms=tuple(mechanisms),
        silent_components=silent,
    )


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_ERR_RE = re.compile(r"^error\(([^)]+)\)((?:\s+[DL]\d+)*)\s*$")


def dem_serialize(dem: DetectorErrorModel) -> str:
    lines = [f"DEM detectors={dem.num_detectors} observables={dem.num_observables}"]
    for m in dem.mechanisms:
        parts = [f"error({m.probability!r})"]
        parts.extend(f"D{i}" for i in m.detectors)
        parts.extend(f"L{i}" for i in m.observables)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dem_parse(text: str) -> DetectorErrorModel:
    num_det = num_obs = None
    mechanisms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("DEM"):
            header = dict(
                part.split("=", 1) for part in line.split()[1:] if "=" in part
            )
            num_det = int(header["detectors"])
            num_obs = int(header["observables"])
            continue
        m = _ERR_RE.match(line)
        if not m:
            raise ValueError(f"line {lineno}: malformed mechanism {line!r}")
        p = float(m.group(1))
        if not (0.0 < p <= 0.5):
            raise ValueError(f"line {lineno}: probability {p} out of (0, 1/2]")
        dets, obss = [], []
        for tok in m.group(2).split():
            (dets if tok[0] == "D" else obss).append(int(tok[1:]))
        mechanisms.append(ErrorMechanism(p, tuple(sorted(dets)), tuple(sorted(obss))))
    if num_det is None:
        num_det = 1 + max((max(m.detectors, default=-1) for m in mechanisms), default=-1)
        num_obs = 1 + max((max(m.observables, default=-1) for m in mechanisms), default=-1)
    return DetectorErrorModel(num_det, num_obs, tuple(mechanisms))


# ---------------------------------------------------------------------------
# Sampling a DEM directly (oracle / reweighting utilities)
# ---------------------------------------------------------------------------

def sample_dem(dem: DetectorErrorModel, shots: int, seed: int):
    """Independent-Bernoulli sampling of the mechanisms.

    Returns (detector bits, observable bits, fired mechanism mask) with
    shapes (shots, D), (shots, L), (shots, M).
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    m = len(dem.mechanisms)
    fired = (rng.random((shots, m)) < np.array([e.probability for e in dem.mechanisms])).astype(np.uint8)
    dets = np.zeros((shots, dem.num_detectors), dtype=np.uint8)
    obs = np.zeros((shots, dem.num_observables), dtype=np.uint8)
    for j, mech in enumerate(dem.mechanisms):
        col = fired[:, j]
        for d in mech.detectors:
            dets[:, d] ^= col
        for o in mech.observables:
            obs[:, o] ^= col
    return dets, obs, fired
