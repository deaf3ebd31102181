"""Shot-sample file formats.

``.b8``: one record per shot, detectors then observable flips, bit-packed
little-endian within each byte (bit k of byte j is column 8j+k), records
padded to whole bytes.

``.01``: one text line per shot of '0'/'1' characters, detectors then
observables; for debugging.
"""
from __future__ import annotations

import numpy as np

from .simulator import ShotBatch


def _concat(batch: ShotBatch) -> np.ndarray:
    return np.concatenate([batch.detectors, batch.observable_flips], axis=1)


def write_b8(batch: ShotBatch, path: str) -> None:
    bits = _concat(batch)
    packed = np.packbits(bits, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(packed.tobytes())


def read_b8(path: str, num_detectors: int, num_observables: int) -> ShotBatch:
    width = num_detectors + num_observables
    bytes_per_shot = (width + 7) // 8
    with open(path, "rb") as fh:
        raw = fh.read()
    if bytes_per_shot == 0:
        return ShotBatch(
            detectors=np.zeros((0, 0), dtype=np.uint8),
            observable_flips=np.zeros((0, 0), dtype=np.uint8),
        )
    if len(raw) % bytes_per_shot:
        raise ValueError(
            f"file size {len(raw)} is not a multiple of the "
            f"{bytes_per_shot}-byte record size"
        )
    shots = len(raw) // bytes_per_shot
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(shots, bytes_per_shot)
    bits = np.unpackbits(packed, axis=1, bitorder="little")[:, :width]
    return ShotBatch(
        detectors=bits[:, :num_detectors].copy(),
        observable_flips=bits[:, num_detectors:].copy(),
    )


def write_01(batch: ShotBatch, path: str) -> None:
    bits = _concat(batch)
    with open(path, "w") as fh:
        for row in bits:
            fh.write("".join("1" if b else "0" for b in row) + "\n")


def read_01(path: str, num_detectors: int) -> ShotBatch:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([1 if ch == "1" else 0 for ch in line])
    bits = np.array(rows, dtype=np.uint8).reshape(len(rows), -1)
    return ShotBatch(
        detectors=bits[:, :num_detectors].copy(),
        observable_flips=bits[:, num_detectors:].copy(),
    )
