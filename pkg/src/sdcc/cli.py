"""Command-line pipeline driver.

Stages communicate only through files so each is independently testable and
resumable:

* ``generate``  -> circuit text (``.tcc``) plus a JSON metadata sidecar
* ``sample``    -> noisy detector/observable bits (``.npz``) plus sidecar
* ``dem``       -> detector error model text
* ``decode``    -> per-shot predictions (``.npz``) plus a stats JSON
* ``analyze``   -> decay-fit JSON from CSV points
* ``scan-threshold`` -> CSV grid of fitted logical errors per cycle

Every output embeds (tool version, full configuration, seed), and reruns
with identical configuration are byte-identical.  See ``FORMATS.md``.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import fit_lrb, fit_memory
from .builders import (
    injection_circuit,
    lrb_circuits,
    memory_experiment,
    teleportation_circuit,
)
from .circuit import Circuit, parse, serialize
from .decoders import DEFAULT_TIMEOUT, MLEDecoder
from .dem import dem_parse, dem_serialize, extract_dem
from .dense import MAX_QUBITS, dense_sample
from .noise import apply_si1000
from .simulator import NonCliffordError, ShotBatch, sample_pauli_frame

# ---------------------------------------------------------------------------
# plumbing helpers (importable without invoking click)
# ---------------------------------------------------------------------------

def build_circuit(
    exp: str,
    distance: int = 3,
    basis: str = "Z",
    cycles: int = 1,
    deformed: bool = False,
    naive: bool = False,
    theta: float = 0.0,
    phi: float = 0.0,
    tomo_basis: str = "Z",
    input_state: str = "0",
    sequence_length: int = 1,
    seed: int = 0,
) -> Circuit:
    """Construct the circuit described by a generation configuration."""
    if exp == "memory":
        return memory_experiment(
            distance, basis.upper(), cycles, deformed=deformed, naive=naive
        )
    if exp == "lrb":
        (circuit, _), = lrb_circuits(distance, sequence_length, 1, seed)
        return circuit
    if exp == "injection":
        return injection_circuit(theta, phi, tomo_basis.upper())
    if exp == "teleportation":
        return teleportation_circuit(input_state, tomo_basis.upper())
    raise ValueError(f"unknown experiment kind {exp!r}")


def _detector_coords(circuit: Circuit) -> list[tuple]:
    return [
        ins.coords or ()
        for ins in circuit.instructions
        if ins.name == "DETECTOR"
    ]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_circuit(circuit: Circuit, path: Path, config: dict) -> None:
    """Write ``path`` (.tcc) and a ``.json`` sidecar with coordinates."""
    path = Path(path)
    path.write_text(serialize(circuit))
    _write_json(
        path.with_suffix(".json"),
        {
            "version": __version__,
            "config": config,
            "metadata": circuit.meta,
            "num_qubits": circuit.num_qubits,
            "num_detectors": circuit.num_detectors,
            "detector_coords": [list(c) for c in _detector_coords(circuit)],
        },
    )


def sample_circuit(
    circuit: Circuit, p: float, shots: int, seed: int
) -> ShotBatch:
    """Apply SI1000 noise of strength p (0 keeps the circuit clean) and
    sample; non-stabilizer preparations fall back to the dense sampler."""
    noisy = apply_si1000(circuit, p) if p > 0 else circuit
    try:
        return sample_pauli_frame(noisy, shots, seed)
    except NonCliffordError:
        if circuit.num_qubits > MAX_QUBITS:
            raise
        return dense_sample(noisy, shots, seed)


def save_batch(batch: ShotBatch, path: Path, config: dict) -> None:
    path = Path(path)
    with io.BytesIO() as buf:
        np.savez(
            buf,
            detectors=batch.detectors,
            observable_flips=batch.observable_flips,
        )
        path.write_bytes(buf.getvalue())
    _write_json(
        path.with_suffix(".json"),
        {"version": __version__, "config": config, "shots": batch.shots},
    )


def load_batch(path: Path) -> ShotBatch:
    with np.load(path) as data:
        return ShotBatch(
            detectors=data["detectors"],
            observable_flips=data["observable_flips"],
        )


def decode_samples(
    dem, batch: ShotBatch, timeout: float
) -> tuple[np.ndarray, dict]:
    decoder = MLEDecoder(dem)
    preds = np.empty_like(batch.observable_flips)
    certified = 0
    for i, row in enumerate(batch.detectors):
        result = decoder.decode(row, timeout=timeout)
        preds[i] = result.observables
        certified += result.optimality == "Certified"
    errors = (preds != batch.observable_flips).any(axis=1)
    eps = float(errors.mean())
    stats = {
        "shots": batch.shots,
        "certified": certified,
        "logical_error": eps,
        "logical_error_stderr": float(
            np.sqrt(max(eps * (1 - eps), 0.0) / max(batch.shots, 1))
        ),
    }
    return preds, stats


def memory_logical_error(
    distance: int,
    p: float,
    cycles: int,
    shots: int,
    seed: int,
    basis: str = "Z",
    timeout: float = 0.25,
    deformed: bool = False,
) -> tuple[float, float]:
    """Logical error probability of a decoded memory run (one grid cell)."""
    circuit = memory_experiment(distance, basis, cycles, deformed=deformed)
    noisy = apply_si1000(circuit, p)
    dem = extract_dem(noisy)
    batch = sample_pauli_frame(noisy, shots, seed)
    _, stats = decode_samples(dem, batch, timeout)
    return stats["logical_error"], stats["logical_error_stderr"]


def _cell_seed(seed: int, *indices: int) -> int:
    return int(np.random.SeedSequence([seed, *indices]).generate_state(1)[0])


def _scan_cell(args):
    di, pi, ni, distance, p, n, shots, seed, basis, timeout, deformed = args
    eps, err = memory_logical_error(
        distance, p, n, shots, _cell_seed(seed, di, pi, ni), basis, timeout,
        deformed,
    )
    return di, pi, ni, eps, err


def scan_threshold(
    distances: list[int],
    ps: list[float],
    cycles: list[int],
    shots: int,
    seed: int = 0,
    basis: str = "Z",
    timeout: float = 0.25,
    workers: int | None = None,
    deformed: bool = False,
) -> list[dict]:
    """Fit the logical error per cycle on a (distance, noise) grid.

    Returns one row per grid cell with the fitted ``epc`` and its standard
    error plus the per-cycle-count raw probabilities.  Cell seeds derive
    deterministically from (seed, grid indices), so the result does not
    depend on the worker count.
    """
    if len(distances) < 2:
        raise ValueError("a threshold scan needs at least two distances")
    if len(cycles) < 3:
        raise ValueError("fitting the decay needs at least three cycle counts")
    jobs = [
        (di, pi, ni, d, p, n, shots, seed, basis, timeout, deformed)
        for di, d in enumerate(distances)
        for pi, p in enumerate(ps)
        for ni, n in enumerate(cycles)
    ]
    if workers is None:
        workers = int(os.environ.get("SDCC_WORKERS", "1"))
    if workers > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            cells = pool.map(_scan_cell, jobs)
    else:
        cells = [_scan_cell(job) for job in jobs]
    by_cell = {(di, pi, ni): (eps, err) for di, pi, ni, eps, err in cells}
    rows = []
    for di, d in enumerate(distances):
        for pi, p in enumerate(ps):
            pts = [(n, by_cell[(di, pi, ni)][0]) for ni, n in enumerate(cycles)]
            if p == 0:
                epc, err, eps0 = 0.0, 0.0, -0.5
            else:
                fit = fit_memory(pts)
                epc, err, eps0 = fit.epc, fit.epc_stderr, fit.eps0
            rows.append(
                {
                    "distance": d,
                    "p": p,
                    "epc": epc,
                    "epc_stderr": err,
                    "eps0": eps0,
                    "points": pts,
                    "point_stderrs": [
                        by_cell[(di, pi, ni)][1] for ni in range(len(cycles))
                    ],
                }
            )
    return rows


def crossing_summary(rows: list[dict]) -> dict:
    """Compare the two smallest distances at each noise strength."""
    distances = sorted({r["distance"] for r in rows})[:2]
    out = {}
    for p in sorted({r["p"] for r in rows}):
        cells = {
            r["distance"]: (r["epc"], r["epc_stderr"])
            for r in rows
            if r["p"] == p and r["distance"] in distances
        }
        if len(cells) < 2:
            continue
        (e_lo, s_lo), (e_hi, s_hi) = cells[distances[0]], cells[distances[1]]
        gap = e_hi - e_lo
        sigma = float(np.hypot(s_lo, s_hi)) or float("inf")
        out[str(p)] = {
            "epc_low_distance": e_lo,
            "epc_high_distance": e_hi,
            "gap": gap,
            "gap_sigmas": gap / sigma,
            "higher_distance_better": bool(gap < 0),
        }
    return out


# ---------------------------------------------------------------------------
# click commands
# ---------------------------------------------------------------------------

def _fail(message: str) -> None:
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Triangular color-code circuit workbench."""


@main.command()
@click.option("--exp", required=True,
              type=click.Choice(["memory", "lrb", "injection", "teleportation"]))
@click.option("--distance", "-d", default=3, show_default=True)
@click.option("--basis", default="Z", show_default=True)
@click.option("--cycles", default=1, show_default=True)
@click.option("--deformed", is_flag=True)
@click.option("--naive", is_flag=True)
@click.option("--theta", default=0.0, show_default=True)
@click.option("--phi", default=0.0, show_default=True)
@click.option("--tomo-basis", default="Z", show_default=True)
@click.option("--input-state", default="0", show_default=True)
@click.option("--sequence-length", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def generate(**config) -> None:
    """Build a circuit and write it with its metadata sidecar."""
    out = config.pop("out")
    try:
        circuit = build_circuit(**config)
    except ValueError as exc:
        _fail(str(exc))
    write_circuit(circuit, out, config)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--circuit", "circuit_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--p", default=0.0, show_default=True, help="SI1000 strength")
@click.option("--shots", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def sample(circuit_path: Path, p: float, shots: int, seed: int, out: Path) -> None:
    """Sample detector and observable bits of a (noisified) circuit."""
    circuit = parse(circuit_path.read_text())
    try:
        batch = sample_circuit(circuit, p, shots, seed)
    except (ValueError, NonCliffordError) as exc:
        _fail(str(exc))
    save_batch(
        batch, out,
        {"circuit": circuit_path.name, "p": p, "shots": shots, "seed": seed},
    )
    click.echo(f"wrote {out}")


@main.command()
@click.option("--circuit", "circuit_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--p", default=None, type=float,
              help="apply SI1000 first (for clean circuits)")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def dem(circuit_path: Path, p: float | None, out: Path) -> None:
    """Extract the detector error model of a noisy circuit."""
    circuit = parse(circuit_path.read_text())
    if p is not None:
        circuit = apply_si1000(circuit, p)
    try:
        model = extract_dem(circuit)
    except ValueError as exc:
        _fail(str(exc))
    Path(out).write_text(dem_serialize(model))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--dem", "dem_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--samples", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--timeout", default=DEFAULT_TIMEOUT, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def decode(dem_path: Path, samples: Path, timeout: float, out: Path) -> None:
    """Decode sampled syndromes with the most-likely-error decoder."""
    model = dem_parse(dem_path.read_text())
    batch = load_batch(samples)
    preds, stats = decode_samples(model, batch, timeout)
    out = Path(out)
    with io.BytesIO() as buf:
        np.savez(buf, predictions=preds)
        out.write_bytes(buf.getvalue())
    _write_json(
        out.with_suffix(".json"),
        {
            "version": __version__,
            "config": {
                "dem": dem_path.name,
                "samples": Path(samples).name,
                "timeout": timeout,
            },
            **stats,
        },
    )
    click.echo(json.dumps(stats, sort_keys=True))


def _read_points(path: Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        return [(float(r[0]), float(r[1])) for r in csv.reader(fh) if r]


@main.command()
@click.option("--fit", "kind", required=True, type=click.Choice(["memory", "lrb"]))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="CSV of (x, probability) rows")
@click.option("--interleaved", type=click.Path(exists=True, path_type=Path),
              help="second CSV for the lrb fit")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def analyze(kind: str, input_path: Path, interleaved: Path | None, out: Path) -> None:
    """Fit decay curves and write the parameters as JSON."""
    try:
        if kind == "memory":
            fit = fit_memory(_read_points(input_path))
            payload = {
                "eps0": fit.eps0,
                "epc": fit.epc,
                "eps0_stderr": fit.eps0_stderr,
                "epc_stderr": fit.epc_stderr,
                "degenerate": fit.degenerate,
            }
        else:
            if interleaved is None:
                raise ValueError("--fit lrb needs --interleaved")
            fit = fit_lrb(_read_points(input_path), _read_points(interleaved))
            payload = {
                "p_reference": fit.p_reference,
                "p_interleaved": fit.p_interleaved,
                "e_c": fit.e_c,
                "e_c_stderr": fit.e_c_stderr,
                "degenerate": fit.degenerate,
            }
    except ValueError as exc:
        _fail(str(exc))
    _write_json(Path(out), {"version": __version__, "fit": kind, **payload})
    click.echo(json.dumps(payload, sort_keys=True))


@main.command("scan-threshold")
@click.option("--distances", default="3,5", show_default=True)
@click.option("--ps", default="0.003,0.005,0.008", show_default=True)
@click.option("--cycles", default="1,3,5,7,9", show_default=True)
@click.option("--shots", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--basis", default="Z", show_default=True)
@click.option("--timeout", default=0.25, show_default=True,
              help="per-shot decode budget in seconds")
@click.option("--deformed", is_flag=True,
              help="use the mid-cycle leakage-removal layout variant")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def scan_threshold_cmd(
    distances, ps, cycles, shots, seed, basis, timeout, deformed, out
) -> None:
    """Fit logical error per cycle over a (distance, noise) grid."""
    try:
        rows = scan_threshold(
            [int(x) for x in distances.split(",")],
            [float(x) for x in ps.split(",")],
            [int(x) for x in cycles.split(",")],
            shots,
            seed=seed,
            basis=basis,
            timeout=timeout,
            deformed=deformed,
        )
    except ValueError as exc:
        _fail(str(exc))
    out = Path(out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance", "p", "epc", "epc_stderr"])
        for r in rows:
            writer.writerow([r["distance"], r["p"], r["epc"], r["epc_stderr"]])
    _write_json(
        out.with_suffix(".json"),
        {
            "version": __version__,
            "config": {
                "distances": distances,
                "ps": ps,
                "cycles": cycles,
                "shots": shots,
                "seed": seed,
                "basis": basis,
                "timeout": timeout,
                "deformed": deformed,
            },
            "rows": rows,
            "crossing": crossing_summary(rows),
        },
    )
    click.echo(json.dumps(crossing_summary(rows), sort_keys=True))


if __name__ == "__main__":  # pragma: no cover
    main()
