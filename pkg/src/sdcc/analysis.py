"""Post-processing: detection statistics, decay fits, tomography, bounds.

All functions are pure and operate on in-memory arrays.  Conventions:

* a measured logical bit ``m`` maps to an expectation via <O> = 1 - 2<m>;
* fits are plain nonlinear least squares on the raw probabilities (no log
  transform, since decays can cross the 1/2 noise floor), with standard
  errors taken from the residual-scaled Gauss-Newton covariance;
* fidelity uncertainties use bootstrap resampling with per-resample seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .simulator import ShotBatch

_SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def binomial_stderr(p: float, n: int) -> float:
    """Standard error of a probability estimated from n Bernoulli trials."""
    if n <= 0:
        return float("inf")
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def observable_expectation(
    bits: np.ndarray, flip: int = 0
) -> tuple[float, float]:
    """<O> = 1 - 2<m> of a logical bit array, with its standard error."""
    bits = np.asarray(bits, dtype=np.uint8) ^ (flip & 1)
    p = float(bits.mean())
    return 1.0 - 2.0 * p, 2.0 * binomial_stderr(p, bits.size)


# ---------------------------------------------------------------------------
# detection probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionStats:
    """Per-detector firing probabilities with coordinate aggregations."""

    probabilities: dict[tuple, tuple[float, float]]  # coord -> (p, stderr)
    by_cycle: dict[object, float]  # cycle -> mean p_det
    by_weight: dict[int, float]  # stabilizer weight -> mean p_det


def detection_probabilities(
    batch: ShotBatch,
    coords: list[tuple],
    tile_weights: dict[object, int] | None = None,
) -> DetectionStats:
    """Fraction of shots firing each detector, keyed by (tile, cycle, basis).

    ``tile_weights`` optionally maps tile identifiers to stabilizer weights
    for the weight-class aggregation.
    """
    if len(coords) != batch.num_detectors:
        raise ValueError(
            f"got {len(coords)} coordinates for {batch.num_detectors} detectors"
        )
    if any(len(c) < 3 for c in coords):
        raise ValueError("detector coordinates must carry (tile, cycle, basis)")
    rates = batch.detectors.mean(axis=0)
    shots = batch.shots
    probabilities = {
        tuple(c): (float(r), binomial_stderr(float(r), shots))
        for c, r in zip(coords, rates)
    }
    by_cycle: dict[object, list[float]] = {}
    by_weight: dict[int, list[float]] = {}
    for c, r in zip(coords, rates):
        by_cycle.setdefault(c[1], []).append(float(r))
        if tile_weights is not None and c[0] in tile_weights:
            by_weight.setdefault(tile_weights[c[0]], []).append(float(r))
    return DetectionStats(
        probabilities=probabilities,
        by_cycle={k: float(np.mean(v)) for k, v in sorted(by_cycle.items(), key=str)},
        by_weight={k: float(np.mean(v)) for k, v in sorted(by_weight.items())},
    )


# ---------------------------------------------------------------------------
# exponential decay fits
# ---------------------------------------------------------------------------

def _decay_fit(
    xs: np.ndarray, ys: np.ndarray, x0: tuple[float, float], bounds
) -> tuple[np.ndarray, np.ndarray]:
    """Fit y = a * q^x + 1/2; returns (params, stderr) for (a, q)."""

    def residuals(p):
        a, q = p
        return a * q**xs + 0.5 - ys

    def jacobian(p):
        a, q = p
        return np.stack(
            [q**xs, a * xs * q ** np.maximum(xs - 1, 0)], axis=1
        )

    fit = least_squares(
        residuals, x0, jac=jacobian, bounds=bounds,
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    dof = max(len(xs) - 2, 1)
    sigma2 = 2.0 * fit.cost / dof
    jtj = fit.jac.T @ fit.jac
    try:
        cov = sigma2 * np.linalg.inv(jtj)
        err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        err = np.full(2, float("inf"))
    return fit.x, err


@dataclass(frozen=True)
class MemoryFitResult:
    """Fit of the logical error decay eps(n) = eps0 * (1 - 2*epc)^n + 1/2."""

    eps0: float
    epc: float
    eps0_stderr: float
    epc_stderr: float
    points: tuple[tuple[float, float], ...]
    degenerate: bool = False


def fit_memory(points) -> MemoryFitResult:
    """Fit (cycles, logical error) points to eps0 * (1 - 2*epc)^n + 1/2."""
    pts = sorted((float(n), float(e)) for n, e in points)
    xs = np.array([n for n, _ in pts])
    ys = np.array([e for _, e in pts])
    if len(set(xs)) < 3:
        raise ValueError("need at least three distinct cycle counts")
    if np.any((ys < 0) | (ys > 1)):
        raise ValueError("logical error probabilities must lie in [0, 1]")
    (a, q), (a_err, q_err) = _decay_fit(
        xs, ys, x0=(-0.5, 0.9), bounds=([-1.0, 0.0], [1.0, 1.0])
    )
    epc = (1.0 - q) / 2.0
    epc_err = q_err / 2.0
    degenerate = bool(np.max(np.abs(ys - 0.5)) < 1e-9 or epc_err > 0.25)
    return MemoryFitResult(
        eps0=float(a),
        epc=float(epc),
        eps0_stderr=float(a_err),
        epc_stderr=float(epc_err) if not degenerate else max(float(epc_err), 0.25),
        points=tuple(pts),
        degenerate=degenerate,
    )


def lambda_factor(
    epc3, epc5: float, epc3_stderr=None, epc5_stderr: float = 0.0
) -> tuple[float, float]:
    """Error suppression factor mean(epc3) / epc5 with propagated error."""
    epc3 = np.asarray(list(epc3), dtype=float)
    if np.any(epc3 <= 0) or epc5 <= 0:
        raise ValueError("error-per-cycle inputs must be positive")
    mean3 = float(epc3.mean())
    value = mean3 / epc5
    if epc3_stderr is None:
        var3 = float(epc3.var(ddof=1) / len(epc3)) if len(epc3) > 1 else 0.0
    else:
        var3 = float(np.sum(np.square(epc3_stderr)) / len(epc3) ** 2)
    rel = var3 / mean3**2 + (epc5_stderr / epc5) ** 2
    return value, value * math.sqrt(rel)


@dataclass(frozen=True)
class LRBResult:
    """Benchmarking decays 1/2 + A * p^N and the error per Clifford."""

    p_reference: float
    p_interleaved: float
    p_reference_stderr: float
    p_interleaved_stderr: float
    e_c: float
    e_c_stderr: float
    degenerate: bool = False


def fit_lrb(ref_points, interleaved_points) -> LRBResult:
    """Fit both decays and extract e_C = (1 - p_int / p_ref) / 2."""
    out = []
    for pts in (ref_points, interleaved_points):
        pts = sorted((float(n), float(y)) for n, y in pts)
        xs = np.array([n for n, _ in pts])
        ys = np.array([y for _, y in pts])
        if len(set(xs)) < 3:
            raise ValueError("need at least three distinct sequence lengths")
        (a, p), (a_err, p_err) = _decay_fit(
            xs, ys, x0=(0.5, 0.9), bounds=([-1.0, 0.0], [1.0, 1.0])
        )
        out.append((p, p_err))
    (p_ref, ref_err), (p_int, int_err) = out
    if p_ref <= 0:
        raise ValueError("reference decay did not fit to a positive base")
    e_c = (1.0 - p_int / p_ref) / 2.0
    # first-order propagation through the ratio
    var = (int_err / (2 * p_ref)) ** 2 + (p_int * ref_err / (2 * p_ref**2)) ** 2
    e_c_err = math.sqrt(var)
    degenerate = bool(ref_err > 0.25 or int_err > 0.25)
    return LRBResult(
        p_reference=float(p_ref),
        p_interleaved=float(p_int),
        p_reference_stderr=float(ref_err),
        p_interleaved_stderr=float(int_err),
        e_c=float(e_c),
        e_c_stderr=float(e_c_err),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# tomography
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogicalDensityMatrix:
    matrix: np.ndarray  # 2x2 Hermitian, trace 1
    bloch: tuple[float, float, float]
    physical: bool  # True when the raw Bloch vector was already physical


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Nearest physical (PSD, trace-1) state by eigenvalue water-filling."""
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    vals = vals.real.copy()
    # clip negative eigenvalues to zero, redistributing the deficit evenly
    # over the remaining positive ones (largest first)
    order = np.argsort(vals)
    d = len(vals)
    for i, idx in enumerate(order):
        if vals[idx] >= 0:
            break
        deficit = vals[idx]
        vals[idx] = 0.0
        for j in order[i + 1 :]:
            vals[j] += deficit / (d - i - 1)
    vals /= vals.sum()
    return (vecs * vals) @ vecs.conj().T


def state_fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Uhlmann fidelity; ``target`` may be a state vector or density matrix."""
    target = np.asarray(target, dtype=complex)
    if target.ndim == 1:
        target = target / np.linalg.norm(target)
        value = float(np.real(target.conj() @ rho @ target))
    else:
        vals, vecs = np.linalg.eigh(rho)
        sqrt_rho = (vecs * np.sqrt(np.maximum(vals.real, 0.0))) @ vecs.conj().T
        inner = sqrt_rho @ target @ sqrt_rho
        ivals = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
        value = float(np.sum(np.sqrt(np.maximum(ivals.real, 0.0))) ** 2)
    return min(max(value, 0.0), 1.0)


def tomography(
    expectations: tuple[float, float, float], target: np.ndarray
) -> tuple[LogicalDensityMatrix, float]:
    """Reconstruct rho = (I + sum <P> sigma_P)/2 and its fidelity to target.

    A non-physical reconstruction (Bloch vector longer than 1) is projected
    to the nearest physical state before the fidelity is computed.
    """
    bloch = tuple(float(v) for v in expectations)
    if any(abs(v) > 1.0 + 1e-9 for v in bloch):
        raise ValueError("Pauli expectations must lie in [-1, 1]")
    if sum(v * v for v in bloch) > 3.0 + 1e-9:
        raise ValueError("impossible Bloch vector (length exceeds sqrt(3))")
    rho = 0.5 * (
        _SIGMA["I"]
        + bloch[0] * _SIGMA["X"]
        + bloch[1] * _SIGMA["Y"]
        + bloch[2] * _SIGMA["Z"]
    )
    physical = sum(v * v for v in bloch) <= 1.0 + 1e-12
    if not physical:
        rho = project_physical(rho)
    dm = LogicalDensityMatrix(matrix=rho, bloch=bloch, physical=physical)
    return dm, state_fidelity(rho, target)


# ---------------------------------------------------------------------------
# post-selection
# ---------------------------------------------------------------------------

def postselect(
    batch: ShotBatch, detectors=None
) -> tuple[ShotBatch, float]:
    """Keep shots whose selected detectors (default: all) are silent."""
    dets = batch.detectors
    if detectors is not None:
        dets = dets[:, list(detectors)]
    keep = ~dets.any(axis=1)
    fraction = float(keep.mean()) if batch.shots else 1.0
    return (
        ShotBatch(
            detectors=batch.detectors[keep],
            observable_flips=batch.observable_flips[keep],
            seed=batch.seed,
            observable_reference=batch.observable_reference,
        ),
        fraction,
    )


# ---------------------------------------------------------------------------
# teleportation fidelity bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TeleportReport:
    """Pauli correlations and the fidelity bounds they imply."""

    correlation_z: float
    correlation_x: float
    entanglement_fidelity_bound: float
    average_fidelity_bound: float
    correlation_z_stderr: float = 0.0
    correlation_x_stderr: float = 0.0
    bound_stderr: float = 0.0
    input_states: dict = field(default_factory=dict)


def _half_trace_correlation(counts: dict, plus_key: str, minus_key: str):
    """(1/2) tr(P E(P)) from eigenstate agree/disagree counts."""
    total = 0.0
    var = 0.0
    for key in (plus_key, minus_key):
        if key not in counts:
            raise ValueError(f"missing counts for input state {key!r}")
        agree, disagree = counts[key]
        n = agree + disagree
        if n <= 0:
            raise ValueError(f"empty count cell for input state {key!r}")
        p = agree / n
        total += (2.0 * p - 1.0) / 2.0
        var += binomial_stderr(p, n) ** 2  # of (2p-1)/2 = p - 1/2
    return total, math.sqrt(var)


def teleport_bound(
    counts: dict, input_states: dict | None = None
) -> TeleportReport:
    """Lower-bound the channel fidelity from Pauli eigenstate transmissions.

    ``counts`` maps each input label '0', '1', '+', '-' to an
    (agree, disagree) pair of shot counts in the matching measurement basis
    (Z for '0'/'1', X for '+'/'-'), where "agree" means the outcome equals
    the prepared eigenvalue.  The entanglement fidelity of the channel is
    bounded below by the mean of the two Pauli correlations, and the
    average fidelity by the corresponding affine transformation.
    """
    c_z, c_z_err = _half_trace_correlation(counts, "0", "1")
    c_x, c_x_err = _half_trace_correlation(counts, "+", "-")
    fe = (c_z + c_x) / 2.0
    fe_err = math.sqrt(c_z_err**2 + c_x_err**2) / 2.0
    return TeleportReport(
        correlation_z=c_z,
        correlation_x=c_x,
        entanglement_fidelity_bound=fe,
        average_fidelity_bound=(2.0 * fe + 1.0) / 3.0,
        correlation_z_stderr=c_z_err,
        correlation_x_stderr=c_x_err,
        bound_stderr=fe_err,
        input_states=dict(input_states or {}),
    )


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

def bootstrap_stderr(
    samples: np.ndarray,
    statistic,
    n_resamples: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Bootstrap estimate (mean, stderr) of a statistic of 1-D samples."""
    samples = np.asarray(samples)
    rng = np.random.default_rng(seed)
    n = len(samples)
    values = np.empty(n_resamples)
    for i in range(n_resamples):
        values[i] = statistic(samples[rng.integers(0, n, n)])
    return float(values.mean()), float(values.std(ddof=1))
