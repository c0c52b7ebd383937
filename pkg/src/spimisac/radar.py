"""Target echoes through a hybrid receive front-end and wideband MUSIC.

Two spectra are provided.  The nominal one scans plain steering vectors,
so on subcarrier ``m`` a target at ``Phi`` shows up at ``eta_m * Phi``.  The
beam-split-aware (BSA) spectrum scans ``a(eta_m * Phi)`` instead, which
aligns the per-subcarrier peaks at the physical direction before they are
summed.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_model import ArrayGeometry, CarrierGrid, steering_matrix

__all__ = [
    "TargetSet",
    "EchoBatch",
    "DoaEstimate",
    "dft_combiner",
    "alias_free_limit",
    "doa_grid",
    "synthesize_echo",
    "synthesize_subarray_echoes",
    "sample_covariance",
    "noise_subspace",
    "music_spectra",
    "estimate_target_doas",
    "stack_subarray_slots",
    "bsa_music",
    "dump_spectrum_csv",
]


@dataclass
class TargetSet:
    """Radar targets: sine-space directions and complex reflection coefficients."""

    directions: np.ndarray
    reflections: np.ndarray

    def __post_init__(self):
        self.directions = np.atleast_1d(np.asarray(self.directions, dtype=float))
        self.reflections = np.atleast_1d(np.asarray(self.reflections, dtype=complex))
        if self.directions.size < 1:
            raise ValueError("at least one target is required")
        if self.directions.shape != self.reflections.shape:
            raise ValueError("directions and reflections must have the same length")
        if np.any(np.abs(self.directions) > 1):
            raise ValueError("target directions must lie in [-1, 1]")

    def __len__(self):
        return self.directions.size


@dataclass
class EchoBatch:
    """Received echoes ``Y[m]`` (shape ``(M, rows, T)``) and how they were taken."""

    data: np.ndarray
    combiner: np.ndarray
    power: float
    snapshots: int
    noise_var: float


@dataclass
class DoaEstimate:
    directions: np.ndarray
    peak_values: np.ndarray
    shortfall: bool


def dft_combiner(n_elements: int, n_rf: int, chirp: bool = True) -> np.ndarray:
    """First ``n_rf`` columns of the unnormalized ``n_elements``-point DFT matrix.

    With ``chirp`` the rows are additionally multiplied by the quadratic
    phase ``exp(j pi n**2 / N)``.  Plain DFT beams share nulls at the other
    DFT directions, which leaves a combined MUSIC spectrum full of spurious
    peaks; the chirp removes those common nulls.  Entries have unit
    magnitude and ``W^H W = n_elements * I`` in both cases.
    """
    if n_rf > n_elements:
        raise ValueError("cannot take more DFT columns than array elements")
    n = np.arange(n_elements)[:, None]
    k = np.arange(n_rf)[None, :]
    w = np.exp(-2j * np.pi * n * k / n_elements)
    if chirp:
        w = w * np.exp(1j * np.pi * n**2 / n_elements)
    return w


def alias_free_limit(geometry: ArrayGeometry, grid: CarrierGrid) -> float:
    """Largest ``|Phi|`` free of grating-lobe aliases on every subcarrier.

    At ``eta_m > 1`` the response at ``Phi`` repeats at
    ``Phi - period / eta_m``; this stays outside [-1, 1] while
    ``|Phi| <= period / max(eta) - 1``.
    """
    return float(min(1.0, geometry.direction_period / np.max(grid.eta) - 1.0))


def doa_grid(n_points: int = 2048) -> np.ndarray:
    """Uniform sine-space grid ``-1 + 2 g / G`` over ``[-1, 1)``."""
    return -1.0 + 2.0 * np.arange(n_points) / n_points


def _probing(rng, n_subcarriers, n_t, snapshots, power):
    # per-entry variance P_r / (M N_T) gives E{X X^H} = P_r T / (M N_T) I
    scale = np.sqrt(power / (n_subcarriers * n_t) / 2)
    shape = (n_subcarriers, n_t, snapshots)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _target_response(targets, geometry, grid):
    # (M, N_T, K): steering at the beam-split-mapped target directions
    return steering_matrix(geometry, grid.eta[:, None] * targets.directions[None, :])


def synthesize_echo(
    targets: TargetSet,
    geometry: ArrayGeometry,
    grid: CarrierGrid,
    combiner: np.ndarray,
    power: float,
    snapshots: int,
    noise_var: float,
    rng: np.random.Generator,
) -> EchoBatch:
    """Echo ``sum_k beta_k (W^H a_k) a_k^T X[m] + W^H N[m]`` on every subcarrier."""
    n_t = geometry.n_elements
    combiner = np.asarray(combiner)
    if combiner.ndim != 2 or combiner.shape[0] != n_t:
        raise ValueError(f"combiner must be {n_t} x N_RF, got shape {combiner.shape}")
    if snapshots < 1:
        raise ValueError("snapshots must be >= 1")
    M = grid.n_subcarriers
    probing = _probing(rng, M, n_t, snapshots, power)
    data = _echo_data(targets, geometry, grid, combiner, probing, noise_var, rng)
    return EchoBatch(data, combiner, power, snapshots, noise_var)


def _echo_data(targets, geometry, grid, combiner, probing, noise_var, rng):
    resp = _target_response(targets, geometry, grid)
    reflected = np.einsum("mtk,k,msk,msn->mtn", resp, targets.reflections, resp, probing)
    data = np.einsum("tr,mtn->mrn", combiner.conj(), reflected)
    if noise_var > 0:
        shape = reflected.shape
        noise = np.sqrt(noise_var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        data = data + np.einsum("tr,mtn->mrn", combiner.conj(), noise)
    return data


def synthesize_subarray_echoes(
    targets: TargetSet,
    geometry: ArrayGeometry,
    grid: CarrierGrid,
    n_rf: int,
    power: float,
    snapshots: int,
    noise_var: float,
    rng: np.random.Generator,
) -> list[EchoBatch]:
    """Collect the echo in ``N_T / N_RF`` slots, each on a disjoint antenna group.

    Slot ``s`` combines antennas ``s*N_RF .. (s+1)*N_RF - 1``.  The probing
    signal is repeated across slots, which models ideal phase alignment
    between slots.
    """
    n_t = geometry.n_elements
    if n_t % n_rf:
        raise ValueError(f"N_T / N_RF = {n_t}/{n_rf} is not an integer number of slots")
    probing = _probing(rng, grid.n_subcarriers, n_t, snapshots, power)
    eye = np.eye(n_t)
    slots = []
    for s in range(n_t // n_rf):
        w = eye[:, s * n_rf:(s + 1) * n_rf]
        data = _echo_data(targets, geometry, grid, w, probing, noise_var, rng)
        slots.append(EchoBatch(data, w, power, snapshots, noise_var))
    return slots


def stack_subarray_slots(slots) -> EchoBatch:
    """Stack slot data vertically into full-array ``N_T x T`` echoes."""
    if not slots:
        raise ValueError("no slots to stack")
    n_rf = slots[0].data.shape[1]
    n_t = slots[0].combiner.shape[0]
    if n_t % n_rf or len(slots) != n_t // n_rf:
        raise ValueError(f"expected {n_t}/{n_rf} slots, got {len(slots)}")
    data = np.concatenate([s.data for s in slots], axis=1)
    combiner = np.concatenate([s.combiner for s in slots], axis=1)
    first = slots[0]
    return EchoBatch(data, combiner, first.power, first.snapshots, first.noise_var)


def sample_covariance(echo: EchoBatch) -> np.ndarray:
    """``R[m] = Y[m] Y[m]^H / T`` for every subcarrier."""
    y = echo.data
    return np.einsum("mrt,mst->mrs", y, y.conj()) / y.shape[-1]


def noise_subspace(covariance: np.ndarray, n_targets: int) -> np.ndarray:
    """Eigenvectors of the ``N - K`` smallest eigenvalues.

    Works on a single ``(N, N)`` matrix or a stack ``(M, N, N)``.
    """
    n = covariance.shape[-1]
    if n_targets >= n:
        raise ValueError(
            f"{n_targets} targets are not identifiable with {n} receive channels (need K <= {n - 1})"
        )
    herm = 0.5 * (covariance + np.conj(np.swapaxes(covariance, -1, -2)))
    _, vecs = np.linalg.eigh(herm)
    return vecs[..., : n - n_targets]


def music_spectra(
    noise_subspaces: np.ndarray,
    grid_directions: np.ndarray,
    geometry: ArrayGeometry,
    combiner: np.ndarray | None,
    eta: np.ndarray,
    mode: str = "bsa",
    normalize: bool = False,
):
    """Per-subcarrier and combined MUSIC pseudo-spectra.

    Parameters
    ----------
    noise_subspaces : ndarray, shape (M, N_RF, N_RF - K)
    grid_directions : ndarray, shape (G,)
    combiner : ndarray or None
        Analog combiner ``W_RF``; ``None`` for full-array (stacked) data.
    eta : ndarray, shape (M,)
    mode : {"bsa", "nominal"}
    normalize : bool
        Scale every per-subcarrier spectrum to a unit maximum before summing.

    Returns
    -------
    per_subcarrier : ndarray, shape (M, G)
    combined : ndarray, shape (G,)
    """
    grid_directions = np.asarray(grid_directions, dtype=float)
    if grid_directions.size == 0:
        raise ValueError("empty direction grid")
    eta = np.asarray(eta, dtype=float)
    if mode == "bsa":
        dirs = eta[:, None] * grid_directions[None, :]
    elif mode == "nominal":
        dirs = np.broadcast_to(grid_directions, (eta.size, grid_directions.size))
    else:
        raise ValueError(f"unknown MUSIC mode {mode!r}")
    a = steering_matrix(geometry, dirs)  # (M, N_T, G)
    if combiner is not None:
        a = np.einsum("tr,mtg->mrg", np.conj(combiner), a)
    proj = np.einsum("mrq,mrg->mqg", noise_subspaces.conj(), a)
    den = np.sum(np.abs(proj) ** 2, axis=1)
    spectra = 1.0 / np.maximum(den, np.finfo(float).tiny)
    if normalize:
        spectra = spectra / spectra.max(axis=1, keepdims=True)
    return spectra, spectra.sum(axis=0)


def estimate_target_doas(spectrum: np.ndarray, grid_directions: np.ndarray, n_targets: int) -> DoaEstimate:
    """Pick the ``K`` highest strict local maxima of a spectrum.

    End points count as maxima when they exceed their single neighbour.
    Ties go to the smaller ``|direction|``.  If fewer than ``K`` maxima
    exist, all of them are returned and ``shortfall`` is set.
    """
    s = np.asarray(spectrum, dtype=float)
    g = np.asarray(grid_directions, dtype=float)
    if s.size == 1:
        idx = np.array([0])
    else:
        left = np.concatenate(([-np.inf], s[:-1]))
        right = np.concatenate((s[1:], [-np.inf]))
        idx = np.flatnonzero((s > left) & (s > right))
    order = np.lexsort((np.abs(g[idx]), -s[idx]))
    chosen = idx[order][:n_targets]
    shortfall = chosen.size < n_targets
    if shortfall:
        warnings.warn(f"only {chosen.size} spectral peaks found for {n_targets} targets", RuntimeWarning)
    return DoaEstimate(g[chosen], s[chosen], shortfall)


def bsa_music(
    echo: EchoBatch,
    geometry: ArrayGeometry,
    grid: CarrierGrid,
    n_targets: int,
    grid_directions: np.ndarray | None = None,
    mode: str = "bsa",
) -> DoaEstimate:
    """Full pipeline: covariance, noise subspace, spectrum and peak picking."""
    if grid_directions is None:
        grid_directions = doa_grid()
    un = noise_subspace(sample_covariance(echo), n_targets)
    combiner = echo.combiner
    if combiner.shape[0] == combiner.shape[1] and np.allclose(combiner, np.eye(combiner.shape[0])):
        combiner = None
    _, combined = music_spectra(un, grid_directions, geometry, combiner, grid.eta, mode)
    return estimate_target_doas(combined, grid_directions, n_targets)


def dump_spectrum_csv(path, grid_directions, per_subcarrier, combined) -> Path:
    """CSV with ``direction, m1 .. mM, combined`` columns."""
    path = Path(path)
    M = per_subcarrier.shape[0]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", *[f"m{m + 1}" for m in range(M)], "combined"])
        for g, d in enumerate(grid_directions):
            writer.writerow([repr(float(d)), *[repr(float(v)) for v in per_subcarrier[:, g]], repr(float(combined[g]))])
    return path
