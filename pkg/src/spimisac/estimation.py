"""Downlink pilot sounding and beam-split-aware OMP channel estimation.

The user observes ``Y[m] = W~^H H[m] F~ + W~^H N[m]`` for every subcarrier,
vectorized column-major as ``y[m] = (F~^T kron W~^H) vec(H[m]) + e[m]``.  A
path with DoA ``phi`` and DoD ``theta`` contributes the atom

    psi[m] = (F~^T conj(a_T(eta_m theta))) kron (W~^H a_R(eta_m phi))

so a dictionary built on beam-split-mapped grid directions lets every
subcarrier vote for the same physical grid pair.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array_model import ArrayGeometry, CarrierGrid, steering_matrix
from .channel import WidebandChannel, channel_from_parameters

__all__ = [
    "SoundingSetup",
    "BsaDictionary",
    "ChannelEstimate",
    "random_sounding",
    "build_bsa_dictionary",
    "sound_channel",
    "bsa_omp",
    "nmse",
    "dump_estimate_csv",
]


def _unit_modulus(rng, rows, cols):
    return np.exp(2j * np.pi * rng.random((rows, cols))) / np.sqrt(rows)


@dataclass
class SoundingSetup:
    """Pilot beamformers ``F~`` (``N_T x J_T``) and combiners ``W~`` (``N_R x J_R``).

    Pilot symbols are the identity. ``n_rf_user`` is the number of user RF
    chains, used only for the channel-use count.
    """

    tx_pilots: np.ndarray
    rx_combiners: np.ndarray
    n_rf_user: int = 1

    def __post_init__(self):
        self.tx_pilots = np.asarray(self.tx_pilots, dtype=complex)
        self.rx_combiners = np.asarray(self.rx_combiners, dtype=complex)
        n_t, j_t = self.tx_pilots.shape
        n_r, j_r = self.rx_combiners.shape
        if j_t > n_t or j_r > n_r:
            raise ValueError(f"need J_T <= N_T and J_R <= N_R, got J_T={j_t}, N_T={n_t}, J_R={j_r}, N_R={n_r}")
        for name, mat in (("tx_pilots", self.tx_pilots), ("rx_combiners", self.rx_combiners)):
            mag = np.abs(mat)
            if not np.allclose(mag, mag.flat[0], rtol=0, atol=1e-12):
                raise ValueError(f"{name} entries must have constant modulus")
        if self.n_rf_user < 1:
            raise ValueError("n_rf_user must be >= 1")

    @property
    def n_tx(self) -> int:
        return self.tx_pilots.shape[1]

    @property
    def n_rx(self) -> int:
        return self.rx_combiners.shape[1]

    @property
    def channel_uses(self) -> int:
        """``J_T * ceil(J_R / N_RF_user)``."""
        return self.n_tx * math.ceil(self.n_rx / self.n_rf_user)


def random_sounding(rng, n_t: int, n_r: int, j_t: int = 32, j_r: int = 8, n_rf_user: int = 1) -> SoundingSetup:
    """Random-phase pilots with entries of magnitude ``1/sqrt(N)``."""
    return SoundingSetup(_unit_modulus(rng, n_t, j_t), _unit_modulus(rng, n_r, j_r), n_rf_user)


@dataclass
class BsaDictionary:
    """Beam-split-mapped steering grids for one subcarrier."""

    tx_grid: np.ndarray
    rx_grid: np.ndarray
    directions: np.ndarray
    eta: float


def build_bsa_dictionary(
    tx_geom: ArrayGeometry,
    rx_geom: ArrayGeometry,
    grid: CarrierGrid,
    m: int,
    n_grid: int,
) -> BsaDictionary:
    """Dictionary for subcarrier ``m`` (1-based) on ``n_grid`` points ``-1 + 2g/G``."""
    if n_grid < 2:
        raise ValueError(f"grid size must be >= 2, got {n_grid}")
    if not 1 <= m <= grid.n_subcarriers:
        raise IndexError(f"subcarrier index {m} outside 1..{grid.n_subcarriers}")
    eta = float(grid.eta[m - 1])
    directions = -1.0 + 2.0 * np.arange(n_grid) / n_grid
    return BsaDictionary(
        steering_matrix(tx_geom, eta * directions),
        steering_matrix(rx_geom, eta * directions),
        directions,
        eta,
    )


def sound_channel(channel: WidebandChannel, setup: SoundingSetup, noise_var: float, rng=None) -> np.ndarray:
    """Vectorized pilot observations, shape ``(M, J_R * J_T)``."""
    h = channel.matrices
    M, n_r, n_t = h.shape
    if setup.tx_pilots.shape[0] != n_t or setup.rx_combiners.shape[0] != n_r:
        raise ValueError(
            f"pilots are {setup.tx_pilots.shape[0]}x{setup.rx_combiners.shape[0]} (N_T x N_R), channel is {n_t}x{n_r}"
        )
    w_h = setup.rx_combiners.conj().T
    y = w_h @ h @ setup.tx_pilots
    if noise_var > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_var > 0")
        shape = (M, n_r, setup.n_tx)
        noise = np.sqrt(noise_var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        y = y + w_h @ noise
    # column-major vec per subcarrier
    return np.swapaxes(y, 1, 2).reshape(M, -1)


@dataclass
class ChannelEstimate:
    """BSA-OMP output.

    Attributes
    ----------
    doa, dod : ndarray, shape (L,)
        Physical sine-space directions of the selected atoms.
    gains : ndarray, shape (M, L)
        Diagonals of the per-subcarrier gain matrices.
    channel : WidebandChannel
        Beam-split-free reconstruction ``P^ diag(gains_m) Q^^H``.
    support : list of (u, v)
        Selected receive/transmit grid indices in selection order.
    residual_norms : ndarray, shape (L + 1, M)
        ``||r_l[m]||`` before the first and after every iteration.
    """

    doa: np.ndarray
    dod: np.ndarray
    gains: np.ndarray
    channel: WidebandChannel
    support: list
    residual_norms: np.ndarray = field(repr=False)


def _atom_factors(setup, dictionaries):
    # A_m = W~^H P_m (J_R x G), B_m = F~^T conj(Q_m) (J_T x G)
    a = np.stack([setup.rx_combiners.conj().T @ d.rx_grid for d in dictionaries])
    b = np.stack([setup.tx_pilots.T @ d.tx_grid.conj() for d in dictionaries])
    return a, b


def bsa_omp(
    measurements: np.ndarray,
    setup: SoundingSetup,
    dictionaries,
    n_paths: int,
    rx_geom: ArrayGeometry,
    tx_geom: ArrayGeometry,
    normalize_atoms: bool = True,
) -> ChannelEstimate:
    """Greedy recovery of ``n_paths`` (DoA, DoD) pairs shared by all subcarriers.

    Each iteration picks the grid pair maximizing ``sum_m |psi_uv[m]^H r[m]|``
    without forming the ``G^2``-column dictionary, then re-projects the
    measurements onto the selected atoms.  With ``normalize_atoms`` each
    correlation is divided by ``||psi_uv[m]||``; random pilots give atoms
    of unequal norm, and the raw rule then favours strong neighbours of
    the true atom.
    """
    y = np.asarray(measurements, dtype=complex)
    M = y.shape[0]
    j_r, j_t = setup.n_rx, setup.n_tx
    if len(dictionaries) != M:
        raise ValueError(f"{len(dictionaries)} dictionaries for {M} subcarriers")
    if y.shape[1] != j_r * j_t:
        raise ValueError(f"measurement length {y.shape[1]} != J_R * J_T = {j_r * j_t}")
    if not 1 <= n_paths <= j_r * j_t:
        raise ValueError(f"number of paths must be in 1..{j_r * j_t}, got {n_paths}")

    a, b = _atom_factors(setup, dictionaries)
    n_grid = a.shape[2]
    if normalize_atoms:
        # ||b kron a|| = ||a|| ||b||
        scale = np.linalg.norm(a, axis=1)[:, :, None] * np.linalg.norm(b, axis=1)[:, None, :]
    else:
        scale = np.ones((M, n_grid, n_grid))
    residual = y.copy()
    norms = [np.linalg.norm(residual, axis=1)]
    support = []
    atoms = np.empty((M, j_r * j_t, 0), dtype=complex)
    coef = np.zeros((M, 0), dtype=complex)
    for _ in range(n_paths):
        r_mat = residual.reshape(M, j_t, j_r).transpose(0, 2, 1)
        corr = (np.abs(np.conj(a).transpose(0, 2, 1) @ r_mat @ np.conj(b)) / scale).sum(axis=0)
        for u, v in support:  # already-selected pairs lie in the residual's null space
            corr[u, v] = -np.inf
        u, v = np.unravel_index(int(np.argmax(corr)), (n_grid, n_grid))
        support.append((int(u), int(v)))
        atom = (b[:, :, v][:, :, None] * a[:, :, u][:, None, :]).reshape(M, -1)
        atoms = np.concatenate([atoms, atom[:, :, None]], axis=2)
        coef = _least_squares(atoms, y)
        residual = y - np.einsum("mja,ma->mj", atoms, coef)
        norms.append(np.linalg.norm(residual, axis=1))

    rx_idx = np.array([s[0] for s in support])
    tx_idx = np.array([s[1] for s in support])
    doa = _unmap(dictionaries, rx_idx)
    dod = _unmap(dictionaries, tx_idx)
    channel = channel_from_parameters(coef, doa, dod, np.ones(M), rx_geom, tx_geom)
    return ChannelEstimate(doa, dod, coef, channel, support, np.array(norms))


def _least_squares(atoms, y):
    out = np.empty((y.shape[0], atoms.shape[2]), dtype=complex)
    for m in range(y.shape[0]):
        sol, _, rank, _ = np.linalg.lstsq(atoms[m], y[m], rcond=None)
        if rank < atoms.shape[2]:
            warnings.warn("rank-deficient OMP support; using minimum-norm least squares", RuntimeWarning)
        out[m] = sol
    return out


def _unmap(dictionaries, idx):
    # split direction / eta_m; identical across m by construction of the grid
    mapped = np.stack([d.eta * d.directions[idx] for d in dictionaries])
    etas = np.array([d.eta for d in dictionaries])[:, None]
    physical = mapped / etas
    if np.ptp(physical, axis=0).max(initial=0.0) > 1e-12:
        raise AssertionError("unmapped directions differ across subcarriers")
    return physical[0]


def nmse(estimate: np.ndarray, reference: np.ndarray) -> float:
    """``sum ||H^ - H||_F^2 / sum ||H||_F^2`` over all subcarriers."""
    ref = np.sum(np.abs(reference) ** 2)
    if ref == 0:
        raise ValueError("reference channel is identically zero")
    return float(np.sum(np.abs(estimate - reference) ** 2) / ref)


def dump_estimate_csv(estimate: ChannelEstimate, path) -> Path:
    """CSV with ``l, doa, dod`` and ``|gain|`` per subcarrier."""
    path = Path(path)
    M = estimate.gains.shape[0]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l", "doa", "dod", *[f"abs_gain_m{m + 1}" for m in range(M)]])
        for l in range(estimate.doa.size):
            mags = [repr(float(v)) for v in np.abs(estimate.gains[:, l])]
            writer.writerow([l + 1, repr(float(estimate.doa[l])), repr(float(estimate.dod[l])), *mags])
    return path
