"""Wideband multipath channel between the base station and the user.

The frequency-domain channel at subcarrier ``m`` is

    H[m] = sum_l gamma_l a_R(dir_R) a_T(dir_T)^H exp(-j 2 pi tau_l f_m)

where the directions are ``eta_m`` times the physical DoA/DoD when
beam-split is applied and the physical ones otherwise.  The compact form
``H[m] = P_m diag(gains_m) Q_m^H`` is kept alongside the matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_model import ArrayGeometry, CarrierGrid, steering_matrix

__all__ = [
    "PathSet",
    "WidebandChannel",
    "generate_paths",
    "frequency_channel",
    "channel_from_parameters",
    "time_domain_channel",
    "dump_channel_csv",
]


@dataclass
class PathSet:
    """Parameters of the ``L`` communication paths.

    ``dod`` and ``doa`` are sine-space directions; gains are sorted by
    decreasing magnitude.
    """

    gains: np.ndarray
    delays: np.ndarray
    dod: np.ndarray
    doa: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex)
        self.delays = np.asarray(self.delays, dtype=float)
        self.dod = np.asarray(self.dod, dtype=float)
        self.doa = np.asarray(self.doa, dtype=float)
        n = self.gains.shape[0]
        if n < 1:
            raise ValueError("a PathSet needs at least one path")
        if not (self.delays.shape == self.dod.shape == self.doa.shape == (n,)):
            raise ValueError("gains, delays, dod and doa must all have length L")
        if np.any(self.delays < 0):
            raise ValueError("path delays must be non-negative")

    def __len__(self):
        return self.gains.shape[0]


@dataclass
class WidebandChannel:
    """Per-subcarrier channel matrices and their compact factors.

    Attributes
    ----------
    matrices : ndarray, shape (M, N_R, N_T)
    rx_response : ndarray, shape (M, N_R, L)
        ``P_m`` for every subcarrier.
    path_gains : ndarray, shape (M, L)
        Diagonals of ``Lambda_m``, i.e. ``gamma_l exp(-j 2 pi tau_l f_m)``.
    tx_response : ndarray, shape (M, N_T, L)
        ``Q_m`` for every subcarrier.
    beam_split : bool
        Whether the responses use the beam-split-mapped directions.
    """

    matrices: np.ndarray
    rx_response: np.ndarray
    path_gains: np.ndarray
    tx_response: np.ndarray
    beam_split: bool

    @property
    def n_subcarriers(self) -> int:
        return self.matrices.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Rebuild ``P_m Lambda_m Q_m^H`` from the stored factors."""
        return np.einsum("mrl,ml,mtl->mrt", self.rx_response, self.path_gains, self.tx_response.conj())


def generate_paths(
    rng: np.random.Generator,
    n_paths: int,
    gain_mean: float = 1.0,
    gain_std: float = 0.1,
    delay_max: float = 20e-9,
    direction_range=(-90.0, 90.0),
    complex_gains: bool = False,
) -> PathSet:
    """Draw a random path set.

    Gains are real Gaussian ``N(gain_mean, gain_std**2)`` by default, or
    circular complex Gaussian with total variance ``gain_std**2`` around
    ``gain_mean`` when ``complex_gains`` is set.  Angles are uniform in
    ``direction_range`` (degrees) and stored as sines; delays are uniform in
    ``[0, delay_max]``.
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"number of paths must be a positive integer, got {n_paths}")
    if gain_std < 0:
        raise ValueError("gain_std must be non-negative")
    lo, hi = np.deg2rad(direction_range[0]), np.deg2rad(direction_range[1])
    if complex_gains:
        noise = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
        gains = gain_mean + gain_std * noise
    else:
        gains = rng.normal(gain_mean, gain_std, n_paths).astype(complex)
    dod = np.sin(rng.uniform(lo, hi, n_paths))
    doa = np.sin(rng.uniform(lo, hi, n_paths))
    delays = rng.uniform(0.0, delay_max, n_paths)
    order = np.argsort(-np.abs(gains), kind="stable")
    return PathSet(gains[order], delays[order], dod[order], doa[order])


def channel_from_parameters(
    gains_per_subcarrier: np.ndarray,
    doa: np.ndarray,
    dod: np.ndarray,
    eta: np.ndarray,
    rx_geom: ArrayGeometry,
    tx_geom: ArrayGeometry,
    scale: float = 1.0,
) -> WidebandChannel:
    """Assemble a channel from per-subcarrier path gains and directions.

    ``eta`` holds one split factor per subcarrier; pass ones for the
    beam-split-free variant.
    """
    eta = np.asarray(eta, dtype=float)
    rx = steering_matrix(rx_geom, eta[:, None] * np.asarray(doa)[None, :])
    tx = steering_matrix(tx_geom, eta[:, None] * np.asarray(dod)[None, :])
    gains = scale * np.asarray(gains_per_subcarrier, dtype=complex)
    matrices = np.einsum("mrl,ml,mtl->mrt", rx, gains, tx.conj())
    return WidebandChannel(matrices, rx, gains, tx, beam_split=bool(np.any(eta != 1.0)))


def frequency_channel(
    paths: PathSet,
    grid: CarrierGrid,
    rx_geom: ArrayGeometry,
    tx_geom: ArrayGeometry,
    apply_beam_split: bool = True,
    scale: float = 1.0,
) -> WidebandChannel:
    """Frequency-domain channel on every subcarrier of ``grid``.

    ``scale`` multiplies every path gain (1 reproduces the plain sum; the
    experiment harness may use ``sqrt(N_T N_R / L)``).
    """
    phases = np.exp(-2j * np.pi * np.outer(grid.frequencies, paths.delays))
    gains = paths.gains[None, :] * phases
    eta = grid.eta if apply_beam_split else np.ones(grid.n_subcarriers)
    channel = channel_from_parameters(gains, paths.doa, paths.dod, eta, rx_geom, tx_geom, scale)
    channel.beam_split = apply_beam_split
    return channel


def time_domain_channel(
    paths: PathSet,
    bandwidth: float,
    rx_geom: ArrayGeometry,
    tx_geom: ArrayGeometry,
    n_taps: int,
) -> np.ndarray:
    """Delay-domain taps ``sum_l gamma_l sinc(d - B tau_l) a_R(phi_l) a_T(theta_l)^H``.

    Returns an array of shape ``(n_taps, N_R, N_T)`` for taps ``d = 0 .. n_taps-1``.
    ``sinc`` is the normalized ``sin(pi t) / (pi t)``.
    """
    if int(n_taps) != n_taps or n_taps < 1:
        raise ValueError(f"n_taps must be a positive integer, got {n_taps}")
    d = np.arange(n_taps)
    pulses = np.sinc(d[:, None] - bandwidth * paths.delays[None, :])
    rx = steering_matrix(rx_geom, paths.doa)
    tx = steering_matrix(tx_geom, paths.dod)
    return np.einsum("dl,l,rl,tl->drt", pulses, paths.gains, rx, tx.conj())


def dump_channel_csv(channel: WidebandChannel, path) -> Path:
    """Write ``m,row,col,re,im`` rows (all indices 1-based) for debugging."""
    path = Path(path)
    M, n_r, n_t = channel.matrices.shape
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "row", "col", "re", "im"])
        for m in range(M):
            for r in range(n_r):
                for c in range(n_t):
                    z = channel.matrices[m, r, c]
                    writer.writerow([m + 1, r + 1, c + 1, repr(float(z.real)), repr(float(z.imag))])
    return path
