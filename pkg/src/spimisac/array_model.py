"""Uniform linear array model with frequency-dependent beam-split.

Directions are handled in sine space: a physical angle ``psi`` in
[-90, 90] degrees is represented by ``sin(psi)`` in [-1, 1].  Beam-split
maps a physical direction ``theta`` to ``eta_m * theta`` at subcarrier ``m``
where ``eta_m = f_m / f_c``; mapped values may leave [-1, 1] and are kept
as they are, since they remain valid phase arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "ArrayGeometry",
    "CarrierGrid",
    "deg2dir",
    "dir2deg",
    "steering_vector",
    "steering_matrix",
    "subcarrier_frequency",
    "beam_split_direction",
    "array_gain",
    "array_gain_closed_form",
    "dirichlet",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    Attributes
    ----------
    n_elements : int
        Number of antennas.
    spacing_ratio : float
        Element spacing divided by the center wavelength ``d / lambda_c``.
    """

    n_elements: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ValueError(f"n_elements must be a positive integer, got {self.n_elements}")
        if not self.spacing_ratio > 0:
            raise ValueError(f"spacing_ratio must be positive, got {self.spacing_ratio}")

    @property
    def direction_period(self) -> float:
        """Period of the steering vector in sine space (2 for half-wavelength)."""
        return 1.0 / self.spacing_ratio


@dataclass(frozen=True)
class CarrierGrid:
    """OFDM subcarrier layout around a carrier frequency ``f_c`` (Hz)."""

    f_c: float
    bandwidth: float
    n_subcarriers: int

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"f_c must be positive, got {self.f_c}")
        if self.bandwidth < 0:
            raise ValueError(f"bandwidth must be non-negative, got {self.bandwidth}")
        if int(self.n_subcarriers) != self.n_subcarriers or self.n_subcarriers < 1:
            raise ValueError(f"n_subcarriers must be a positive integer, got {self.n_subcarriers}")
        if self.bandwidth / 2 >= self.f_c:
            raise ValueError("bandwidth too large: lowest subcarrier frequency must stay positive")

    @property
    def frequencies(self) -> np.ndarray:
        """All subcarrier frequencies ``f_1 .. f_M`` in Hz."""
        m = np.arange(1, self.n_subcarriers + 1)
        M = self.n_subcarriers
        return self.f_c + self.bandwidth / M * (m - 1 - (M - 1) / 2)

    @property
    def eta(self) -> np.ndarray:
        """Beam-split factors ``f_m / f_c``, one per subcarrier."""
        return self.frequencies / self.f_c

    @property
    def wavelengths(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.frequencies


def deg2dir(angle_deg):
    """Physical angle in degrees to sine-space direction."""
    return np.sin(np.deg2rad(angle_deg))


def dir2deg(direction):
    """Sine-space direction to physical angle in degrees (clipped to [-1, 1])."""
    return np.rad2deg(np.arcsin(np.clip(direction, -1.0, 1.0)))


def steering_vector(geometry: ArrayGeometry, direction: float) -> np.ndarray:
    """Unit-norm ULA response ``exp(-j 2 pi (d/lambda_c) n direction) / sqrt(N)``."""
    n = np.arange(geometry.n_elements)
    return np.exp(-2j * np.pi * geometry.spacing_ratio * n * direction) / np.sqrt(geometry.n_elements)


def steering_matrix(geometry: ArrayGeometry, directions) -> np.ndarray:
    """Stack steering vectors column-wise; output shape ``(N, len(directions))``.

    Extra leading axes of ``directions`` are preserved in front, e.g. an
    ``(M, G)`` input returns ``(M, N, G)``.
    """
    directions = np.asarray(directions, dtype=float)
    n = np.arange(geometry.n_elements)[:, None]
    phase = -2j * np.pi * geometry.spacing_ratio * n * directions[..., None, :]
    return np.exp(phase) / np.sqrt(geometry.n_elements)


def subcarrier_frequency(grid: CarrierGrid, m: int) -> float:
    """Frequency of subcarrier ``m`` (1-based)."""
    if int(m) != m or not 1 <= m <= grid.n_subcarriers:
        raise IndexError(f"subcarrier index {m} outside 1..{grid.n_subcarriers}")
    M = grid.n_subcarriers
    return grid.f_c + grid.bandwidth / M * (m - 1 - (M - 1) / 2)


def beam_split_direction(physical, eta):
    """Spatial direction seen at a subcarrier with split factor ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    out = eta * np.asarray(physical, dtype=float)
    return float(out) if out.ndim == 0 else out


def dirichlet(a, n: int):
    """Normalized Dirichlet kernel ``sin(N pi a) / (N sin(pi a))``.

    At integer ``a`` the removable singularity is replaced by its limit
    ``(-1)**(a (N - 1))``.
    """
    a = np.asarray(a, dtype=float)
    num = np.sin(n * np.pi * a)
    den = n * np.sin(np.pi * a)
    near_int = np.abs(a - np.round(a)) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near_int, 0.0, num / np.where(near_int, 1.0, den))
    limit = np.where(np.round(a) * (n - 1) % 2 == 0, 1.0, -1.0)
    out = np.where(near_int, limit, out)
    return float(out) if out.ndim == 0 else out


def array_gain(n: int, direction, bsa_direction, eta, spacing_ratio: float = 0.5):
    """Normalized array gain between the nominal and the beam-split-aware vectors.

    The nominal vector points at ``direction`` but is evaluated at the
    subcarrier wavelength, i.e. its phase progression is scaled by ``eta``;
    the beam-split-aware vector is a plain steering vector at
    ``bsa_direction``.  Both are unit norm, so the result lies in [0, 1] and
    reaches 1 when ``bsa_direction == eta * direction``.
    """
    geometry = ArrayGeometry(n, spacing_ratio)
    direction, bsa_direction, eta = np.broadcast_arrays(
        np.asarray(direction, dtype=float),
        np.asarray(bsa_direction, dtype=float),
        np.asarray(eta, dtype=float),
    )
    shape = direction.shape
    nominal = steering_matrix(geometry, (eta * direction).ravel())
    aware = steering_matrix(geometry, bsa_direction.ravel())
    gain = (np.abs(np.sum(nominal.conj() * aware, axis=0)) ** 2).reshape(shape)
    return float(gain) if gain.ndim == 0 else gain


def array_gain_closed_form(n: int, direction, bsa_direction, eta, spacing_ratio: float = 0.5):
    """Closed form ``|xi(mu)|**2`` with ``mu = (d/lambda_c) (Phi_m - eta Phi)``.

    Equivalent to ``d (f_c Phi_m - f_m Phi) / c_0``.
    """
    mu = spacing_ratio * (np.asarray(bsa_direction) - np.asarray(eta) * np.asarray(direction))
    return dirichlet(mu, n) ** 2
