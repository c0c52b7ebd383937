"""Spectral efficiency, transmit covariance, beampattern and beamformer errors.

SNR is ``1 / noise_var`` with per-subcarrier precoders normalized to
``||F[m]||_F^2 = N_S``.  Determinants are evaluated as log-determinants.

Three closed forms of the SPIM lower bound are available.  They share the
pattern term ``(1/S) sum_i log2 sum_j det(Sigma_i + Sigma_j)^-1`` and differ
only by a constant:

``paper``
    ``log2 S - N_R log2(2 noise_var) - pattern term``.
``derivation``
    ``log2 S - N_R log2 e - pattern term``.
``normalized``
    ``log2 S - N_R - pattern term``.  Equal to ``paper`` once ``Sigma`` is
    read as a noise-normalized covariance, and equal to ``se_mimo`` when all
    patterns coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import ArrayGeometry, steering_matrix

__all__ = [
    "SE_VARIANTS",
    "SeReport",
    "sigma_matrix",
    "log2det",
    "se_mimo",
    "se_spim",
    "tx_covariance",
    "beampattern",
    "beamforming_gain",
    "precoder_beampattern",
    "beamformer_error",
]

SE_VARIANTS = ("paper", "derivation", "normalized")
_LOG2E = np.log2(np.e)


@dataclass
class SeReport:
    """Spectral efficiency in bits/s/Hz per subcarrier and averaged."""

    per_subcarrier: np.ndarray
    variant: str

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_subcarrier))


def sigma_matrix(h, f, noise_var: float, n_streams: int | None = None) -> np.ndarray:
    """``I + H F F^H H^H / (noise_var N_S)``; broadcasts over leading axes."""
    if not noise_var > 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    h = np.asarray(h)
    f = np.asarray(f)
    n_s = f.shape[-1] if n_streams is None else n_streams
    hf = h @ f
    gram = hf @ np.conj(np.swapaxes(hf, -1, -2))
    return np.eye(h.shape[-2]) + gram / (noise_var * n_s)


def log2det(a) -> np.ndarray:
    """``log2 det(A)`` for Hermitian positive definite ``A``."""
    sign, logdet = np.linalg.slogdet(a)
    if np.any(np.real(sign) <= 0):
        raise ValueError("matrix is not positive definite")
    return logdet * _LOG2E


def se_mimo(h, f, noise_var: float) -> SeReport:
    """``log2 det Sigma[m]`` for a single transmission pattern."""
    return SeReport(log2det(sigma_matrix(h, f, noise_var)), "mimo")


def se_spim(h, precoders, noise_var: float, variant: str = "normalized") -> SeReport:
    """SPIM lower bound over ``S`` patterns.

    Parameters
    ----------
    h : ndarray, shape (M, N_R, N_T)
    precoders : ndarray, shape (S, M, N_T, N_S)
    variant : {"paper", "derivation", "normalized"}
    """
    if variant not in SE_VARIANTS:
        raise ValueError(f"unknown SE variant {variant!r}; choose from {SE_VARIANTS}")
    precoders = np.asarray(precoders)
    n_patterns = precoders.shape[0]
    if n_patterns < 1:
        raise ValueError("at least one pattern is required")
    h = np.asarray(h)
    n_r = h.shape[-2]
    n_s = precoders.shape[-1]
    if 2 * n_s < n_r:
        pair_logdet = _pair_logdet_sylvester(h, precoders, noise_var)
    else:
        sig = sigma_matrix(h, precoders, noise_var)  # (S, M, N_R, N_R)
        pair_logdet = np.stack([log2det(sig[i][None] + sig) for i in range(n_patterns)])
    # log2 sum_j det(Sigma_i + Sigma_j)^-1 via log-sum-exp over j
    neg = -pair_logdet / _LOG2E  # (S, S, M), natural log
    peak = neg.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.sum(np.exp(neg - peak), axis=1))
    pattern_term = lse.mean(axis=0) * _LOG2E
    if variant == "paper":
        const = np.log2(n_patterns) - n_r * np.log2(2 * noise_var)
    elif variant == "derivation":
        const = np.log2(n_patterns) - n_r * _LOG2E
    else:
        const = np.log2(n_patterns) - n_r
    return SeReport(const - pattern_term, variant)


def _pair_logdet_sylvester(h, precoders, noise_var):
    # det(2I + G_i G_i^H + G_j G_j^H) = 2^N_R det(I + [G_i G_j]^H [G_i G_j] / 2)
    n_r = h.shape[-2]
    n_s = precoders.shape[-1]
    g = (h @ precoders) / np.sqrt(noise_var * n_s)  # (S, M, N_R, N_S)
    n_pat, M = g.shape[:2]
    # all G_i^H G_j at once: (M, S N_S, S N_S) -> (S, S, M, N_S, N_S)
    cols = np.swapaxes(g, 0, 1).transpose(0, 2, 1, 3).reshape(M, n_r, n_pat * n_s)
    gram = np.conj(np.swapaxes(cols, -1, -2)) @ cols
    gram = gram.reshape(M, n_pat, n_s, n_pat, n_s).transpose(1, 3, 0, 2, 4)
    diag = gram[np.arange(n_pat), np.arange(n_pat)]
    out = np.empty((n_pat, n_pat, g.shape[1]))
    eye = np.eye(2 * n_s)
    for i in range(n_pat):
        top = np.concatenate([np.broadcast_to(diag[i], gram[i].shape), gram[i]], axis=-1)
        bottom = np.concatenate([np.conj(np.swapaxes(gram[i], -1, -2)), diag], axis=-1)
        block = np.concatenate([top, bottom], axis=-2)
        out[i] = n_r + log2det(eye + 0.5 * block)
    return out


def tx_covariance(f_rf, f_bb=None, n_streams: int | None = None) -> np.ndarray:
    """``R_x[m] = F F^H / N_S`` with ``F = F_RF F_BB[m]`` (or ``F = f_rf`` if ``f_bb`` is None)."""
    f = np.asarray(f_rf) if f_bb is None else np.asarray(f_rf) @ np.asarray(f_bb)
    n_s = f.shape[-1] if n_streams is None else n_streams
    return f @ np.conj(np.swapaxes(f, -1, -2)) / n_s


def beampattern(r_x, grid_directions, geom: ArrayGeometry, eta=None) -> np.ndarray:
    """``a(Phi)^H R_x[m] a(Phi)`` averaged over subcarriers.

    With ``eta`` the steering vector at subcarrier ``m`` is taken at
    ``eta_m Phi``, i.e. the pattern actually radiated towards the physical
    direction ``Phi``.
    """
    r_x = np.asarray(r_x)
    if r_x.ndim == 2:
        r_x = r_x[None]
    grid_directions = np.atleast_1d(np.asarray(grid_directions, dtype=float))
    if grid_directions.size == 0:
        raise ValueError("empty direction grid")
    M = r_x.shape[0]
    if eta is None:
        dirs = np.broadcast_to(grid_directions, (M, grid_directions.size))
    else:
        dirs = np.asarray(eta, dtype=float)[:, None] * grid_directions[None, :]
    a = steering_matrix(geom, dirs)  # (M, N_T, G)
    vals = np.real(np.einsum("mtg,mts,msg->mg", a.conj(), r_x, a))
    return vals.mean(axis=0)


def beamforming_gain(r_x, target_dirs, geom: ArrayGeometry, eta=None) -> float:
    """Mean beampattern over the target directions and subcarriers."""
    target_dirs = np.atleast_1d(np.asarray(target_dirs, dtype=float))
    if target_dirs.size < 1:
        raise ValueError("at least one target direction is required")
    return float(np.mean(beampattern(r_x, target_dirs, geom, eta)))


def precoder_beampattern(precoders, grid_directions, geom: ArrayGeometry, eta=None) -> np.ndarray:
    """Beampattern of ``R_x = F F^H / N_S`` computed as ``||F^H a||^2 / N_S``.

    ``precoders`` has shape ``(..., M, N_T, N_S)``; leading axes (e.g.
    patterns) are averaged together with the subcarriers.  Avoids forming
    the ``N_T x N_T`` covariances.
    """
    f = np.asarray(precoders)
    M, _, n_s = f.shape[-3:]
    grid_directions = np.atleast_1d(np.asarray(grid_directions, dtype=float))
    if eta is None:
        dirs = np.broadcast_to(grid_directions, (M, grid_directions.size))
    else:
        dirs = np.asarray(eta, dtype=float)[:, None] * grid_directions[None, :]
    a = steering_matrix(geom, dirs)  # (M, N_T, G)
    proj = np.conj(np.swapaxes(f, -1, -2)) @ a  # (..., M, N_S, G)
    vals = np.sum(np.abs(proj) ** 2, axis=-2) / n_s
    return vals.reshape(-1, grid_directions.size).mean(axis=0)


def beamformer_error(f_rf, f_bb_bar, f_c_bar, f_r, pi_bar):
    """``(||F_RF F_BB - F_C||_F, ||F_RF F_BB - F_R Pi||_F)`` on stacked subcarrier blocks."""
    hybrid = np.asarray(f_rf) @ np.asarray(f_bb_bar)
    comm = float(np.linalg.norm(hybrid - f_c_bar))
    radar = float(np.linalg.norm(hybrid - np.asarray(f_r) @ np.asarray(pi_bar)))
    return comm, radar
