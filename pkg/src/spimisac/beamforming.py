"""Spatial patterns and the hybrid / analog-only ISAC beamformers.

A spatial pattern picks ``L_S`` of the ``L`` communication paths.  Its
analog beamformer is ``F_RF = [F_R | F_C]``: ``K`` target steering columns
followed by the steering vectors of the selected paths.  The baseband stage
approximates the JRC target ``eps F_opt + (1 - eps) F_R Pi`` by alternating
least squares and an orthogonal Procrustes update of ``Pi``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .array_model import ArrayGeometry, steering_matrix

__all__ = [
    "SpatialPattern",
    "BeamformerSet",
    "AlternatingResult",
    "pattern_count",
    "enumerate_patterns",
    "assemble_analog",
    "optimal_precoder",
    "jrc_target",
    "baseband_ls",
    "solve_opp",
    "opp_objective",
    "initial_pi",
    "alternating_design",
    "sd_analog",
    "bsa_baseband",
    "amplitude_controller",
    "ao_beamformers",
    "design_hybrid",
]


@dataclass(frozen=True)
class SpatialPattern:
    """Selection of ``L_S`` paths out of ``L``.

    ``paths`` holds 0-based path indices in increasing order; ``index`` is
    the 1-based pattern number.
    """

    index: int
    paths: tuple
    n_paths: int

    def __post_init__(self):
        p = tuple(int(i) for i in self.paths)
        if not p:
            raise ValueError("a pattern must select at least one path")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError(f"path indices must be strictly increasing, got {p}")
        if p[0] < 0 or p[-1] >= self.n_paths:
            raise ValueError(f"path indices {p} outside 0..{self.n_paths - 1}")
        object.__setattr__(self, "paths", p)

    @property
    def selection_matrix(self) -> np.ndarray:
        """``B`` of shape ``(L, L_S)`` made of identity columns."""
        return np.eye(self.n_paths)[:, list(self.paths)]


def pattern_count(n_paths: int, n_selected: int) -> int:
    """``S = 2 ** floor(log2(C(L, L_S)))``."""
    if not 1 <= n_selected <= n_paths:
        raise ValueError(f"need 1 <= L_S <= L, got L={n_paths}, L_S={n_selected}")
    return 1 << (math.comb(n_paths, n_selected).bit_length() - 1)


def enumerate_patterns(n_paths: int, n_selected: int) -> list[SpatialPattern]:
    """The first ``S`` index combinations in lexicographic order."""
    count = pattern_count(n_paths, n_selected)
    combos = itertools.islice(itertools.combinations(range(n_paths), n_selected), count)
    return [SpatialPattern(i + 1, c, n_paths) for i, c in enumerate(combos)]


@dataclass
class BeamformerSet:
    """Beamformers designed for one spatial pattern.

    Attributes
    ----------
    analog : ndarray, shape (N_T, N_RF)
    baseband : ndarray, shape (M, N_RF, N_S)
    pi : ndarray, shape (K, M * N_S)
        Procrustes variable, subcarrier blocks side by side.
    bsa_baseband : ndarray or None, shape (M, N_RF, N_S)
    sd_analog : ndarray or None, shape (M, N_T, N_RF)
    """

    analog: np.ndarray
    baseband: np.ndarray
    pi: np.ndarray
    bsa_baseband: np.ndarray | None = None
    sd_analog: np.ndarray | None = None
    pattern: SpatialPattern | None = None

    def hybrid(self, beam_split_aware: bool = False) -> np.ndarray:
        """Effective per-subcarrier precoders ``F_RF F_BB[m]``."""
        bb = self.bsa_baseband if beam_split_aware else self.baseband
        if bb is None:
            raise ValueError("no beam-split-aware baseband was designed")
        return self.analog @ bb


def assemble_analog(target_dirs, path_dods, pattern: SpatialPattern, geom: ArrayGeometry) -> np.ndarray:
    """``[a_T(Phi_1) .. a_T(Phi_K) | a_T(theta_i1) .. a_T(theta_iLS)]``."""
    target_dirs = np.atleast_1d(np.asarray(target_dirs, dtype=float))
    path_dods = np.atleast_1d(np.asarray(path_dods, dtype=float))
    if path_dods.size != pattern.n_paths:
        raise ValueError(f"pattern is over {pattern.n_paths} paths, got {path_dods.size} DoDs")
    dirs = np.concatenate([target_dirs, path_dods[list(pattern.paths)]])
    return steering_matrix(geom, dirs)


def optimal_precoder(h: np.ndarray, n_streams: int) -> np.ndarray:
    """``N_S`` dominant right singular vectors of ``H`` (or of every ``H[m]``)."""
    h = np.asarray(h)
    if n_streams > min(h.shape[-2:]):
        raise ValueError(f"N_S = {n_streams} exceeds min(N_R, N_T) = {min(h.shape[-2:])}")
    _, sv, vh = np.linalg.svd(h)
    top = sv[..., :n_streams]
    if np.any(top <= 1e-12 * np.maximum(sv[..., :1], np.finfo(float).tiny)):
        warnings.warn("channel rank below N_S; precoder padded with an arbitrary orthonormal complement", RuntimeWarning)
    return np.conj(np.swapaxes(vh, -1, -2))[..., :n_streams]


def jrc_target(f_opt, f_r, pi, eps: float):
    """``eps F_opt + (1 - eps) F_R Pi``; broadcasts over subcarriers."""
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    return eps * np.asarray(f_opt) + (1 - eps) * (np.asarray(f_r) @ np.asarray(pi))


def _pinv(f_rf):
    if np.linalg.matrix_rank(f_rf) < f_rf.shape[1]:
        warnings.warn("analog beamformer is rank deficient; using pseudo-inverse", RuntimeWarning)
    return np.linalg.pinv(f_rf)


def _normalize(f_rf, f_bb, n_streams):
    # per-subcarrier ||F_RF F_BB[m]||_F = sqrt(N_S)
    norm = np.linalg.norm(f_rf @ f_bb, axis=(-2, -1), keepdims=True)
    return np.sqrt(n_streams) * f_bb / np.maximum(norm, np.finfo(float).tiny)


def baseband_ls(f_rf, f_cr, n_streams: int | None = None, normalize: bool = True):
    """``F_RF^+ F_CR[m]``, optionally scaled to ``||F_RF F_BB[m]||_F = sqrt(N_S)``."""
    f_bb = _pinv(f_rf) @ np.asarray(f_cr)
    if normalize:
        f_bb = _normalize(f_rf, f_bb, f_bb.shape[-1] if n_streams is None else n_streams)
    return f_bb


def _stack(per_subcarrier):
    # (M, rows, N_S) -> (rows, M * N_S)
    a = np.asarray(per_subcarrier)
    return np.concatenate(list(a), axis=1)


def _unstack(bar, n_subcarriers):
    return np.stack(np.split(bar, n_subcarriers, axis=1))


def solve_opp(f_r, f_rf, f_bb_bar, f_opt_bar, eps: float):
    """Row-orthonormal ``Pi`` minimizing ``||F_RF F_BB - eps F_opt - (1-eps) F_R Pi||_F``.

    ``f_bb_bar`` and ``f_opt_bar`` hold the subcarrier blocks side by side.
    With ``Pi Pi^H = I`` the term ``||F_R Pi||_F`` is constant, so the
    problem reduces to maximizing ``Re tr(Pi^H A)`` with
    ``A = F_R^H (F_RF F_BB - eps F_opt)``, solved by ``U [I 0] V^H``.
    Returns ``(Pi, defined)``; ``defined`` is False at ``eps = 1``.
    """
    f_r = np.asarray(f_r)
    k = f_r.shape[1]
    cols = np.asarray(f_bb_bar).shape[1]
    if k > cols:
        raise ValueError(f"Pi needs K <= M * N_S, got K={k}, columns={cols}")
    if eps >= 1:
        return np.eye(k, cols, dtype=complex), False
    a = f_r.conj().T @ (f_rf @ f_bb_bar - eps * f_opt_bar) / (1 - eps)
    u, _, vh = np.linalg.svd(a, full_matrices=False)
    return u @ vh, True


def opp_objective(f_r, f_rf, f_bb_bar, f_opt_bar, pi, eps: float) -> float:
    """``||F_RF F_BB - eps F_opt - (1 - eps) F_R Pi||_F^2``."""
    diff = f_rf @ f_bb_bar - eps * f_opt_bar - (1 - eps) * (f_r @ pi)
    return float(np.sum(np.abs(diff) ** 2))


def initial_pi(n_targets: int, n_streams: int, n_subcarriers: int) -> np.ndarray:
    """``I_{K x N_S}`` replicated per subcarrier, scaled by ``1/sqrt(M)`` to be row-orthonormal.

    Needs ``K <= N_S``; otherwise the joint identity ``I_{K x M N_S}`` is used.
    """
    if n_targets <= n_streams:
        block = np.eye(n_targets, n_streams, dtype=complex)
        return np.concatenate([block] * n_subcarriers, axis=1) / np.sqrt(n_subcarriers)
    return np.eye(n_targets, n_subcarriers * n_streams, dtype=complex)


@dataclass
class AlternatingResult:
    baseband: np.ndarray
    pi: np.ndarray
    residuals: np.ndarray
    converged: bool
    iterations: int = field(default=0)


def alternating_design(
    f_rf,
    f_opt,
    f_r,
    eps: float,
    tol: float = 1e-6,
    max_iter: int = 50,
    normalize: bool = True,
) -> AlternatingResult:
    """Alternate the least-squares baseband and the Procrustes ``Pi`` update.

    The residual ``sum_m ||F_RF F_BB[m] - F_CR[m]||_F^2`` is recorded after
    every iteration (using the updated ``Pi``) and the loop stops once it
    changes by less than ``tol``.  Iterates are unnormalized so each step
    solves its subproblem exactly and the residual cannot grow; the
    returned baseband is scaled to ``sqrt(N_S)`` per subcarrier at the end.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    f_opt = np.asarray(f_opt)
    M, _, n_s = f_opt.shape
    k = np.asarray(f_r).shape[1]
    f_opt_bar = _stack(f_opt)
    pinv = _pinv(f_rf)
    pi = initial_pi(k, n_s, M)
    residuals = []
    converged = False
    f_bb = None
    for it in range(1, max_iter + 1):
        f_cr = jrc_target(f_opt, f_r, _unstack(pi, M), eps)
        f_bb = pinv @ f_cr
        f_bb_bar = _stack(f_bb)
        pi, defined = solve_opp(f_r, f_rf, f_bb_bar, f_opt_bar, eps)
        residuals.append(opp_objective(f_r, f_rf, f_bb_bar, f_opt_bar, pi, eps))
        if not defined:
            converged = True
            break
        if len(residuals) > 1 and abs(residuals[-2] - residuals[-1]) < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"alternating design did not converge in {max_iter} iterations", RuntimeWarning)
    if normalize:
        f_bb = _normalize(f_rf, f_bb, n_s)
    return AlternatingResult(f_bb, pi, np.array(residuals), converged, it)


def sd_analog(f_rf, eta, unwrap: bool = True) -> np.ndarray:
    """Subcarrier-dependent analog beamformer with entries ``exp(j eta_m angle(F_RF))``.

    With ``unwrap`` the phases are unwrapped along the antenna axis first,
    so a steering column at ``theta`` maps exactly to one at
    ``eta_m theta``.  Principal-value phases (``unwrap=False``) wrap every
    ``2 pi`` and the scaled column is no longer a steering vector.
    """
    f_rf = np.asarray(f_rf)
    n_t = f_rf.shape[0]
    phase = np.angle(f_rf)
    if unwrap:
        phase = np.unwrap(phase, axis=0)
    eta = np.asarray(eta, dtype=float)
    return np.exp(1j * eta[..., None, None] * phase) / np.sqrt(n_t)


def bsa_baseband(f_rf, f_sd, f_bb, n_streams: int | None = None, normalize: bool = True):
    """``F_RF^+ F_SD[m] F_BB[m]``: digital correction for the beam-split loss."""
    out = _pinv(f_rf) @ np.asarray(f_sd) @ np.asarray(f_bb)
    if normalize:
        out = _normalize(f_rf, out, out.shape[-1] if n_streams is None else n_streams)
    return out


def amplitude_controller(eps: float, n_targets: int, n_streams: int) -> np.ndarray:
    """``D = [(1 - eps) I_{K x N_S}; eps I_{N_S}]``."""
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    return np.vstack([(1 - eps) * np.eye(n_targets, n_streams), eps * np.eye(n_streams)])


def ao_beamformers(f_analog, eps: float, n_targets: int, n_streams: int, normalize: bool = True):
    """Analog-only precoder ``F D`` scaled to ``||F D||_F = sqrt(N_S)``.

    ``f_analog`` is either the SI analog beamformer ``(N_T, N_RF)`` or the SD
    stack ``(M, N_T, N_RF)``.
    """
    f_analog = np.asarray(f_analog)
    if f_analog.shape[-1] != n_targets + n_streams:
        raise ValueError(f"AO needs N_RF = K + N_S = {n_targets + n_streams}, got {f_analog.shape[-1]}")
    out = f_analog @ amplitude_controller(eps, n_targets, n_streams)
    if normalize:
        norm = np.linalg.norm(out, axis=(-2, -1), keepdims=True)
        out = np.sqrt(n_streams) * out / np.maximum(norm, np.finfo(float).tiny)
    return out


def design_hybrid(
    target_dirs,
    path_dods,
    pattern: SpatialPattern,
    geom: ArrayGeometry,
    f_opt,
    eps: float,
    eta=None,
    tol: float = 1e-6,
    max_iter: int = 50,
    unwrap: bool = True,
) -> BeamformerSet:
    """Analog assembly, alternating baseband design and (with ``eta``) BSA correction."""
    target_dirs = np.atleast_1d(np.asarray(target_dirs, dtype=float))
    f_rf = assemble_analog(target_dirs, path_dods, pattern, geom)
    f_r = f_rf[:, : target_dirs.size]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = alternating_design(f_rf, f_opt, f_r, eps, tol, max_iter)
    out = BeamformerSet(f_rf, res.baseband, res.pi, pattern=pattern)
    if eta is not None:
        out.sd_analog = sd_analog(f_rf, eta, unwrap)
        out.bsa_baseband = bsa_baseband(f_rf, out.sd_analog, res.baseband)
    return out
