import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spimisac.array_model import ArrayGeometry, steering_matrix, steering_vector
from spimisac.metrics import (
    SE_VARIANTS,
    beamformer_error,
    beamforming_gain,
    beampattern,
    log2det,
    precoder_beampattern,
    se_mimo,
    se_spim,
    sigma_matrix,
    tx_covariance,
)


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _orth(rng, n, k):
    q, _ = np.linalg.qr(_cplx(rng, n, k))
    return q


def _spim_oracle(h, precoders, noise_var, variant):
    # direct double loop over patterns with full N_R x N_R determinants
    S, M = precoders.shape[:2]
    n_r, n_s = h.shape[1], precoders.shape[-1]
    out = np.zeros(M)
    for m in range(M):
        sig = [np.eye(n_r) + h[m] @ precoders[i, m] @ precoders[i, m].conj().T @ h[m].conj().T / (noise_var * n_s)
               for i in range(S)]
        term = 0.0
        for i in range(S):
            term += np.log2(sum(1.0 / np.real(np.linalg.det(sig[i] + sig[j])) for j in range(S)))
        term /= S
        const = {"paper": -n_r * np.log2(2 * noise_var), "derivation": -n_r * np.log2(np.e), "normalized": -n_r}[variant]
        out[m] = np.log2(S) + const - term
    return out


def test_sigma_matrix_definition():
    rng = np.random.default_rng(0)
    h, f = _cplx(rng, 3, 5), _orth(rng, 5, 2)
    sig = sigma_matrix(h, f, 0.5)
    np.testing.assert_allclose(sig, np.eye(3) + h @ f @ f.conj().T @ h.conj().T / (0.5 * 2))
    with pytest.raises(ValueError):
        sigma_matrix(h, f, 0.0)


def test_log2det_matches_numpy_and_rejects_indefinite():
    a = np.diag([2.0, 4.0])
    assert log2det(a) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        log2det(np.diag([1.0, -1.0]))


def test_se_mimo_matches_eigenvalue_formula():
    rng = np.random.default_rng(1)
    h = _cplx(rng, 4, 6, 8)
    f = np.stack([_orth(rng, 8, 3) for _ in range(4)])
    se = se_mimo(h, f, 0.2)
    for m in range(4):
        lam = np.linalg.eigvalsh(h[m] @ f[m] @ f[m].conj().T @ h[m].conj().T)
        assert se.per_subcarrier[m] == pytest.approx(np.sum(np.log2(1 + lam / (0.2 * 3))))
    assert se.mean == pytest.approx(np.mean(se.per_subcarrier))


@pytest.mark.parametrize("variant", SE_VARIANTS)
@pytest.mark.parametrize("n_r,n_s", [(8, 2), (3, 2)])
def test_se_spim_matches_direct_oracle(variant, n_r, n_s):
    # (8, 2) exercises the Sylvester branch, (3, 2) the direct one
    rng = np.random.default_rng(2)
    M, S, n_t = 3, 4, 10
    h = _cplx(rng, M, n_r, n_t)
    pre = np.stack([np.stack([_orth(rng, n_t, n_s) for _ in range(M)]) for _ in range(S)])
    got = se_spim(h, pre, 0.7, variant).per_subcarrier
    np.testing.assert_allclose(got, _spim_oracle(h, pre, 0.7, variant), rtol=1e-9, atol=1e-9)


@given(st.integers(0, 2**31 - 1), st.floats(-20, 20))
@settings(max_examples=30, deadline=None)
def test_se_spim_normalized_equals_mimo_for_identical_patterns(seed, snr_db):
    rng = np.random.default_rng(seed)
    h = _cplx(rng, 2, 6, 8)
    f = np.stack([_orth(rng, 8, 2) for _ in range(2)])
    nv = 10 ** (-snr_db / 10)
    mimo = se_mimo(h, f, nv).per_subcarrier
    for S in (1, 4):
        spim = se_spim(h, np.stack([f] * S), nv).per_subcarrier
        np.testing.assert_allclose(spim, mimo, rtol=1e-9, atol=1e-10)


def test_se_variant_offsets():
    rng = np.random.default_rng(3)
    h = _cplx(rng, 2, 6, 8)
    pre = np.stack([np.stack([_orth(rng, 8, 2) for _ in range(2)]) for _ in range(4)])
    nv = 0.3
    vals = {v: se_spim(h, pre, nv, v).per_subcarrier for v in SE_VARIANTS}
    np.testing.assert_allclose(vals["derivation"] - vals["normalized"], 6 * (1 - np.log2(np.e)))
    np.testing.assert_allclose(vals["paper"] - vals["normalized"], 6 * (1 - np.log2(2 * nv)))
    # the "paper" and "normalized" variants coincide at unit noise
    np.testing.assert_allclose(se_spim(h, pre, 1.0, "paper").per_subcarrier, se_spim(h, pre, 1.0).per_subcarrier)


def test_se_spim_validation():
    with pytest.raises(ValueError):
        se_spim(np.zeros((1, 2, 2)), np.zeros((1, 1, 2, 1)), 1.0, "bogus")
    with pytest.raises(ValueError):
        se_spim(np.zeros((1, 2, 2)), np.zeros((0, 1, 2, 1)), 1.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_se_spim_bounded_by_log2s_plus_best_case(seed):
    # the index part contributes at most log2 S bits over the best single-pattern rate bound
    rng = np.random.default_rng(seed)
    h = _cplx(rng, 2, 6, 8)
    pre = np.stack([np.stack([_orth(rng, 8, 2) for _ in range(2)]) for _ in range(4)])
    spim = se_spim(h, pre, 0.5).per_subcarrier
    # log2 sum_j det(Si+Sj)^-1 >= log2 det(2 Si)^-1, so each pattern term <= log2 S - log2det(Si)
    best = np.max([se_mimo(h, pre[i], 0.5).per_subcarrier for i in range(4)], axis=0)
    assert np.all(spim <= np.log2(4) + best + 1e-9)


def test_tx_covariance_and_beampattern_oracle():
    rng = np.random.default_rng(4)
    geom = ArrayGeometry(8)
    f_rf = steering_matrix(geom, [0.1, -0.4, 0.6])
    f_bb = _cplx(rng, 2, 3, 2)
    r = tx_covariance(f_rf, f_bb)
    assert r.shape == (2, 8, 8)
    dirs = np.array([0.1, 0.3])
    bp = beampattern(r, dirs, geom)
    for g, d in enumerate(dirs):
        a = steering_vector(geom, d)
        expected = np.mean([np.real(a.conj() @ r[m] @ a) for m in range(2)])
        assert bp[g] == pytest.approx(expected)
    eta = np.array([0.95, 1.05])
    bp_eta = beampattern(r, dirs, geom, eta)
    a0, a1 = steering_vector(geom, 0.95 * 0.3), steering_vector(geom, 1.05 * 0.3)
    assert bp_eta[1] == pytest.approx(0.5 * np.real(a0.conj() @ r[0] @ a0 + a1.conj() @ r[1] @ a1))
    with pytest.raises(ValueError):
        beampattern(r, np.array([]), geom)


@pytest.mark.parametrize("use_eta", [False, True])
def test_precoder_beampattern_equals_covariance_form(use_eta):
    rng = np.random.default_rng(5)
    geom = ArrayGeometry(12)
    f = _cplx(rng, 3, 4, 12, 2)  # (S, M, N_T, N_S)
    eta = np.linspace(0.95, 1.05, 4) if use_eta else None
    dirs = np.linspace(-1, 1, 17)
    got = precoder_beampattern(f, dirs, geom, eta)
    expected = np.mean([beampattern(tx_covariance(f[s]), dirs, geom, eta) for s in range(3)], axis=0)
    np.testing.assert_allclose(got, expected, rtol=1e-10)


def test_beamforming_gain():
    geom = ArrayGeometry(16)
    a = steering_matrix(geom, [0.3])
    r = tx_covariance(a)
    assert beamforming_gain(r, [0.3], geom) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        beamforming_gain(r, [], geom)


def test_beamformer_error():
    rng = np.random.default_rng(6)
    f_rf = _cplx(rng, 6, 3)
    f_bb = _cplx(rng, 3, 4)
    f_r = f_rf[:, :1]
    pi = _cplx(rng, 1, 4)
    comm, radar = beamformer_error(f_rf, f_bb, f_rf @ f_bb, f_r, pi)
    assert comm == pytest.approx(0.0, abs=1e-12)
    assert radar == pytest.approx(np.linalg.norm(f_rf @ f_bb - f_r @ pi))
