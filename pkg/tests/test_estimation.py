import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spimisac.array_model import ArrayGeometry, CarrierGrid
from spimisac.channel import PathSet, frequency_channel
from spimisac.estimation import (
    SoundingSetup,
    bsa_omp,
    build_bsa_dictionary,
    dump_estimate_csv,
    nmse,
    random_sounding,
    sound_channel,
)

TX, RX = ArrayGeometry(16), ArrayGeometry(4)
GRID = CarrierGrid(300e9, 30e9, 6)
G = 32


def _on_grid_paths(rng, n_paths, n_grid=G):
    dirs = -1.0 + 2.0 * np.arange(n_grid) / n_grid
    # distinct tx and rx grid points
    tx_idx = rng.choice(n_grid, n_paths, replace=False)
    rx_idx = rng.choice(n_grid, n_paths, replace=False)
    return PathSet(rng.normal(1, 0.1, n_paths), rng.uniform(0, 20e-9, n_paths), dirs[tx_idx], dirs[rx_idx])


def _naive_omp(y, setup, dicts, n_paths):
    # explicit G^2-column dictionary per subcarrier, un-normalized rule on normalized atoms
    M = y.shape[0]
    psi = []
    for m, d in enumerate(dicts):
        cols = []
        for u in range(d.rx_grid.shape[1]):
            for v in range(d.tx_grid.shape[1]):
                h_uv = np.outer(d.rx_grid[:, u], d.tx_grid[:, v].conj())
                meas = setup.rx_combiners.conj().T @ h_uv @ setup.tx_pilots
                cols.append(meas.flatten(order="F"))
        mat = np.array(cols).T
        psi.append(mat / np.linalg.norm(mat, axis=0))
    res = y.copy()
    support = []
    for _ in range(n_paths):
        score = sum(np.abs(psi[m].conj().T @ res[m]) for m in range(M))
        score[support] = -np.inf
        k = int(np.argmax(score))
        support.append(k)
        for m in range(M):
            a = psi[m][:, support]
            coef = np.linalg.lstsq(a, y[m], rcond=None)[0]
            res[m] = y[m] - a @ coef
    n_grid = dicts[0].directions.size
    return [divmod(k, n_grid) for k in support]


def test_sounding_setup_validation():
    rng = np.random.default_rng(0)
    s = random_sounding(rng, 8, 4, 6, 3, n_rf_user=2)
    assert s.n_tx == 6 and s.n_rx == 3
    assert s.channel_uses == 6 * 2
    with pytest.raises(ValueError):
        SoundingSetup(np.ones((4, 5)), np.ones((2, 2)))
    bad = np.ones((4, 2), dtype=complex)
    bad[0, 0] = 2
    with pytest.raises(ValueError):
        SoundingSetup(bad, np.ones((2, 2)))
    np.testing.assert_allclose(np.abs(s.tx_pilots), 1 / np.sqrt(8))


def test_dictionary_grid_and_bounds():
    d = build_bsa_dictionary(TX, RX, GRID, 1, 8)
    np.testing.assert_allclose(d.directions, -1 + np.arange(8) / 4)
    assert d.eta == pytest.approx(GRID.eta[0])
    assert d.tx_grid.shape == (16, 8) and d.rx_grid.shape == (4, 8)
    with pytest.raises(IndexError):
        build_bsa_dictionary(TX, RX, GRID, 0, 8)
    with pytest.raises(ValueError):
        build_bsa_dictionary(TX, RX, GRID, 1, 1)


def test_sound_channel_column_major_vec():
    rng = np.random.default_rng(1)
    ch = frequency_channel(_on_grid_paths(rng, 2), GRID, RX, TX)
    setup = random_sounding(rng, 16, 4, 5, 3)
    y = sound_channel(ch, setup, 0.0)
    m = 2
    direct = setup.rx_combiners.conj().T @ ch.matrices[m] @ setup.tx_pilots
    np.testing.assert_allclose(y[m], direct.flatten(order="F"))
    # vec(W^H H F) = (F^T kron W^H) vec(H)
    kron = np.kron(setup.tx_pilots.T, setup.rx_combiners.conj().T)
    np.testing.assert_allclose(y[m], kron @ ch.matrices[m].flatten(order="F"), atol=1e-12)
    with pytest.raises(ValueError):
        sound_channel(ch, setup, 1.0)


def test_sound_channel_noise_level():
    rng = np.random.default_rng(2)
    ch = frequency_channel(_on_grid_paths(rng, 1), CarrierGrid(300e9, 30e9, 400), RX, TX)
    ch.matrices[:] = 0
    setup = random_sounding(rng, 16, 4, 16, 4)
    y = sound_channel(ch, setup, 0.5, rng)
    # combiner columns have unit norm, so each noise sample has variance noise_var
    assert np.mean(np.abs(y) ** 2) == pytest.approx(0.5, rel=0.05)


def test_bsa_omp_matches_naive_explicit_dictionary():
    rng = np.random.default_rng(7)
    geom_t, geom_r = ArrayGeometry(8), ArrayGeometry(4)
    grid = CarrierGrid(300e9, 30e9, 3)
    n_grid = 12
    paths = _on_grid_paths(rng, 2, n_grid)
    ch = frequency_channel(paths, grid, geom_r, geom_t)
    setup = random_sounding(rng, 8, 4, 6, 3)
    y = sound_channel(ch, setup, 1e-3, rng)
    dicts = [build_bsa_dictionary(geom_t, geom_r, grid, m, n_grid) for m in range(1, 4)]
    est = bsa_omp(y, setup, dicts, 2, geom_r, geom_t)
    assert est.support == _naive_omp(y, setup, dicts, 2)


@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
@settings(max_examples=25, deadline=None)
def test_bsa_omp_noiseless_exact_recovery(seed, n_paths):
    rng = np.random.default_rng(seed)
    rx = ArrayGeometry(8)
    paths = _on_grid_paths(rng, n_paths)
    ch = frequency_channel(paths, GRID, rx, TX)
    setup = random_sounding(rng, 16, 8, 16, 8)
    y = sound_channel(ch, setup, 0.0)
    dicts = [build_bsa_dictionary(TX, rx, GRID, m, G) for m in range(1, GRID.n_subcarriers + 1)]
    est = bsa_omp(y, setup, dicts, n_paths, rx, TX)
    got = sorted(zip(np.round(est.doa, 12), np.round(est.dod, 12)))
    assert got == sorted(zip(np.round(paths.doa, 12), np.round(paths.dod, 12)))
    free = frequency_channel(paths, GRID, rx, TX, apply_beam_split=False)
    assert nmse(est.channel.matrices, free.matrices) < 1e-10
    assert np.all(np.diff(est.residual_norms, axis=0) <= 1e-9)
    assert est.residual_norms.shape == (n_paths + 1, GRID.n_subcarriers)


def test_bsa_omp_input_validation():
    rng = np.random.default_rng(0)
    setup = random_sounding(rng, 16, 4, 4, 2)
    dicts = [build_bsa_dictionary(TX, RX, GRID, m, 8) for m in range(1, 7)]
    with pytest.raises(ValueError):
        bsa_omp(np.zeros((6, 7)), setup, dicts, 1, RX, TX)
    with pytest.raises(ValueError):
        bsa_omp(np.zeros((5, 8)), setup, dicts, 1, RX, TX)
    with pytest.raises(ValueError):
        bsa_omp(np.zeros((6, 8)), setup, dicts, 0, RX, TX)


def test_nmse():
    a = np.ones((2, 2, 2))
    assert nmse(a, a) == 0.0
    assert nmse(np.zeros_like(a), a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nmse(a, np.zeros_like(a))


def test_dump_estimate_csv(tmp_path):
    rng = np.random.default_rng(3)
    paths = _on_grid_paths(rng, 2)
    ch = frequency_channel(paths, GRID, RX, TX)
    setup = random_sounding(rng, 16, 4, 12, 4)
    dicts = [build_bsa_dictionary(TX, RX, GRID, m, G) for m in range(1, 7)]
    est = bsa_omp(sound_channel(ch, setup, 0.0), setup, dicts, 2, RX, TX)
    lines = dump_estimate_csv(est, tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("l,doa,dod,abs_gain_m1")
    assert len(lines) == 3
