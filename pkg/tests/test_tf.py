import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambireg.tf import (
    BinNeighborhood,
    STFTConfig,
    TFTensor,
    _box_sum,
    band_select,
    bin_statistics,
    export_csv,
    istft,
    local_autocorr,
    singular_values,
    stft,
    valid_centers,
)


def random_tensor(shape, seed=0):
    rng = np.random.default_rng(seed)
    return TFTensor(rng.standard_normal(shape) + 1j * rng.standard_normal(shape), STFTConfig())


# --- STFT ------------------------------------------------------------------


def test_sine_lands_on_expected_bin():
    t = np.arange(16000) / 16000
    X = stft(np.sin(2 * np.pi * 1000 * t))
    assert 1000 * 512 / 16000 == 32
    assert np.all(np.argmax(np.abs(X.data[..., 0]), axis=1) == 32)


def test_round_trip_interior():
    x = np.random.default_rng(1).standard_normal((8000, 2))
    y = istft(stft(x), len(x))
    # trailing samples past the last full frame are not reconstructed
    n = len(y)
    np.testing.assert_allclose(y[512 : n - 512], x[512 : n - 512], atol=1e-10)


def test_white_noise_flat_spectrum():
    x = np.random.default_rng(2).standard_normal(256 * 101 + 256)
    mag = np.mean(np.abs(stft(x).data[..., 0]), axis=0)[1:-1]
    assert np.all(np.abs(mag / mag.mean() - 1) < 0.2)


def test_short_signal_rejected():
    with pytest.raises(ValueError):
        stft(np.zeros(100))


def test_non_cola_hop_rejected():
    with pytest.raises(ValueError):
        STFTConfig(hop=300)
    STFTConfig(window="rect", hop=512)


def test_istft_needs_full_band():
    with pytest.raises(ValueError):
        istft(band_select(stft(np.zeros(2048))))


# --- band selection ----------------------------------------------------------


def test_default_band_bins():
    b = band_select(stft(np.zeros(2048)), 400, 5000)
    assert b.bins[0] == 13 and b.bins[-1] == 160
    np.testing.assert_allclose(b.bin_hz[[0, -1]], [406.25, 5000.0])


def test_full_band_is_identity():
    X = stft(np.random.default_rng(0).standard_normal(2048))
    b = band_select(X, 0, 8000)
    assert b.bin_offset == 0 and np.array_equal(b.data, X.data)


def test_reversed_band_rejected():
    with pytest.raises(ValueError):
        band_select(stft(np.zeros(2048)), 5000, 400)


def test_nested_selection_keeps_absolute_bins():
    b = band_select(band_select(stft(np.zeros(2048)), 400, 5000), 1000, 2000)
    assert b.bins[0] == 32 and b.bins[-1] == 64


# --- local autocorrelation ---------------------------------------------------


def test_single_snapshot_is_outer_product():
    a = random_tensor((3, 4, 5))
    R = local_autocorr(a, (1, 2), BinNeighborhood(1, 1))
    v = a.data[1, 2]
    np.testing.assert_allclose(R, np.outer(v, v.conj()))
    assert np.linalg.matrix_rank(R) == 1


def test_white_snapshots_give_scaled_identity():
    a = random_tensor((100, 100, 4), seed=5)
    hood = BinNeighborhood(100, 100)
    R = local_autocorr(a, (49, 49), hood)
    assert np.max(np.abs(R - 2 * np.eye(4))) < 0.2


def test_autocorr_is_exactly_hermitian():
    R = local_autocorr(random_tensor((6, 20, 16)), (2, 8))
    assert np.array_equal(R, R.conj().T)


def test_out_of_bounds_is_none():
    a = random_tensor((6, 20, 4))
    assert local_autocorr(a, (0, 2)) is None  # bin offset -4 falls outside
    assert local_autocorr(a, (5, 10)) is None  # frame offset +1 falls outside


def test_neighborhood_rank_check():
    BinNeighborhood().check_rank(3)
    with pytest.raises(ValueError):
        BinNeighborhood(1, 9).check_rank(3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2))
def test_box_sum_matches_direct_sum(n, extent, axis):
    x = np.random.default_rng(n).standard_normal((7, 8, 3))
    extent = min(extent, x.shape[axis])
    got = _box_sum(x, axis, extent)
    idx = [slice(None)] * 3
    for i in range(x.shape[axis] - extent + 1):
        idx[axis] = slice(i, i + extent)
        ref = x[tuple(idx)].sum(axis=axis)
        np.testing.assert_allclose(np.take(got, i, axis=axis), ref, atol=1e-12)


def test_bin_statistics_match_per_bin_computation():
    a = random_tensor((9, 25, 16), seed=3)
    hood = BinNeighborhood()
    st_ = bin_statistics(a, hood, chunk=4)
    taus, ks = valid_centers(a, hood)
    assert len(st_) == taus.size * ks.size
    for i in [0, 7, len(st_) // 2, len(st_) - 1]:
        R = local_autocorr(a, (st_.frames[i], st_.bins[i] - a.bin_offset), hood)
        np.testing.assert_allclose(st_.svs[i], singular_values(R), rtol=1e-9, atol=1e-12)
        u = st_.principal[i]
        assert abs(np.vdot(u, R @ u).real - st_.svs[i][0]) < 1e-9 * st_.svs[i][0]


def test_bin_statistics_rows_ordered_by_frame_then_bin():
    a = random_tensor((6, 20, 16))
    s = bin_statistics(a)
    keys = list(zip(s.frames, s.bins))
    assert keys == sorted(keys)


def test_bin_statistics_empty_when_no_center_fits():
    s = bin_statistics(random_tensor((1, 20, 16)))
    assert len(s) == 0 and s.svs.shape == (0, 16)


# --- singular values ---------------------------------------------------------


def test_rank_one_singular_values():
    v = np.array([1 + 2j, -0.5, 3j])
    s = singular_values(np.outer(v, v.conj()))
    assert s[0] == pytest.approx(np.vdot(v, v).real)
    assert np.all(s[1:] < 1e-12)


def test_identity_singular_values():
    np.testing.assert_allclose(singular_values(np.eye(5)), np.ones(5))


def test_psd_singular_values_match_eigenvalues():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    R = A @ A.conj().T
    np.testing.assert_allclose(singular_values(R), np.linalg.eigvalsh(R)[::-1], rtol=1e-9)
    with pytest.raises(ValueError):
        singular_values(np.ones((2, 3)))


def test_export_csv(tmp_path):
    a = band_select(stft(np.random.default_rng(0).standard_normal((1024, 2))), 400, 600)
    export_csv(a, tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "frame,bin,channel,re,im"
    assert len(rows) == 1 + a.data.size
