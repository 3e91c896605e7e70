import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambireg.encoder import (
    ArrayGeometry,
    Encoder,
    IllConditionedError,
    RegularizationProfile,
    build_encoder,
    distortion,
    encode,
    lambda_for_snr,
    load_geometry,
    noise_gain,
    plane_wave_distortion,
    save_geometry,
    tikhonov_gains,
)
from ambireg.sh import Direction, SHVector, order_of_acn, plane_wave_coeffs, radial_rigid, sh_matrix


@pytest.fixture(scope="module")
def geom():
    return load_geometry()


@pytest.fixture(scope="module")
def enc(geom):
    return Encoder(geom, 3)


def synth(geom, freq, direction, order=3, c=343.0):
    """Microphone spectra of a unit plane wave, built from Y, B and a directly."""
    kr = 2 * np.pi * freq / c * geom.radius
    b = radial_rigid(order, kr).values[order_of_acn(order)]
    a = plane_wave_coeffs(direction, order).coeffs
    return sh_matrix(geom.mic_dirs, order) @ (b * a), a


# --- geometry ----------------------------------------------------------------


def test_builtin_geometry(geom):
    assert geom.num_mics == 32
    assert geom.radius == pytest.approx(0.042)
    assert np.allclose(np.linalg.norm(geom.positions(), axis=1), 0.042)


def test_geometry_roundtrip(geom, tmp_path):
    save_geometry(geom, tmp_path / "g.txt")
    g2 = load_geometry(tmp_path / "g.txt")
    np.testing.assert_allclose(g2.mic_dirs, geom.mic_dirs, atol=1e-12)


def test_geometry_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# layout\nradius 0.04\n10 20\n30 x\n")
    with pytest.raises(ValueError, match=r"bad.txt:4"):
        load_geometry(p)


def test_too_few_mics_rejected(geom):
    with pytest.raises(ValueError):
        Encoder(ArrayGeometry(0.04, geom.mic_dirs[:10]), 3)


def test_degenerate_layout_is_ill_conditioned():
    dirs = np.tile([[0.5, 0.5]], (20, 1))
    with pytest.raises(IllConditionedError):
        Encoder(ArrayGeometry(0.04, dirs), 2).Y_pinv


# --- regularization gains and distortion ------------------------------------


def test_gains_lambda_zero_is_identity():
    r = radial_rigid(3, 0.5)
    np.testing.assert_array_equal(tikhonov_gains(r, 0.0), np.ones(4))


def test_gains_half_at_matching_lambda():
    r = radial_rigid(3, 0.5)
    lam = abs(r.values[2])
    assert tikhonov_gains(r, lam)[2] == pytest.approx(0.5)


def test_gains_vanish_for_large_lambda():
    r = radial_rigid(3, 0.2)
    lam = 1e4
    c = tikhonov_gains(r, lam)
    np.testing.assert_allclose(c, np.abs(r.values) ** 2 / lam**2, rtol=1e-5)


def test_gains_strictly_below_one_at_1khz(geom):
    op = build_encoder(geom, 3, 1000.0, RegularizationProfile("tikhonov", 0.5))
    assert np.all(op.gains[1:] < 1)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        RegularizationProfile("tikhonov", -0.1)
    with pytest.raises(ValueError):
        RegularizationProfile("lasso", 0.1)


def test_distortion_limits():
    assert plane_wave_distortion(np.ones(4)) == 0.0
    assert plane_wave_distortion(np.zeros(4)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        distortion(np.ones(4), np.zeros(16))


def test_plane_wave_distortion_direction_independent():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1, 4)
    closed = plane_wave_distortion(c)
    for _ in range(20):
        d = Direction.from_vector(rng.standard_normal(3))
        assert distortion(c, plane_wave_coeffs(d, 3)) == pytest.approx(closed, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(400, 5000), st.floats(0, 2), st.floats(0, 2))
def test_noise_and_distortion_monotone_in_lambda(freq, l1, l2):
    e = Encoder(load_geometry(), 3)
    lo, hi = sorted((l1, l2))
    r_lo, r_hi = RegularizationProfile("tikhonov", lo), RegularizationProfile("tikhonov", hi)
    assert e.noise_gains([freq], r_hi)[0] <= e.noise_gains([freq], r_lo)[0] * (1 + 1e-12)
    assert e.plane_wave_distortions([freq], r_hi)[0] >= e.plane_wave_distortions([freq], r_lo)[0] - 1e-12


# --- operator ---------------------------------------------------------------


@pytest.mark.parametrize("freq", [300.0, 1000.0, 4000.0])
@pytest.mark.parametrize("lam", [0.0, 0.3, 1.5])
def test_operator_times_forward_model_is_C(enc, freq, lam):
    reg = RegularizationProfile("tikhonov", lam)
    op = enc.operator(freq, reg)
    b = op.radial[order_of_acn(3)]
    YB = enc.Y * b
    C = np.diag(op.gains[order_of_acn(3)])
    assert np.linalg.norm(op.matrix @ YB - C) / np.linalg.norm(C) < 1e-10


@pytest.mark.parametrize("freq", [1000.0, 2500.0, 4000.0])
def test_round_trip_recovers_plane_wave(geom, enc, freq):
    d = Direction.from_degrees(70, 215)
    p, a = synth(geom, freq, d)
    out = encode(enc.operator(freq, RegularizationProfile("tikhonov", 0.0)), p)
    assert np.linalg.norm(out.coeffs - a) / np.linalg.norm(a) < 1e-6


def test_regularized_encoding_returns_Ca(geom, enc):
    p, a = synth(geom, 800.0, Direction.from_degrees(40, 10))
    op = enc.operator(800.0, RegularizationProfile("tikhonov", 0.7))
    np.testing.assert_allclose(encode(op, p).coeffs, op.gains[order_of_acn(3)] * a, atol=1e-12)


def test_encode_zero_and_shape(enc):
    op = enc.operator(1000.0, RegularizationProfile("tikhonov", 0.1))
    assert encode(op, np.zeros(32)).norm() == 0
    with pytest.raises(ValueError):
        encode(op, np.zeros(31))
    with pytest.raises(ValueError):
        enc.operator(0.0, RegularizationProfile())


def test_noise_gain_single_mic_identity():
    op = build_encoder(ArrayGeometry(0.04, [[0.0, 0.0]]), 0, 1000.0, RegularizationProfile())
    M = op.matrix / op.matrix[0, 0]  # a 1x1 identity operator
    assert noise_gain(type(op)(**{**op.__dict__, "matrix": M})) == 1.0


def test_noise_gain_closed_forms_agree(enc):
    reg = RegularizationProfile("tikhonov", 0.2)
    freqs = [500.0, 1500.0, 4500.0]
    np.testing.assert_allclose(enc.noise_gains(freqs, reg), [enc.operator(f, reg).noise_gain for f in freqs], rtol=1e-12)


def test_noise_gain_monte_carlo(enc):
    rng = np.random.default_rng(1)
    op = enc.operator(700.0, RegularizationProfile("tikhonov", 0.1))
    n = (rng.standard_normal((32, 20000)) + 1j * rng.standard_normal((32, 20000))) / np.sqrt(2)
    mc = np.mean(np.sum(np.abs(op.matrix @ n) ** 2, axis=0)) / 32
    assert mc == pytest.approx(noise_gain(op), rel=0.04)


def test_white_noise_amplified_at_low_frequency(enc):
    rng = np.random.default_rng(2)
    op = enc.operator(300.0, RegularizationProfile("tikhonov", 0.0))
    n = rng.standard_normal(32)
    assert encode(op, n).norm() > 10 * np.linalg.norm(n)


def test_strictly_decreasing_noise_gain_over_sweep(enc):
    g = [enc.noise_gains([1200.0], RegularizationProfile("tikhonov", lam))[0] for lam in (0.01, 0.1, 0.5, 1.0)]
    assert np.all(np.diff(g) < 0)


# --- lambda for SNR ---------------------------------------------------------


def test_lambda_anchors():
    assert lambda_for_snr(20) == pytest.approx(0.05, rel=1e-12)
    assert lambda_for_snr(10) == pytest.approx(0.5, rel=1e-12)
    assert lambda_for_snr(5) == pytest.approx(1.5, rel=1e-12)


def test_lambda_at_13db_near_quarter():
    assert 0.125 <= lambda_for_snr(13) <= 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(-40, 80), st.floats(-40, 80))
def test_lambda_monotone_and_clamped(s1, s2):
    lo, hi = sorted((s1, s2))
    assert 0 <= lambda_for_snr(hi) <= lambda_for_snr(lo) <= 3


def test_lambda_rejects_nonfinite():
    with pytest.raises(ValueError):
        lambda_for_snr(float("inf"))
