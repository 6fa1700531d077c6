import logging

import numpy as np
import pytest
from scipy import signal

from reconet.errors import DataError, NumericalError
from reconet.spectral import (BandSpec, WelchParams, band_mean, coherence, coherence_from_spectra,
                              default_tfd_freqs, mean_tfd, morlet_tfd, morlet_wavelet, welch_spectra)

FS = 500.0


def _dft(x):
    """Brute-force DFT, O(N^2), independent of any FFT library."""
    n = x.size
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def test_single_rectangular_window_matches_dft_oracle(rng):
    x = rng.normal(size=512)
    y = rng.normal(size=512)
    p = WelchParams(512, 0.0, "rectangular", 512)
    est = welch_spectra(x, y, p, FS)
    assert est.n_segments == 1
    two_sided = np.abs(_dft(x)) ** 2 / (512 * FS)
    # one-sided density: interior bins carry both the +f and -f halves
    expected = two_sided[:257].copy()
    expected[1:-1] *= 2.0
    np.testing.assert_allclose(est.pxx, expected, rtol=1e-9)
    cross = np.conj(_dft(x)) * _dft(y) / (512 * FS)
    expected_xy = cross[:257].copy()
    expected_xy[1:-1] *= 2.0
    np.testing.assert_allclose(est.pxy, expected_xy, rtol=1e-9, atol=1e-12 * np.abs(expected_xy).max())


def test_welch_matches_scipy_with_hann(rng):
    x = rng.normal(size=2000)
    y = rng.normal(size=2000) + 0.5 * x
    p = WelchParams()
    est = welch_spectra(x, y, p, FS)
    f, pxx = signal.welch(x, FS, window="hann", nperseg=500, noverlap=250, nfft=512, detrend=False)
    _, pxy = signal.csd(x, y, FS, window="hann", nperseg=500, noverlap=250, nfft=512, detrend=False)
    np.testing.assert_allclose(est.freqs_hz, f)
    np.testing.assert_allclose(est.pxx, pxx, rtol=1e-9)
    np.testing.assert_allclose(est.pxy, pxy, rtol=1e-9)


def test_parseval_sinusoid():
    t = np.arange(int(20 * FS)) / FS
    x = np.sin(2 * np.pi * 10.0 * t)
    est = welch_spectra(x, x, WelchParams(), FS)
    df = est.freqs_hz[1] - est.freqs_hz[0]
    assert np.sum(est.pxx) * df == pytest.approx(0.5, rel=0.02)


def test_identical_signals(rng):
    x = rng.normal(size=1500)
    est = welch_spectra(x, x.copy(), WelchParams(), FS)
    assert np.array_equal(est.pxy.real, est.pxx) and not est.pxy.imag.any()
    np.testing.assert_allclose(coherence(x, x, WelchParams(), FS), 1.0, atol=1e-9)


def test_cross_spectrum_hermitian(rng):
    x, y = rng.normal(size=(2, 1500))
    a = welch_spectra(x, y, WelchParams(), FS)
    b = welch_spectra(y, x, WelchParams(), FS)
    np.testing.assert_array_equal(a.pxy, np.conj(b.pxy))


def test_white_noise_coherence_monte_carlo():
    p = WelchParams(256, 0.5, "hann", 256)
    n = 256 + 7 * 128
    assert p.n_segments(n) == 8
    ours, oracle = [], []
    for seed in range(100):
        x, y = np.random.default_rng(seed).normal(size=(2, n))
        ours.append(coherence(x, y, p, FS).mean())
        # independent draws for the oracle so it is a true Monte-Carlo reference
        u, v = np.random.default_rng(10_000 + seed).normal(size=(2, n))
        oracle.append(signal.coherence(u, v, FS, window="hann", nperseg=256, noverlap=128,
                                       detrend=False)[1].mean())
    assert np.mean(ours) < 0.35
    assert abs(np.mean(ours) - np.mean(oracle)) < 0.05


def test_delayed_copy_is_coherent(rng):
    x = rng.normal(size=int(60 * FS))
    d = int(0.020 * FS)
    y = np.roll(x, d)
    c = coherence(x, y, WelchParams(), FS)
    f = WelchParams().freqs(FS)
    band = (f >= 1) & (f <= 30)
    assert c[band].min() > 0.95
    # oracle: the expected loss comes only from the shifted overlap of each window
    w = WelchParams().window()
    overlap = np.sum(w[:-d] * w[d:]) / np.sum(w * w)
    assert c[band].mean() == pytest.approx(overlap ** 2, abs=0.01)


def test_coherence_scale_invariance_and_symmetry(rng):
    x, y = rng.normal(size=(2, 3000))
    y += 0.3 * x
    p = WelchParams()
    base = coherence(x, y, p, FS)
    np.testing.assert_allclose(coherence(-3.5 * x, 1e-3 * y, p, FS), base, atol=1e-9)
    assert np.array_equal(coherence(y, x, p, FS), base)


def test_coherence_zero_power_bins(caplog):
    p = WelchParams(100, 0.5, "rectangular", 128)
    x = np.zeros(400)
    y = np.random.default_rng(0).normal(size=400)
    with caplog.at_level(logging.WARNING, logger="reconet.spectral"):
        c = coherence(x, y, p, FS)
    assert not c.any()
    assert "zero auto-power" in caplog.text


def test_coherence_errors():
    with pytest.raises(DataError):
        coherence(np.zeros(400), np.zeros(400), WelchParams(), FS)  # single segment
    with pytest.raises(DataError):
        welch_spectra(np.zeros(100), np.zeros(100), WelchParams(), FS)
    with pytest.raises(NumericalError):
        coherence_from_spectra(np.array([1.0]), np.array([1.0]), np.array([1.1]))
    for bad in (dict(window_len_samples=0), dict(overlap_fraction=1.0), dict(window_kind="tukey"),
                dict(fft_len=600)):
        with pytest.raises(DataError):
            WelchParams(**bad)


def test_band_mean_examples(rng):
    freqs = np.arange(1.0, 31.0)
    assert band_mean(np.full(30, 0.4), freqs, BandSpec.parse("8-13")) == pytest.approx(0.4)
    assert band_mean(freqs, freqs, BandSpec.parse("1-8")) == 4.5
    v = rng.random(30)
    band = BandSpec.parse("8-13")
    total, count = 0.0, 0
    for f, value in zip(freqs, v):
        if 8.0 <= f <= 13.0:
            total += value
            count += 1
    assert band_mean(v, freqs, band) == pytest.approx(total / count, abs=1e-12)
    with pytest.raises(DataError):
        band_mean(v, freqs, BandSpec.parse("40-45"))
    with pytest.raises(DataError):
        BandSpec.parse("8")
    with pytest.raises(DataError):
        BandSpec("x", 8.0, 1.0)


def test_eight_hz_bin_shared_by_both_bands():
    f = WelchParams().freqs(FS)
    lo, hi = BandSpec.parse("1-8").mask(f), BandSpec.parse("8-13").mask(f)
    assert np.count_nonzero(lo & hi) <= 1
    f2 = np.arange(0, 20.0, 0.5)
    assert (BandSpec.parse("1-8").mask(f2) & BandSpec.parse("8-13").mask(f2)).sum() == 1


def test_morlet_unit_energy():
    for f in (1.0, 10.0, 30.0):
        w = morlet_wavelet(f, FS)
        assert np.sum(np.abs(w) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_morlet_zero_and_sign():
    freqs = default_tfd_freqs()
    assert freqs[0] == 1.0 and freqs[-1] == 30.0 and freqs.size == 59
    assert not morlet_tfd(np.zeros(500), FS, freqs).magnitude.any()
    x = np.random.default_rng(3).normal(size=700)
    np.testing.assert_array_equal(morlet_tfd(x, FS, freqs).magnitude, morlet_tfd(-x, FS, freqs).magnitude)


def test_morlet_ridge_of_sinusoid():
    t = np.arange(int(4 * FS)) / FS
    tfd = morlet_tfd(np.sin(2 * np.pi * 10.0 * t), FS, default_tfd_freqs())
    interior = slice(int(FS), -int(FS))
    ridge = tfd.freqs_hz[np.argmax(tfd.magnitude[:, interior], axis=0)]
    assert np.all(ridge == 10.0)


def test_morlet_ridge_of_chirp():
    t = np.arange(int(6 * FS)) / FS
    x = signal.chirp(t, f0=2.0, t1=t[-1], f1=20.0, method="linear")
    tfd = morlet_tfd(x, FS, default_tfd_freqs())
    interior = slice(int(1.5 * FS), -int(0.5 * FS))
    ridge = tfd.freqs_hz[np.argmax(tfd.magnitude[:, interior], axis=0)]
    assert np.all(np.diff(ridge) >= 0)
    f_inst = 2.0 + 18.0 * t[interior] / t[-1]
    assert np.abs(ridge - f_inst).max() <= 1.0


def test_mean_tfd_is_average_of_single_tfds(rng):
    freqs = np.array([4.0, 10.0])
    segs = rng.normal(size=(3, 400))
    mean = mean_tfd(segs, FS, freqs, t0_ms=-200.0)
    single = np.mean([morlet_tfd(s, FS, freqs).magnitude for s in segs], axis=0)
    np.testing.assert_allclose(mean.magnitude, single, atol=1e-12)
    assert mean.times_ms[0] == -200.0


def test_morlet_errors():
    with pytest.raises(DataError):
        morlet_tfd(np.zeros(100), FS, [0.0, 10.0])
    with pytest.raises(DataError):
        morlet_tfd(np.zeros(100), FS, [250.0])
    with pytest.raises(DataError):
        morlet_tfd(np.zeros(100), FS, [10.0], cycles=2)
