"""Property-based checks of the numerical invariants."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reconet.classify import FeatureTable, accuracy_percent, form_groups, lda_train
from reconet.erp import ErpWaveform, p300_amplitude
from reconet.ingest import EventList, Recording, read_edf, read_events, write_edf, write_events
from reconet.montage import P300_ELECTRODES
from reconet.network import reconfig_strength
from reconet.preprocess import filter_array
from reconet.spectral import BandSpec, WelchParams, band_mean, coherence, welch_spectra
from reconet.stats import bonferroni, mahalanobis_distances, n_excluded, paired_t_test, pearson

FS = 500.0
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2 ** 32 - 1)


def _signal_pair(seed, n, mix):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    return x, mix * x + rng.normal(size=n)


# ---------------------------------------------------------------- spectral

@FAST
@given(seed=seeds, n=st.integers(1000, 3000), mix=st.floats(-3, 3), gain=st.floats(1e-3, 1e3),
       sign=st.sampled_from([-1.0, 1.0]))
def test_coherence_bounded_symmetric_scale_free(seed, n, mix, gain, sign):
    x, y = _signal_pair(seed, n, mix)
    p = WelchParams()
    c = coherence(x, y, p, FS)
    assert np.all((c >= 0) & (c <= 1))
    assert np.array_equal(coherence(y, x, p, FS), c)
    np.testing.assert_allclose(coherence(sign * gain * x, y, p, FS), c, atol=1e-9)


@FAST
@given(seed=seeds, n=st.integers(600, 2500))
def test_psd_nonnegative_and_hermitian(seed, n):
    x, y = _signal_pair(seed, n, 0.5)
    a = welch_spectra(x, y, WelchParams(), FS)
    b = welch_spectra(y, x, WelchParams(), FS)
    assert np.all(a.pxx >= 0) and np.all(a.pyy >= 0)
    np.testing.assert_array_equal(a.pxy, np.conj(b.pxy))
    # Cauchy-Schwarz per bin
    assert np.all(np.abs(a.pxy) ** 2 <= a.pxx * a.pyy * (1 + 1e-9) + 1e-300)


@FAST
@given(values=arrays(float, 30, elements=st.floats(0, 1)), lo=st.integers(1, 20), width=st.integers(1, 9))
def test_band_mean_within_range(values, lo, width):
    freqs = np.arange(1.0, 31.0)
    band = BandSpec(f"{lo}-{lo + width}", float(lo), float(lo + width))
    m = band_mean(values, freqs, band)
    inside = values[(freqs >= lo) & (freqs <= lo + width)]
    assert inside.min() - 1e-12 <= m <= inside.max() + 1e-12


# --------------------------------------------------------------- filtering

@FAST
@given(seed=seeds, a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_filter_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 2, 800))
    lhs = filter_array(a * x + b * y, 1.0, 30.0, FS)
    rhs = a * filter_array(x, 1.0, 30.0, FS) + b * filter_array(y, 1.0, 30.0, FS)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)))


@FAST
@given(seed=seeds)
def test_filter_commutes_with_time_reversal(seed):
    x = np.random.default_rng(seed).normal(size=(1, 700))
    np.testing.assert_allclose(filter_array(x[:, ::-1], 1.0, 13.0, FS), filter_array(x, 1.0, 13.0, FS)[:, ::-1],
                               atol=1e-9)


# ------------------------------------------------------------------- stats

@FAST
@given(seed=seeds, n=st.integers(3, 30), shift=st.floats(-2, 2))
def test_paired_t_antisymmetric(seed, n, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n) + shift
    ab, ba = paired_t_test(a, b), paired_t_test(b, a)
    assert ab.statistic == -ba.statistic and ab.p_value == ba.p_value
    assert 0.0 <= ab.p_value <= 1.0


@FAST
@given(seed=seeds, n=st.integers(4, 40), k=st.floats(0.1, 10), c=st.floats(-10, 10))
def test_pearson_affine_invariance(seed, n, k, c):
    x, y = _signal_pair(seed, n, 0.7)
    base = pearson(x, y)
    moved = pearson(k * x + c, y)
    assert moved.statistic == pytest.approx(base.statistic, abs=1e-9)
    assert -1.0 <= base.statistic <= 1.0 and 0.0 <= base.p_value <= 1.0


@FAST
@given(p=arrays(float, st.integers(1, 300), elements=st.floats(0, 1)), alpha=st.floats(1e-4, 0.5))
def test_bonferroni_threshold_and_subset(p, alpha):
    mask, thr = bonferroni(p, alpha)
    assert thr == alpha / p.size
    assert np.array_equal(mask, p < thr)
    assert mask.sum() <= (p < alpha).sum()


@FAST
@given(n=st.integers(4, 200), frac=st.floats(0, 0.5))
def test_exclusion_count(n, frac):
    k = n_excluded(n, frac)
    assert k == math.ceil(frac * n - 1e-9 * n) or k == math.ceil(frac * n)
    assert 0 <= k <= n


@FAST
@given(seed=seeds, n=st.integers(5, 40), angle=st.floats(0, 2 * np.pi), sx=st.floats(0.2, 5), sy=st.floats(0.2, 5))
def test_mahalanobis_affine_invariant(seed, n, angle, sx, sy):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    y = x @ (rot @ np.diag([sx, sy])).T + np.array([3.0, -1.0])
    np.testing.assert_allclose(mahalanobis_distances(y), mahalanobis_distances(x), rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------- classify

@FAST
@given(seed=seeds, n=st.integers(18, 30), g=st.integers(2, 9))
def test_form_groups_sizes_and_order(seed, n, g):
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=n)
    t = form_groups(FeatureTable(tuple(f"s{i}" for i in range(n)), rng.normal(size=n), rng.normal(size=n), amp), g)
    hi = [amp[i] for i, grp in enumerate(t.group) if grp == "high"]
    lo = [amp[i] for i, grp in enumerate(t.group) if grp == "low"]
    assert len(hi) == len(lo) == g
    assert min(hi) >= max(lo)


@FAST
@given(truth=arrays(np.int64, st.integers(1, 40), elements=st.integers(0, 1)), seed=seeds)
def test_accuracy_percent_range(truth, seed):
    pred = np.random.default_rng(seed).integers(0, 2, truth.size)
    pct = accuracy_percent(pred, truth)
    assert 0.0 <= pct <= 100.0 and pct == round(pct, 2)
    assert accuracy_percent(truth, truth) == 100.0


@FAST
@given(seed=seeds, scale=st.floats(0.01, 100))
def test_lda_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(size=(10, 2)), rng.normal(size=(10, 2)) + 1.0])
    y = np.repeat([0, 1], 10)
    grid = rng.normal(size=(30, 2))
    a = lda_train(x, y).decision(grid)
    b = lda_train(scale * x, y).decision(scale * grid)
    assume(np.min(np.abs(a)) > 1e-6)
    assert np.array_equal(np.sign(a), np.sign(b))


# --------------------------------------------------------------------- ERP

@FAST
@given(seed=seeds, offset=st.floats(-50, 50), gain=st.floats(0.1, 10))
def test_p300_offset_and_gain(seed, offset, gain):
    t = -200.0 + np.arange(500) * 2.0
    wave = 6 * np.exp(-0.5 * ((t - 400) / 30) ** 2) + np.random.default_rng(seed).normal(size=500)
    labels = P300_ELECTRODES
    erp = ErpWaveform(np.tile(wave, (5, 1)), -200.0, 1, FS, labels)
    base = p300_amplitude(erp)
    moved = p300_amplitude(ErpWaveform(np.tile(gain * wave + offset, (5, 1)), -200.0, 1, FS, labels))
    assert moved.latency_ms == base.latency_ms
    assert moved.amplitude_uv == pytest.approx(gain * base.amplitude_uv + offset, abs=1e-9)
    assert 300.0 <= base.latency_ms <= 500.0


# ---------------------------------------------------------------- network

@FAST
@given(seed=seeds, k=st.integers(1, 30), c=finite)
def test_reconfig_strength_shift(seed, k, c):
    rng = np.random.default_rng(seed)
    r = rng.random((21, 21))
    edges = [tuple(sorted(e)) for e in rng.choice(21, size=(k, 2), replace=True) if e[0] != e[1]]
    assume(edges)
    assert reconfig_strength(r, r + c, edges) == pytest.approx(c, abs=1e-9 * (1 + abs(c)))


# ---------------------------------------------------------------- formats

@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(data=arrays(float, st.tuples(st.integers(1, 3), st.integers(1, 600)), elements=finite))
def test_edf_round_trip_within_half_lsb(tmp_path, data):
    assume(np.abs(data).max() > 0)
    rec = Recording(tuple(f"C{i}" for i in range(data.shape[0])), FS, data)
    path = tmp_path / "p.edf"
    write_edf(path, rec)
    back = read_edf(path)
    assert back.samples.shape == data.shape
    ladder = [m * 10.0 ** e for e in range(-4, 4) for m in (1, 2, 5)]
    for row, got in zip(data, back.samples):
        lsb = next(s for s in ladder if np.abs(row).max() <= 32767 * s)
        assert np.abs(got - row).max() <= lsb / 2 + 1e-9 * lsb


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(idx=st.lists(st.integers(0, 10 ** 7), min_size=1, max_size=50, unique=True),
       kinds=st.data())
def test_events_round_trip(tmp_path, idx, kinds):
    idx = sorted(idx)
    k = kinds.draw(st.lists(st.sampled_from(["standard", "target"]), min_size=len(idx), max_size=len(idx)))
    ev = EventList(np.array(idx), tuple(k))
    write_events(tmp_path / "e.csv", ev)
    back = read_events(tmp_path / "e.csv")
    assert np.array_equal(back.sample_index, ev.sample_index) and back.kind == ev.kind
