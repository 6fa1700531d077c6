import numpy as np
import pytest
from scipy import signal

from reconet.errors import DataError
from reconet.headmodel import Leadfield, leadfield_for
from reconet.ingest import EventList, Recording
from reconet.montage import STANDARD_21
from reconet.preprocess import (EpochSet, baseline_correct, bandpass_filter, butter_bandpass, filter_array,
                                reject_artifacts, rereference_average, rereference_rest, rest_transform,
                                segment_epochs, segment_rest, zero_phase_cutoffs)

FS = 500.0


def _rec(data, labels=None, fs=FS):
    data = np.asarray(data, dtype=float)
    return Recording(labels or tuple(f"C{i}" for i in range(data.shape[0])), fs, data)


# ------------------------------------------------------------- referencing

def test_average_reference_examples(rng):
    out = rereference_average(_rec([[1.0], [3.0]]))
    np.testing.assert_array_equal(out.samples[:, 0], [-1.0, 1.0])
    assert out.reference == "average"
    x = rng.normal(size=(8, 300))
    once = rereference_average(_rec(x))
    assert np.all(np.abs(once.samples.sum(axis=0)) < 1e-12 * np.abs(x).max() * 8)
    np.testing.assert_allclose(rereference_average(once).samples, once.samples, atol=1e-12)
    with pytest.raises(DataError):
        rereference_average(_rec([[1.0, 2.0]]))


def test_rest_is_reference_invariant(rng):
    lf = leadfield_for(STANDARD_21)
    x = rng.normal(size=(21, 400)) * 10
    a = rereference_rest(_rec(x, STANDARD_21), lf)
    b = rereference_rest(_rec(x - x[7], STANDARD_21), lf)  # re-referenced to channel 7
    assert a.reference == "rest_infinity"
    scale = np.abs(a.samples).max()
    assert np.abs(a.samples - b.samples).max() <= 1e-9 * scale


def test_rest_projector_when_leadfield_is_mean_free(rng):
    g = rng.normal(size=(12, 40))
    g -= g.mean(axis=0)
    t = rest_transform(Leadfield(g))
    np.testing.assert_allclose(t @ t, t, atol=1e-9)


def test_rest_recovers_forward_model(rng):
    lf = leadfield_for(STANDARD_21)
    s = rng.normal(size=(lf.source_count, 50))
    truth = lf.gain @ s
    recorded = truth - truth[3] + 17.0 * rng.normal(size=50)  # reference site plus offset
    out = rereference_rest(_rec(recorded, STANDARD_21), lf).samples
    # oracle: the same projector applied to the clean infinity-referenced field
    t = rest_transform(lf)
    expected = t @ (truth - truth.mean(axis=0))
    np.testing.assert_allclose(out, expected, atol=1e-6 * np.abs(truth).max())


def test_rest_errors():
    lf = leadfield_for(STANDARD_21)
    with pytest.raises(DataError):
        rereference_rest(_rec(np.zeros((20, 10))), lf)
    with pytest.raises(DataError):
        Leadfield(np.zeros((3, 3)))
    with pytest.raises(DataError):
        rereference_rest(_rec(np.zeros((21, 10)), STANDARD_21), lf, keep=("XX9",))


def test_rest_keep_subset_matches_full(rng):
    lf = leadfield_for(STANDARD_21)
    x = rng.normal(size=(21, 100))
    full = rereference_rest(_rec(x, STANDARD_21), lf)
    part = rereference_rest(_rec(x, STANDARD_21), lf, keep=("Pz", "Cz"))
    np.testing.assert_allclose(part.samples, full.pick(("Pz", "Cz")).samples, atol=1e-12)


# --------------------------------------------------------------- filtering

def _amplitude(f_hz, seconds=10.0, trim_s=1.0):
    t = np.arange(int(seconds * FS)) / FS
    y = filter_array(np.sin(2 * np.pi * f_hz * t), 1.0, 13.0, FS)
    core = y[int(trim_s * FS):-int(trim_s * FS)]
    return np.sqrt(2 * np.mean(core ** 2)), y, t


def _butterworth_gain(f, lo, hi, order=4):
    """Closed-form single-pass magnitude of the bilinear Butterworth band-pass."""
    w, w1, w2 = (2 * FS * np.tan(np.pi * v / FS) for v in (f, lo, hi))
    proto = (w * w - w1 * w2) / (w * (w2 - w1))
    return 1.0 / np.sqrt(1.0 + proto ** (2 * order))


def test_bandpass_matches_butterworth_magnitude_oracle():
    lo, hi = zero_phase_cutoffs(1.0, 13.0, FS)
    for f in (1.0, 13.0):  # band edges sit at -3 dB of the zero-phase response
        assert _butterworth_gain(f, lo, hi) ** 2 == pytest.approx(2 ** -0.5, rel=1e-9)
    sos = butter_bandpass(1.0, 13.0, FS)
    for f in (3.0, 10.0, 13.0, 20.0, 40.0):
        expected = _butterworth_gain(f, lo, hi) ** 2  # forward-backward squares the magnitude
        _, h = signal.sosfreqz(sos, worN=[f], fs=FS)
        assert np.abs(h[0]) ** 2 == pytest.approx(expected, rel=1e-6, abs=1e-12)
        amp, _, _ = _amplitude(f, seconds=30.0, trim_s=8.0)
        assert amp == pytest.approx(expected, abs=1e-3)


def test_bandpass_in_and_out_of_band():
    amp10, _, _ = _amplitude(10.0)
    assert 0.95 <= amp10 <= 1.0
    amp40, _, _ = _amplitude(40.0)
    assert amp40 < 0.05


def test_bandpass_zero_phase_lag():
    _, y, t = _amplitude(6.0)
    x = np.sin(2 * np.pi * 6.0 * t)
    core = slice(int(FS), -int(FS))
    xc = signal.correlate(y[core], x[core], mode="full")
    lag = np.argmax(xc) - (len(x[core]) - 1)
    assert lag == 0


def test_filter_time_reversal_equivariance(rng):
    x = rng.normal(size=(3, 2000))
    y = filter_array(x, 1.0, 30.0, FS)
    yr = filter_array(x[:, ::-1], 1.0, 30.0, FS)[:, ::-1]
    np.testing.assert_allclose(y, yr, atol=1e-9)


def test_filter_errors():
    for lo, hi in ((0.0, 10.0), (10.0, 5.0), (1.0, 250.0)):
        with pytest.raises(DataError):
            butter_bandpass(lo, hi, FS)
    with pytest.raises(DataError):
        filter_array(np.zeros(24), 1.0, 13.0, FS)
    rec = bandpass_filter(_rec(np.zeros((2, 100))), 1.0, 13.0)
    assert not rec.samples.any()


# --------------------------------------------------------------- epoching

def _events(n, spacing=1125, start=500, kind="target"):
    return EventList(start + spacing * np.arange(n), (kind,) * n)


def test_segment_epochs_shapes():
    rec = _rec(np.zeros((2, 60000)))
    es = segment_epochs(rec, _events(30), (-200.0, 800.0))
    assert es.data.shape == (30, 2, 500)
    assert es.epochs[0].t0_offset_ms == -200.0
    es = segment_epochs(rec, _events(50, start=0, kind="standard"), (0.0, 2250.0), ("standard",))
    assert es.data.shape[2] == 1125
    empty = segment_epochs(rec, EventList(np.array([], dtype=int), ()), (-200.0, 800.0))
    assert len(empty) == 0


def test_segment_epochs_values_and_bounds():
    x = np.arange(3000, dtype=float)[None, :].repeat(2, axis=0)
    ev = EventList(np.array([200, 1000, 2000]), ("target", "standard", "target"))
    es = segment_epochs(_rec(x), ev, (-200.0, 800.0))
    assert es.conditions == ("target", "target") and es.event_indices == (0, 2)
    np.testing.assert_array_equal(es.data[1, 0, :3], [1900, 1901, 1902])
    with pytest.raises(DataError, match="event 0"):
        segment_epochs(_rec(x), EventList(np.array([50]), ("target",)), (-200.0, 800.0))


def test_segment_rest_counts():
    assert len(segment_rest(_rec(np.zeros((1, int(240 * FS)))))) == 106
    assert len(segment_rest(_rec(np.zeros((1, 1125))))) == 1
    with pytest.raises(DataError):
        segment_rest(_rec(np.zeros((1, 1120))))


def test_baseline_correct_examples():
    es = EpochSet(np.full((2, 3, 500), 5.0), ("target",) * 2, (-200.0, 800.0), FS, ("a", "b", "c"))
    assert not baseline_correct(es).data.any()
    ramp = np.linspace(-3, 7, 500)[None, None, :] * np.arange(1, 4)[None, :, None]
    es = EpochSet(ramp, ("target",), (-200.0, 800.0), FS, ("a", "b", "c"))
    out = baseline_correct(es)
    # oracle: samples -200 .. -2 ms, i.e. the first 100 samples
    expected = ramp - ramp[:, :, :100].mean(axis=2, keepdims=True)
    np.testing.assert_allclose(out.data, expected, atol=1e-12)
    assert np.abs(out.data[:, :, :100].mean(axis=2)).max() < 1e-12
    with pytest.raises(DataError):
        baseline_correct(es, (-300.0, 0.0))


def test_segment_and_baseline_commute_with_channel_order(rng):
    x = rng.normal(size=(4, 5000))
    labels = ("a", "b", "c", "d")
    order = ("c", "a", "d", "b")
    ev = _events(3, spacing=1200, start=300)
    rec = _rec(x, labels)
    one = baseline_correct(segment_epochs(rec, ev)).pick(order)
    two = baseline_correct(segment_epochs(rec.pick(order), ev))
    np.testing.assert_array_equal(one.data, two.data)


def test_reject_artifacts_boundaries():
    data = np.zeros((4, 2, 50))
    data[1, 0, 10] = 80.0
    data[2, 1, 3] = -75.0
    data[3, 0, 0] = -75.0001
    es = EpochSet(data, ("target",) * 4, (-200.0, 800.0), FS, ("a", "b"))
    kept, bad = reject_artifacts(es, 75.0)
    assert bad == [1, 3]
    assert len(kept) + len(bad) == len(es)
    _, bad = reject_artifacts(es, 75.0, channels=("b",))
    assert bad == []
    zeros = EpochSet(np.zeros((3, 2, 10)), ("rest",) * 3, (0.0, 20.0), FS, ("a", "b"))
    assert reject_artifacts(zeros)[1] == []
    with pytest.raises(DataError):
        reject_artifacts(zeros, 0.0)


def test_epochset_invariants():
    with pytest.raises(DataError):
        EpochSet(np.zeros((2, 1, 5)), ("target",), (0.0, 10.0), FS, ("a",))
    with pytest.raises(DataError):
        EpochSet(np.zeros((1, 1, 5)), ("target",), (10.0, 0.0), FS, ("a",))
    with pytest.raises(DataError):
        EpochSet(np.zeros((1, 1, 5)), ("oddball",), (0.0, 10.0), FS, ("a",))
