import math

import numpy as np
import pytest

import pcgscreen.preprocess as pp
from pcgscreen.dataio import EpochAnnotations, EpochSpan, Recording
from pcgscreen.errors import ConfigError, DataError
from pcgscreen.preprocess import (
    Epoch,
    FilterSpec,
    lowpass_filter,
    preprocess_recording,
    resample,
    segment_epochs,
    z_normalize,
)

FS = 7812.5


def _tone(freq, fs, seconds=4.0):
    t = np.arange(int(fs * seconds)) / fs
    return np.sin(2 * np.pi * freq * t)


def _steady_rms(x, skip=10000):
    return float(np.sqrt(np.mean(x[skip:] ** 2)))


def warped_butterworth_attenuation_db(f, fc, fs, order=8):
    """Analytic magnitude of the bilinear-transform design with cutoff
    prewarping: the prototype response evaluated at tan-warped frequency."""
    ratio = math.tan(math.pi * f / fs) / math.tan(math.pi * fc / fs)
    return 10.0 * math.log10(1.0 + ratio ** (2 * order))


class TestLowpass:
    def test_dc_gain_unity(self):
        y = lowpass_filter(np.ones(8000), FilterSpec(), FS)
        assert y[-1] == pytest.approx(1.0, abs=1e-9)

    def test_cutoff_is_3db(self):
        x = _tone(1000.0, FS)
        y = lowpass_filter(x, FilterSpec(), FS)
        att = 20 * np.log10(_steady_rms(x) / _steady_rms(y))
        assert att == pytest.approx(3.01, abs=0.1)

    def test_1500hz_attenuation_matches_analytic_formula(self):
        # frozen from the warped analytic magnitude oracle above
        expected_db = warped_butterworth_attenuation_db(1500.0, 1000.0, FS)
        assert expected_db == pytest.approx(33.508, abs=0.01)
        x = _tone(1500.0, FS)
        y = lowpass_filter(x, FilterSpec(), FS)
        att = 20 * np.log10(_steady_rms(x) / _steady_rms(y))
        assert att == pytest.approx(expected_db, abs=2.0)

    def test_passband_tone_preserved(self):
        x = _tone(100.0, FS)
        y = lowpass_filter(x, FilterSpec(), FS)
        assert _steady_rms(y) == pytest.approx(_steady_rms(x), rel=0.01)

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(ConfigError, match="Nyquist"):
            lowpass_filter(np.ones(10), FilterSpec(cutoff_hz=1000.0), 2000.0)


class TestResample:
    def test_length_78125_to_20000(self):
        y = resample(np.zeros(78125), FS, 2000.0)
        assert len(y) == 20000

    def test_length_rounding(self):
        # 4 * 32 / 125 = 1.024 -> round() = 1
        assert len(resample(np.zeros(4), FS, 2000.0)) == 1

    def test_constant_preserved(self):
        y = resample(np.ones(78125), FS, 2000.0)
        np.testing.assert_allclose(y, 1.0, atol=1e-3)
        np.testing.assert_allclose(y[200:-200], 1.0, atol=1e-4)

    def test_tone_peak_preserved(self):
        # FFT-peak oracle: the dominant bin stays at 100 Hz
        x = _tone(100.0, FS, seconds=10.0)
        y = resample(x, FS, 2000.0)
        spectrum = np.abs(np.fft.rfft(y))
        peak_hz = np.fft.rfftfreq(len(y), 1 / 2000.0)[np.argmax(spectrum)]
        assert peak_hz == pytest.approx(100.0, abs=0.1)

    def test_identity_rate(self):
        x = np.arange(10.0)
        np.testing.assert_array_equal(resample(x, 2000.0, 2000.0), x)

    def test_bad_rates(self):
        with pytest.raises(ConfigError):
            resample(np.zeros(10), -1.0, 2000.0)
        with pytest.raises(ConfigError):
            resample(np.zeros(10), 0.0, 2000.0)
        with pytest.raises(ConfigError, match="rational"):
            resample(np.zeros(10), math.pi, 2000.0)

    def test_filter_then_resample_preserves_tone_rms(self):
        x = _tone(100.0, FS, seconds=10.0)
        y = resample(lowpass_filter(x, FilterSpec(), FS), FS, 2000.0)
        rms_in = float(np.sqrt(np.mean(x ** 2)))
        rms_out = float(np.sqrt(np.mean(y ** 2)))
        assert rms_out == pytest.approx(rms_in, rel=0.02)


def _recording2k(rng, n_channels=7, n_samples=20000):
    return Recording(
        subject_id="s1",
        channels=rng.standard_normal((n_channels, n_samples)),
        fs_hz=2000.0,
        bit_depth=24,
    )


def _ann(spans):
    return EpochAnnotations(
        spans=tuple(EpochSpan("s1", i, a, b) for i, (a, b) in enumerate(spans))
    )


class TestSegment:
    def test_21_epochs_from_7_channels(self, rng):
        rec = _recording2k(rng)
        ann = _ann([(0, 3000), (3000, 6000), (6000, 9000)])
        epochs = segment_epochs(rec, ann, label="CAD")
        assert len(epochs) == 21
        assert {e.channel_id for e in epochs} == set(range(1, 8))
        assert all(e.label == "CAD" for e in epochs)

    def test_shared_indices_across_channels(self, rng):
        rec = _recording2k(rng, n_channels=3)
        ann = _ann([(100, 2300), (2300, 4500), (4500, 6700)])
        epochs = segment_epochs(rec, ann)
        for e in epochs:
            np.testing.assert_array_equal(
                e.samples,
                rec.channels[e.channel_id - 1, 100 + 2200 * e.epoch_idx:
                             100 + 2200 * (e.epoch_idx + 1)],
            )

    def test_span_length_3188(self, rng):
        rec = _recording2k(rng, n_channels=2, n_samples=6000)
        ann = EpochAnnotations(spans=(EpochSpan("s1", 0, 2111, 5299),))
        epochs = segment_epochs(rec, ann, strict=False)
        assert all(e.n_samples == 3188 for e in epochs)

    def test_span_out_of_range(self, rng):
        rec = _recording2k(rng, n_channels=1, n_samples=4000)
        ann = EpochAnnotations(spans=(EpochSpan("s1", 0, 2000, 4200),))
        with pytest.raises(DataError, match="span out of range"):
            segment_epochs(rec, ann, strict=False)

    def test_strict_length_bounds(self, rng):
        rec = _recording2k(rng, n_channels=1)
        short = EpochAnnotations(spans=(EpochSpan("s1", 0, 0, 2000),))
        with pytest.raises(DataError, match="strict bounds"):
            segment_epochs(rec, short, strict=True)
        assert len(segment_epochs(rec, short, strict=False)) == 1


class TestZNormalize:
    def _epoch(self, samples):
        return Epoch(subject_id="s", channel_id=1, epoch_idx=0, samples=samples)

    def test_mean_zero_std_one(self, rng):
        z = z_normalize(self._epoch(rng.standard_normal(3000) * 7 + 3))
        assert abs(np.mean(z.samples)) < 1e-9
        assert abs(np.std(z.samples) - 1.0) < 1e-9

    def test_idempotent(self, rng):
        e = self._epoch(rng.standard_normal(2500))
        once = z_normalize(e)
        twice = z_normalize(once)
        np.testing.assert_allclose(twice.samples, once.samples, atol=1e-9)

    def test_affine_invariance(self, rng):
        x = rng.standard_normal(2500)
        a = z_normalize(self._epoch(x))
        b = z_normalize(self._epoch(3.7 * x + 11.0))
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-9)

    def test_zero_variance(self):
        with pytest.raises(DataError, match="zero variance"):
            z_normalize(self._epoch(np.full(100, 2.5)))


class TestPipelineOrder:
    def test_orchestrator_call_order(self, rng, monkeypatch):
        calls = []

        real_filter = pp.lowpass_filter
        real_resample = pp.resample
        real_segment = pp.segment_epochs
        real_znorm = pp.z_normalize

        monkeypatch.setattr(pp, "lowpass_filter",
                            lambda *a, **k: calls.append("filter") or real_filter(*a, **k))
        monkeypatch.setattr(pp, "resample",
                            lambda *a, **k: calls.append("resample") or real_resample(*a, **k))
        monkeypatch.setattr(pp, "segment_epochs",
                            lambda *a, **k: calls.append("segment") or real_segment(*a, **k))
        monkeypatch.setattr(pp, "z_normalize",
                            lambda *a, **k: calls.append("znorm") or real_znorm(*a, **k))

        rec = Recording(
            subject_id="s1",
            channels=rng.standard_normal((2, 78125)),
            fs_hz=FS,
            bit_depth=24,
        )
        ann = _ann([(100, 3100), (3100, 6100), (6100, 9100)])
        epochs = preprocess_recording(rec, ann, label="Normal")
        assert len(epochs) == 6

        stages = [c for i, c in enumerate(calls) if i == 0 or calls[i - 1] != c]
        assert stages == ["filter", "resample", "segment", "znorm"]

    def test_epochs_are_normalized(self, rng):
        rec = Recording(
            subject_id="s1",
            channels=rng.standard_normal((1, 78125)) * 5 + 2,
            fs_hz=FS,
            bit_depth=24,
        )
        ann = _ann([(100, 3100), (3100, 6100), (6100, 9100)])
        for e in preprocess_recording(rec, ann):
            assert abs(np.mean(e.samples)) < 1e-9
            assert abs(np.std(e.samples) - 1.0) < 1e-9
