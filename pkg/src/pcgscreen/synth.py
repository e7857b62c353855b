"""Synthetic labeled multi-channel PCG data for end-to-end exercising of
the pipeline.

A subject is a periodic train of band-limited S1/S2 bursts at a fixed
heart rate; the CAD label adds band-limited murmur noise enveloped over
systole and early diastole at a configurable power ratio relative to S1.
Channels apply per-channel gain, fractional-sample delay, and
independent ambient noise.  The generator exists to exercise the
pipeline, not to simulate disease.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataio import (
    COHORT_HELDOUT,
    COHORT_TRAIN,
    LABEL_CAD,
    LABEL_NORMAL,
    DatasetManifest,
    EpochAnnotations,
    EpochSpan,
    ManifestEntry,
    Recording,
)
from .errors import ConfigError, DataError
from .preprocess import MAX_EPOCH_SAMPLES, MIN_EPOCH_SAMPLES, TARGET_FS_HZ

N_CHANNELS = 7

_S1_DUR_S = 0.09
_S2_DUR_S = 0.07
_S1_RMS = 0.2
_S2_RMS = 0.15
_SYSTOLE_FRACTION = 0.35
_EARLY_DIASTOLE_FRACTION = 0.25
_FIRST_BEAT_S = 0.15
_EPOCH_LEAD_S = 0.025  # epochs start slightly before the first S1
_PEAK_TARGET = 0.9


@dataclass(frozen=True)
class SynthParams:
    """Generator knobs; bands in Hz must lie inside (0, 1000)."""

    heart_rate_bpm: float = 72.0
    s1_band_hz: tuple[float, float] = (20.0, 150.0)
    s2_band_hz: tuple[float, float] = (20.0, 200.0)
    murmur_band_hz: tuple[float, float] = (200.0, 600.0)
    murmur_rel_power: float = 0.3
    channel_gains: tuple[float, ...] = (1.0, 0.95, 1.1, 0.9, 0.85, 0.8, 0.5)
    channel_delays_ms: tuple[float, ...] = (0.0, 0.3, 0.5, 0.8, 1.1, 1.4, 2.5)
    ambient_noise_std: float = 0.02
    rng_seed: int = 0
    fs_hz: float = 7812.5
    duration_s: float = 10.0

    def __post_init__(self) -> None:
        for name, band in (
            ("s1_band_hz", self.s1_band_hz),
            ("s2_band_hz", self.s2_band_hz),
            ("murmur_band_hz", self.murmur_band_hz),
        ):
            lo, hi = band
            if not (0.0 < lo < hi < 1000.0):
                raise ConfigError(f"invalid band edges for {name}: {band}")
        if len(self.channel_gains) != N_CHANNELS:
            raise ConfigError(f"channel_gains must have {N_CHANNELS} entries")
        if len(self.channel_delays_ms) != N_CHANNELS:
            raise ConfigError(f"channel_delays_ms must have {N_CHANNELS} entries")
        if any(g <= 0 for g in self.channel_gains):
            raise ConfigError("channel gains must be positive")
        if self.murmur_rel_power < 0:
            raise ConfigError("murmur_rel_power must be >= 0")
        if self.ambient_noise_std < 0:
            raise ConfigError("ambient_noise_std must be >= 0")
        period = 60.0 / self.heart_rate_bpm
        epoch_len = 2.0 * period * TARGET_FS_HZ
        if not MIN_EPOCH_SAMPLES <= epoch_len <= MAX_EPOCH_SAMPLES:
            raise ConfigError(
                f"heart rate {self.heart_rate_bpm} bpm gives a two-cycle epoch of "
                f"{epoch_len:.0f} samples, outside [{MIN_EPOCH_SAMPLES}, "
                f"{MAX_EPOCH_SAMPLES}]"
            )
        if _FIRST_BEAT_S + 7.0 * period + _S1_DUR_S > self.duration_s:
            raise ConfigError(
                f"heart rate {self.heart_rate_bpm} bpm is too slow to fit three "
                f"two-cycle epochs in {self.duration_s} s"
            )


def _bandlimited_noise(rng: np.random.Generator, n: int, band: tuple[float, float],
                       fs: float) -> np.ndarray:
    """White noise restricted to ``band`` by spectral masking, unit RMS."""
    x = rng.standard_normal(n)
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    y = np.fft.irfft(spec, n=n)
    rms = np.sqrt(np.mean(y * y))
    return y / rms if rms > 0 else y


def _add_burst(base: np.ndarray, rng: np.random.Generator, t_center_start: float,
               dur_s: float, band: tuple[float, float], rms: float, fs: float) -> None:
    start = int(round(t_center_start * fs))
    n = int(round(dur_s * fs))
    if n < 8 or start >= len(base):
        return
    n = min(n, len(base) - start)
    burst = _bandlimited_noise(rng, n, band, fs)
    k = np.arange(n)
    env = 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))
    shaped = burst * env
    shaped_rms = np.sqrt(np.mean(shaped * shaped))
    if shaped_rms > 0:
        shaped *= rms / shaped_rms
    base[start:start + n] += shaped


def _fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Ideal all-pass fractional-sample delay via the frequency domain."""
    if delay_samples == 0.0:
        return x.copy()
    pad = int(np.ceil(abs(delay_samples))) + 16
    n = len(x) + pad
    spec = np.fft.rfft(x, n=n)
    k = np.arange(len(spec))
    spec *= np.exp(-2j * np.pi * k * delay_samples / n)
    return np.fft.irfft(spec, n=n)[: len(x)]


def _beat_onsets(params: SynthParams) -> np.ndarray:
    """S1 onset times for the resolved heart rate."""
    period = 60.0 / params.heart_rate_bpm
    n_beats = int(np.floor((params.duration_s - _FIRST_BEAT_S) / period)) + 1
    return _FIRST_BEAT_S + period * np.arange(n_beats)


def synth_subject(
    label: str,
    params: SynthParams,
    seed: int,
    subject_id: str | None = None,
) -> tuple[Recording, EpochAnnotations]:
    """Generate one subject's 7-channel recording plus three two-cycle
    epoch annotations starting at the second beat."""
    if label not in (LABEL_CAD, LABEL_NORMAL):
        raise DataError(f"unknown label {label!r}")
    if subject_id is None:
        subject_id = f"synth-{seed:08d}"
    rng = np.random.default_rng(seed)
    fs = params.fs_hz
    n = int(round(params.duration_s * fs))
    period = 60.0 / params.heart_rate_bpm
    onsets = _beat_onsets(params)

    base = np.zeros(n)
    for t in onsets:
        _add_burst(base, rng, t, _S1_DUR_S, params.s1_band_hz, _S1_RMS, fs)
        _add_burst(base, rng, t + _SYSTOLE_FRACTION * period, _S2_DUR_S,
                   params.s2_band_hz, _S2_RMS, fs)

    if label == LABEL_CAD and params.murmur_rel_power > 0:
        murmur_rms = np.sqrt(params.murmur_rel_power) * _S1_RMS
        for t in onsets:
            sys_start = t + _S1_DUR_S
            sys_dur = _SYSTOLE_FRACTION * period - _S1_DUR_S
            _add_burst(base, rng, sys_start, sys_dur, params.murmur_band_hz,
                       murmur_rms, fs)
            dia_start = t + _SYSTOLE_FRACTION * period + _S2_DUR_S
            dia_dur = _EARLY_DIASTOLE_FRACTION * period
            _add_burst(base, rng, dia_start, dia_dur, params.murmur_band_hz,
                       murmur_rms, fs)

    channels = np.empty((N_CHANNELS, n))
    for c in range(N_CHANNELS):
        delayed = _fractional_delay(base, params.channel_delays_ms[c] * fs / 1000.0)
        channels[c] = params.channel_gains[c] * delayed
        if params.ambient_noise_std > 0:
            channels[c] += rng.normal(0.0, params.ambient_noise_std, n)

    peak = np.max(np.abs(channels))
    if peak > 0:
        channels *= _PEAK_TARGET / peak

    spans = []
    for e in range(3):
        start_t = onsets[1 + 2 * e] - _EPOCH_LEAD_S
        end_t = onsets[3 + 2 * e] - _EPOCH_LEAD_S
        spans.append(
            EpochSpan(
                subject_id=subject_id,
                epoch_idx=e,
                start_sample=int(round(start_t * TARGET_FS_HZ)),
                end_sample=int(round(end_t * TARGET_FS_HZ)),
            )
        )

    rec = Recording(subject_id=subject_id, channels=channels, fs_hz=fs, bit_depth=24)
    return rec, EpochAnnotations(spans=tuple(spans))


def synth_dataset(
    n_per_class: int,
    params: SynthParams,
    seed: int,
    heldout_per_class: int = 0,
) -> tuple[DatasetManifest, list[Recording], EpochAnnotations]:
    """Generate a balanced labeled dataset with per-subject jitter.

    Heart rate jitters by +-10% and channel gains by +-20% around the
    base parameters.  Manifest paths are the planned file names
    ``<subject_id>.wav`` relative to wherever the caller writes them.
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    entries: list[ManifestEntry] = []
    recordings: list[Recording] = []
    spans: list[EpochSpan] = []

    plan = []
    for i in range(n_per_class):
        plan.append((LABEL_CAD, COHORT_TRAIN, f"cad-{i + 1:03d}"))
    for i in range(n_per_class):
        plan.append((LABEL_NORMAL, COHORT_TRAIN, f"nor-{i + 1:03d}"))
    for i in range(heldout_per_class):
        plan.append((LABEL_CAD, COHORT_HELDOUT, f"cad-h{i + 1:03d}"))
    for i in range(heldout_per_class):
        plan.append((LABEL_NORMAL, COHORT_HELDOUT, f"nor-h{i + 1:03d}"))

    for label, cohort, sid in plan:
        hr = params.heart_rate_bpm * (1.0 + rng.uniform(-0.1, 0.1))
        gains = tuple(
            g * (1.0 + rng.uniform(-0.2, 0.2)) for g in params.channel_gains
        )
        subject_params = replace(params, heart_rate_bpm=hr, channel_gains=gains)
        subject_seed = int(rng.integers(0, 2 ** 63 - 1))
        rec, ann = synth_subject(label, subject_params, subject_seed, subject_id=sid)
        recordings.append(rec)
        spans.extend(ann.spans)
        entries.append(
            ManifestEntry(
                subject_id=sid, path=Path(f"{sid}.wav"), label=label, cohort=cohort
            )
        )

    manifest = DatasetManifest(entries=tuple(entries))
    return manifest, recordings, EpochAnnotations(spans=tuple(spans))
