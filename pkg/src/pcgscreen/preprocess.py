"""Signal conditioning: low-pass filter, resample, segment, z-normalize.

The pipeline order is filter -> resample -> segment -> z-normalize.
Filtering is causal (forward-only); group delay is common to all
channels and therefore harmless under shared-index segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .dataio import EpochAnnotations, Recording
from .errors import ConfigError, DataError

TARGET_FS_HZ = 2000.0

# Strict-mode bounds on epoch length at 2 kHz (1.05 s .. 2.65 s).
MIN_EPOCH_SAMPLES = 2111
MAX_EPOCH_SAMPLES = 5299


@dataclass(frozen=True)
class FilterSpec:
    """Low-pass maximally-flat (Butterworth) filter specification."""

    order: int = 8
    cutoff_hz: float = 1000.0

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ConfigError(f"filter order must be >= 1, got {self.order}")
        if self.cutoff_hz <= 0:
            raise ConfigError(f"cutoff must be positive, got {self.cutoff_hz}")


@dataclass(frozen=True)
class Epoch:
    """A segmented two-heart-cycle excerpt of one channel at 2 kHz."""

    subject_id: str
    channel_id: int
    epoch_idx: int
    samples: np.ndarray
    label: str | None = None
    fs_hz: float = TARGET_FS_HZ

    def __post_init__(self) -> None:
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise DataError("epoch samples must be a 1-D sequence")
        object.__setattr__(self, "samples", x)

    @property
    def n_samples(self) -> int:
        return len(self.samples)


def lowpass_filter(x: np.ndarray, spec: FilterSpec, fs_hz: float) -> np.ndarray:
    """Apply the low-pass Butterworth filter causally.

    Realized as cascaded second-order sections from the bilinear
    transform with cutoff prewarping, so unit DC gain and a monotone
    magnitude response hold by construction.
    """
    if spec.cutoff_hz >= fs_hz / 2:
        raise ConfigError(
            f"cutoff {spec.cutoff_hz} Hz must be below the Nyquist frequency "
            f"{fs_hz / 2} Hz"
        )
    sos = sps.butter(spec.order, spec.cutoff_hz, btype="lowpass", fs=fs_hz, output="sos")
    return sps.sosfilt(sos, np.asarray(x, dtype=np.float64))


def rate_ratio(fs_in: float, fs_out: float) -> tuple[int, int]:
    """Reduce fs_out/fs_in to a rational up/down pair."""
    if fs_in <= 0 or fs_out <= 0 or not np.isfinite(fs_in) or not np.isfinite(fs_out):
        raise ConfigError(f"rates must be positive and finite: {fs_in}, {fs_out}")
    ratio = Fraction(fs_out) / Fraction(fs_in)
    if ratio.numerator > 10 ** 6 or ratio.denominator > 10 ** 6:
        raise ConfigError(
            f"rate pair {fs_in} -> {fs_out} does not reduce to a small rational"
        )
    return ratio.numerator, ratio.denominator


def resample(x: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Polyphase rational resampling with a windowed-sinc anti-imaging filter.

    Output length is round(n_in * fs_out / fs_in).
    """
    up, down = rate_ratio(fs_in, fs_out)
    x = np.asarray(x, dtype=np.float64)
    if up == down:
        return x.copy()
    # line padding keeps edge transients small on signals with offsets
    y = sps.resample_poly(x, up, down, padtype="line")
    target = round(Fraction(len(x)) * Fraction(up, down))
    return y[:target]


def segment_epochs(
    recording2k: Recording,
    ann: EpochAnnotations,
    label: str | None = None,
    strict: bool = True,
) -> list[Epoch]:
    """Cut one epoch per (span, channel) using shared indices.

    The recording must already be at the 2 kHz annotation rate.  The
    same [start, end) indices apply to every channel, preserving the
    natural inter-channel time delays.
    """
    spans = ann.for_subject(recording2k.subject_id)
    n = recording2k.n_samples
    epochs = []
    for span in spans:
        if span.start_sample < 0 or span.end_sample > n:
            raise DataError(
                f"span out of range for subject {recording2k.subject_id!r}: "
                f"[{span.start_sample}, {span.end_sample}) in {n} samples"
            )
        if strict and not MIN_EPOCH_SAMPLES <= span.length <= MAX_EPOCH_SAMPLES:
            raise DataError(
                f"epoch length {span.length} outside strict bounds "
                f"[{MIN_EPOCH_SAMPLES}, {MAX_EPOCH_SAMPLES}] for subject "
                f"{recording2k.subject_id!r}"
            )
        for ch in range(recording2k.n_channels):
            epochs.append(
                Epoch(
                    subject_id=recording2k.subject_id,
                    channel_id=ch + 1,
                    epoch_idx=span.epoch_idx,
                    samples=recording2k.channels[ch, span.start_sample:span.end_sample],
                    label=label,
                    fs_hz=recording2k.fs_hz,
                )
            )
    return epochs


def z_normalize(epoch: Epoch) -> Epoch:
    """Zero-mean, unit-population-std scaling of one epoch."""
    x = epoch.samples
    mu = float(np.mean(x))
    sigma = float(np.std(x))
    if sigma == 0.0:
        raise DataError(
            f"zero variance epoch: subject {epoch.subject_id!r}, "
            f"channel {epoch.channel_id}, epoch {epoch.epoch_idx}"
        )
    return replace(epoch, samples=(x - mu) / sigma)


def preprocess_recording(
    recording: Recording,
    ann: EpochAnnotations,
    label: str | None = None,
    filter_spec: FilterSpec = FilterSpec(),
    fs_out: float = TARGET_FS_HZ,
    strict: bool = True,
) -> list[Epoch]:
    """Run the full conditioning chain for one recording.

    Order: low-pass filter each channel, resample to ``fs_out``, cut the
    annotated epochs across all channels, z-normalize each epoch.
    """
    filtered = np.stack(
        [lowpass_filter(c, filter_spec, recording.fs_hz) for c in recording.channels]
    )
    resampled = np.stack([resample(c, recording.fs_hz, fs_out) for c in filtered])
    rec2k = Recording(
        subject_id=recording.subject_id,
        channels=resampled,
        fs_hz=fs_out,
        bit_depth=recording.bit_depth,
    )
    epochs = segment_epochs(rec2k, ann, label=label, strict=strict)
    return [z_normalize(e) for e in epochs]
