"""Epoch-relative framing and linear/mel/gammatone cepstral features.

Epochs of varying length are divided into a fixed number of frames with
50% overlap, so frame sizes track the subject's heart rate and each
frame covers comparable cardiac-cycle events.  Per frame: raised-cosine
window, power spectrum (FFT zero-padded to the next power of two),
filter-bank energies, natural log (floored), then an orthonormal DCT-II
whose coefficient subset forms the feature vector.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .spectral import hanning_window

SCALE_LINEAR = "linear"
SCALE_MEL = "mel"
SCALE_GAMMATONE = "gammatone"
SCALES = (SCALE_LINEAR, SCALE_MEL, SCALE_GAMMATONE)

DEFAULT_NUM_FILTERS = {SCALE_LINEAR: 12, SCALE_MEL: 12, SCALE_GAMMATONE: 14}

# Investigated frame-count grid: 20..64 and 100..112 in steps of 2.
FRAME_COUNT_GRID = tuple(range(20, 65, 2)) + tuple(range(100, 113, 2))

LOG_ENERGY_FLOOR = 1e-12

_GAMMATONE_FMIN_HZ = 50.0
_GAMMATONE_ORDER = 4
_GAMMATONE_BW_FACTOR = 1.019


@dataclass(frozen=True)
class CepstralConfig:
    """Frequency scale, filter count, frame count, and coefficient subset."""

    scale: str = SCALE_LINEAR
    num_frames: int = 108
    coeff_lo: int = 0
    coeff_hi: int = 7
    num_filters: int | None = None
    fmax_hz: float = 1000.0

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}, expected one of {SCALES}")
        nf = self.num_filters
        if nf is None:
            nf = DEFAULT_NUM_FILTERS[self.scale]
            object.__setattr__(self, "num_filters", nf)
        if nf < 1:
            raise ConfigError(f"need at least one filter, got {nf}")
        if not 0 <= self.coeff_lo <= self.coeff_hi < nf:
            raise ConfigError(
                f"coefficient subset {self.coeff_lo}..{self.coeff_hi} must lie "
                f"within 0..{nf - 1}"
            )
        if self.fmax_hz <= 0:
            raise ConfigError(f"fmax must be positive, got {self.fmax_hz}")
        if self.num_frames < 1:
            raise ConfigError(f"frame count must be >= 1, got {self.num_frames}")

    @property
    def n_coeffs(self) -> int:
        return self.coeff_hi - self.coeff_lo + 1

    @property
    def feature_dim(self) -> int:
        return self.num_frames * self.n_coeffs

    def validate_grid(self) -> None:
        if self.num_frames not in FRAME_COUNT_GRID:
            raise ConfigError(
                f"frame count {self.num_frames} is not on the supported grid "
                f"(20..64 and 100..112, step 2)"
            )


@dataclass(frozen=True)
class FilterBank:
    """Filter magnitude responses sampled at one-sided FFT bin centers."""

    responses: np.ndarray  # (num_filters, n_fft // 2 + 1), values in [0, 1]
    centers_hz: np.ndarray
    scale: str
    n_fft: int
    fs_hz: float

    @property
    def num_filters(self) -> int:
        return self.responses.shape[0]


def frame_epoch(x: np.ndarray, num_frames: int) -> np.ndarray:
    """Split an epoch into exactly ``num_frames`` frames with 50% overlap.

    Frame length is floor(2 * n / (num_frames + 1)) samples and the hop
    is half of that (floored), so frame sizes depend on the epoch length.
    Returns a (num_frames, frame_len) array.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < num_frames + 1:
        raise DataError(
            f"epoch of {n} samples is too short for {num_frames} frames"
        )
    frame_len = (2 * n) // (num_frames + 1)
    hop = frame_len // 2
    frames = np.empty((num_frames, frame_len))
    for i in range(num_frames):
        start = i * hop
        frames[i] = x[start:start + frame_len]
    return frames


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


# ERB(f) = 24.7 * (4.37 * f / 1000 + 1); the rate scale below is its
# exact integral, so center spacing is self-consistent with the bandwidth.
_ERB_SLOPE = 24.7 * 4.37 / 1000.0


def erb_bandwidth(f: np.ndarray | float) -> np.ndarray | float:
    """Equivalent rectangular bandwidth at center frequency ``f`` (Hz)."""
    return 24.7 + _ERB_SLOPE * np.asarray(f, dtype=np.float64)


def hz_to_erb_rate(f: np.ndarray | float) -> np.ndarray | float:
    return np.log1p(_ERB_SLOPE * np.asarray(f, dtype=np.float64) / 24.7) / _ERB_SLOPE


def erb_rate_to_hz(r: np.ndarray | float) -> np.ndarray | float:
    return np.expm1(_ERB_SLOPE * np.asarray(r, dtype=np.float64)) * 24.7 / _ERB_SLOPE


def _triangular_responses(edges_hz: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Triangles rising over [left, center) and falling over [center, right)."""
    k = len(edges_hz) - 2
    responses = np.zeros((k, len(freqs)))
    for i in range(k):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rise = (freqs - left) / (center - left)
        fall = (right - freqs) / (right - center)
        responses[i] = np.clip(np.minimum(rise, fall), 0.0, 1.0)
    return responses


def build_filterbank(cfg: CepstralConfig, n_fft: int, fs_hz: float) -> FilterBank:
    """Construct the filter bank for a given FFT size and sampling rate.

    Linear and mel scales use triangular filters whose edges are equally
    spaced on the respective scale from 0 to fmax.  The gammatone scale
    uses fourth-order gammatone magnitude responses at ERB-spaced
    centers, peak-normalized to 1.
    """
    if cfg.fmax_hz > fs_hz / 2:
        raise ConfigError(
            f"fmax {cfg.fmax_hz} Hz exceeds the Nyquist frequency {fs_hz / 2} Hz"
        )
    k = cfg.num_filters
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / fs_hz)

    if cfg.scale == SCALE_LINEAR:
        edges = np.linspace(0.0, cfg.fmax_hz, k + 2)
        responses = _triangular_responses(edges, freqs)
        centers = edges[1:-1]
    elif cfg.scale == SCALE_MEL:
        mel_edges = np.linspace(0.0, hz_to_mel(cfg.fmax_hz), k + 2)
        edges = np.asarray(mel_to_hz(mel_edges))
        responses = _triangular_responses(edges, freqs)
        centers = edges[1:-1]
    else:  # gammatone
        lo = hz_to_erb_rate(_GAMMATONE_FMIN_HZ)
        hi = hz_to_erb_rate(cfg.fmax_hz)
        centers = np.asarray(erb_rate_to_hz(np.linspace(lo, hi, k)))
        responses = np.empty((k, len(freqs)))
        for i, fc in enumerate(centers):
            b = _GAMMATONE_BW_FACTOR * erb_bandwidth(fc)
            mag = (1.0 + ((freqs - fc) / b) ** 2) ** (-_GAMMATONE_ORDER / 2.0)
            responses[i] = mag / mag.max()

    return FilterBank(
        responses=responses, centers_hz=np.asarray(centers, dtype=np.float64),
        scale=cfg.scale, n_fft=n_fft, fs_hz=fs_hz,
    )


_FB_CACHE: dict[tuple, FilterBank] = {}
_FB_LOCK = threading.Lock()


def filterbank_for(cfg: CepstralConfig, n_fft: int, fs_hz: float) -> FilterBank:
    """Memoized filter bank lookup, safe under concurrent access."""
    key = (cfg.scale, cfg.num_filters, cfg.fmax_hz, n_fft, fs_hz)
    with _FB_LOCK:
        fb = _FB_CACHE.get(key)
    if fb is None:
        fb = build_filterbank(cfg, n_fft, fs_hz)
        with _FB_LOCK:
            _FB_CACHE.setdefault(key, fb)
    return fb


_DCT_CACHE: dict[int, np.ndarray] = {}
_DCT_LOCK = threading.Lock()


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: D[i, k] = s_i * cos(pi * i * (k + 1/2) / n)."""
    with _DCT_LOCK:
        d = _DCT_CACHE.get(n)
        if d is None:
            i = np.arange(n)[:, None]
            k = np.arange(n)[None, :]
            d = np.cos(np.pi * i * (k + 0.5) / n)
            d[0] *= np.sqrt(1.0 / n)
            d[1:] *= np.sqrt(2.0 / n)
            _DCT_CACHE[n] = d
    return d


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def frame_cepstra(
    frame: np.ndarray, fb: FilterBank, coeff_lo: int, coeff_hi: int
) -> np.ndarray:
    """Cepstral coefficients coeff_lo..coeff_hi for one frame.

    Window, power spectrum at the bank's FFT size, filter-bank energies,
    floored natural log, orthonormal DCT-II.  All-zero frames are safe:
    the energy floor keeps the log finite.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if len(frame) < 2:
        raise DataError(f"frame of {len(frame)} samples is too short")
    if len(frame) > fb.n_fft:
        raise ConfigError(
            f"frame length {len(frame)} exceeds the filter bank FFT size {fb.n_fft}"
        )
    if not 0 <= coeff_lo <= coeff_hi < fb.num_filters:
        raise ConfigError(
            f"coefficient subset {coeff_lo}..{coeff_hi} outside 0..{fb.num_filters - 1}"
        )
    windowed = frame * hanning_window(len(frame))
    power = np.abs(np.fft.rfft(windowed, n=fb.n_fft)) ** 2
    energies = fb.responses @ power
    log_e = np.log(np.maximum(energies, LOG_ENERGY_FLOOR))
    coeffs = dct_matrix(fb.num_filters) @ log_e
    return coeffs[coeff_lo:coeff_hi + 1]


def epoch_feature_vector(
    x: np.ndarray, cfg: CepstralConfig, fs_hz: float = 2000.0
) -> np.ndarray:
    """Concatenated per-frame cepstra, frame-major order.

    Dimension is num_frames * (coeff_hi - coeff_lo + 1).
    """
    frames = frame_epoch(x, cfg.num_frames)
    n_fft = next_pow2(frames.shape[1])
    fb = filterbank_for(cfg, n_fft, fs_hz)
    out = np.empty(cfg.feature_dim)
    nc = cfg.n_coeffs
    for i, frame in enumerate(frames):
        out[i * nc:(i + 1) * nc] = frame_cepstra(frame, fb, cfg.coeff_lo, cfg.coeff_hi)
    return out
