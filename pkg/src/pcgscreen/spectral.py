"""Welch power spectral density estimation and sub-band power features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

# Sub-bandwidth grid in Hz; each entry spans an integer number of
# 1.953125 Hz bins (3, 6, 9, 12, 15, 18, 24, 30) at the default config.
SBW_GRID_HZ = (5.86, 11.72, 17.58, 23.44, 29.30, 35.16, 46.88, 58.6)
TBW_GRID_HZ = (300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0)

DEFAULT_WIN_LEN = 1024
DEFAULT_OVERLAP = 0.5


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided power spectral density over [0, fs/2]."""

    freqs_hz: np.ndarray
    density: np.ndarray
    bin_spacing_hz: float

    def __post_init__(self) -> None:
        f = np.asarray(self.freqs_hz, dtype=np.float64)
        d = np.asarray(self.density, dtype=np.float64)
        if f.shape != d.shape or f.ndim != 1:
            raise DataError("frequency and density arrays must be matching 1-D")
        if np.any(d < 0):
            raise DataError("spectral density must be non-negative")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "density", d)


@dataclass(frozen=True)
class SubbandConfig:
    """Band grid for sub-band power features: bands of width ``sbw_hz``
    tiled over [0, ``tbw_hz``], incomplete trailing band discarded."""

    sbw_hz: float
    tbw_hz: float

    def __post_init__(self) -> None:
        if self.sbw_hz <= 0 or self.tbw_hz <= 0:
            raise ConfigError("band widths must be positive")
        if self.sbw_hz > self.tbw_hz:
            raise ConfigError(
                f"sub-bandwidth {self.sbw_hz} exceeds total bandwidth {self.tbw_hz}"
            )

    def validate_grid(self) -> None:
        if not any(abs(self.sbw_hz - g) < 0.05 for g in SBW_GRID_HZ):
            raise ConfigError(
                f"sub-bandwidth {self.sbw_hz} Hz is not on the supported grid "
                f"{SBW_GRID_HZ}"
            )
        if not any(abs(self.tbw_hz - g) < 0.5 for g in TBW_GRID_HZ):
            raise ConfigError(
                f"total bandwidth {self.tbw_hz} Hz is not on the supported grid "
                f"{TBW_GRID_HZ}"
            )


def hanning_window(n: int) -> np.ndarray:
    """Raised-cosine taper w(k) = 0.5 * (1 - cos(2*pi*k/n)), k = 0..n-1.

    Periodic convention: w(0) = 0, w(n/2) = 1 for even n, and
    w(k) = w(n - k).
    """
    if n < 2:
        raise ConfigError(f"window length must be >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def welch_psd(
    x: np.ndarray,
    fs_hz: float,
    win_len: int = DEFAULT_WIN_LEN,
    overlap: float = DEFAULT_OVERLAP,
) -> PsdEstimate:
    """Averaged windowed periodogram, one-sided, density scaling.

    Normalized by the window power so that the integral of the density
    over [0, fs/2] estimates the signal variance.  Segments are not
    detrended.  Input shorter than one window is rejected rather than
    zero-padded.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("input must be 1-D")
    if not 0.0 <= overlap < 1.0:
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    if len(x) < win_len:
        raise DataError(
            f"input length {len(x)} is shorter than one analysis window ({win_len})"
        )
    w = hanning_window(win_len)
    win_power = float(np.sum(w * w))
    hop = max(1, int(round(win_len * (1.0 - overlap))))
    n_segments = 1 + (len(x) - win_len) // hop

    acc = np.zeros(win_len // 2 + 1)
    for s in range(n_segments):
        seg = x[s * hop:s * hop + win_len]
        acc += np.abs(np.fft.rfft(seg * w)) ** 2
    density = acc / (n_segments * fs_hz * win_power)
    density[1:-1] *= 2.0  # fold negative frequencies; DC and Nyquist stay single
    freqs = np.fft.rfftfreq(win_len, d=1.0 / fs_hz)
    return PsdEstimate(freqs_hz=freqs, density=density, bin_spacing_hz=fs_hz / win_len)


def subband_powers(
    psd: PsdEstimate, cfg: SubbandConfig, strict: bool = True
) -> np.ndarray:
    """Trapezoidal band powers over consecutive bands of width sbw in [0, tbw].

    Band k integrates the density over bins [k*m, (k+1)*m] where m is
    the per-band bin count; the feature count is floor(tbw / sbw).
    """
    if strict:
        cfg.validate_grid()
    df = psd.bin_spacing_hz
    nyquist = float(psd.freqs_hz[-1])
    if cfg.tbw_hz > nyquist + 1e-9:
        raise ConfigError(
            f"total bandwidth {cfg.tbw_hz} Hz exceeds the Nyquist frequency {nyquist} Hz"
        )
    m = int(round(cfg.sbw_hz / df))
    if m < 1:
        raise ConfigError(
            f"sub-bandwidth {cfg.sbw_hz} Hz is below one bin spacing {df} Hz"
        )
    sbw_exact = m * df
    n_bands = int(np.floor(cfg.tbw_hz / sbw_exact + 1e-9))
    if n_bands < 1:
        raise ConfigError("no complete sub-band fits in the total bandwidth")
    if n_bands * m + 1 > len(psd.density):
        raise ConfigError("band grid extends past the estimated spectrum")
    feats = np.empty(n_bands)
    for k in range(n_bands):
        seg = psd.density[k * m:(k + 1) * m + 1]
        feats[k] = np.trapezoid(seg, dx=df)
    return feats


def subband_feature_count(cfg: SubbandConfig, bin_spacing_hz: float) -> int:
    """Feature count floor(tbw / sbw) for a given bin spacing."""
    m = int(round(cfg.sbw_hz / bin_spacing_hz))
    return int(np.floor(cfg.tbw_hz / (m * bin_spacing_hz) + 1e-9))
