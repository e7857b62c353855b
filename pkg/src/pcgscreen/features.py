"""Glue between preprocessed epochs and feature matrices."""

from __future__ import annotations

import numpy as np

from .cepstral import CepstralConfig, epoch_feature_vector
from .dataio import LABEL_CAD, LABEL_NORMAL
from .errors import DataError
from .preprocess import Epoch
from .selection import FeatureMatrix
from .spectral import SubbandConfig, subband_powers, welch_psd

FAMILY_PSD = "psd"
FAMILY_LFCC = "lfcc"
FAMILY_MFCC = "mfcc"
FAMILY_GFCC = "gfcc"
FAMILIES = (FAMILY_PSD, FAMILY_LFCC, FAMILY_MFCC, FAMILY_GFCC)

FAMILY_SCALE = {FAMILY_LFCC: "linear", FAMILY_MFCC: "mel", FAMILY_GFCC: "gammatone"}


def _label_int(label: str | None) -> int:
    if label == LABEL_CAD:
        return 1
    if label == LABEL_NORMAL:
        return 0
    raise DataError(f"epoch has no usable label: {label!r}")


def _sorted_channel_epochs(epochs: list[Epoch], channel: int) -> list[Epoch]:
    sel = [e for e in epochs if e.channel_id == channel]
    if not sel:
        raise DataError(f"no epochs for channel {channel}")
    return sorted(sel, key=lambda e: (e.subject_id, e.epoch_idx))


def cepstral_feature_matrix(
    epochs: list[Epoch], channel: int, cfg: CepstralConfig
) -> FeatureMatrix:
    """One row per epoch of the given channel, frame-major cepstra."""
    sel = _sorted_channel_epochs(epochs, channel)
    rows = [epoch_feature_vector(e.samples, cfg, e.fs_hz) for e in sel]
    provenance = tuple(
        (channel, f"{cfg.scale} frame{f} c{c}")
        for f in range(cfg.num_frames)
        for c in range(cfg.coeff_lo, cfg.coeff_hi + 1)
    )
    return FeatureMatrix(
        X=np.vstack(rows),
        y=np.array([_label_int(e.label) for e in sel]),
        subject_ids=np.array([e.subject_id for e in sel]),
        epoch_idxs=np.array([e.epoch_idx for e in sel]),
        provenance=provenance,
    )


def subband_feature_matrix(
    epochs: list[Epoch],
    channel: int,
    cfg: SubbandConfig,
    win_len: int = 1024,
    overlap: float = 0.5,
    strict: bool = True,
) -> FeatureMatrix:
    """One row per epoch of the given channel, band powers from the
    Welch density."""
    sel = _sorted_channel_epochs(epochs, channel)
    rows = []
    spacing = None
    for e in sel:
        psd = welch_psd(e.samples, e.fs_hz, win_len=win_len, overlap=overlap)
        spacing = psd.bin_spacing_hz
        rows.append(subband_powers(psd, cfg, strict=strict))
    m = int(round(cfg.sbw_hz / spacing))
    width = m * spacing
    provenance = tuple(
        (channel, f"band {k * width:.2f}-{(k + 1) * width:.2f} Hz")
        for k in range(len(rows[0]))
    )
    return FeatureMatrix(
        X=np.vstack(rows),
        y=np.array([_label_int(e.label) for e in sel]),
        subject_ids=np.array([e.subject_id for e in sel]),
        epoch_idxs=np.array([e.epoch_idx for e in sel]),
        provenance=provenance,
    )


def per_channel_matrices(
    epochs: list[Epoch],
    family: str,
    config_by_channel: dict[int, CepstralConfig | SubbandConfig],
    strict: bool = True,
) -> dict[int, FeatureMatrix]:
    """Build one feature matrix per requested channel."""
    if family not in FAMILIES:
        raise DataError(f"unknown feature family {family!r}")
    out: dict[int, FeatureMatrix] = {}
    for channel, cfg in sorted(config_by_channel.items()):
        if family == FAMILY_PSD:
            out[channel] = subband_feature_matrix(epochs, channel, cfg, strict=strict)
        else:
            if cfg.scale != FAMILY_SCALE[family]:
                raise DataError(
                    f"config scale {cfg.scale!r} does not match family {family!r}"
                )
            out[channel] = cepstral_feature_matrix(epochs, channel, cfg)
    return out
