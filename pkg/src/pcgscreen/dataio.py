"""Multitrack WAV recordings, dataset manifests, and epoch annotations.

File formats
------------
Recordings are standard RIFF/WAVE files with one track per stethoscope
channel.  Accepted encodings: 16-bit PCM, 24-bit PCM, and 32-bit IEEE
float.  Integer samples are normalized to [-1, 1] by 2**(bit_depth - 1)
on load.  Because the fmt chunk stores the sample rate as a 32-bit
integer, writers emit an auxiliary ``fs64`` chunk (8-byte little-endian
float64) carrying the exact rate; readers prefer it when present, so
half-integral rates such as 7812.5 Hz survive a round trip.

Manifests and annotations are comma-delimited UTF-8 with a header row:

    manifest:    subject_id,path,label,cohort
    annotations: subject_id,epoch_idx,start_sample,end_sample

Annotation indices are expressed at the post-resample rate (2 kHz).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError

LABEL_CAD = "CAD"
LABEL_NORMAL = "Normal"
LABELS = (LABEL_CAD, LABEL_NORMAL)

COHORT_TRAIN = "train"
COHORT_HELDOUT = "heldout"
COHORTS = (COHORT_TRAIN, COHORT_HELDOUT)

MAX_CHANNELS = 7

_WAVE_FMT_PCM = 1
_WAVE_FMT_FLOAT = 3

_MANIFEST_COLUMNS = ("subject_id", "path", "label", "cohort")
_ANNOTATION_COLUMNS = ("subject_id", "epoch_idx", "start_sample", "end_sample")


@dataclass(frozen=True)
class Recording:
    """Synchronous multi-channel sample matrix plus acquisition metadata.

    ``channels`` has shape (n_channels, n_samples) with amplitudes in
    normalized full-scale units.
    """

    subject_id: str
    channels: np.ndarray
    fs_hz: float
    bit_depth: int

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 2:
            raise DataError("channels must be a 2-D [n_channels x n_samples] matrix")
        if not 1 <= ch.shape[0] <= MAX_CHANNELS:
            raise DataError(
                f"recording must have 1..{MAX_CHANNELS} channels, got {ch.shape[0]}"
            )
        if self.fs_hz <= 0:
            raise DataError(f"sampling rate must be positive, got {self.fs_hz}")
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs_hz

    def with_subject(self, subject_id: str) -> "Recording":
        return replace(self, subject_id=subject_id)


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    path: Path
    label: str
    cohort: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.subject_id in seen:
                raise DataError(f"duplicate subject_id: {e.subject_id!r}")
            seen.add(e.subject_id)

    def __len__(self) -> int:
        return len(self.entries)

    def subjects(self) -> list[str]:
        return [e.subject_id for e in self.entries]

    def labels(self) -> dict[str, str]:
        return {e.subject_id: e.label for e in self.entries}

    def cohort(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.cohort == name]


@dataclass(frozen=True)
class EpochSpan:
    subject_id: str
    epoch_idx: int
    start_sample: int
    end_sample: int

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class EpochAnnotations:
    """Per-subject epoch spans, indices at the 2 kHz post-resample rate."""

    spans: tuple[EpochSpan, ...]

    def __post_init__(self) -> None:
        by_subject: dict[str, list[EpochSpan]] = {}
        for s in self.spans:
            if not 0 <= s.epoch_idx <= 2:
                raise DataError(
                    f"epoch_idx must be in 0..2, got {s.epoch_idx} for {s.subject_id!r}"
                )
            if s.end_sample <= s.start_sample:
                raise DataError(
                    f"empty or inverted span [{s.start_sample}, {s.end_sample}) "
                    f"for subject {s.subject_id!r}"
                )
            by_subject.setdefault(s.subject_id, []).append(s)
        for sid, spans in by_subject.items():
            idxs = [s.epoch_idx for s in spans]
            if len(set(idxs)) != len(idxs):
                raise DataError(f"duplicate epoch_idx for subject {sid!r}")
            ordered = sorted(spans, key=lambda s: s.epoch_idx)
            for a, b in zip(ordered, ordered[1:]):
                if b.start_sample < a.end_sample:
                    raise DataError(f"overlapping spans for subject {sid!r}")
        object.__setattr__(self, "_by_subject", {
            sid: tuple(sorted(spans, key=lambda s: s.epoch_idx))
            for sid, spans in by_subject.items()
        })

    def subjects(self) -> list[str]:
        return sorted(self._by_subject)

    def for_subject(self, subject_id: str) -> tuple[EpochSpan, ...]:
        try:
            return self._by_subject[subject_id]
        except KeyError:
            raise DataError(f"no annotations for subject {subject_id!r}") from None

    def validate_strict(self) -> None:
        """Require exactly 3 epochs per subject."""
        for sid, spans in self._by_subject.items():
            if len(spans) != 3:
                raise DataError(
                    f"expected 3 epochs for subject {sid!r}, got {len(spans)}"
                )


# ---------------------------------------------------------------------------
# WAV I/O


def _read_chunks(raw: bytes) -> dict[bytes, bytes]:
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise DataError("unreadable file: not a RIFF/WAVE container")
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise DataError("unreadable file: truncated chunk")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    return chunks


def load_recording(path: str | Path) -> Recording:
    """Load a multitrack PCM/float WAV file as a Recording.

    One channel per track; integer samples scaled to [-1, 1]; sampling
    rate and bit depth taken from the header (exact rate from the
    ``fs64`` chunk when present).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"unreadable file: {path}: {exc}") from exc

    chunks = _read_chunks(raw)
    fmt = chunks.get(b"fmt ")
    data = chunks.get(b"data")
    if fmt is None or len(fmt) < 16 or data is None:
        raise DataError(f"unreadable file: {path}: missing fmt or data chunk")

    audio_format, n_channels, fs_int, _, block_align, bits = struct.unpack_from(
        "<HHIIHH", fmt, 0
    )
    if n_channels == 0:
        raise DataError(f"unreadable file: {path}: zero channels")

    fs_hz = float(fs_int)
    fs64 = chunks.get(b"fs64")
    if fs64 is not None and len(fs64) >= 8:
        fs_hz = struct.unpack_from("<d", fs64, 0)[0]

    if audio_format == _WAVE_FMT_PCM and bits == 16:
        flat = np.frombuffer(data, dtype="<i2").astype(np.float64)
        flat /= 2.0 ** 15
    elif audio_format == _WAVE_FMT_PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8)
        b = b[: (len(b) // 3) * 3].reshape(-1, 3).astype(np.int32)
        vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        vals -= (vals >> 23) << 24  # sign extension
        flat = vals.astype(np.float64) / 2.0 ** 23
    elif audio_format == _WAVE_FMT_FLOAT and bits == 32:
        flat = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise DataError(
            f"unsupported encoding in {path}: format={audio_format}, bits={bits}"
        )

    n_frames = len(flat) // n_channels
    channels = flat[: n_frames * n_channels].reshape(n_frames, n_channels).T.copy()
    return Recording(
        subject_id=path.stem, channels=channels, fs_hz=fs_hz, bit_depth=int(bits)
    )


def write_recording(rec: Recording, path: str | Path, bit_depth: int | None = None) -> Path:
    """Write a Recording as a multitrack WAV file.

    ``bit_depth`` 16 or 24 encodes PCM integers; 32 encodes IEEE float.
    Defaults to the recording's own bit depth.
    """
    path = Path(path)
    depth = int(bit_depth if bit_depth is not None else rec.bit_depth)
    frames = np.ascontiguousarray(rec.channels.T)  # (n_samples, n_channels)

    if depth in (16, 24):
        full = 2.0 ** (depth - 1)
        q = np.clip(np.rint(frames * full), -full, full - 1).astype(np.int64)
        if depth == 16:
            payload = q.astype("<i2").tobytes()
        else:
            q24 = q.astype(np.int64) & 0xFFFFFF
            b = np.empty((q24.size, 3), dtype=np.uint8)
            flat = q24.ravel()
            b[:, 0] = flat & 0xFF
            b[:, 1] = (flat >> 8) & 0xFF
            b[:, 2] = (flat >> 16) & 0xFF
            payload = b.tobytes()
        audio_format = _WAVE_FMT_PCM
    elif depth == 32:
        payload = frames.astype("<f4").tobytes()
        audio_format = _WAVE_FMT_FLOAT
    else:
        raise DataError(f"unsupported bit depth for writing: {depth}")

    n_channels = rec.n_channels
    bytes_per_sample = depth // 8
    block_align = n_channels * bytes_per_sample
    fs_int = int(round(rec.fs_hz))
    fmt = struct.pack(
        "<HHIIHH", audio_format, n_channels, fs_int,
        fs_int * block_align, block_align, depth,
    )
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"fs64" + struct.pack("<I", 8) + struct.pack("<d", float(rec.fs_hz))
    if audio_format == _WAVE_FMT_FLOAT:
        body += b"fact" + struct.pack("<I", 4) + struct.pack("<I", rec.n_samples)
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    return path


# ---------------------------------------------------------------------------
# Manifest and annotation CSV


def _read_rows(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames
            if fields is None:
                raise DataError(f"missing column in {path}: file is empty")
            fields = [f.strip() for f in fields]
            for col in required:
                if col not in fields:
                    raise DataError(f"missing column in {path}: {col!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                clean = {}
                for key, val in row.items():
                    if key is None:
                        raise DataError(f"{path}:{lineno}: too many fields")
                    clean[key.strip()] = (val or "").strip()
                rows.append(clean)
            return rows
    except OSError as exc:
        raise DataError(f"unreadable file: {path}: {exc}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load a dataset manifest CSV; relative paths resolve against its folder."""
    path = Path(path)
    rows = _read_rows(path, _MANIFEST_COLUMNS)
    label_map = {l.lower(): l for l in LABELS}
    entries = []
    for row in rows:
        label = label_map.get(row["label"].lower())
        if label is None:
            raise DataError(f"unknown label token {row['label']!r} in {path}")
        cohort = row["cohort"].lower()
        if cohort not in COHORTS:
            raise DataError(f"unknown cohort token {row['cohort']!r} in {path}")
        rec_path = Path(row["path"])
        if not rec_path.is_absolute():
            rec_path = path.parent / rec_path
        if not rec_path.exists():
            raise DataError(f"recording file not found: {rec_path}")
        entries.append(
            ManifestEntry(
                subject_id=row["subject_id"], path=rec_path, label=label, cohort=cohort
            )
        )
    return DatasetManifest(entries=tuple(entries))


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow([e.subject_id, str(e.path), e.label, e.cohort])
    return path


def load_annotations(path: str | Path, strict: bool = True) -> EpochAnnotations:
    """Load epoch annotations; with ``strict`` every subject must have 3 spans."""
    path = Path(path)
    rows = _read_rows(path, _ANNOTATION_COLUMNS)
    spans = []
    for row in rows:
        try:
            spans.append(
                EpochSpan(
                    subject_id=row["subject_id"],
                    epoch_idx=int(row["epoch_idx"]),
                    start_sample=int(row["start_sample"]),
                    end_sample=int(row["end_sample"]),
                )
            )
        except ValueError as exc:
            raise DataError(f"non-integer annotation field in {path}: {exc}") from exc
    ann = EpochAnnotations(spans=tuple(spans))
    if strict:
        ann.validate_strict()
    return ann


def write_annotations(ann: EpochAnnotations, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ANNOTATION_COLUMNS)
        for span in sorted(ann.spans, key=lambda s: (s.subject_id, s.epoch_idx)):
            writer.writerow(
                [span.subject_id, span.epoch_idx, span.start_sample, span.end_sample]
            )
    return path
