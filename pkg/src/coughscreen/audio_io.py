"""RIFF/WAVE decoding and dataset manifests."""

import csv
import enum
import io
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ManifestError, ParseError, UnsupportedFormat

log = logging.getLogger(__name__)

EXPECTED_RATE = 44100
WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class Label(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    HEALTHY = "healthy"
    UNLABELED = "unlabeled"

    @property
    def is_positive(self):
        return self is Label.POSITIVE

    @classmethod
    def parse(cls, token):
        return cls(token.strip().lower())


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    patient_id: str = ""
    cough_id: str = ""
    label: Label = Label.UNLABELED
    silent: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("AudioClip needs a non-empty 1-D sample array")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples, **changes):
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    label: Label
    clip_paths: tuple
    metadata: dict = field(default_factory=dict, compare=False)


def _chunks(buf):
    if len(buf) < 12:
        raise ParseError(0, "file shorter than the 12-byte RIFF header")
    if buf[0:4] != b"RIFF":
        raise ParseError(0, "missing RIFF signature")
    if buf[8:12] != b"WAVE":
        raise ParseError(8, "RIFF form type is not WAVE")
    pos = 12
    while pos + 8 <= len(buf):
        cid = bytes(buf[pos:pos + 4])
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        start = pos + 8
        end = start + size
        if end > len(buf):
            raise ParseError(pos, f"chunk {cid!r} declares {size} bytes past end of file")
        yield cid, start, end
        pos = end + (size & 1)
    if pos != len(buf) and len(buf) - pos not in (0, 1):
        raise ParseError(pos, "trailing bytes do not form a chunk header")


def _parse_fmt(buf, start, end):
    if end - start < 16:
        raise ParseError(start, "fmt chunk shorter than 16 bytes")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", buf, start)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if end - start < 40:
            raise ParseError(start, "extensible fmt chunk shorter than 40 bytes")
        (tag,) = struct.unpack_from("<H", buf, start + 24)
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels (only mono or stereo)")
    if (tag, bits) not in ((WAVE_FORMAT_PCM, 16), (WAVE_FORMAT_IEEE_FLOAT, 32)):
        raise UnsupportedFormat(f"format tag {tag:#06x} with {bits} bits per sample")
    if rate == 0:
        raise ParseError(start + 4, "sample rate is zero")
    if block_align != channels * bits // 8:
        raise ParseError(start + 12, f"block align {block_align} inconsistent with format")
    return tag, channels, rate, block_align


def parse_wav(data, patient_id="", cough_id="", label=Label.UNLABELED):
    """Decode an in-memory WAV file into a mono :class:`AudioClip`."""
    buf = memoryview(bytes(data))
    fmt = None
    payload = None
    for cid, start, end in _chunks(buf):
        if cid == b"fmt ":
            fmt = _parse_fmt(buf, start, end)
        elif cid == b"data":
            if fmt is None:
                raise ParseError(start - 8, "data chunk before fmt chunk")
            payload = (start, end)
    if fmt is None:
        raise ParseError(12, "no fmt chunk")
    if payload is None:
        raise ParseError(12, "no data chunk")
    tag, channels, rate, block_align = fmt
    start, end = payload
    nbytes = end - start
    if nbytes == 0:
        raise ParseError(start, "data chunk holds no samples")
    if nbytes % block_align:
        raise ParseError(start, f"data size {nbytes} is not a multiple of block align {block_align}")
    raw = bytes(buf[start:end])
    if tag == WAVE_FORMAT_PCM:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise ParseError(start, "non-finite float samples")
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if rate != EXPECTED_RATE:
        log.warning("sample rate %d Hz differs from %d Hz; no resampling applied",
                    rate, EXPECTED_RATE)
    return AudioClip(samples, int(rate), patient_id, cough_id, label)


def read_wav(path, patient_id="", cough_id=None, label=Label.UNLABELED):
    path = Path(path)
    return parse_wav(path.read_bytes(), patient_id,
                     path.stem if cough_id is None else cough_id, label)


def encode_wav(samples, sample_rate_hz, sample_format="pcm16"):
    """Serialize samples to WAV bytes.

    ``samples`` is ``(n,)`` or ``(n, channels)``. int16 arrays are written
    verbatim as PCM16; float arrays are scaled by 32768 and clipped for PCM16
    or written as-is for ``sample_format="float32"``.
    """
    arr = np.asarray(samples)
    channels = 1 if arr.ndim == 1 else arr.shape[1]
    if sample_format == "pcm16":
        if arr.dtype != np.int16:
            arr = np.clip(np.round(arr * 32768.0), -32768, 32767).astype(np.int16)
        raw = arr.astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif sample_format == "float32":
        raw = arr.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise UnsupportedFormat(sample_format)
    block_align = channels * bits // 8
    out = io.BytesIO()
    out.write(b"RIFF")
    out.write(struct.pack("<I", 4 + 8 + 16 + 8 + len(raw) + (len(raw) & 1)))
    out.write(b"WAVE")
    out.write(b"fmt ")
    out.write(struct.pack("<IHHIIHH", 16, tag, channels, sample_rate_hz,
                          sample_rate_hz * block_align, block_align, bits))
    out.write(b"data")
    out.write(struct.pack("<I", len(raw)))
    out.write(raw)
    if len(raw) & 1:
        out.write(b"\x00")
    return out.getvalue()


def write_wav(path, samples, sample_rate_hz, sample_format="pcm16"):
    Path(path).write_bytes(encode_wav(samples, sample_rate_hz, sample_format))


MANIFEST_COLUMNS = ("patient_id", "cough_path", "label")
OPTIONAL_COLUMNS = ("age", "gender", "country")


def load_manifest(path):
    """Group manifest rows into :class:`PatientRecord` values, in first-seen order.

    Relative ``cough_path`` entries resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    header = None
    records = {}
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            row = [c.strip() for c in next(csv.reader([line]))]
            if header is None:
                header = [c.lower() for c in row]
                if tuple(header[:3]) != MANIFEST_COLUMNS or any(
                        c not in OPTIONAL_COLUMNS for c in header[3:]):
                    raise ManifestError(lineno, f"unexpected header {row}", str(path))
                continue
            if len(row) != len(header):
                raise ManifestError(lineno, f"expected {len(header)} fields, got {len(row)}",
                                    str(path))
            pid, cough, token = row[:3]
            try:
                label = Label.parse(token)
            except ValueError:
                label = None
            if label is None or label is Label.UNLABELED:
                raise ManifestError(lineno, f"unknown label {token!r}", str(path))
            if not pid or not cough:
                raise ManifestError(lineno, "empty patient_id or cough_path", str(path))
            key = (pid, cough)
            if key in seen:
                raise ManifestError(lineno, f"duplicate entry {key}", str(path))
            seen.add(key)
            clip_path = Path(cough)
            if not clip_path.is_absolute():
                clip_path = base / clip_path
            meta = {k: v for k, v in zip(header[3:], row[3:]) if v}
            if pid in records:
                rec = records[pid]
                if rec["label"] is not label:
                    raise ManifestError(lineno, f"patient {pid} has conflicting labels",
                                        str(path))
                rec["paths"].append(str(clip_path))
                rec["meta"].update(meta)
            else:
                records[pid] = {"label": label, "paths": [str(clip_path)], "meta": meta}
    if header is None:
        raise ManifestError(1, "missing header", str(path))
    return [PatientRecord(pid, r["label"], tuple(r["paths"]), r["meta"])
            for pid, r in records.items()]


def write_manifest(path, rows):
    """Write ``(patient_id, cough_path, label)`` rows with the standard header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for pid, cough, label in rows:
            w.writerow([pid, cough, label.value if isinstance(label, Label) else label])
