"""Frame-level spectral features pooled into fixed-size per-cough matrices.

Per frame: MFCCs (Hamming window, power spectrum, mel triangular filterbank,
log, orthonormal DCT-II), their velocity and acceleration, log energy,
zero-crossing rate and kurtosis. Frames are then averaged into a fixed number
of contiguous segments, giving an ``n_segments x D`` matrix per cough.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio_io import Label
from .errors import EmptyInput, FormatVersionError, InvalidFrequency, ParseError, TooShort
from .numerics import dct2, fft_real, is_power_of_two, moments

LOG_FLOOR = 1e-10
ENERGY_OFFSET = 0.001

MFCC_GRID = (13, 26, 39, 52, 65)
FRAME_GRID = (256, 512, 1024, 2048, 4096)
SEGMENT_GRID = (50, 70, 100, 120, 150)


@dataclass(frozen=True)
class FeatureConfig:
    n_mfcc: int = 13
    frame_len: int = 1024
    n_segments: int = 50
    hop_len: int = None
    n_mel_filters: int = None
    include_deltas: bool = True
    include_log_energy: bool = True
    include_zcr: bool = True
    include_kurtosis: bool = True

    def __post_init__(self):
        if self.hop_len is None:
            object.__setattr__(self, "hop_len", self.frame_len)
        if self.n_mel_filters is None:
            object.__setattr__(self, "n_mel_filters", 2 * self.n_mfcc)
        if not is_power_of_two(self.frame_len) or self.frame_len < 2:
            raise ValueError(f"frame_len must be a power of two, got {self.frame_len}")
        if self.n_mfcc < 1 or self.n_mel_filters < self.n_mfcc:
            raise ValueError("need 1 <= n_mfcc <= n_mel_filters")
        if self.n_segments < 1 or self.hop_len < 1:
            raise ValueError("n_segments and hop_len must be positive")

    @property
    def n_aux(self):
        return int(self.include_log_energy) + int(self.include_zcr) + int(self.include_kurtosis)

    @property
    def dim(self):
        return self.n_mfcc * (3 if self.include_deltas else 1) + self.n_aux

    def dim_names(self):
        names = [f"mfcc_{i}" for i in range(self.n_mfcc)]
        if self.include_deltas:
            names += [f"mfcc_vel_{i}" for i in range(self.n_mfcc)]
            names += [f"mfcc_acc_{i}" for i in range(self.n_mfcc)]
        if self.include_log_energy:
            names.append("log_energy")
        if self.include_zcr:
            names.append("zcr")
        if self.include_kurtosis:
            names.append("kurtosis")
        return tuple(names)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def label(self):
        return f"MFCC={self.n_mfcc}, Frame={self.frame_len}, Seg={self.n_segments}"


def standard_feature_grid():
    """Every feature configuration in the published search ranges."""
    return [FeatureConfig(m, f, s) for m in MFCC_GRID for f in FRAME_GRID for s in SEGMENT_GRID]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    dim_names: tuple
    patient_id: str = ""
    cough_id: str = ""
    label: Label = Label.UNLABELED
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.dim_names):
            raise ValueError(f"values shape {v.shape} does not match {len(self.dim_names)} dims")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dim_names", tuple(self.dim_names))

    @property
    def shape(self):
        return self.values.shape


def frame_signal(signal, frame_len, hop_len=None):
    """Split into ``frame_len``-sample frames at stride ``hop_len``; the last frame is zero-padded."""
    x = np.asarray(getattr(signal, "samples", signal), dtype=np.float64)
    hop = frame_len if hop_len is None else hop_len
    n = x.size
    if n < frame_len:
        raise TooShort(f"{n} samples is shorter than one {frame_len}-sample frame")
    n_frames = -(-(n - frame_len) // hop) + 1
    padded = np.zeros((n_frames - 1) * hop + frame_len)
    padded[:n] = x
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def mel_scale(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise InvalidFrequency("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=128)
def mel_filterbank(n_filters, frame_len, sample_rate_hz):
    """Triangular filters with centres spaced uniformly in mel from 0 Hz to Nyquist.

    Triangles are evaluated at each FFT bin's exact frequency, so narrow
    filters never collapse onto rounded bin edges.
    """
    nyquist = sample_rate_hz / 2.0
    edges = mel_to_hz(np.linspace(0.0, mel_scale(nyquist), n_filters + 2))
    freqs = np.arange(frame_len // 2 + 1) * sample_rate_hz / frame_len
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=16)
def hamming(n):
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    w.setflags(write=False)
    return w


def power_spectrum(frames):
    spec = fft_real(np.asarray(frames, dtype=np.float64) * hamming(np.shape(frames)[-1]))
    return (spec.real ** 2 + spec.imag ** 2) / np.shape(frames)[-1]


def mfcc_frames(frames, config, sample_rate_hz=44100):
    """MFCCs for a ``(T, frame_len)`` batch of frames."""
    frames = np.atleast_2d(frames)
    if frames.shape[1] != config.frame_len:
        raise TooShort(f"frame length {frames.shape[1]} != configured {config.frame_len}")
    fb = mel_filterbank(config.n_mel_filters, config.frame_len, int(sample_rate_hz))
    energies = power_spectrum(frames) @ fb.T
    return dct2(np.log(np.maximum(energies, LOG_FLOOR)), config.n_mfcc)


def mfcc(frame, config, sample_rate_hz=44100):
    return mfcc_frames(np.asarray(frame)[None, :], config, sample_rate_hz)[0]


DELTA_WINDOW = 2


def _delta(c, window=DELTA_WINDOW):
    t = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], window, axis=0), c,
                             np.repeat(c[-1:], window, axis=0)])
    num = np.zeros_like(c)
    for n in range(1, window + 1):
        num += n * (padded[window + n:window + n + t] - padded[window - n:window - n + t])
    return num / (2.0 * sum(n * n for n in range(1, window + 1)))


def add_deltas(per_frame_mfcc):
    """Append regression velocity and acceleration: ``[static | velocity | acceleration]``."""
    c = np.atleast_2d(np.asarray(per_frame_mfcc, dtype=np.float64))
    vel = _delta(c)
    return np.hstack([c, vel, _delta(vel)])


def log_energy(frame):
    x = np.asarray(frame, dtype=np.float64)
    return float(np.log10(ENERGY_OFFSET + np.sum(x * x) / x.size))


def zero_crossing_rate(frame):
    x = np.asarray(frame, dtype=np.float64)
    if x.size < 2:
        return 0.0
    return float(np.count_nonzero(x[1:] * x[:-1] < 0) / (x.size - 1))


def kurtosis(frame):
    _, sigma, m4 = moments(frame)
    if sigma == 0.0:
        return 0.0
    return m4 / sigma ** 4


def frame_aux_features(frame):
    """``(log_energy, zcr, kurtosis)`` of one raw frame."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("empty frame")
    return log_energy(x), zero_crossing_rate(x), kurtosis(x)


def aux_frames(frames):
    """Vectorised :func:`frame_aux_features` over rows; returns ``(T, 3)``."""
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = x.shape[1]
    le = np.log10(ENERGY_OFFSET + np.sum(x * x, axis=1) / n)
    zcr = (np.count_nonzero(x[:, 1:] * x[:, :-1] < 0, axis=1) / (n - 1)
           if n > 1 else np.zeros(x.shape[0]))
    d = x - x.mean(axis=1, keepdims=True)
    d2 = d * d
    var = d2.mean(axis=1)
    m4 = (d2 * d2).mean(axis=1)
    kurt = np.divide(m4, var * var, out=np.zeros_like(m4), where=var > 0)
    return np.column_stack([le, zcr, kurt])


def segment_groups(n_frames, n_segments):
    """Frame indices for each segment."""
    if n_frames < 1:
        raise EmptyInput("no frames to pool")
    if n_frames >= n_segments:
        return np.array_split(np.arange(n_frames), n_segments)
    return [np.array([min(i, n_frames - 1)]) for i in range(n_segments)]


def pool_segments(per_frame, n_segments, dim_names=None, patient_id="", cough_id="",
                  label=Label.UNLABELED):
    """Average frames into ``n_segments`` contiguous near-equal groups (larger groups first).

    With fewer frames than segments, segment ``i`` takes frame ``i`` and the
    segments past the last frame repeat it.
    """
    x = np.atleast_2d(np.asarray(per_frame, dtype=np.float64))
    if x.shape[0] == 0 or x.size == 0:
        raise EmptyInput("no frames to pool")
    rows = np.stack([x[g].mean(axis=0) for g in segment_groups(x.shape[0], n_segments)])
    if dim_names is None:
        dim_names = tuple(f"dim_{i}" for i in range(x.shape[1]))
    return FeatureMatrix(rows, dim_names, patient_id, cough_id, label)


def per_frame_features(clip, config):
    """``(T, D)`` per-frame features in :meth:`FeatureConfig.dim_names` order."""
    frames = frame_signal(clip, config.frame_len, config.hop_len)
    parts = []
    mf = mfcc_frames(frames, config, clip.sample_rate_hz)
    parts.append(add_deltas(mf) if config.include_deltas else mf)
    aux = aux_frames(frames)
    keep = [config.include_log_energy, config.include_zcr, config.include_kurtosis]
    if any(keep):
        parts.append(aux[:, keep])
    return np.hstack(parts)


def extract_features(clip, config):
    """Full extraction for one preprocessed clip."""
    return pool_segments(per_frame_features(clip, config), config.n_segments,
                         config.dim_names(), clip.patient_id, clip.cough_id, clip.label)


CACHE_MAGIC = b"CSFM"
CACHE_VERSION = 1


def save_features(path, fm, config):
    """One cough per file: magic, version, JSON header, row-major little-endian float64."""
    header = json.dumps({
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "dim_names": list(fm.dim_names),
        "rows": fm.values.shape[0],
        "cols": fm.values.shape[1],
        "patient_id": fm.patient_id,
        "cough_id": fm.cough_id,
        "label": fm.label.value,
    }, sort_keys=True).encode()
    blob = fm.values.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(CACHE_MAGIC + struct.pack("<HI", CACHE_VERSION, len(header))
                           + header + blob)


def load_features(path):
    """Returns ``(FeatureMatrix, header dict)``."""
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise ParseError(0, "not a feature cache file")
    if len(data) < 10:
        raise ParseError(4, "truncated header")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != CACHE_VERSION:
        raise FormatVersionError(f"feature cache version {version}, expected {CACHE_VERSION}")
    header = json.loads(data[10:10 + hlen])
    rows, cols = header["rows"], header["cols"]
    blob = data[10 + hlen:]
    if len(blob) != rows * cols * 8:
        raise ParseError(10 + hlen, "payload size does not match header")
    values = np.frombuffer(blob, dtype="<f8").reshape(rows, cols)
    fm = FeatureMatrix(values, tuple(header["dim_names"]), header["patient_id"],
                       header["cough_id"], Label(header["label"]))
    return fm, header
