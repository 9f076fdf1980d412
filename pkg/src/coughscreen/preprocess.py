"""Peak normalization and energy-based silence removal."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyAfterTrim, EmptyInput


@dataclass(frozen=True)
class TrimConfig:
    margin_ms: float = 50.0
    window_ms: float = 10.0
    threshold_db: float = -40.0


def normalize(clip):
    """Scale so the peak absolute amplitude is exactly 1; all-zero clips are flagged silent."""
    peak = float(np.max(np.abs(clip.samples)))
    if peak == 0.0:
        return clip.with_samples(clip.samples, silent=True)
    return clip.with_samples(clip.samples / peak, silent=False)


def ms_to_samples(ms, sample_rate_hz):
    return int(round(ms * sample_rate_hz / 1000.0))


def active_mask(samples, window, threshold_db):
    """Per-window activity flags (RMS within ``threshold_db`` of the loudest window)."""
    n = samples.size
    n_win = -(-n // window)
    padded = np.zeros(n_win * window)
    padded[:n] = samples
    counts = np.full(n_win, window, dtype=np.float64)
    counts[-1] = n - (n_win - 1) * window
    rms = np.sqrt((padded.reshape(n_win, window) ** 2).sum(axis=1) / counts)
    peak = rms.max()
    if peak == 0.0:
        return np.zeros(n_win, dtype=bool)
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(rms / peak)
    return level >= threshold_db


def keep_mask(samples, sample_rate_hz, margin_ms=50.0, window_ms=10.0, threshold_db=-40.0):
    """Boolean mask over samples that :func:`trim_silence` retains."""
    n = samples.size
    window = max(1, ms_to_samples(window_ms, sample_rate_hz))
    margin = ms_to_samples(margin_ms, sample_rate_hz)
    active = active_mask(samples, window, threshold_db)
    keep = np.zeros(n, dtype=bool)
    if not active.any():
        return keep
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1) * window
    stops = np.minimum(np.flatnonzero(edges == -1) * window, n)
    for a, b in zip(starts, stops):
        keep[max(0, a - margin):min(n, b + margin)] = True
    return keep


def trim_silence(clip, margin_ms=50.0, window_ms=10.0, threshold_db=-40.0):
    """Delete silent stretches, keeping ``margin_ms`` either side of each active region."""
    if margin_ms < 0:
        raise ValueError("margin_ms must be non-negative")
    if len(clip) == 0:
        raise EmptyInput("empty clip")
    keep = keep_mask(clip.samples, clip.sample_rate_hz, margin_ms, window_ms, threshold_db)
    if not keep.any():
        raise EmptyAfterTrim(f"clip {clip.cough_id!r} is entirely silent")
    if keep.all():
        return clip
    return clip.with_samples(clip.samples[keep])


def preprocess(clip, config=TrimConfig()):
    return trim_silence(normalize(clip), config.margin_ms, config.window_ms, config.threshold_db)
