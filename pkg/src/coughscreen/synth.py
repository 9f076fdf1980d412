"""Synthetic fixtures: two-tone cough corpus and a feature set with known informative dims."""

from pathlib import Path

import numpy as np

from .audio_io import Label, write_manifest, write_wav
from .features import FeatureMatrix
from .numerics import derive_seed, make_rng

SAMPLE_RATE = 44100
CLASS_CENTRES_HZ = {Label.NEGATIVE: 400.0, Label.POSITIVE: 1200.0}


def band_noise(n, centre_hz, bandwidth_hz, rng, sr=SAMPLE_RATE):
    """Unit-RMS noise keeping only frequencies within ``bandwidth_hz / 2`` of ``centre_hz``."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[np.abs(freqs - centre_hz) > bandwidth_hz / 2] = 0.0
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x ** 2))


def burst_recording(centre_hz, rng, snr_db=10.0, bandwidth_hz=200.0, sr=SAMPLE_RATE):
    """One cough-like burst with a raised-cosine envelope, in-band white noise at ``snr_db``
    and near-silent lead-in and tail that the trimmer removes."""
    n_burst = int(rng.uniform(0.15, 0.35) * sr)
    env = np.sin(np.pi * np.arange(n_burst) / n_burst) ** 0.5
    burst = band_noise(n_burst, centre_hz, bandwidth_hz, rng, sr) * env
    sig_power = np.mean(burst ** 2)
    burst = burst + rng.standard_normal(n_burst) * np.sqrt(sig_power / 10 ** (snr_db / 10))
    lead, tail = (int(rng.uniform(0.1, 0.3) * sr) for _ in range(2))
    floor = 1e-4 * np.sqrt(sig_power)
    quiet = lambda k: rng.standard_normal(k) * floor  # noqa: E731
    x = np.concatenate([quiet(lead), burst, quiet(tail)])
    return 0.5 * x / np.max(np.abs(x))


def make_synthetic_corpus(out_dir, seed=7, n_per_class=30, bursts=(2, 4), snr_db=10.0):
    """Write WAV recordings and a manifest for a balanced two-class corpus.

    Class ``negative`` bursts sit around 400 Hz and class ``positive``
    around 1200 Hz. Each patient contributes 2 to 4 bursts, one per file.
    Returns the manifest path.
    """
    out = Path(out_dir)
    wav_dir = out / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for c, label in enumerate((Label.NEGATIVE, Label.POSITIVE)):
        for i in range(n_per_class):
            pid = f"{label.value[:3]}{i:03d}"
            rng = make_rng(derive_seed(seed, c, i))
            for b in range(int(rng.integers(bursts[0], bursts[1] + 1))):
                x = burst_recording(CLASS_CENTRES_HZ[label], rng, snr_db)
                name = f"{pid}_{b}.wav"
                write_wav(wav_dir / name, x, SAMPLE_RATE, "pcm16")
                rows.append((pid, f"wav/{name}", label))
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


def informative_features(seed, n_patients=300, coughs=1, n_segments=4, n_dims=42,
                         informative=(7, 19, 33), shift=0.5):
    """Feature matrices where only ``informative`` dims carry a class-dependent mean shift.

    With the defaults one informative dim gives a patient-level AUC near
    0.8 and all three near 0.9, so every added informative dim still raises
    the dev AUC instead of saturating it.
    """
    rng = make_rng(seed)
    names = tuple(f"d{j}" for j in range(n_dims))
    fms = []
    for p in range(n_patients):
        label = Label.POSITIVE if p % 2 else Label.NEGATIVE
        for c in range(coughs):
            x = rng.standard_normal((n_segments, n_dims))
            if label is Label.POSITIVE:
                x[:, list(informative)] += shift
            fms.append(FeatureMatrix(x, names, f"p{p:03d}", f"p{p:03d}/{c}", label))
    return fms
