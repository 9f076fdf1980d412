"""Compiled versus pure-Python kernels, alone and inside the pipeline.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from coughscreen import _backend

END_TO_END = """
import json
import time
import numpy as np
from coughscreen import BACKEND
from coughscreen.audio_io import AudioClip
from coughscreen.features import FeatureConfig, extract_features
from coughscreen.models import ModelSpec, fit

rng = np.random.default_rng(0)
clip = AudioClip(rng.standard_normal(44100 * 2), 44100)
t = time.perf_counter()
for n_mfcc, frame in [(13, 512), (26, 1024), (39, 2048)]:
    extract_features(clip, FeatureConfig(n_mfcc=n_mfcc, frame_len=frame, n_segments=50))
mfcc_s = time.perf_counter() - t
x = rng.standard_normal((64, 50, 39))
y = np.arange(64) % 2
t = time.perf_counter()
fit(ModelSpec("CNN", epochs=2, batch_size=64), list(x), y, seed=0)
cnn_s = time.perf_counter() - t
print(json.dumps({"backend": BACKEND, "mfcc_s": mfcc_s, "cnn_2_epochs_s": cnn_s}))
"""


def time_kernels(repeat):
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((2000, 1024))
    img = rng.standard_normal((64, 24, 48, 37))
    rows = []
    for name in _backend.available():
        k = _backend.get(name)
        cols = k.im2col(img, 3, 3, 1, 1)
        cases = {
            "rfft_batch 2000x1024": lambda: k.rfft_batch(frames),
            "im2col 64x24x48x37 k3": lambda: k.im2col(img, 3, 3, 1, 1),
            "col2im 64x24x48x37 k3": lambda: k.col2im(cols, img.shape, 3, 3, 1, 1),
        }
        for case, fn in cases.items():
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            rows.append({"backend": name, "case": case, "best_ms": best * 1e3})
    return rows


def time_pipeline():
    out = []
    for name in _backend.available():
        env = dict(os.environ, COUGHSCREEN_PURE_PYTHON="1" if name == "python" else "0")
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                             capture_output=True, text=True)
        out.append(json.loads(res.stdout.strip().splitlines()[-1]))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'backend':<10}{'case':<26}{'best ms':>10}")
    for r in time_kernels(args.repeat):
        print(f"{r['backend']:<10}{r['case']:<26}{r['best_ms']:>10.2f}")
    print()
    print(f"{'backend':<10}{'mfcc s':>10}{'cnn 2 ep s':>12}")
    for r in time_pipeline():
        print(f"{r['backend']:<10}{r['mfcc_s']:>10.3f}{r['cnn_2_epochs_s']:>12.3f}")


if __name__ == "__main__":
    main()
