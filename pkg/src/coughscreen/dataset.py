"""Patient corpus: preprocessed clips plus per-configuration feature matrices."""

import logging
import os
import re
from pathlib import Path

from .audio_io import Label, load_manifest, read_wav
from .errors import EmptyInput
from .features import extract_features, load_features, save_features
from .preprocess import TrimConfig, preprocess

log = logging.getLogger(__name__)

CACHE_ENV = "COUGHSCREEN_CACHE"


def _safe(name):
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


class Corpus:
    """Patients, their labels and their coughs.

    Built either from preprocessed clips (features are extracted on demand
    and memoised per :class:`FeatureConfig`) or from ready-made feature
    matrices keyed by configuration.
    """

    def __init__(self, clips=None, features=None, cache_dir=None, trim=TrimConfig()):
        self.clips = list(clips or [])
        self._features = dict(features or {})
        self.trim = trim
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.labels = {}
        order = []
        items = self.clips or next(iter(self._features.values()), [])
        for item in items:
            if item.patient_id not in self.labels:
                order.append(item.patient_id)
            self.labels[item.patient_id] = int(item.label.is_positive)
        self.patient_ids = tuple(order)

    def __len__(self):
        return len(self.patient_ids)

    @classmethod
    def from_manifest(cls, path, trim=TrimConfig(), cache_dir=None):
        records = load_manifest(path)
        return cls.from_records(records, trim, cache_dir)

    @classmethod
    def from_records(cls, records, trim=TrimConfig(), cache_dir=None):
        clips = []
        for rec in records:
            for clip_path in rec.clip_paths:
                clip = read_wav(clip_path, rec.patient_id, f"{rec.patient_id}/{Path(clip_path).name}",
                                rec.label)
                clips.append(preprocess(clip, trim))
        if cache_dir is None and os.environ.get(CACHE_ENV):
            cache_dir = os.environ[CACHE_ENV]
        return cls(clips=clips, cache_dir=cache_dir, trim=trim)

    @classmethod
    def from_features(cls, fms, config=None):
        """Wrap precomputed matrices; ``config`` is only a lookup key."""
        return cls(features={config: list(fms)})

    def _cache_path(self, config, cough_id):
        key = f"{config.config_hash()}_m{self.trim.margin_ms:g}_w{self.trim.window_ms:g}_t{self.trim.threshold_db:g}"
        return self.cache_dir / key / (_safe(cough_id) + ".csfm")

    def features(self, config):
        """Feature matrices for every cough, in corpus order."""
        if config in self._features:
            return self._features[config]
        if not self.clips:
            if len(self._features) == 1:
                return next(iter(self._features.values()))
            raise EmptyInput(f"no clips to extract {config} from")
        out = []
        for clip in self.clips:
            path = self._cache_path(config, clip.cough_id) if self.cache_dir else None
            if path is not None and path.exists():
                fm, header = load_features(path)
                if header["config_hash"] == config.config_hash():
                    out.append(fm)
                    continue
            fm = extract_features(clip, config)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_features(path, fm, config)
            out.append(fm)
        self._features[config] = out
        return out

    def by_patient(self, config):
        groups = {pid: [] for pid in self.patient_ids}
        for fm in self.features(config):
            groups[fm.patient_id].append(fm)
        return groups

    def label_counts(self):
        pos = sum(self.labels.values())
        return {Label.POSITIVE.value: pos, "other": len(self.labels) - pos}
