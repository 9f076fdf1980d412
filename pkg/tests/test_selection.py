import csv

import numpy as np
import pytest

from coughscreen import selection
from coughscreen.errors import ShapeError
from coughscreen.models import ModelSpec
from coughscreen.selection import restrict, sfs
from coughscreen.synth import informative_features

LR = ModelSpec("LR", epochs=40)


def test_informative_dim_first_even_at_higher_index():
    fms = informative_features(0, n_patients=80, n_dims=2, informative=(1,), shift=1.5)
    res = sfs(fms, LR, max_dims=2, seed=0)
    assert res.order[0] == 1
    assert [t[0] for t in res.trace] == [1, 2]


def test_trace_shape_and_best():
    fms = informative_features(1, n_patients=60, n_dims=5, informative=(2, 4), shift=1.0)
    res = sfs(fms, LR, max_dims=3, seed=1)
    assert len(res.trace) == 3 and len(set(res.order)) == 3
    aucs = [t[2] for t in res.trace]
    assert res.best_auc == max(aucs)
    k = aucs.index(max(aucs))
    assert res.best_subset == res.order[:k + 1]
    assert all(0.0 <= a <= 1.0 for a in aucs)
    # selected subsets grow by exactly one dim per step
    for i in range(1, 3):
        assert set(res.order[:i]) < set(res.order[:i + 1])
    assert len(sfs(fms, LR, max_dims=99, seed=1).trace) == 5


def test_deterministic_and_parallel_agree():
    fms = informative_features(2, n_patients=40, n_dims=4, informative=(0,), shift=1.0)
    a = sfs(fms, LR, max_dims=2, seed=3)
    b = sfs(fms, LR, max_dims=2, seed=3, workers=2)
    assert a == b


def test_restrict_modes():
    fms = informative_features(0, n_patients=2, n_dims=5, n_segments=3, informative=(0,))
    dropped = restrict(fms, [1, 3], remove=True)
    assert dropped[0].shape == (3, 2) and dropped[0].dim_names == ("d1", "d3")
    masked = restrict(fms, [1, 3], remove=False)
    assert masked[0].shape == (3, 5)
    assert np.all(masked[0].values[:, [0, 2, 4]] == 0)
    assert np.array_equal(masked[0].values[:, [1, 3]], fms[0].values[:, [1, 3]])


def test_matrix_family_keeps_shape(monkeypatch):
    real_train = selection.train_on
    fms = informative_features(4, n_patients=24, n_segments=8, n_dims=4, informative=(3,), shift=1.5)
    seen = []
    monkeypatch.setattr(selection, "train_on", lambda spec, fit_fms, *a: seen.append(fit_fms[0].shape)
                        or real_train(spec, fit_fms, *a))
    res = sfs(fms, ModelSpec("CNN", epochs=2, batch_size=32), max_dims=1, seed=0)
    assert len(res.trace) == 1
    assert seen and set(seen) == {(8, 4)}


def test_csv_output(tmp_path):
    fms = informative_features(5, n_patients=30, n_dims=3, informative=(0,))
    res = sfs(fms, LR, max_dims=2, seed=0)
    res.write_csv(tmp_path / "sfs.csv")
    rows = list(csv.reader(open(tmp_path / "sfs.csv")))
    assert rows[0] == ["step", "dim_name", "dev_auc"]
    assert [(int(r[0]), r[1], float(r[2])) for r in rows[1:]] == list(res.trace)


def test_rejects_bad_input():
    with pytest.raises(ShapeError):
        sfs([], LR)
    with pytest.raises(ShapeError):
        sfs(informative_features(0, n_patients=4, n_dims=1, informative=(0,)), LR)
