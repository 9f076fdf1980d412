import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coughscreen import crossval as cv
from coughscreen.balance import SmoteConfig
from coughscreen.crossval import (FittedPipeline, FoldPlan, InnerSplit, OuterFold, SearchGrid,
                                  balance_training_set, check_plan, evaluate_external,
                                  load_pipelines, make_dev_splits, make_fold_plan, run_nested_cv,
                                  save_run, train_on)
from coughscreen.dataset import Corpus
from coughscreen.errors import ConfigError, EmptyInput, InvalidPlan, LeakageError
from coughscreen.evaluation import report
from coughscreen.features import FeatureConfig
from coughscreen.models import ModelSpec
from coughscreen.numerics import derive_seed
from coughscreen.synth import informative_features

FC = FeatureConfig(n_mfcc=13, frame_len=1024, n_segments=4)
LR = ModelSpec("LR", epochs=30)


def small_corpus(n=40, seed=0, shift=1.5):
    return Corpus.from_features(
        informative_features(seed, n_patients=n, coughs=2, n_dims=6, informative=(1,), shift=shift), FC)


def labelled(n, n_pos):
    return [(f"p{i}", int(i < n_pos)) for i in range(n)]


def test_ten_patients_five_folds():
    plan = make_fold_plan(labelled(10, 5), J=2, K=2, seed=1)
    assert len(plan.folds) == 5
    tested = [p for f in plan.folds for p in f.test]
    assert sorted(tested) == sorted(f"p{i}" for i in range(10))
    for f in plan.folds:
        assert len(f.inner) == 4 and all(len(s.dev) == 2 for s in f.inner)


def test_large_corpus_fold_count():
    plan = make_fold_plan(labelled(1171, 92), J=234, K=234, seed=0, n_inner=1)
    assert len(plan.folds) == 5
    assert len({p for f in plan.folds for p in f.test}) == 1170


def test_stratified_test_sets():
    plan = make_fold_plan(labelled(100, 20), J=20, K=10, seed=3)
    for f in plan.folds:
        assert sum(int(p[1:]) < 20 for p in f.test) == 4


@settings(max_examples=100, deadline=None)
@given(st.integers(4, 80).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, n - 2), st.integers(1, n - 2), st.integers(0, 2**31))))
def test_plan_invariants(args):
    n, J, K, seed = args
    if J + K >= n:
        with pytest.raises(InvalidPlan):
            make_fold_plan(labelled(n, n // 3), J, K, seed)
        return
    plan = make_fold_plan(labelled(n, n // 3), J, K, seed, n_inner=3)
    ids = {f"p{i}" for i in range(n)}
    assert len(plan.folds) == n // J
    seen = set()
    for f in plan.folds:
        assert len(f.test) == J and not set(f.test) & seen
        seen |= set(f.test)
        assert set(f.test) | set(f.train) == ids and not set(f.test) & set(f.train)
        for s in f.inner:
            assert len(s.dev) == K
            assert set(s.fit) | set(s.dev) == set(f.train) and not set(s.fit) & set(s.dev)
    assert make_fold_plan(labelled(n, n // 3), J, K, seed, n_inner=3) == plan


def test_invalid_plans():
    with pytest.raises(InvalidPlan):
        make_fold_plan(labelled(10, 5), J=5, K=5)
    with pytest.raises(InvalidPlan):
        make_fold_plan(labelled(10, 5), J=0, K=2)
    with pytest.raises(InvalidPlan):
        make_fold_plan([("a", 0), ("a", 1), ("b", 0), ("c", 1)], J=1, K=1)
    with pytest.raises(InvalidPlan):
        make_dev_splits(labelled(4, 2), K=4)


def test_plan_serialization_round_trip():
    plan = make_fold_plan(labelled(20, 8), J=4, K=3, seed=5)
    again = FoldPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again == plan and again.fingerprint() == plan.fingerprint()


def test_injected_leakage_is_caught():
    corpus = small_corpus(10)
    ids = list(corpus.patient_ids)
    bad = FoldPlan((OuterFold(tuple(ids[:2]), tuple(ids[1:]), (InnerSplit(tuple(ids[3:]), tuple(ids[1:3])),)),),
                   0, 2, 2)
    with pytest.raises(LeakageError):
        check_plan(bad)
    with pytest.raises(LeakageError):
        run_nested_cv(corpus, SearchGrid(FC, LR), bad)
    inner_leak = FoldPlan((OuterFold(tuple(ids[:2]), tuple(ids[2:]),
                                     (InnerSplit(tuple(ids[2:]), tuple(ids[2:4])),)),), 0, 2, 2)
    with pytest.raises(LeakageError):
        check_plan(inner_leak)


def test_train_on_rejects_foreign_coughs():
    fms = informative_features(0, n_patients=6, n_dims=4, informative=(0,))
    with pytest.raises(LeakageError):
        train_on(LR, fms, ["p000", "p001"], SmoteConfig(), 0)


def test_smote_parents_stay_in_fit_set():
    fms = informative_features(1, n_patients=30, n_dims=4, informative=(0,))
    fms = [fm for i, fm in enumerate(fms) if fm.label.is_positive is False or i % 4 == 1]
    bal = balance_training_set(fms, SmoteConfig(), seed=3)
    fit_ids = {fm.patient_id for fm in fms if fm.label.is_positive}
    assert bal.parent_patients and all(a in fit_ids and b in fit_ids for a, b in bal.parent_patients)
    assert int(bal.labels.sum()) == int((bal.labels == 0).sum())


def test_single_point_grid_is_plain_train_test():
    corpus = small_corpus(20)
    plan = make_fold_plan([(p, corpus.labels[p]) for p in corpus.patient_ids], 4, 4, seed=2, n_inner=2)
    res = run_nested_cv(corpus, SearchGrid(FC, LR, "I1"), plan, seed=2)
    groups = corpus.by_patient(FC)
    pick = lambda ids: [fm for p in ids for fm in groups[p]]  # noqa: E731
    for o, fold in enumerate(plan.folds):
        gammas = []
        for s, split in enumerate(fold.inner):
            m = train_on(LR, pick(split.fit), split.fit, SmoteConfig(), derive_seed(2, cv._SEED_INNER, o, 0, 0, s))
            gammas.append(cv.cough_gamma(m, pick(split.dev)))
        gamma = float(np.mean(gammas))
        model = train_on(LR, pick(fold.train), fold.train, SmoteConfig(), derive_seed(2, cv._SEED_OUTER, o))
        expected = report(cv.patient_scores(model, pick(fold.test), gamma, corpus.labels), "I1", gamma_ee=gamma)
        got = res.folds[o]
        assert got.gamma_ee == gamma
        assert got.report.auc == expected.auc and got.report.accuracy == expected.accuracy


def test_search_picks_best_and_is_deterministic():
    corpus = small_corpus(24)
    grid = SearchGrid(FC, tuple(ModelSpec("LR", epochs=30, reg_strength=r) for r in (1e-4, 1.0)))
    plan = make_fold_plan([(p, corpus.labels[p]) for p in corpus.patient_ids], 6, 4, seed=0, n_inner=2)
    a = run_nested_cv(corpus, grid, plan, seed=4)
    b = run_nested_cv(corpus, grid, plan, seed=4, workers=2)
    for fa, fb in zip(a.folds, b.folds):
        scores = a.grid_scores[fa.outer]
        assert fa.dev_auc == max(scores.values())
        assert fa.coords == min(c for c, v in scores.items() if v == fa.dev_auc)
        assert fa.coords == fb.coords and fa.report.auc == fb.report.auc
    assert a.mean == b.mean


def test_checkpoint_resume(tmp_path):
    corpus = small_corpus(16)
    grid = SearchGrid(FC, LR)
    plan = make_fold_plan([(p, corpus.labels[p]) for p in corpus.patient_ids], 4, 4, seed=0, n_inner=2)
    ck = tmp_path / "ck.jsonl"
    full = run_nested_cv(corpus, grid, plan, checkpoint=ck)
    lines = ck.read_text().splitlines()
    assert json.loads(lines[0]).keys() == {"fingerprint"} and len(lines) == 1 + 4 * 2
    ck.write_text("\n".join(lines[:4]) + "\n")  # simulate an interrupted run
    resumed = run_nested_cv(corpus, grid, plan, checkpoint=ck)
    assert [f.report.auc for f in resumed.folds] == [f.report.auc for f in full.folds]
    assert len(ck.read_text().splitlines()) == len(lines)
    with pytest.raises(ConfigError):
        run_nested_cv(corpus, grid, plan, seed=99, checkpoint=ck)


def test_budget_subsample():
    grid = SearchGrid((FC, FeatureConfig(n_mfcc=26)), tuple(ModelSpec("LR", reg_strength=r) for r in (1, 2, 3)))
    assert len(grid) == 12
    sub = grid.subsample(5, seed=1)
    assert len(sub) == 5 and sub == sorted(sub) and set(sub) <= set(grid.coordinates())
    assert grid.subsample(5, seed=1) == sub
    assert grid.subsample(50) == grid.coordinates()


def test_save_load_and_external(tmp_path):
    corpus = small_corpus(20)
    plan = make_fold_plan([(p, corpus.labels[p]) for p in corpus.patient_ids], 4, 4, seed=0, n_inner=2)
    res = run_nested_cv(corpus, SearchGrid(FC, LR), plan)
    save_run(res, tmp_path, plan)
    for name in ("summary.json", "chosen.json", "plan.json", "roc.csv"):
        assert (tmp_path / name).exists()
    assert {p.name for p in (tmp_path / "fold_0").iterdir()} == {
        "model.csmd", "pipeline.json", "report.json", "roc.csv", "scores.csv"}
    pipes = load_pipelines(tmp_path)
    assert len(pipes) == 5 and pipes[0].gamma_ee == res.folds[0].gamma_ee

    ext = Corpus.from_features([fm for fm in informative_features(
        9, n_patients=26, n_dims=6, informative=(1,), shift=1.5)
        if not (fm.label.is_positive and int(fm.patient_id[1:]) > 16)], FC)
    assert sorted(ext.label_counts().values()) == [8, 13]
    rep = evaluate_external(pipes, ext)
    assert rep.n_patients == 21
    own = evaluate_external(pipes, corpus)
    assert own.auc >= np.mean([f.dev_auc for f in res.folds]) - 1e-12 or own.auc == 1.0
    with pytest.raises(EmptyInput):
        evaluate_external(pipes, Corpus())
    single = evaluate_external(FittedPipeline.from_outcome(res.folds[0]), ext)
    assert single.n_patients == 21
