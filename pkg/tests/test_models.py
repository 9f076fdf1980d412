import numpy as np
import pytest

from coughscreen.errors import DegenerateLabels, DivergedError, FormatVersionError, ParseError, ShapeError
from coughscreen.models import (FAMILIES, ModelSpec, TrainedModel, fit, gradient_check,
                                in_standard_range, init_model, load_model, standard_grid, predict_proba,
                                predict_proba_batch, predict_segments, save_model)
from coughscreen.models.io import dumps, loads
from coughscreen.models.networks import build_network, resnet50_shape_table

SMALL = {
    "LR": ModelSpec("LR", epochs=50),
    "SVM": ModelSpec("SVM", epochs=50),
    "MLP": ModelSpec("MLP", hidden_units=6, epochs=3),
    "CNN": ModelSpec("CNN", conv_filters=3, kernel_size=2, dense_units=4, epochs=2),
    "LSTM": ModelSpec("LSTM", lstm_units=4, dense_units=4, epochs=2),
    "ResNet": ModelSpec("ResNet", epochs=2),
}


def toy_data(seed=0, n=16, s=8, d=8):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.standard_normal((n, s, d)) + y[:, None, None] * 0.8
    return list(x), y


def blobs(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((50, 2)) * 0.5 + [2, 2]
    b = rng.standard_normal((50, 2)) * 0.5 - [2, 2]
    return np.vstack([a, b]), np.array([1] * 50 + [0] * 50)


def test_spec_defaults_and_validation():
    r = ModelSpec("CNN").resolved()
    assert (r.learning_rate, r.epochs, r.batch_size) == (0.01, 10, 64)
    assert ModelSpec("LR").resolved().batch_size is None
    with pytest.raises(ValueError):
        ModelSpec("GBM")
    with pytest.raises(ValueError):
        ModelSpec("ResNet", preset="vgg")
    assert ModelSpec.from_dict(ModelSpec("LSTM", lstm_units=128).to_dict()) == ModelSpec("LSTM", lstm_units=128)


@pytest.mark.parametrize("family", FAMILIES)
def test_standard_grid_in_range(family):
    specs = list(standard_grid(family))
    assert specs and all(in_standard_range(s) for s in specs[:500])
    assert {s.family for s in specs} == {family}


def test_standard_grid_sizes():
    assert len(list(standard_grid("SVM"))) == 15
    assert {s.conv_filters for s in standard_grid("CNN")} == {24, 48, 96}
    assert {s.epochs for s in standard_grid("LSTM")} == {10, 20}
    assert not in_standard_range(ModelSpec("CNN", conv_filters=5))


def test_untrained_lr_and_svm_give_half():
    x = np.random.default_rng(0).standard_normal((5, 7))
    assert predict_proba(init_model(ModelSpec("LR"), (5, 7)), x) == 0.5
    assert predict_proba(init_model(ModelSpec("SVM"), (5, 7)), x) == 0.5


def test_per_segment_mean():
    m = init_model(ModelSpec("LR"), (3, 1))
    params = dict(m.params, **{"lr.b": np.ones(1)})
    m = TrainedModel(m.spec, m.input_shape, params, 0, ())
    p = np.array([0.2, 0.4, 0.9])
    x = np.log(p / (1 - p))[:, None]
    np.testing.assert_allclose(predict_segments(m, x), p, rtol=1e-12)
    assert predict_proba(m, x) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("family", ["LR", "SVM"])
def test_linear_models_separate_blobs(family):
    x, y = blobs()
    m = fit(ModelSpec(family, epochs=500), [r[None, :] for r in x], y)
    pred = predict_proba_batch(m, [r[None, :] for r in x]) >= 0.5
    assert np.all(pred == y.astype(bool))


def test_lr_objective_monotone():
    x, y = blobs(3)
    x = x + np.random.default_rng(1).standard_normal(x.shape) * 2  # overlapping
    m = fit(ModelSpec("LR", epochs=200, l1_weight=0.5, l2_weight=0.5, reg_strength=0.1),
            [r[None, :] for r in x], y)
    t = np.array(m.loss_trace)
    assert np.all(np.diff(t) <= 1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_fit_determinism_bounds_and_shapes(family):
    x, y = toy_data()
    spec = SMALL[family]
    a = fit(spec, x, y, seed=4)
    b = fit(spec, x, y, seed=4)
    assert a.params.keys() == b.params.keys()
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert a.family == family and len(a.loss_trace) == spec.resolved().epochs
    probe = list(np.random.default_rng(1).standard_normal((2500, 8, 8)) * 10)
    p = predict_proba_batch(a, probe)
    assert np.all((p >= 0) & (p <= 1))
    assert np.array_equal(p, predict_proba_batch(a, probe))  # dropout off at inference
    with pytest.raises(ShapeError):
        predict_proba(a, np.zeros((8, 7)))


def test_network_loss_decreases():
    x, y = toy_data(2, n=32)
    m = fit(ModelSpec("MLP", hidden_units=10, epochs=30), x, y)
    assert m.loss_trace[-1] < m.loss_trace[0]


def test_fit_errors():
    x, y = toy_data()
    with pytest.raises(DegenerateLabels):
        fit(ModelSpec("LR"), x, np.zeros(len(x)))
    with pytest.raises(ShapeError):
        fit(ModelSpec("LR"), x, y[:-1])
    with pytest.raises(ShapeError):
        fit(ModelSpec("CNN"), x[:-1] + [np.zeros((7, 8))], y)


def test_divergence_reports_epoch():
    rng = np.random.default_rng(0)
    x = list(rng.standard_normal((40, 3, 4)) * 1e3)
    with pytest.raises(DivergedError) as info:
        fit(ModelSpec("MLP", learning_rate=1e12, epochs=20), x, np.arange(40) % 2)
    assert info.value.epoch >= 0


GRAD_CASES = {
    "MLP": (ModelSpec("MLP", hidden_units=10), (4, 3, 8)),
    "CNN": (ModelSpec("CNN", conv_filters=4, kernel_size=2, dense_units=6), (4, 8, 8)),
    "LSTM": (ModelSpec("LSTM", lstm_units=8, dense_units=6), (4, 5, 6)),
    "ResNet": (ModelSpec("ResNet"), (4, 8, 8)),
}


@pytest.mark.parametrize("family", GRAD_CASES)
def test_gradient_check(family, backend):
    spec, shape = GRAD_CASES[family]
    x = np.random.default_rng(7).standard_normal(shape)
    err, n = gradient_check(spec, x, np.array([0, 1, 1, 0]), seed=3)
    assert n >= 100
    assert err <= 1e-4


def test_resnet50_trace_matches_table():
    net = build_network(ModelSpec("ResNet", preset="resnet50_audio"), (50, 117),
                        np.random.default_rng(0))
    out, rows = net.trace(np.random.default_rng(1).standard_normal((1, 1, 50, 117)))
    assert out.shape == (1, 2)
    assert [shape for _, shape in rows] == resnet50_shape_table((50, 117))
    assert [d for d, _ in rows][4:8] == ["conv2_x", "conv3_x", "conv4_x", "conv5_x"]


@pytest.mark.parametrize("family", FAMILIES)
def test_serialization_bit_exact(family, tmp_path):
    x, y = toy_data(5)
    m = fit(SMALL[family], x, y, seed=1)
    save_model(m, tmp_path / "m.csmd")
    back = load_model(tmp_path / "m.csmd")
    probe = list(np.random.default_rng(2).standard_normal((100, 8, 8)))
    assert np.array_equal(predict_proba_batch(m, probe), predict_proba_batch(back, probe))
    assert back.spec == m.spec and back.input_shape == m.input_shape
    assert back.loss_trace == m.loss_trace


def test_serialization_rejects_bad_data():
    x, y = toy_data()
    data = dumps(fit(SMALL["LR"], x, y))
    with pytest.raises(ParseError):
        loads(b"NOPE" + data[4:])
    with pytest.raises(FormatVersionError):
        loads(data[:4] + (2).to_bytes(2, "little") + data[6:])
    with pytest.raises(ParseError):
        loads(data[:-3])
    with pytest.raises(ParseError):
        loads(data + b"\x00")
