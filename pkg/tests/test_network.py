import numpy as np
import pytest

from mintprune.exceptions import SamplingError, ShapeError
from mintprune.io import make_blobs
from mintprune.network import (
    Dataset,
    Layer,
    MlpClassifier,
    MlpModel,
    TrainConfig,
    _backward,
    apply_mask,
    capture_activations,
    csr_footprint,
    evaluate,
    forward,
    init_mlp,
    retrain_masked,
    train,
)

BLOBS_CONFIG = TrainConfig(epochs=20, batch_size=32, learning_rate=0.05,
                           schedule=(10,), weight_decay=1e-4, seed=0)


def toy_model(seed=0, dtype=np.float32, widths=(4, 6, 5, 3)):
    model = init_mlp(list(widths), seed)
    for lay in model.layers:
        lay.weights = lay.weights.astype(dtype)
        lay.bias = lay.bias.astype(dtype)
    return model


# ----------------------------------------------------------------- forward

def test_forward_zero_weights_zero_activations():
    model = toy_model()
    for lay in model.layers:
        lay.weights[:] = 0
        lay.bias[:] = 0
    acts, probs = forward(model, np.ones((3, 4), dtype=np.float32))
    assert np.all(acts[0] == 0)
    assert np.allclose(probs, 1 / 3)


def test_forward_relu_definition():
    model = MlpModel([Layer(np.array([[1.0]]), np.array([0.0]), "relu")])
    acts, _ = forward(model, np.array([[-2.0], [3.0]]))
    assert np.allclose(acts[0][:, 0], [0.0, 3.0])


def test_forward_probabilities_sum_to_one():
    model = toy_model(seed=5)
    _, probs = forward(model, np.random.default_rng(5).uniform(size=(10, 4)).astype(np.float32))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        forward(toy_model(), np.ones((2, 7)))


# ---------------------------------------------------------------- gradients

def test_gradient_check_central_differences():
    model = toy_model(seed=1, dtype=np.float64)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(8, 4))
    y = rng.integers(0, 3, 8)
    _, grads = _backward(model, x, y)
    h = 1e-6
    for k, lay in enumerate(model.layers):
        gw, gb = grads[k]
        idx = [(0, 0), (1, 2), (lay.weights.shape[0] - 1, lay.weights.shape[1] - 1)]
        for i, j in idx:
            orig = lay.weights[i, j]
            lay.weights[i, j] = orig + h
            lp, _ = _backward(model, x, y)
            lay.weights[i, j] = orig - h
            lm, _ = _backward(model, x, y)
            lay.weights[i, j] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(gw[i, j]), 1e-8)
            assert abs(fd - gw[i, j]) / denom <= 1e-4
        orig = lay.bias[0]
        lay.bias[0] = orig + h
        lp, _ = _backward(model, x, y)
        lay.bias[0] = orig - h
        lm, _ = _backward(model, x, y)
        lay.bias[0] = orig
        fd = (lp - lm) / (2 * h)
        assert abs(fd - gb[0]) / max(abs(fd), 1e-8) <= 1e-4


# ---------------------------------------------------------------- training

def test_train_zero_epochs_is_identity():
    data = make_blobs(100, class_count=3, seed=0)
    model = init_mlp([2, 8, 3], seed=2)
    out, hist = train(model, Dataset(data.features, data.labels, 3), TrainConfig(epochs=0))
    assert all(
        np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
        for a, b in zip(out.layers, model.layers)
    )
    assert hist["loss"] == []


def test_train_blobs_reaches_high_accuracy():
    data = make_blobs(400, class_count=2, seed=1)
    model = init_mlp([2, 8, 2], seed=0)
    trained, hist = train(model, data, BLOBS_CONFIG)
    assert hist["accuracy"][-1] >= 0.99


def test_train_deterministic_bit_identical():
    data = make_blobs(200, class_count=2, seed=3)
    cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=0.05, schedule=(), seed=9)
    a, _ = train(init_mlp([2, 6, 2], seed=4), data, cfg)
    b, _ = train(init_mlp([2, 6, 2], seed=4), data, cfg)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.bias, lb.bias)


def test_train_loss_decreases_on_blobs():
    data = make_blobs(400, class_count=2, seed=1)
    _, hist = train(init_mlp([2, 8, 2], seed=0), data, BLOBS_CONFIG)
    assert hist["loss"][-1] < hist["loss"][0]


# --------------------------------------------------------- masks in training

def test_retrain_all_ones_equals_train():
    data = make_blobs(200, class_count=2, seed=3)
    cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=0.05, schedule=(), seed=9)
    model = init_mlp([2, 6, 2], seed=4)
    masks = [np.ones_like(l.weights, dtype=np.uint8) for l in model.layers]
    a, _ = train(model, data, cfg)
    b, _ = retrain_masked(model, masks, data, cfg)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.bias, lb.bias)


def test_retrain_keeps_masked_entries_zero():
    data = make_blobs(200, class_count=2, seed=3)
    cfg = TrainConfig(epochs=2, batch_size=32, learning_rate=0.05, schedule=(), seed=9)
    model = init_mlp([2, 6, 2], seed=4)
    rng = np.random.default_rng(0)
    masks = [(rng.uniform(size=l.weights.shape) > 0.5).astype(np.uint8) for l in model.layers]
    out, _ = retrain_masked(model, masks, data, cfg)
    for lay, mask in zip(out.layers, masks):
        assert np.all(lay.weights[mask == 0] == 0)


def test_apply_mask_semantics():
    model = toy_model(seed=6)
    masks = [np.ones_like(l.weights, dtype=np.uint8) for l in model.layers]
    same = apply_mask(model, masks)
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(same.layers, model.layers))
    masks[1][:] = 0
    masked = apply_mask(model, masks)
    assert np.all(masked.layers[1].weights == 0)
    assert np.array_equal(masked.layers[1].bias, model.layers[1].bias)
    rng = np.random.default_rng(1)
    masks = [(rng.uniform(size=l.weights.shape) > 0.3).astype(np.uint8) for l in model.layers]
    masked = apply_mask(model, masks)
    for lay, mask in zip(masked.layers, masks):
        assert np.sum(lay.weights == 0) >= np.sum(mask == 0)


# -------------------------------------------------------------- evaluation

def test_evaluate_uniform_confidences():
    model = toy_model()
    for lay in model.layers:
        lay.weights[:] = 0
        lay.bias[:] = 0
    data = Dataset(np.ones((5, 4), dtype=np.float32), np.zeros(5, dtype=np.int64), 3)
    _, conf, _ = evaluate(model, data)
    assert np.allclose(conf, 1 / 3)


def test_evaluate_matches_counting_oracle():
    model = toy_model(seed=7)
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(100, 4)).astype(np.float32)
    _, probs = forward(model, X)
    labels = probs.argmax(axis=1).copy()
    labels[:30] = (labels[:30] + 1) % 3  # force 30 misses
    acc, _, correct = evaluate(model, Dataset(X, labels, 3))
    hits = sum(int(probs[i].argmax() == labels[i]) for i in range(100))
    assert acc == pytest.approx(hits / 100)
    assert int(correct.sum()) == hits


# ------------------------------------------------------- activation capture

def test_capture_activation_counts():
    data = make_blobs(600, class_count=2, seed=0)
    model = init_mlp([2, 6, 2], seed=0)
    dump = capture_activations(model, data, m_per_class=250, seed=1)
    assert all(mat.shape[0] == 500 for mat in dump.matrices)
    assert dump.layer_names[0] == "input"
    counts = np.bincount(dump.labels)
    assert list(counts) == [250, 250]


def test_capture_relu_nonnegative():
    data = make_blobs(100, class_count=2, seed=0)
    model = init_mlp([2, 6, 2], seed=0)
    dump = capture_activations(model, data, m_per_class=40, seed=1)
    assert np.all(dump.matrices[1] >= 0)


def test_capture_insufficient_class_population():
    data = make_blobs(20, class_count=2, seed=0)
    model = init_mlp([2, 6, 2], seed=0)
    with pytest.raises(SamplingError):
        capture_activations(model, data, m_per_class=50, seed=1)


def test_spatial_average_of_constant_map_is_one():
    # exporter-path rule: a 3x3 map of ones averages to 1.0
    fmap = np.ones((3, 3))
    assert fmap.mean() == 1.0


# ---------------------------------------------------------------- footprint

def test_footprint_dense_matrix_has_index_overhead():
    model = MlpModel([Layer(np.ones((8, 8), dtype=np.float32), np.zeros(8, dtype=np.float32), "softmax")])
    fp = csr_footprint(model)
    assert fp["layers"][0]["sparse_bytes"] > 4 * 64


def test_footprint_all_zero_matrix():
    model = MlpModel([Layer(np.zeros((8, 8), dtype=np.float32), np.zeros(8, dtype=np.float32), "softmax")])
    fp = csr_footprint(model)
    assert fp["layers"][0]["sparse_bytes"] == 4 * 9 + 16 + 4 * 8


def test_footprint_decreases_with_zeroed_weights():
    rng = np.random.default_rng(0)
    w = rng.uniform(1, 2, size=(20, 20)).astype(np.float32)
    prev = None
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        ww = w.copy()
        ww.ravel()[: int(frac * ww.size)] = 0
        model = MlpModel([Layer(ww, np.zeros(20, dtype=np.float32), "softmax")])
        size = csr_footprint(model)["sparse_bytes"]
        if prev is not None:
            assert size < prev
        prev = size


# -------------------------------------------------------------- sklearn API

def test_mlp_classifier_fit_predict():
    data = make_blobs(400, class_count=3, seed=2)
    clf = MlpClassifier(hidden_layers=(16,), config=BLOBS_CONFIG, seed=0)
    clf.fit(data.features, data.labels)
    assert (clf.predict(data.features) == data.labels).mean() >= 0.95
    proba = clf.predict_proba(data.features[:5])
    assert proba.shape == (5, 3)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)
