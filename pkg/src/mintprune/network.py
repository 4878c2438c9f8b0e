"""Minimal dense network engine: training, activation capture, mask
application, masked retraining, evaluation, and CSR memory accounting.

Parameters are float32; losses and gradient reductions accumulate in the
dtype of the weights (float64 models are supported for gradient checking).
Optimization is mini-batch SGD with momentum, weight decay, and a step
learning-rate schedule on the softmax cross-entropy objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import SamplingError, ShapeError, TrainingFailureError
from .validation import check_rng

RELU = "relu"
SOFTMAX = "softmax"


@dataclass
class Layer:
    weights: np.ndarray  # (n_out, n_in)
    bias: np.ndarray  # (n_out,)
    activation: str  # RELU or SOFTMAX


@dataclass
class MlpModel:
    layers: list[Layer]

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [
            lay.weights.shape[0] for lay in self.layers
        ]

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 0.1
    schedule: tuple[int, ...] = (10, 20)
    lr_multiplier: float = 0.1
    weight_decay: float = 1e-4
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid training configuration")
        if list(self.schedule) != sorted(set(self.schedule)):
            raise ValueError("schedule milestones must be strictly increasing")


@dataclass
class Dataset:
    features: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,) int class indices
    class_count: int

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError("feature/label row mismatch")
        if self.labels.size and int(self.labels.max()) >= self.class_count:
            raise ShapeError("label exceeds class_count")


@dataclass
class ActivationDump:
    layer_names: list[str]
    matrices: list[np.ndarray]  # one (m, N) matrix per layer
    labels: np.ndarray  # (m,) class of each row
    m_per_class: int = 0
    seed: int = 0


def init_mlp(widths: list[int], seed=0) -> MlpModel:
    """He-style fan-in-scaled uniform initialization, float32."""
    rng = check_rng(seed)
    layers = []
    for k in range(len(widths) - 1):
        n_in, n_out = widths[k], widths[k + 1]
        bound = np.sqrt(6.0 / n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(np.float32)
        b = np.zeros(n_out, dtype=np.float32)
        act = SOFTMAX if k == len(widths) - 2 else RELU
        layers.append(Layer(w, b, act))
    return MlpModel(layers)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: MlpModel, batch: np.ndarray):
    """Returns (per-layer post-activation outputs, output probabilities)."""
    x = np.asarray(batch)
    if x.ndim != 2 or x.shape[1] != model.layers[0].weights.shape[1]:
        raise ShapeError(
            f"batch width {x.shape[-1]} != input width "
            f"{model.layers[0].weights.shape[1]}"
        )
    acts = []
    for lay in model.layers:
        z = x @ lay.weights.T + lay.bias
        if lay.activation == RELU:
            x = np.maximum(z, 0.0)
        elif lay.activation == SOFTMAX:
            x = _softmax(z)
        else:
            raise ValueError(f"unknown activation {lay.activation!r}")
        acts.append(x)
    return acts, acts[-1]


def _backward(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Cross-entropy gradients for one batch. Returns (loss, grads)."""
    acts, probs = forward(model, x)
    m = x.shape[0]
    eps = np.finfo(np.float64).tiny
    loss = -float(np.mean(np.log(probs[np.arange(m), y] + eps)))
    delta = probs.copy()
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads = []
    for k in range(len(model.layers) - 1, -1, -1):
        inp = acts[k - 1] if k > 0 else x
        gw = delta.T @ inp
        gb = delta.sum(axis=0)
        grads.append((gw, gb))
        if k > 0:
            delta = delta @ model.layers[k].weights
            delta = delta * (acts[k - 1] > 0)  # relu gate
    grads.reverse()
    return loss, grads


def input_gradient(model: MlpModel, x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy loss w.r.t. the inputs."""
    acts, probs = forward(model, x)
    m = x.shape[0]
    delta = probs.copy()
    delta[np.arange(m), targets] -= 1.0
    delta /= m
    for k in range(len(model.layers) - 1, 0, -1):
        delta = delta @ model.layers[k].weights
        delta = delta * (acts[k - 1] > 0)
    return delta @ model.layers[0].weights


def train(
    model: MlpModel,
    data: Dataset,
    config: TrainConfig,
    masks: list[np.ndarray] | None = None,
):
    """SGD with momentum, weight decay, and a step schedule.

    When masks are given, masked weights are re-zeroed after every update so
    pruned connections never revive. Deterministic for a fixed seed.
    Returns (trained model, history) where history has per-epoch loss and
    train accuracy.
    """
    model = model.copy()
    if masks is not None:
        if len(masks) != len(model.layers):
            raise ShapeError("one mask per layer required")
        for lay, mask in zip(model.layers, masks):
            if mask.shape != lay.weights.shape:
                raise ShapeError(
                    f"mask shape {mask.shape} != weights {lay.weights.shape}"
                )
            lay.weights *= mask.astype(lay.weights.dtype)
    rng = check_rng(config.seed)
    lr = config.learning_rate
    velocity = [
        (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers
    ]
    history = {"loss": [], "accuracy": []}
    X = data.features.astype(model.layers[0].weights.dtype, copy=False)
    y = data.labels
    m = X.shape[0]
    for epoch in range(config.epochs):
        if epoch in config.schedule:
            lr *= config.lr_multiplier
        order = rng.permutation(m)
        epoch_loss = 0.0
        hits = 0
        for start in range(0, m, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = _backward(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingFailureError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            for k, lay in enumerate(model.layers):
                gw, gb = grads[k]
                gw = gw + config.weight_decay * lay.weights
                vw, vb = velocity[k]
                vw *= config.momentum
                vw += gw
                vb *= config.momentum
                vb += gb
                lay.weights -= (lr * vw).astype(lay.weights.dtype)
                lay.bias -= (lr * vb).astype(lay.bias.dtype)
                if masks is not None:
                    lay.weights *= masks[k].astype(lay.weights.dtype)
        _, probs = forward(model, X)
        hits = int(np.sum(probs.argmax(axis=1) == y))
        history["loss"].append(epoch_loss / m)
        history["accuracy"].append(hits / m)
    return model, history


def retrain_masked(model: MlpModel, masks: list[np.ndarray], data: Dataset, config: TrainConfig):
    """Retraining with gradient masking; identical to train with masks set."""
    return train(model, data, config, masks=masks)


def apply_mask(model: MlpModel, masks: list[np.ndarray]) -> MlpModel:
    """Zero masked weights exactly; retained weights and biases untouched."""
    if len(masks) != len(model.layers):
        raise ShapeError("one mask per layer required")
    out = model.copy()
    for lay, mask in zip(out.layers, masks):
        if mask.shape != lay.weights.shape:
            raise ShapeError(f"mask shape {mask.shape} != weights {lay.weights.shape}")
        lay.weights *= mask.astype(lay.weights.dtype)
    return out


def evaluate(model: MlpModel, data: Dataset):
    """Returns (accuracy, per-sample max-probability confidences, correct flags)."""
    _, probs = forward(model, data.features.astype(model.layers[0].weights.dtype))
    pred = probs.argmax(axis=1)
    correct = pred == data.labels
    return float(correct.mean()), probs.max(axis=1), correct


def stratified_sample(labels: np.ndarray, m_per_class: int, seed=0) -> np.ndarray:
    """Seeded class-stratified row indices, classes in ascending order.

    For each class the row order is a seeded permutation of that class's
    indices truncated to m_per_class; the same rule is implemented by the
    external activation exporter, so keep them in sync.
    """
    rng = check_rng(seed)
    picked = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < m_per_class:
            raise SamplingError(
                f"class {cls} has {len(idx)} samples, need {m_per_class}"
            )
        picked.append(idx[rng.permutation(len(idx))[:m_per_class]])
    return np.concatenate(picked)


def capture_activations(
    model: MlpModel,
    data: Dataset,
    m_per_class: int,
    seed=0,
    include_input: bool = True,
) -> ActivationDump:
    """Forward a stratified subsample once and record per-layer outputs.

    Dense layers contribute the raw per-unit post-activation value (spatial
    averaging degenerates to identity). The input features are included as
    layer "input" so the first weight matrix can be pruned too.
    """
    rows = stratified_sample(data.labels, m_per_class, seed)
    X = data.features[rows]
    acts, _ = forward(model, X.astype(model.layers[0].weights.dtype))
    names = []
    mats = []
    if include_input:
        names.append("input")
        mats.append(np.asarray(X, dtype=np.float32))
    for k, a in enumerate(acts):
        names.append(f"layer{k + 1}")
        mats.append(np.asarray(a, dtype=np.float32))
    return ActivationDump(
        layer_names=names,
        matrices=mats,
        labels=data.labels[rows].copy(),
        m_per_class=m_per_class,
        seed=seed if isinstance(seed, int) else 0,
    )


def csr_footprint(model: MlpModel, masks: list[np.ndarray] | None = None) -> dict:
    """Bytes to store the weights dense vs compressed-sparse-row.

    Per matrix: 4 bytes per nonzero value, 4 per column index, 4 per row
    offset (rows + 1 of them), plus a fixed 16-byte header. Biases are
    stored dense in both layouts.
    """
    per_layer = []
    dense_total = 0
    sparse_total = 0
    for k, lay in enumerate(model.layers):
        w = lay.weights
        if masks is not None:
            w = w * masks[k]
        nnz = int(np.count_nonzero(w))
        rows = w.shape[0]
        dense = 4 * (w.size + lay.bias.size)
        sparse = 8 * nnz + 4 * (rows + 1) + 16 + 4 * lay.bias.size
        per_layer.append({"dense_bytes": dense, "sparse_bytes": sparse, "nnz": nnz})
        dense_total += dense
        sparse_total += sparse
    return {
        "layers": per_layer,
        "dense_bytes": dense_total,
        "sparse_bytes": sparse_total,
        "ratio": sparse_total / dense_total if dense_total else 0.0,
    }


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper over the engine: fit/predict/predict_proba.

    hidden_layers sets the hidden widths; the input and output widths come
    from the data at fit time.
    """

    def __init__(self, hidden_layers=(500, 300), config: TrainConfig | None = None, seed=0):
        self.hidden_layers = hidden_layers
        self.config = config
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        widths = [X.shape[1], *self.hidden_layers, len(self.classes_)]
        cfg = self.config or TrainConfig(seed=self.seed)
        data = Dataset(X, np.searchsorted(self.classes_, y), len(self.classes_))
        self.model_, self.history_ = train(init_mlp(widths, self.seed), data, cfg)
        return self

    def predict_proba(self, X):
        _, probs = forward(self.model_, np.asarray(X, dtype=np.float32))
        return probs

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
