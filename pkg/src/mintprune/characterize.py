"""Post-pruning behavioral characterization: calibration statistics and
iterative sign-gradient adversarial attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .network import Dataset, MlpModel, evaluate, forward, input_gradient
from .validation import check_rng

UNTARGETED_FGSM = "untargeted_fgsm"
LEAST_LIKELY = "least_likely"


@dataclass
class ReliabilityProfile:
    bin_edges: np.ndarray  # bin_count + 1 edges over [0, 1]
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray
    ece: float


@dataclass
class AttackConfig:
    epsilon: float
    steps: int = 10
    step_size: float | None = None  # defaults to epsilon / steps
    mode: str = UNTARGETED_FGSM

    def __post_init__(self):
        if self.epsilon < 0 or self.steps < 1:
            raise ValueError("epsilon must be >= 0 and steps >= 1")
        if self.step_size is None:
            self.step_size = self.epsilon / self.steps if self.epsilon else 0.0
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if self.mode not in (UNTARGETED_FGSM, LEAST_LIKELY):
            raise ValueError(f"unknown attack mode {self.mode!r}")


def ece(confidences, correct_flags, bin_count: int = 10) -> ReliabilityProfile:
    """Expected calibration error over equal-width confidence bins on (0, 1].

    ECE = sum over bins of (n_b / n) * |accuracy_b - confidence_b|; empty
    bins contribute nothing.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct_flags, dtype=np.float64)
    if conf.shape != corr.shape:
        raise ShapeError("confidences and correct_flags must match in length")
    if conf.size == 0:
        raise ValueError("empty input")
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    # bins are (low, high]; confidence 0 lands in the first bin
    idx = np.clip(np.ceil(conf * bin_count).astype(int) - 1, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    conf_sum = np.bincount(idx, weights=conf, minlength=bin_count)
    corr_sum = np.bincount(idx, weights=corr, minlength=bin_count)
    nonempty = counts > 0
    mean_conf = np.zeros(bin_count)
    acc = np.zeros(bin_count)
    mean_conf[nonempty] = conf_sum[nonempty] / counts[nonempty]
    acc[nonempty] = corr_sum[nonempty] / counts[nonempty]
    total = float(np.sum(counts / conf.size * np.abs(acc - mean_conf)))
    return ReliabilityProfile(edges, counts, mean_conf, acc, total)


def iterative_attack(model: MlpModel, inputs, labels, config: AttackConfig) -> np.ndarray:
    """Multi-step sign-gradient perturbation within an l-inf epsilon ball.

    Untargeted mode ascends the true-class cross-entropy; least-likely mode
    descends the loss toward the least likely class of the clean prediction
    (target frozen before iterating). Every step clips to the epsilon ball
    around the clean input and to [0, 1].
    """
    x0 = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    if config.epsilon == 0.0:
        return x0.copy()
    if config.mode == LEAST_LIKELY:
        _, probs = forward(model, x0)
        targets = probs.argmin(axis=1)
        sign = -1.0
    else:
        targets = y
        sign = 1.0
    x = x0.copy()
    for _ in range(config.steps):
        grad = input_gradient(model, x, targets)
        x = x + sign * config.step_size * np.sign(grad)
        x = np.clip(x, x0 - config.epsilon, x0 + config.epsilon)
        x = np.clip(x, 0.0, 1.0)
    return x


def attack_curve(
    model: MlpModel,
    data: Dataset,
    epsilons,
    mode: str = UNTARGETED_FGSM,
    steps: int = 10,
    subset: int | None = None,
    seed=0,
) -> list[tuple[float, float]]:
    """Accuracy under attack for each epsilon, on a seeded test subset."""
    epsilons = list(epsilons)
    if not epsilons:
        raise ValueError("epsilon list must be nonempty")
    X, y = data.features, data.labels
    if subset is not None and subset < len(y):
        idx = check_rng(seed).permutation(len(y))[:subset]
        X, y = X[idx], y[idx]
    curve = []
    for eps in epsilons:
        cfg = AttackConfig(epsilon=eps, steps=steps, mode=mode)
        adv = iterative_attack(model, X, y, cfg)
        acc, _, _ = evaluate(model, Dataset(adv.astype(np.float32), y, data.class_count))
        curve.append((float(eps), acc))
    return curve
