"""Capture per-layer activations from a torch model and write MINTACT1 files.

The bridge registers forward hooks on the named modules, runs one inference
pass over a class-stratified subsample, reduces each filter's activation map
to its spatial mean, and serializes the resulting (m, N) float32 matrices.
The output format is the activation container used by the pruning toolkit:

    magic "MINTACT1", then per layer: name length u32 + UTF-8 name, sample
    count m u32, filter count N u32, m class labels u16, row-major float32
    m x N matrix (little-endian throughout).

Each layer name carries a "#crc32=XXXXXXXX" suffix with the CRC-32 of the
matrix bytes so the consumer can verify the transfer.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

ACT_MAGIC = b"MINTACT1"


class ExportError(Exception):
    pass


class ConfigurationError(ExportError):
    pass


class SamplingError(ExportError):
    pass


@dataclass
class ExportSpec:
    """What to capture and how to subsample.

    layers: named modules whose (post-nonlinearity) outputs are exported,
    ordered input to output. m_per_class rows are drawn per class with the
    seeded stratification rule shared with the consumer toolkit.
    """

    layers: list[str] = field(default_factory=list)
    m_per_class: int = 1
    seed: int = 0
    output: Path = Path("activations.bin")
    checksum: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("at least one layer name required")
        if self.m_per_class < 1:
            raise ConfigurationError(
                f"m_per_class must be >= 1, got {self.m_per_class}"
            )


def stratified_sample(labels: np.ndarray, m_per_class: int, seed=0) -> np.ndarray:
    """Seeded class-stratified row indices, classes in ascending order.

    Mirrors the consumer's capture contract exactly: per class, a seeded
    permutation of that class's row indices truncated to m_per_class, all
    classes drawn from one generator in ascending class order.
    """
    rng = np.random.default_rng(seed)
    picked = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < m_per_class:
            raise SamplingError(
                f"class {cls} has {len(idx)} samples, need {m_per_class}"
            )
        picked.append(idx[rng.permutation(len(idx))[:m_per_class]])
    return np.concatenate(picked)


def spatial_mean(activation: torch.Tensor) -> np.ndarray:
    """Reduce (m, C, *spatial) to (m, C) by averaging the spatial dims.

    Dense outputs (m, C) pass through unchanged; the mean of a constant map
    is the constant itself.
    """
    if activation.dim() < 2:
        raise ExportError(
            f"expected at least 2 dims (batch, channels), got {tuple(activation.shape)}"
        )
    if activation.dim() > 2:
        activation = activation.mean(dim=tuple(range(2, activation.dim())))
    return activation.detach().cpu().numpy().astype(np.float32)


def collect_pairs(data_source):
    """Stack an iterable of (input, label) pairs into batch tensors."""
    inputs, labels = [], []
    for x, y in data_source:
        inputs.append(torch.as_tensor(x))
        labels.append(int(y))
    if not inputs:
        raise SamplingError("data source yielded no samples")
    return torch.stack(inputs), np.asarray(labels, dtype=np.int64)


def capture(model: torch.nn.Module, inputs: torch.Tensor, layer_names: list[str]):
    """One forward pass with hooks; returns {name: (m, C) float32 matrix}."""
    modules = dict(model.named_modules())
    missing = [n for n in layer_names if n not in modules]
    if missing:
        raise ConfigurationError(f"model has no module(s) named {missing}")

    grabbed: dict[str, np.ndarray] = {}
    handles = []
    try:
        for name in layer_names:
            def hook(_mod, _inp, out, name=name):
                grabbed[name] = spatial_mean(out)

            handles.append(modules[name].register_forward_hook(hook))
        model.eval()
        with torch.no_grad():
            model(inputs)
    finally:
        for h in handles:
            h.remove()
    absent = [n for n in layer_names if n not in grabbed]
    if absent:
        raise ExportError(f"layer(s) {absent} never fired during the forward pass")
    return grabbed


def write_mintact(matrices, names, labels, path) -> None:
    labels = np.asarray(labels)
    if labels.size and int(labels.max()) >= 65535:
        raise ExportError("class label exceeds the 16-bit label range")
    with open(path, "wb") as f:
        f.write(ACT_MAGIC)
        for name, mat in zip(names, matrices):
            mat = np.ascontiguousarray(mat, dtype="<f4")
            if mat.shape[0] == 0:
                raise ExportError(f"layer {name!r} has zero rows")
            raw = name.encode("utf-8")
            m, n = mat.shape
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<II", m, n))
            f.write(np.ascontiguousarray(labels, dtype="<u2").tobytes())
            f.write(mat.tobytes())


def export_activations(model: torch.nn.Module, data_source, spec: ExportSpec) -> Path:
    """Hook, subsample, average, and serialize; returns the output path."""
    inputs, labels = collect_pairs(data_source)
    rows = stratified_sample(labels, spec.m_per_class, spec.seed)
    grabbed = capture(model, inputs[rows], spec.layers)
    matrices = [grabbed[n] for n in spec.layers]
    names = list(spec.layers)
    if spec.checksum:
        names = [
            f"{n}#crc32={zlib.crc32(np.ascontiguousarray(mat, dtype='<f4').tobytes()):08x}"
            for n, mat in zip(names, matrices)
        ]
    write_mintact(matrices, names, labels[rows], spec.output)
    return Path(spec.output)
