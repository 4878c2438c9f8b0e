"""File formats and loaders shared by the engine, the pruner, and the CLI.

All container formats are little-endian; the MNIST IDX format is big-endian
as the external standard dictates. Layouts:

Model file ("MINTMDL1"):
    magic 8 bytes, layer count u32, then per layer: n_out u32, n_in u32,
    activation tag byte (0 = relu, 1 = softmax), row-major float32 weights,
    float32 biases.

Activation file ("MINTACT1"):
    magic 8 bytes, then layer records until EOF: name length u32 + UTF-8
    name, sample count m u32, filter count N u32, m class labels u16,
    row-major float32 m x N matrix. A layer name may carry a
    "#crc32=XXXXXXXX" suffix with the CRC-32 of the matrix bytes; see
    verify_layer_checksum.

Mask file ("MINTMASK1", text):
    header line, then per layer: "layer <name>", "shape <n_out> <n_in>",
    "groups <g_out> <g_in>", "delta <float>", and n_out rows of '0'/'1'
    characters (columns = producer filters), then a blank line.

Config file: flat "key = value" lines, '#' comments; unknown keys rejected.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, CorruptionError, FormatError, ShapeError
from .network import ActivationDump, Dataset, Layer, MlpModel, RELU, SOFTMAX
from .validation import check_rng

MODEL_MAGIC = b"MINTMDL1"
ACT_MAGIC = b"MINTACT1"
MASK_MAGIC = "MINTMASK1"

_ACT_TAGS = {RELU: 0, SOFTMAX: 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}


# ---------------------------------------------------------------- model file

def write_model(model: MlpModel, path) -> None:
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", len(model.layers)))
        for lay in model.layers:
            n_out, n_in = lay.weights.shape
            f.write(struct.pack("<IIB", n_out, n_in, _ACT_TAGS[lay.activation]))
            f.write(np.ascontiguousarray(lay.weights, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lay.bias, dtype="<f4").tobytes())


def read_model(path) -> MlpModel:
    blob = Path(path).read_bytes()
    if blob[:8] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {blob[:8]!r}")
    off = 8
    try:
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        layers = []
        for _ in range(count):
            n_out, n_in, tag = struct.unpack_from("<IIB", blob, off)
            off += 9
            if tag not in _TAG_ACTS:
                raise FormatError(f"unknown activation tag {tag}")
            wbytes = 4 * n_out * n_in
            if off + wbytes + 4 * n_out > len(blob):
                raise CorruptionError("model payload truncated")
            w = np.frombuffer(blob, "<f4", n_out * n_in, off).reshape(n_out, n_in)
            off += wbytes
            b = np.frombuffer(blob, "<f4", n_out, off)
            off += 4 * n_out
            layers.append(Layer(w.copy(), b.copy(), _TAG_ACTS[tag]))
    except struct.error as exc:
        raise CorruptionError("model header truncated") from exc
    if off != len(blob):
        raise CorruptionError(f"{len(blob) - off} trailing bytes in model file")
    return MlpModel(layers)


# ----------------------------------------------------------- activation file

def layer_checksum(matrix: np.ndarray) -> str:
    return f"{zlib.crc32(np.ascontiguousarray(matrix, dtype='<f4').tobytes()):08x}"


def verify_layer_checksum(name: str, matrix: np.ndarray) -> bool:
    """True when the name carries a #crc32= suffix matching the matrix.

    Names without the suffix verify trivially.
    """
    if "#crc32=" not in name:
        return True
    return name.rsplit("#crc32=", 1)[1] == layer_checksum(matrix)


def write_activations(dump: ActivationDump, path) -> None:
    for mat in dump.matrices:
        if mat.shape[0] == 0:
            raise ShapeError("activation layer with zero rows")
    if dump.labels.size and int(dump.labels.max()) >= 65535:
        raise FormatError("class label exceeds the 16-bit label range")
    with open(path, "wb") as f:
        f.write(ACT_MAGIC)
        for name, mat in zip(dump.layer_names, dump.matrices):
            raw = name.encode("utf-8")
            m, n = mat.shape
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<II", m, n))
            f.write(np.ascontiguousarray(dump.labels, dtype="<u2").tobytes())
            f.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def read_activations(path) -> ActivationDump:
    blob = Path(path).read_bytes()
    if blob[:8] != ACT_MAGIC:
        raise FormatError(f"bad activation magic {blob[:8]!r}")
    off = 8
    names, mats = [], []
    labels = None
    while off < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, off)
        except struct.error as exc:
            raise CorruptionError("layer record header truncated") from exc
        off += 4
        if off + name_len > len(blob):
            raise CorruptionError("layer name truncated")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        try:
            m, n = struct.unpack_from("<II", blob, off)
        except struct.error as exc:
            raise CorruptionError("layer size fields truncated") from exc
        off += 8
        if m == 0 or n == 0:
            raise FormatError(f"layer {name!r} declares an empty matrix")
        need = 2 * m + 4 * m * n
        if off + need > len(blob):
            raise CorruptionError(f"layer {name!r} payload truncated")
        lab = np.frombuffer(blob, "<u2", m, off).astype(np.int64)
        off += 2 * m
        mat = np.frombuffer(blob, "<f4", m * n, off).reshape(m, n).copy()
        off += 4 * m * n
        if labels is None:
            labels = lab
        elif not np.array_equal(labels, lab):
            raise FormatError("layer records disagree on row labels")
        names.append(name)
        mats.append(mat)
    return ActivationDump(
        layer_names=names,
        matrices=mats,
        labels=labels if labels is not None else np.zeros(0, dtype=np.int64),
    )


# ------------------------------------------------------------------ mask file

def write_masks(masks, path, names=None, groupings=None, deltas=None) -> None:
    """Masks as text; groupings are (g_out, g_in) pairs, deltas the effective
    per-layer thresholds actually used."""
    names = names or [f"layer{i + 1}" for i in range(len(masks))]
    with open(path, "w") as f:
        f.write(MASK_MAGIC + "\n")
        for i, mask in enumerate(masks):
            n_out, n_in = mask.shape
            g_out, g_in = (groupings[i] if groupings else (n_out, n_in))
            delta = deltas[i] if deltas else 0.0
            f.write(f"layer {names[i]}\n")
            f.write(f"shape {n_out} {n_in}\n")
            f.write(f"groups {g_out} {g_in}\n")
            f.write(f"delta {delta!r}\n")
            for row in mask:
                f.write("".join("1" if v else "0" for v in row) + "\n")
            f.write("\n")


def read_masks(path):
    """Returns (masks, names, groupings, deltas)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MASK_MAGIC:
        raise FormatError("bad mask file header")
    masks, names, groupings, deltas = [], [], [], []
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            if not lines[i].startswith("layer "):
                raise FormatError(f"expected 'layer' at line {i + 1}")
            names.append(lines[i][6:])
            n_out, n_in = map(int, lines[i + 1].split()[1:])
            groupings.append(tuple(map(int, lines[i + 2].split()[1:])))
            deltas.append(float(lines[i + 3].split()[1]))
            i += 4
        except (IndexError, ValueError) as exc:
            raise CorruptionError(f"malformed mask header near line {i + 1}") from exc
        rows = []
        for r in range(n_out):
            if i + r >= len(lines) or len(lines[i + r]) != n_in:
                raise CorruptionError(f"mask row {r} has wrong width or is missing")
            if set(lines[i + r]) - {"0", "1"}:
                raise FormatError(f"mask row {r} contains non-binary characters")
            rows.append([int(c) for c in lines[i + r]])
        masks.append(np.array(rows, dtype=np.uint8))
        i += n_out
    return masks, names, groupings, deltas


# ---------------------------------------------------------------- config file

CONFIG_DEFAULTS = {
    # training / retraining (MLP column of the published setup)
    "epochs": 30,
    "batch_size": 256,
    "learning_rate": 0.1,
    "schedule": "10,20",
    "lr_multiplier": 0.1,
    "weight_decay": 0.0001,
    "momentum": 0.9,
    "seed": 0,
    # architecture
    "widths": "784,500,300,10",
    # pruning
    "groups": "16,10,10,10",
    "delta": 0.645,
    "gamma": 0.9,
    "m_per_class": 650,
    "skip_layers": "",
    "target_sparsity": "",
    # characterization
    "bins": 10,
    "epsilons": "0.02,0.05,0.1",
    "attack_steps": 10,
}


def parse_config(text: str) -> dict:
    """Parse key = value lines against the documented defaults."""
    out = dict(CONFIG_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        default = CONFIG_DEFAULTS[key]
        try:
            if isinstance(default, int):
                out[key] = int(value)
            elif isinstance(default, float):
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}") from exc
    return out


def read_config(path) -> dict:
    return parse_config(Path(path).read_text())


def write_config(config: dict, path) -> None:
    unknown = set(config) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    with open(path, "w") as f:
        for key in CONFIG_DEFAULTS:
            f.write(f"{key} = {config.get(key, CONFIG_DEFAULTS[key])}\n")


def int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip() != ""]


def float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip() != ""]


# ------------------------------------------------------------------ MNIST IDX

def read_mnist_idx(images_path, labels_path) -> Dataset:
    """Load the standard big-endian IDX image/label pair, pixels scaled 1/255."""
    img = Path(images_path).read_bytes()
    lab = Path(labels_path).read_bytes()
    if len(img) < 16 or struct.unpack(">I", img[:4])[0] != 0x00000803:
        raise FormatError("bad IDX image magic")
    if len(lab) < 8 or struct.unpack(">I", lab[:4])[0] != 0x00000801:
        raise FormatError("bad IDX label magic")
    n_img, rows, cols = struct.unpack(">III", img[4:16])
    (n_lab,) = struct.unpack(">I", lab[4:8])
    if n_img != n_lab:
        raise FormatError(f"image count {n_img} != label count {n_lab}")
    if len(img) - 16 != n_img * rows * cols or len(lab) - 8 != n_lab:
        raise CorruptionError("IDX payload size mismatch")
    X = np.frombuffer(img, np.uint8, offset=16).reshape(n_img, rows * cols)
    y = np.frombuffer(lab, np.uint8, offset=8).astype(np.int64)
    return Dataset((X / 255.0).astype(np.float32), y, 10)


# --------------------------------------------------------------- synthetic data

def make_blobs(m: int, class_count: int = 4, dims: int = 2, spread: float = 0.6, seed=0) -> Dataset:
    """Class-balanced Gaussian blobs on a circle of radius 3."""
    rng = check_rng(seed)
    per = m // class_count
    feats, labels = [], []
    for c in range(class_count):
        angle = 2 * np.pi * c / class_count
        center = np.zeros(dims)
        center[0] = 3 * np.cos(angle)
        center[min(1, dims - 1)] = 3 * np.sin(angle)
        feats.append(center + spread * rng.standard_normal((per, dims)))
        labels.append(np.full(per, c))
    return Dataset(
        np.vstack(feats).astype(np.float32),
        np.concatenate(labels).astype(np.int64),
        class_count,
    )


def make_rings(m: int, class_count: int = 2, noise: float = 0.1, seed=0) -> Dataset:
    """Concentric 2-D rings, one radius per class."""
    rng = check_rng(seed)
    per = m // class_count
    feats, labels = [], []
    for c in range(class_count):
        theta = rng.uniform(0, 2 * np.pi, per)
        radius = 1.0 + 1.5 * c + noise * rng.standard_normal(per)
        feats.append(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]))
        labels.append(np.full(per, c))
    return Dataset(
        np.vstack(feats).astype(np.float32),
        np.concatenate(labels).astype(np.int64),
        class_count,
    )


# 5x7 glyph bitmaps for the procedural digit dataset.
_GLYPHS = {
    0: ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"],
    1: ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    2: ["#####", "....#", "....#", "#####", "#....", "#....", "#####"],
    3: ["#####", "....#", "....#", ".####", "....#", "....#", "#####"],
    4: ["#...#", "#...#", "#...#", "#####", "....#", "....#", "....#"],
    5: ["#####", "#....", "#....", "#####", "....#", "....#", "#####"],
    6: ["#####", "#....", "#....", "#####", "#...#", "#...#", "#####"],
    7: ["#####", "....#", "...#.", "..#..", "..#..", ".#...", ".#..."],
    8: ["#####", "#...#", "#...#", "#####", "#...#", "#...#", "#####"],
    9: ["#####", "#...#", "#...#", "#####", "....#", "....#", "#####"],
}


def make_digits(m: int, seed=0) -> Dataset:
    """Procedural 28x28 ten-class digit images, MNIST-shaped.

    Each sample renders a 5x7 glyph scaled 3x (15x21), placed at a seeded
    random offset with seeded intensity jitter and additive pixel noise,
    clipped to [0, 1]. Stands in for MNIST when the real IDX files are not
    available; same tensor shapes, deliberately easier task.
    """
    rng = check_rng(seed)
    per = m // 10
    feats, labels = [], []
    stamps = {}
    for d, glyph in _GLYPHS.items():
        bitmap = np.array([[c == "#" for c in row] for row in glyph], dtype=np.float32)
        stamps[d] = np.kron(bitmap, np.ones((3, 3), dtype=np.float32))  # 21 x 15
    for d in range(10):
        stamp = stamps[d]
        h, w = stamp.shape
        for _ in range(per):
            img = np.zeros((28, 28), dtype=np.float32)
            r = int(rng.integers(0, 28 - h + 1))
            c = int(rng.integers(0, 28 - w + 1))
            intensity = rng.uniform(0.7, 1.0)
            img[r : r + h, c : c + w] = stamp * intensity
            img += 0.15 * rng.standard_normal((28, 28)).astype(np.float32)
            feats.append(np.clip(img, 0.0, 1.0).ravel())
            labels.append(d)
    order = check_rng(seed).permutation(len(feats))
    X = np.array(feats, dtype=np.float32)[order]
    y = np.array(labels, dtype=np.int64)[order]
    return Dataset(X, y, 10)
