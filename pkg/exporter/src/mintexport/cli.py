"""Command-line entry point.

    mint-export --checkpoint model.pt --data data.npz \
        --layers relu1,relu2 --m-per-class 100 --seed 0 --out acts.bin

The checkpoint is a torch.save()d nn.Module (a full module, not a bare
state_dict, since the bridge has no model-building code of its own) or a
TorchScript archive. The dataset is an .npz with "features" (m, ...) and
"labels" (m,) arrays.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .export import ExportError, ExportSpec, export_activations


def load_model(path: Path) -> torch.nn.Module:
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    try:
        model = torch.load(path, map_location="cpu", weights_only=False)
    except RuntimeError:
        # TorchScript archives are rejected by torch.load
        return torch.jit.load(path, map_location="cpu")
    if not isinstance(model, torch.nn.Module):
        raise ExportError(
            f"{path} does not contain an nn.Module (got {type(model).__name__})"
        )
    return model


def load_dataset(path: Path):
    with np.load(path) as npz:
        if "features" not in npz or "labels" not in npz:
            raise ExportError(f"{path} must contain 'features' and 'labels' arrays")
        feats = torch.as_tensor(npz["features"], dtype=torch.float32)
        labels = npz["labels"].astype(np.int64)
    return list(zip(feats, labels))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mint-export",
        description="Dump spatially-averaged layer activations to a MINTACT1 file",
    )
    parser.add_argument("--checkpoint", required=True, type=Path)
    parser.add_argument("--data", required=True, type=Path)
    parser.add_argument("--layers", required=True,
                        help="comma-separated module names to capture")
    parser.add_argument("--m-per-class", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("activations.bin"))
    parser.add_argument("--no-checksum", action="store_true",
                        help="omit the #crc32= layer-name suffix")
    args = parser.parse_args(argv)

    try:
        spec = ExportSpec(
            layers=[s.strip() for s in args.layers.split(",") if s.strip()],
            m_per_class=args.m_per_class,
            seed=args.seed,
            output=args.out,
            checksum=not args.no_checksum,
        )
        model = load_model(args.checkpoint)
        data = load_dataset(args.data)
        out = export_activations(model, data, spec)
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
