"""Batch CLI orchestrating the pipeline:

    train -> activations -> deps -> prune -> retrain -> report

plus standalone `estimate`, `characterize`, and `sweep` commands.

Every command takes --config/--seed/--out; flag overrides win over the
config file, and the fully resolved configuration is recorded as
config.resolved.txt inside the output directory. Exit codes: 0 success,
1 domain error (single-line diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import functools
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import characterize as ch
from . import io as mio
from . import network as nn
from .exceptions import MintError
from .pruning import MintPruner, sparsity_report

DATA_DIR_ENV = "MINT_DATA_DIR"


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (MintError, FileNotFoundError, IsADirectoryError) as exc:
            _fail(str(exc))

    return wrapper


def _load_config(config_path, overrides):
    cfg = mio.read_config(config_path) if config_path else dict(mio.CONFIG_DEFAULTS)
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def _record_config(cfg, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_config(cfg, out / "config.resolved.txt")
    return out


def _train_config(cfg):
    return nn.TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        schedule=tuple(mio.int_list(str(cfg["schedule"]))),
        lr_multiplier=cfg["lr_multiplier"],
        weight_decay=cfg["weight_decay"],
        momentum=cfg["momentum"],
        seed=cfg["seed"],
    )


def _dataset(name, data_dir, split, size, seed):
    if name == "mnist":
        root = Path(data_dir or os.environ.get(DATA_DIR_ENV, "."))
        stem = "train" if split == "train" else "t10k"
        return mio.read_mnist_idx(
            root / f"{stem}-images-idx3-ubyte", root / f"{stem}-labels-idx1-ubyte"
        )
    gen_seed = seed if split == "train" else seed + 1
    if name == "digits":
        return mio.make_digits(size or (20000 if split == "train" else 4000), gen_seed)
    if name == "blobs":
        return mio.make_blobs(size or (2000 if split == "train" else 1000), seed=gen_seed)
    if name == "rings":
        return mio.make_rings(size or (2000 if split == "train" else 1000), seed=gen_seed)
    raise click.UsageError(f"unknown dataset {name!r}")


dataset_options = [
    click.option("--dataset", default="digits", show_default=True,
                 type=click.Choice(["mnist", "digits", "blobs", "rings"])),
    click.option("--data-dir", default=None, help=f"MNIST IDX directory (or ${DATA_DIR_ENV})"),
    click.option("--train-size", default=None, type=int),
    click.option("--test-size", default=None, type=int),
]


def add_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@click.group()
def main():
    """MINT-style dependency pruning toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--widths", default=None, help="comma separated layer widths")
@add_options(dataset_options)
@guarded
def train(config_path, out, seed, widths, dataset, data_dir, train_size, test_size):
    """Train a baseline dense model and save it with its metrics."""
    cfg = _load_config(config_path, {"seed": seed, "widths": widths})
    out_dir = _record_config(cfg, out)
    train_data = _dataset(dataset, data_dir, "train", train_size, cfg["seed"])
    test_data = _dataset(dataset, data_dir, "test", test_size, cfg["seed"])
    widths = mio.int_list(str(cfg["widths"]))
    if widths[0] != train_data.features.shape[1] or widths[-1] != train_data.class_count:
        widths = [train_data.features.shape[1], *widths[1:-1], train_data.class_count]
    model = nn.init_mlp(widths, cfg["seed"])
    model, history = nn.train(model, train_data, _train_config(cfg))
    mio.write_model(model, out_dir / "model.bin")
    acc, _, _ = nn.evaluate(model, test_data)
    (out_dir / "metrics.txt").write_text(
        f"train_accuracy\t{history['accuracy'][-1]:.4f}\n"
        f"test_accuracy\t{acc:.4f}\n"
        f"final_loss\t{history['loss'][-1]:.6f}\n"
    )
    click.echo(f"test accuracy {acc:.4f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--samples-per-class", type=int, default=None)
@add_options(dataset_options)
@guarded
def activations(config_path, model_path, out, seed, samples_per_class,
                dataset, data_dir, train_size, test_size):
    """Dump class-stratified per-layer activations to a MINTACT1 file."""
    cfg = _load_config(config_path, {"seed": seed, "m_per_class": samples_per_class})
    out_dir = _record_config(cfg, out)
    data = _dataset(dataset, data_dir, "train", train_size, cfg["seed"])
    model = mio.read_model(model_path)
    dump = nn.capture_activations(model, data, cfg["m_per_class"], cfg["seed"])
    mio.write_activations(dump, out_dir / "activations.bin")
    click.echo(f"wrote {len(dump.matrices)} layers x {dump.matrices[0].shape[0]} rows")


def _fit_pruner(cfg, dump):
    groups = mio.int_list(str(cfg["groups"]))
    target = str(cfg["target_sparsity"]).strip()
    skip = set(mio.int_list(str(cfg["skip_layers"])))
    pruner = MintPruner(
        groups=groups,
        delta=cfg["delta"],
        gamma=cfg["gamma"],
        target_sparsity=float(target) if target else None,
        skip_pairs=skip,
        master_seed=cfg["seed"],
    )
    pruner.fit(dump.matrices)
    return pruner


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--activations", "act_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--groups", default=None, help="comma separated group counts per layer")
@guarded
def deps(config_path, act_path, out, seed, groups):
    """Compute dependency tables and write them as CSV, one file per pair."""
    cfg = _load_config(config_path, {"seed": seed, "groups": groups})
    out_dir = _record_config(cfg, out)
    dump = mio.read_activations(act_path)
    pruner = _fit_pruner(cfg, dump)
    for p, table in enumerate(pruner.tables_):
        np.savetxt(out_dir / f"deps_pair{p}.csv", table.values, delimiter=",", fmt="%.6f")
    click.echo(f"wrote {len(pruner.tables_)} dependency tables")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--activations", "act_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--groups", default=None)
@click.option("--delta", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--target-sparsity", type=float, default=None)
@guarded
def prune(config_path, act_path, out, seed, groups, delta, gamma, target_sparsity):
    """Threshold dependency tables into a pruning mask file."""
    cfg = _load_config(config_path, {
        "seed": seed, "groups": groups, "delta": delta, "gamma": gamma,
        "target_sparsity": target_sparsity,
    })
    out_dir = _record_config(cfg, out)
    dump = mio.read_activations(act_path)
    pruner = _fit_pruner(cfg, dump)
    groupings = [
        (len(pruner.groupings_[p + 1]), len(pruner.groupings_[p]))
        for p in range(len(pruner.masks_))
    ]
    mio.write_masks(
        pruner.masks_, out_dir / "masks.txt",
        names=dump.layer_names[1:], groupings=groupings, deltas=pruner.deltas_,
    )
    rep = pruner.report_
    lines = [f"delta_used\t{pruner.solved_delta_!r}"]
    if pruner.target_warning_:
        lines.append("warning\ttarget sparsity unreachable under gamma cap")
    for i, layer in enumerate(rep["layers"]):
        lines.append(f"layer{i + 1}_pruned_pct\t{layer['pruned_pct']:.2f}")
    lines.append(f"total_pruned_pct\t{rep['pruned_pct']:.2f}")
    (out_dir / "prune_report.txt").write_text("\n".join(lines) + "\n")
    click.echo(f"total pruned {rep['pruned_pct']:.2f}%")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@add_options(dataset_options)
@guarded
def retrain(config_path, model_path, mask_path, out, seed,
            dataset, data_dir, train_size, test_size):
    """Apply a mask and retrain with gradient masking."""
    cfg = _load_config(config_path, {"seed": seed})
    out_dir = _record_config(cfg, out)
    model = mio.read_model(model_path)
    masks, _, _, _ = mio.read_masks(mask_path)
    train_data = _dataset(dataset, data_dir, "train", train_size, cfg["seed"])
    test_data = _dataset(dataset, data_dir, "test", test_size, cfg["seed"])
    retrained, history = nn.retrain_masked(model, masks, train_data, _train_config(cfg))
    mio.write_model(retrained, out_dir / "model.bin")
    acc, _, _ = nn.evaluate(retrained, test_data)
    (out_dir / "metrics.txt").write_text(
        f"train_accuracy\t{history['accuracy'][-1]:.4f}\n"
        f"test_accuracy\t{acc:.4f}\n"
    )
    click.echo(f"retrained test accuracy {acc:.4f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--baseline", "baseline_path", required=True, type=click.Path(exists=True))
@click.option("--pruned", "pruned_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@add_options(dataset_options)
@guarded
def report(config_path, baseline_path, pruned_path, mask_path, out, seed,
           dataset, data_dir, train_size, test_size):
    """Baseline-vs-pruned accuracy, per-layer pruned %, and footprints."""
    cfg = _load_config(config_path, {"seed": seed})
    out_dir = _record_config(cfg, out)
    baseline = mio.read_model(baseline_path)
    pruned_model = mio.read_model(pruned_path)
    masks, _, _, _ = mio.read_masks(mask_path)
    test_data = _dataset(dataset, data_dir, "test", test_size, cfg["seed"])
    base_acc, _, _ = nn.evaluate(baseline, test_data)
    pruned_acc, _, _ = nn.evaluate(pruned_model, test_data)
    shapes = [(m.shape[0], m.shape[1], 1) for m in masks]
    rep = sparsity_report(masks, shapes)
    base_fp = nn.csr_footprint(baseline)
    pruned_fp = nn.csr_footprint(pruned_model)
    lines = [
        f"baseline_accuracy\t{base_acc:.4f}",
        f"pruned_accuracy\t{pruned_acc:.4f}",
    ]
    for i, layer in enumerate(rep["layers"]):
        lines.append(f"layer{i + 1}_pruned_pct\t{layer['pruned_pct']:.2f}")
    lines += [
        f"total_pruned_pct\t{rep['pruned_pct']:.2f}",
        f"dense_bytes\t{base_fp['dense_bytes']}",
        f"sparse_bytes\t{pruned_fp['sparse_bytes']}",
        f"sparse_dense_ratio\t{pruned_fp['sparse_bytes'] / base_fp['dense_bytes']:.4f}",
    ]
    text = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(text)
    click.echo(text, nl=False)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="CSV of samples, one row per observation")
@click.option("--x-cols", default="0", help="comma separated X column indices")
@click.option("--y-cols", default="1", help="comma separated Y column indices")
@click.option("--z-cols", default="", help="comma separated Z column indices")
@click.option("--seed", type=int, default=0)
@guarded
def estimate(input_path, x_cols, y_cols, z_cols, seed):
    """Estimate (conditional) GMI between column blocks of a CSV file."""
    from .gmi import BlockSpec, conditional_gmi, gmi

    data = np.loadtxt(input_path, delimiter=",", ndmin=2)
    x = mio.int_list(x_cols)
    y = mio.int_list(y_cols)
    z = mio.int_list(z_cols)
    cols = x + y + z
    sub = data[:, cols]
    spec = BlockSpec.from_ranges(
        range(len(x)), range(len(x), len(x) + len(y)),
        range(len(x) + len(y), len(cols)),
    )
    score = (conditional_gmi if z else gmi)(sub, spec, seed)
    click.echo(f"I_hat {score.value:.4f} (R={score.raw_fr_count}, n={score.subset_size})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--epsilons", default=None, help="comma separated l-inf budgets")
@click.option("--bins", type=int, default=None)
@click.option("--attack-subset", type=int, default=1000, show_default=True)
@add_options(dataset_options)
@guarded
def characterize(config_path, model_path, out, seed, epsilons, bins, attack_subset,
                 dataset, data_dir, train_size, test_size):
    """Calibration table plus iterative attack curves for one model."""
    cfg = _load_config(config_path, {"seed": seed, "epsilons": epsilons, "bins": bins})
    out_dir = _record_config(cfg, out)
    model = mio.read_model(model_path)
    test_data = _dataset(dataset, data_dir, "test", test_size, cfg["seed"])
    acc, conf, correct = nn.evaluate(model, test_data)
    profile = ch.ece(conf, correct, cfg["bins"])
    lines = ["bin_low\tbin_high\tcount\tconfidence\taccuracy"]
    for b in range(cfg["bins"]):
        lines.append(
            f"{profile.bin_edges[b]:.2f}\t{profile.bin_edges[b + 1]:.2f}\t"
            f"{profile.counts[b]}\t{profile.mean_confidence[b]:.4f}\t"
            f"{profile.accuracy[b]:.4f}"
        )
    lines.append(f"ece\t{profile.ece:.4f}")
    (out_dir / "calibration.tsv").write_text("\n".join(lines) + "\n")
    eps = mio.float_list(str(cfg["epsilons"]))
    rows = ["epsilon\tuntargeted_accuracy\tleast_likely_accuracy"]
    untargeted = ch.attack_curve(model, test_data, eps, ch.UNTARGETED_FGSM,
                                 cfg["attack_steps"], attack_subset, cfg["seed"])
    targeted = ch.attack_curve(model, test_data, eps, ch.LEAST_LIKELY,
                               cfg["attack_steps"], attack_subset, cfg["seed"])
    for (e, a_u), (_, a_t) in zip(untargeted, targeted):
        rows.append(f"{e:.4f}\t{a_u:.4f}\t{a_t:.4f}")
    (out_dir / "attacks.tsv").write_text("\n".join(rows) + "\n")
    click.echo(f"clean accuracy {acc:.4f}, ece {profile.ece:.4f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--param", required=True, type=click.Choice(["groups", "m_per_class"]))
@click.option("--values", required=True, help="comma separated settings to sweep")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@add_options(dataset_options)
@guarded
def sweep(config_path, param, values, out, seed, dataset, data_dir, train_size, test_size):
    """One full prune-retrain run per setting, all else held fixed."""
    cfg = _load_config(config_path, {"seed": seed})
    out_dir = _record_config(cfg, out)
    train_data = _dataset(dataset, data_dir, "train", train_size, cfg["seed"])
    test_data = _dataset(dataset, data_dir, "test", test_size, cfg["seed"])
    widths = mio.int_list(str(cfg["widths"]))
    if widths[0] != train_data.features.shape[1] or widths[-1] != train_data.class_count:
        widths = [train_data.features.shape[1], *widths[1:-1], train_data.class_count]
    tcfg = _train_config(cfg)
    baseline, _ = nn.train(nn.init_mlp(widths, cfg["seed"]), train_data, tcfg)
    rows = [f"{param}\ttotal_pruned_pct\ttest_accuracy"]
    for value in mio.int_list(values):
        run = dict(cfg)
        if param == "groups":
            run["groups"] = ",".join(
                str(min(value, w)) for w in widths
            )
        else:
            run["m_per_class"] = value
        dump = nn.capture_activations(baseline, train_data, run["m_per_class"], run["seed"])
        pruner = _fit_pruner(run, dump)
        retrained, _ = nn.retrain_masked(baseline, pruner.masks_, train_data, tcfg)
        acc, _, _ = nn.evaluate(retrained, test_data)
        rows.append(f"{value}\t{pruner.report_['pruned_pct']:.2f}\t{acc:.4f}")
    (out_dir / "sweep.tsv").write_text("\n".join(rows) + "\n")
    click.echo("\n".join(rows))


if __name__ == "__main__":
    main()
