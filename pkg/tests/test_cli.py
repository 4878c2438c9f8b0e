import numpy as np
import pytest
from click.testing import CliRunner

from mintprune.cli import main
from mintprune.io import read_config, read_masks, read_model

runner = CliRunner()


def invoke(*args):
    return runner.invoke(main, list(args), catch_exceptions=False)


def test_unknown_subcommand_exits_2():
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code == 2
    assert "Usage" in result.output or "No such command" in result.output


def test_missing_file_exits_1(tmp_path):
    result = runner.invoke(main, [
        "estimate", "--input", str(tmp_path / "nope.csv"),
    ])
    assert result.exit_code == 2  # click validates the path itself


def test_domain_error_exits_1(tmp_path):
    bad = tmp_path / "model.bin"
    bad.write_bytes(b"NOT A MODEL")
    result = runner.invoke(main, [
        "activations", "--model", str(bad), "--out", str(tmp_path / "o"),
        "--dataset", "blobs",
    ])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_estimate_identical_columns(tmp_path):
    x = np.random.default_rng(0).uniform(size=(500, 1))
    csv = tmp_path / "data.csv"
    np.savetxt(csv, np.hstack([x, x]), delimiter=",")
    result = invoke("estimate", "--input", str(csv), "--seed", "3")
    assert result.exit_code == 0
    value = float(result.output.split()[1])
    assert value >= 0.8


def test_estimate_conditional_path(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(400)
    z = x + 0.1 * rng.standard_normal(400)
    y = z + 0.1 * rng.standard_normal(400)
    csv = tmp_path / "data.csv"
    np.savetxt(csv, np.column_stack([x, y, z]), delimiter=",")
    result = invoke("estimate", "--input", str(csv), "--z-cols", "2")
    assert result.exit_code == 0
    assert float(result.output.split()[1]) <= 0.3


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full pipeline on the blobs task with target sparsity 0.5."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "config.txt"
    cfg.write_text(
        "epochs = 15\nbatch_size = 32\nlearning_rate = 0.05\nschedule = 8\n"
        "widths = 2,16,8,4\ngroups = 2,4,4,4\nm_per_class = 100\n"
        "gamma = 0.9\nseed = 0\n"
    )
    base = ["--config", str(cfg), "--dataset", "blobs"]
    r = invoke("train", *base, "--out", str(root / "train"))
    assert r.exit_code == 0, r.output
    r = invoke("activations", "--config", str(cfg), "--dataset", "blobs",
               "--model", str(root / "train/model.bin"), "--out", str(root / "acts"))
    assert r.exit_code == 0, r.output
    r = invoke("prune", "--config", str(cfg),
               "--activations", str(root / "acts/activations.bin"),
               "--target-sparsity", "0.5", "--out", str(root / "prune"))
    assert r.exit_code == 0, r.output
    r = invoke("retrain", *base, "--model", str(root / "train/model.bin"),
               "--mask", str(root / "prune/masks.txt"), "--out", str(root / "retrain"))
    assert r.exit_code == 0, r.output
    r = invoke("report", *base, "--baseline", str(root / "train/model.bin"),
               "--pruned", str(root / "retrain/model.bin"),
               "--mask", str(root / "prune/masks.txt"), "--out", str(root / "report"))
    assert r.exit_code == 0, r.output
    return root


def test_pipeline_report_contents(pipeline):
    report = (pipeline / "report/report.txt").read_text()
    fields = dict(line.split("\t") for line in report.strip().splitlines())
    assert 0.4 <= float(fields["total_pruned_pct"]) / 100 <= 0.5
    assert float(fields["baseline_accuracy"]) >= 0.9
    assert "sparse_dense_ratio" in fields


def test_pipeline_records_resolved_config(pipeline):
    for sub in ("train", "acts", "prune", "retrain", "report"):
        cfg = read_config(pipeline / sub / "config.resolved.txt")
        assert cfg["seed"] == 0


def test_pipeline_masks_readable_and_capped(pipeline):
    masks, names, groupings, deltas = read_masks(pipeline / "prune/masks.txt")
    assert len(masks) == 3
    for mask in masks:
        assert set(np.unique(mask)) <= {0, 1}


def test_pipeline_prune_rerun_is_bit_identical(pipeline, tmp_path):
    cfg = pipeline / "prune/config.resolved.txt"
    r = invoke("prune", "--config", str(cfg),
               "--activations", str(pipeline / "acts/activations.bin"),
               "--out", str(tmp_path / "again"))
    assert r.exit_code == 0, r.output
    a = (pipeline / "prune/masks.txt").read_bytes()
    b = (tmp_path / "again/masks.txt").read_bytes()
    assert a == b


def test_retrained_model_respects_mask(pipeline):
    masks, _, _, _ = read_masks(pipeline / "prune/masks.txt")
    model = read_model(pipeline / "retrain/model.bin")
    for lay, mask in zip(model.layers, masks):
        assert np.all(lay.weights[mask == 0] == 0)


def test_characterize_command(pipeline):
    r = invoke("characterize", "--model", str(pipeline / "train/model.bin"),
               "--dataset", "blobs", "--out", str(pipeline / "char"),
               "--epsilons", "0.0,0.05", "--attack-subset", "100")
    assert r.exit_code == 0, r.output
    cal = (pipeline / "char/calibration.tsv").read_text()
    assert cal.strip().splitlines()[-1].startswith("ece\t")
    attacks = (pipeline / "char/attacks.tsv").read_text().strip().splitlines()
    assert len(attacks) == 3  # header + 2 epsilons


def test_sweep_command(pipeline):
    cfgfile = pipeline / "sweep_config.txt"
    cfgfile.write_text(
        "epochs = 5\nbatch_size = 32\nlearning_rate = 0.05\nschedule = \n"
        "widths = 2,16,8,4\ngroups = 2,4,4,4\nm_per_class = 100\n"
        "delta = 0.3\nseed = 0\n"
    )
    r = invoke("sweep", "--config", str(cfgfile), "--dataset", "blobs",
               "--param", "groups", "--values", "2,4",
               "--out", str(pipeline / "sweep"))
    assert r.exit_code == 0, r.output
    rows = (pipeline / "sweep/sweep.tsv").read_text().strip().splitlines()
    assert len(rows) == 3
    assert rows[0].startswith("groups\t")
