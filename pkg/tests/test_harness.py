import hashlib
import subprocess
import sys

import numpy as np
import pytest
import yaml
from PIL import Image

from xmodal.config import DatasetConfig, RunConfig, SimConfig, config_to_yaml, load_config, parse_config
from xmodal.errors import ConfigError, DatasetError
from xmodal.harness.cli import main
from xmodal.harness.dataset import (
    _near_obstacle,
    generate_synthetic_dataset,
    ingest_dataset,
    synthetic_frame,
    write_dataset,
)
from xmodal.harness.pipeline import split_dataset
from xmodal.simkit.camera import Camera

MINI_CONFIG = {
    "master_seed": 3,
    "cmwae": {
        "image_size": 16, "latent_dim": 8, "enc_channels": [4, 4, 4, 4, 4], "first_kernel": 3,
        "first_stride": 1, "first_padding": 1, "feature_grid": 2, "branch_width": 8,
        "dec_channels": [4, 4, 4, 4], "dec_base": 1,
    },
    "sim": {"render_size": 16},
    "train": {"epochs": 2, "batch_size": 8},
    "dataset": {"count": 30},
}


def _write_pair(root, k, gray, depth_mm):
    Image.fromarray(gray).save(root / f"gray_{k:06d}.png")
    Image.fromarray(depth_mm.astype(np.uint16)).save(root / f"depth_{k:06d}.png")


# ------------------------------------------------------------------ ingestion


def test_ingest_three_pairs_and_conversions(tmp_path):
    red = np.zeros((4, 4, 3), np.uint8)
    red[..., 0] = 255
    for k in range(3):
        _write_pair(tmp_path, k, red, np.full((4, 4), 10_000))
    ds = ingest_dataset(tmp_path)
    assert len(ds) == 3
    assert np.allclose(ds.gray, 0.299, atol=1e-6)
    assert np.all(ds.depth == 1.0)


def test_depth_is_clamped_and_zero_stays_invalid(tmp_path):
    mm = np.array([[0, 5000], [12_000, 2500]])
    _write_pair(tmp_path, 0, np.zeros((2, 2), np.uint8), mm)
    ds = ingest_dataset(tmp_path)
    assert ds.depth[0].tolist() == [[0.0, 0.5], [1.0, 0.25]]


def test_missing_member_names_path(tmp_path):
    _write_pair(tmp_path, 0, np.zeros((4, 4), np.uint8), np.zeros((4, 4)))
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "gray_000001.png")
    with pytest.raises(DatasetError, match="gray_000001.png"):
        ingest_dataset(tmp_path)


def test_resolution_mismatch(tmp_path):
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "gray_000000.png")
    Image.fromarray(np.zeros((5, 5), np.uint16)).save(tmp_path / "depth_000000.png")
    with pytest.raises(DatasetError, match="resolution"):
        ingest_dataset(tmp_path)


def test_unreadable_file(tmp_path):
    _write_pair(tmp_path, 0, np.zeros((4, 4), np.uint8), np.zeros((4, 4)))
    (tmp_path / "depth_000000.png").write_bytes(b"not a png")
    with pytest.raises(DatasetError, match="depth_000000.png"):
        ingest_dataset(tmp_path)


def test_empty_directory(tmp_path):
    with pytest.raises(DatasetError):
        ingest_dataset(tmp_path)


# ------------------------------------------------------------------ synthetic data


def test_generate_writes_valid_dataset(tmp_path):
    sim = SimConfig(render_size=16)
    ds = generate_synthetic_dataset(100, tmp_path, seed=2, sim=sim)
    assert len(ds) == 100
    assert len((tmp_path / "manifest.csv").read_text().splitlines()) == 101
    assert ds.gray.min() >= 0 and ds.gray.max() <= 1


def test_generation_is_byte_deterministic(tmp_path):
    sim = SimConfig(render_size=16)
    generate_synthetic_dataset(20, tmp_path / "a", seed=5, sim=sim)
    generate_synthetic_dataset(20, tmp_path / "b", seed=5, sim=sim)
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_obstacle_visibility_quota():
    sim, ds = SimConfig(render_size=32), DatasetConfig()
    camera = Camera(sim)
    n = 60
    from xmodal.harness.rng import derive_rng_stream

    aimed = np.zeros(n, bool)
    aimed[derive_rng_stream(0, "dataset-aim").permutation(n)[: int(np.ceil(ds.near_obstacle_fraction * n))]] = True
    near = 0
    for i in range(n):
        f = synthetic_frame(i, bool(aimed[i]), 0, sim, ds, camera)
        near += _near_obstacle(f.depth, f.hit_id, sim.d_max, ds.near_range)
    assert near >= 0.3 * n


def test_round_trip_is_bit_identical(tiny_dataset, tmp_path):
    write_dataset(tiny_dataset, tmp_path)
    again = ingest_dataset(tmp_path)
    assert np.array_equal(again.gray, tiny_dataset.gray)
    assert np.array_equal(again.depth, tiny_dataset.depth)


def test_split_is_deterministic_and_disjoint(tiny_dataset):
    tr, te = split_dataset(tiny_dataset, 0, 0.25)
    tr2, te2 = split_dataset(tiny_dataset, 0, 0.25)
    assert len(te) == 6 and len(tr) == 18
    assert te.entries == te2.entries
    assert not set(tr.entries) & set(te.entries)


# ------------------------------------------------------------------ config


def test_defaults_round_trip_through_yaml(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "c.yaml"
    path.write_text(config_to_yaml(cfg))
    assert load_config(path) == cfg


def test_overrides_win(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("master_seed: 4\n")
    assert load_config(path, master_seed=9).master_seed == 9


@pytest.mark.parametrize(
    "bad",
    [
        {"unknown_key": 1},
        {"train": {"lam": 0}},
        {"train": {"lam": -1.0}},
        {"eval": {"recon_levels": [0.0, 1.5]}},
        {"reward": {"lambdas": [5, 5, 1, 0]}},
        {"ppo": {"corrupt_fraction": 1.2}},
        {"sim": {"unknown": 2}},
        {"profile": "huge"},
    ],
)
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_unreadable_config(tmp_path):
    (tmp_path / "c.yaml").write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_profiles_select_architecture():
    assert parse_config({"profile": "full"}).arch.image_size == 224
    assert RunConfig().arch.image_size == 64


# ------------------------------------------------------------------ CLI


def test_unknown_subcommand_exits_one(capsys):
    assert main(["fly"]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_one(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("train: {lam: 0}\n")
    assert main(["gen-dataset", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path)]) == 1


def test_missing_checkpoint_exits_one(tmp_path):
    assert main(["eval-cmwae", "--out", str(tmp_path)]) == 1


def test_runtime_failure_exits_two(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(MINI_CONFIG))
    (tmp_path / "broken.safetensors").write_bytes(b"garbage")
    args = ["eval-cmwae", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path), "--checkpoint", str(tmp_path / "broken.safetensors")]
    assert main(["gen-dataset", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path)]) == 0
    assert main(args) == 2


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "xmodal.harness.cli", "bogus"], capture_output=True, text=True)
    assert res.returncode == 1


def _digest(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
    return h.hexdigest()


def _pipeline(tmp_path, tag, seed):
    out = tmp_path / tag
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump(MINI_CONFIG))
    common = ["--config", str(cfg), "--out", str(out), "--seed", str(seed)]
    assert main(["gen-dataset", *common]) == 0
    assert main(["train-cmwae", "--scheme", "s2", *common]) == 0
    assert main(["eval-cmwae", *common]) == 0
    return out


def test_cli_end_to_end_is_seed_deterministic(tmp_path):
    a = _pipeline(tmp_path, "a", 7)
    b = _pipeline(tmp_path, "b", 7)
    assert (a / "recon_table.md").exists()
    names = ["recon_raw.csv", "boxplot_stats.csv", "train_log_s2.csv", "recon_table.md", "cmwae_s2.safetensors"]
    assert _digest([a / n for n in names]) == _digest([b / n for n in names])
    c = _pipeline(tmp_path, "c", 8)
    assert (a / "recon_raw.csv").read_bytes() != (c / "recon_raw.csv").read_bytes()


def test_report_merges_runs(tmp_path):
    a = _pipeline(tmp_path, "a", 1)
    merged = tmp_path / "merged"
    assert main(["report", "--out", str(merged), str(a)]) == 0
    assert (merged / "recon_raw.csv").read_bytes() == (a / "recon_raw.csv").read_bytes()
    assert main(["report", "--out", str(tmp_path / "empty"), str(tmp_path / "empty")]) == 1
