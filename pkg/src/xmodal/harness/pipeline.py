"""Run orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from xmodal.cmwae.checkpoint import load_cmwae
from xmodal.cmwae.model import freeze
from xmodal.cmwae.train import train_cmwae
from xmodal.config import RunConfig, config_to_yaml
from xmodal.corruption import CorruptionScheme
from xmodal.errors import ConfigError
from xmodal.evalbench.policy_eval import PolicyReport, eval_policy
from xmodal.evalbench.recon import ReconReport, eval_reconstruction
from xmodal.evalbench.report import emit_report
from xmodal.harness.dataset import PairedDataset, generate_synthetic_dataset, ingest_dataset
from xmodal.harness.rng import derive_rng_stream
from xmodal.policy.agent import PolicyAgent
from xmodal.policy.ppo import check_encoder_match, load_policy, train_ppo
from xmodal.simkit.env import Outcome
from xmodal.simkit.episode import EpisodeRecord

log = logging.getLogger(__name__)

DATASET_DIR = "dataset"


def split_dataset(ds: PairedDataset, seed: int, test_fraction: float) -> tuple[PairedDataset, PairedDataset]:
    """Deterministic train/test split; the test part holds ceil(fraction * n) pairs."""
    n = len(ds)
    n_test = min(max(1, int(np.ceil(test_fraction * n))), n - 1) if n > 1 else 0
    order = derive_rng_stream(seed, "split").permutation(n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


def model_name(header: dict) -> str:
    suffix = "-depthonly" if header.get("kind") == "cmwae_depth_only" else ""
    return f"{header['scheme']}{suffix}"


def gen_dataset(cfg: RunConfig, root: Path, out: Path) -> PairedDataset:
    ds = generate_synthetic_dataset(cfg.dataset.count, root, cfg.master_seed, cfg.sim, cfg.dataset)
    (out / "config.yaml").write_text(config_to_yaml(cfg))
    return ds


def load_split(cfg: RunConfig, data_dir: Path) -> tuple[PairedDataset, PairedDataset]:
    ds = ingest_dataset(data_dir, cfg.sim.d_max, cfg.arch.image_size)
    return split_dataset(ds, cfg.master_seed, cfg.dataset.test_fraction)


def run_train_cmwae(cfg: RunConfig, scheme: str, data_dir: Path, out: Path, dump_masks: Path | None = None) -> Path:
    train, _ = load_split(cfg, data_dir)
    train_cmwae(train, CorruptionScheme(scheme), cfg.arch, cfg.train, cfg.master_seed, out, dump_masks=dump_masks)
    suffix = "-depthonly" if cfg.train.depth_only else ""
    return out / f"cmwae_{scheme}{suffix}.safetensors"


def find_checkpoints(out: Path) -> list[Path]:
    return sorted(p for p in out.glob("cmwae_*.safetensors") if "_epoch" not in p.name)


def run_eval_cmwae(cfg: RunConfig, checkpoints: list[Path], data_dir: Path, out: Path) -> dict[str, ReconReport]:
    if not checkpoints:
        raise ConfigError(f"no CMWAE checkpoints given or found in {out}")
    _, test = load_split(cfg, data_dir)
    reports = {}
    for path in checkpoints:
        model, header = load_cmwae(path)
        if model.image_size != test.image_size:
            raise ConfigError(f"{path} expects {model.image_size}px images, test set has {test.image_size}px")
        reports[model_name(header)] = eval_reconstruction(model, test, cfg.master_seed, cfg.eval.recon_levels)
    emit_report(reports, None, out)
    return reports


def run_train_policy(cfg: RunConfig, encoder_path: Path, out: Path, name: str = "policy"):
    encoder, _ = load_cmwae(encoder_path)
    freeze(encoder)
    return train_ppo(encoder, cfg.ppo, cfg.sim, cfg.reward, cfg.master_seed, out, encoder_path, tag=name)


def run_eval_policy(
    cfg: RunConfig, policy_path: Path, encoder_path: Path, out: Path, conditions, levels=None, name: str | None = None
) -> PolicyReport:
    model, header = load_policy(policy_path)
    check_encoder_match(header, encoder_path)
    encoder, _ = load_cmwae(encoder_path)
    freeze(encoder)
    agent = PolicyAgent(model, deterministic=cfg.eval.deterministic_policy, rng=derive_rng_stream(cfg.master_seed, "eval-noise"))
    report = eval_policy(
        agent,
        encoder,
        levels if levels is not None else cfg.eval.policy_levels,
        conditions,
        cfg.eval.episodes_per_cell,
        cfg.master_seed,
        cfg.sim,
        cfg.reward,
        cfg.eval.batch_envs,
    )
    emit_report(None, {name or policy_path.stem: report}, out)
    return report


# ------------------------------------------------------------- report merge


def load_recon_raw(path: Path) -> dict[str, ReconReport]:
    rows: dict[str, dict[float, list]] = {}
    with path.open(newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["model"], {}).setdefault(float(r["level"]), []).append(r)
    out = {}
    for name, by_level in rows.items():
        rep = ReconReport(tuple(sorted(by_level)))
        for lv, items in by_level.items():
            items.sort(key=lambda r: int(r["image"]))
            rep.mse[lv] = np.array([float(r["mse"]) for r in items])
            rep.ssim[lv] = np.array([float(r["ssim"]) for r in items])
            rep.coverage[lv] = np.array([float(r["coverage"]) for r in items])
        out[name] = rep
    return out


def load_policy_raw(path: Path) -> dict[str, PolicyReport]:
    out: dict[str, PolicyReport] = {}
    with path.open(newline="") as fh:
        for r in csv.DictReader(fh):
            rep = out.setdefault(r["model"], PolicyReport())
            rec = EpisodeRecord(
                Outcome[r["outcome"].upper()],
                int(r["steps"]),
                float(r["path_length"]),
                float(r["total_reward"]),
                float(r["final_distance"]),
                [float(r["mean_coverage"])],
            )
            rep.cells.setdefault((r["condition"], int(r["level"])), []).append(rec)
    return out


def merge_reports(inputs: list[Path], out: Path) -> list[Path]:
    recon: dict[str, ReconReport] = {}
    policy: dict[str, PolicyReport] = {}
    for d in inputs:
        if (d / "recon_raw.csv").exists():
            recon.update(load_recon_raw(d / "recon_raw.csv"))
        if (d / "policy_raw.csv").exists():
            for name, rep in load_policy_raw(d / "policy_raw.csv").items():
                policy.setdefault(name, PolicyReport()).cells.update(rep.cells)
    if not recon and not policy:
        raise ConfigError(f"no recon_raw.csv or policy_raw.csv found in {[str(p) for p in inputs]}")
    return emit_report(recon or None, policy or None, out)
