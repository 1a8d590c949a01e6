"""Corruption-aware CMWAE training."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from xmodal.config import ArchConfig, CmwaeTrainConfig
from xmodal.corruption import CorruptionScheme, apply_mask, dump_mask, make_mask
from xmodal.errors import ConfigError, TrainingDivergedError
from xmodal.harness.rng import derive_rng_stream, derive_seed
from xmodal.cmwae.checkpoint import save_cmwae
from xmodal.cmwae.losses import loss_total
from xmodal.cmwae.model import build_model

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "rec", "mmd", "total")  # no timings, so reruns write identical bytes


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: row[k] for k in LOG_COLUMNS})


def corrupt_batch(
    depth: np.ndarray,
    indices: np.ndarray,
    coverage: np.ndarray,
    scheme: CorruptionScheme,
    seed: int,
    epoch: int,
    dump_dir: Path | None = None,
) -> np.ndarray:
    """Mask each sample's depth at its assigned coverage; fresh patches per epoch."""
    out = depth.copy()
    h, w = depth.shape[-2:]
    for j, idx in enumerate(indices):
        cov = coverage[idx]
        if cov <= 0:
            continue
        rng = derive_rng_stream(seed, f"corruption:{epoch}", int(idx))
        mask = make_mask(scheme.spec(cov, h), h, w, rng)
        out[j] = apply_mask(depth[j], mask)
        if dump_dir is not None:
            dump_mask(mask, dump_dir, f"epoch{epoch:03d}_{int(idx):06d}")
    return out


def train_cmwae(
    dataset,
    scheme: CorruptionScheme | str,
    arch: ArchConfig,
    cfg: CmwaeTrainConfig,
    seed: int,
    out_dir: str | Path | None = None,
    on_batch: Callable | None = None,
    dump_masks: str | Path | None = None,
):
    """Train a CMWAE (or the depth-only ablation) and return ``(model, log)``.

    The encoder sees corrupted depth; the reconstruction target is always the
    clean depth. ``on_batch(indices, depth_in, target)`` is an inspection hook.
    """
    scheme = CorruptionScheme(scheme)
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot train on an empty dataset")
    if dataset.image_size != arch.image_size:
        raise ConfigError(f"dataset images are {dataset.image_size}px, architecture expects {arch.image_size}px")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    dump_dir = Path(dump_masks) if dump_masks is not None else None

    torch.manual_seed(derive_seed(seed, "cmwae-init"))
    model = build_model(arch, cfg.depth_only)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    coverage = scheme.assign(n, derive_rng_stream(seed, "corruption-assign"))
    n_batches = max(1, n // cfg.batch_size) if n >= 2 else 0
    if n_batches == 0:
        raise ConfigError("need at least 2 samples to estimate the MMD term")
    tag = f"{scheme.value}{'-depthonly' if cfg.depth_only else ''}"

    history = TrainingLog()
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = derive_rng_stream(seed, "shuffle", epoch).permutation(n)
        sums = np.zeros(3)
        model.train()
        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size] if n_batches > 1 else order
            target = dataset.depth[idx]
            depth_in = corrupt_batch(target, idx, coverage, scheme, seed, epoch, dump_dir)
            if on_batch is not None:
                on_batch(idx, depth_in, target)
            prior = derive_rng_stream(seed, f"prior:{epoch}", b).standard_normal((len(idx), arch.latent_dim))
            parts = loss_total(
                model,
                torch.from_numpy(dataset.gray[idx]),
                torch.from_numpy(depth_in),
                torch.from_numpy(target),
                cfg.lam,
                prior=torch.from_numpy(prior.astype(np.float32)),
            )
            opt.zero_grad()
            parts.total.backward()
            opt.step()
            vals = (parts.rec.item(), parts.mmd.item(), parts.total.item())
            if not all(math.isfinite(v) for v in vals):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}: rec={vals[0]} mmd={vals[1]} total={vals[2]}"
                )
            sums += vals
        row = dict(zip(("rec", "mmd", "total"), (sums / n_batches).tolist()))
        row["epoch"] = epoch
        history.rows.append(row)
        log.info(
            "epoch %d rec %.5f mmd %.5f total %.5f (%.1f s)",
            epoch, row["rec"], row["mmd"], row["total"], time.perf_counter() - start,
        )
        if out is not None:
            history.write_csv(out / f"train_log_{tag}.csv")
            if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
                save_cmwae(model, out / f"cmwae_{tag}_epoch{epoch:03d}.safetensors", scheme.value, seed, epoch=epoch)
    if out is not None:
        save_cmwae(model, out / f"cmwae_{tag}.safetensors", scheme.value, seed, epoch=cfg.epochs)
    model.eval()
    return model, history
