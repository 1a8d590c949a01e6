"""Reconstruction quality under increasing depth corruption."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xmodal.corruption import apply_mask, eval_mask
from xmodal.errors import DatasetError
from xmodal.evalbench.metrics import batch_mse, batch_ssim
from xmodal.harness.rng import derive_rng_stream

RECON_LEVELS = (0.0, 0.2, 0.3, 0.4, 0.5)


@dataclass
class ReconReport:
    levels: tuple[float, ...]
    mse: dict[float, np.ndarray] = field(default_factory=dict)  # per image
    ssim: dict[float, np.ndarray] = field(default_factory=dict)
    coverage: dict[float, np.ndarray] = field(default_factory=dict)  # achieved

    def mean_mse(self, level: float) -> float:
        return float(np.mean(self.mse[level]))

    def mean_ssim(self, level: float) -> float:
        return float(np.mean(self.ssim[level]))

    def summary(self) -> list[tuple[float, float, float]]:
        return [(lv, self.mean_mse(lv), self.mean_ssim(lv)) for lv in self.levels]


def corrupt_for_eval(depth: np.ndarray, level: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Mask image ``i`` with stream ``(seed, eval-recon:<level>, i)``; returns (depth, coverage)."""
    out = np.array(depth, copy=True)
    cov = np.zeros(len(depth))
    if level <= 0:
        return out, cov
    h, w = depth.shape[-2:]
    for i in range(len(depth)):
        mask = eval_mask(h, w, level, derive_rng_stream(seed, f"eval-recon:{level:.4f}", i))
        out[i] = apply_mask(depth[i], mask)
        cov[i] = mask.achieved_coverage
    return out, cov


def eval_reconstruction(model, test_set, seed: int = 0, levels=RECON_LEVELS, chunk: int = 256) -> ReconReport:
    """Corrupt, encode (gray + corrupted depth), decode, and score against the clean depth.

    Metrics cover every pixel, corrupted ones included.
    """
    if len(test_set) == 0:
        raise DatasetError("test set is empty")
    gray, clean = test_set.gray, test_set.depth
    report = ReconReport(tuple(float(lv) for lv in levels))
    for level in report.levels:
        corrupted, cov = corrupt_for_eval(clean, level, seed)
        recon = model.decode_batch(model.encode_batch(gray, corrupted, chunk=chunk))
        report.mse[level] = batch_mse(recon, clean)
        report.ssim[level] = batch_ssim(recon, clean)
        report.coverage[level] = cov
    return report
