"""Reconstruction and MMD losses.

Both accept numpy arrays (returning floats) or torch tensors (returning
differentiable scalars).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from xmodal.errors import ConfigError

PRIOR_VARIANCE = 1.0


def loss_reconstruction(pred, target):
    """Mean squared error over every pixel."""
    if tuple(pred.shape) != tuple(target.shape):
        raise ConfigError(f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    if isinstance(pred, torch.Tensor):
        return ((pred - target) ** 2).mean()
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff))


def _sq_dists(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    xx = (x * x).sum(1, keepdim=True)
    yy = (y * y).sum(1, keepdim=True)
    return (xx + yy.T - 2.0 * x @ y.T).clamp_min(0.0)


def imq_kernel(x: torch.Tensor, y: torch.Tensor, scale: float) -> torch.Tensor:
    return scale / (scale + _sq_dists(x, y))


def mmd_imq(x: torch.Tensor, y: torch.Tensor, prior_variance: float = PRIOR_VARIANCE) -> torch.Tensor:
    """Biased (V-statistic) MMD^2 with an inverse multiquadratic kernel."""
    c = 2.0 * x.shape[1] * prior_variance
    return imq_kernel(x, x, c).mean() + imq_kernel(y, y, c).mean() - 2.0 * imq_kernel(x, y, c).mean()


def loss_mmd(batch_z, rng: np.random.Generator | None = None, prior=None):
    """MMD^2 between latents and a fresh standard-normal sample of equal size.

    ``prior`` overrides the draw from ``rng`` (used by tests).
    """
    if batch_z.shape[0] < 2:
        raise ConfigError("MMD needs a batch of at least 2 latents")
    as_numpy = not isinstance(batch_z, torch.Tensor)
    z = torch.as_tensor(np.asarray(batch_z, dtype=np.float64)) if as_numpy else batch_z
    if prior is None:
        if rng is None:
            raise ConfigError("loss_mmd needs an rng or an explicit prior sample")
        prior = rng.standard_normal(tuple(z.shape))
    p = torch.as_tensor(np.asarray(prior) if not isinstance(prior, torch.Tensor) else prior, dtype=z.dtype)
    if p.shape != z.shape:
        raise ConfigError(f"prior sample shape {tuple(p.shape)} != latent batch shape {tuple(z.shape)}")
    out = mmd_imq(z, p)
    return float(out) if as_numpy else out


@dataclass
class CmwaeLossBreakdown:
    rec: torch.Tensor
    mmd: torch.Tensor
    total: torch.Tensor
    lam: float


def loss_total(model, gray, depth_corrupted, target_depth, lam: float, rng=None, prior=None) -> CmwaeLossBreakdown:
    """rec(decode(encode(gray, corrupted depth)), clean depth) + lam * mmd."""
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    recon, z = model(gray, depth_corrupted)
    rec = loss_reconstruction(recon, target_depth)
    mmd = loss_mmd(z, rng=rng, prior=prior)
    return CmwaeLossBreakdown(rec, mmd, rec + lam * mmd, lam)
