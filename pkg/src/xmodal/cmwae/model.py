"""Dual-branch AlexNet-style encoder, shared projection, depth decoder."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from xmodal.config import ArchConfig
from xmodal.errors import ConfigError


class ConvBranch(nn.Sequential):
    """AlexNet feature stack on a single-channel image."""

    def __init__(self, arch: ArchConfig):
        c1, c2, c3, c4, c5 = arch.enc_channels
        layers = [
            nn.Conv2d(1, c1, arch.first_kernel, arch.first_stride, arch.first_padding),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, 2),
            nn.Conv2d(c1, c2, 5, padding=2),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, 2),
            nn.Conv2d(c2, c3, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c3, c4, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c4, c5, 3, padding=1),
            nn.ReLU(inplace=True),
        ]
        if arch.final_pool:
            layers.append(nn.MaxPool2d(3, 2))
        layers += [nn.AdaptiveAvgPool2d(arch.feature_grid), nn.Flatten()]
        super().__init__(*layers)
        self.out_features = c5 * arch.feature_grid**2


class DepthDecoder(nn.Module):
    """Dense to a base grid, four stride-2 transposed convs, resize, sigmoid."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        chans = list(arch.dec_channels) + [1]
        self.fc = nn.Linear(arch.latent_dim, chans[0] * arch.dec_base**2)
        layers: list[nn.Module] = []
        for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
            layers.append(nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1))
            if i < len(chans) - 2:
                layers.append(nn.ELU(inplace=True))
        self.deconv = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        a = self.arch
        x = F.elu(self.fc(z)).view(-1, a.dec_channels[0], a.dec_base, a.dec_base)
        x = self.deconv(x)
        if x.shape[-1] != a.image_size or x.shape[-2] != a.image_size:
            x = F.interpolate(x, size=(a.image_size, a.image_size), mode="bilinear", align_corners=False)
        return torch.sigmoid(x).squeeze(1)


def _as_image_batch(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(1) if x.dim() == 3 else x


class _EncoderMixin:
    arch: ArchConfig

    @property
    def image_size(self) -> int:
        return self.arch.image_size

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim

    def _check_images(self, *images: torch.Tensor) -> None:
        n = self.arch.image_size
        for img in images:
            if tuple(img.shape[-2:]) != (n, n):
                raise ConfigError(f"expected {n}x{n} images, got {tuple(img.shape[-2:])[0]}x{tuple(img.shape[-2:])[1]}")

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.arch.latent_dim:
            raise ConfigError(f"expected latent length {self.arch.latent_dim}, got {z.shape[-1]}")
        return self.dec_depth(z)

    def forward(self, gray: torch.Tensor, depth: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.encode(gray, depth)
        return self.decode(z), z

    @torch.no_grad()
    def encode_batch(self, gray: np.ndarray, depth: np.ndarray, chunk: int = 256) -> np.ndarray:
        """numpy in, numpy out; no autograd, eval mode."""
        was_training = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        out = []
        for i in range(0, len(depth), chunk):
            g = torch.as_tensor(np.asarray(gray[i : i + chunk]), dtype=dtype)
            d = torch.as_tensor(np.asarray(depth[i : i + chunk]), dtype=dtype)
            out.append(self.encode(g, d).numpy())
        self.train(was_training)
        if not out:
            return np.zeros((0, self.arch.latent_dim), dtype=np.float32)
        return np.concatenate(out)

    @torch.no_grad()
    def decode_batch(self, z: np.ndarray, chunk: int = 256) -> np.ndarray:
        was_training = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        z = np.asarray(z)
        out = [self.decode(torch.as_tensor(z[i : i + chunk], dtype=dtype)).numpy() for i in range(0, len(z), chunk)]
        self.train(was_training)
        if not out:
            return np.zeros((0, self.image_size, self.image_size), dtype=np.float32)
        return np.concatenate(out)


class CmwaeModel(_EncoderMixin, nn.Module):
    kind = "cmwae"

    def __init__(self, arch: ArchConfig | None = None):
        super().__init__()
        self.arch = arch or ArchConfig()
        self.enc_gray = ConvBranch(self.arch)
        self.enc_depth = ConvBranch(self.arch)
        feat = self.enc_gray.out_features
        self.proj_gray = nn.Linear(feat, self.arch.branch_width)
        self.proj_depth = nn.Linear(feat, self.arch.branch_width)
        self.proj_shared = nn.Linear(2 * self.arch.branch_width, self.arch.latent_dim)
        self.dec_depth = DepthDecoder(self.arch)

    def encode(self, gray: torch.Tensor, depth: torch.Tensor) -> torch.Tensor:
        self._check_images(gray, depth)
        hg = F.elu(self.proj_gray(self.enc_gray(_as_image_batch(gray))))
        hd = F.elu(self.proj_depth(self.enc_depth(_as_image_batch(depth))))
        return self.proj_shared(torch.cat([hg, hd], dim=1))


class DepthOnlyModel(_EncoderMixin, nn.Module):
    """Single-branch ablation: depth encoder, projection, depth decoder."""

    kind = "cmwae_depth_only"

    def __init__(self, arch: ArchConfig | None = None):
        super().__init__()
        self.arch = arch or ArchConfig()
        self.enc_depth = ConvBranch(self.arch)
        self.proj_depth = nn.Linear(self.enc_depth.out_features, self.arch.branch_width)
        self.proj_shared = nn.Linear(self.arch.branch_width, self.arch.latent_dim)
        self.dec_depth = DepthDecoder(self.arch)

    def encode_depth(self, depth: torch.Tensor) -> torch.Tensor:
        self._check_images(depth)
        return self.proj_shared(F.elu(self.proj_depth(self.enc_depth(_as_image_batch(depth)))))

    def encode(self, gray: torch.Tensor | None, depth: torch.Tensor) -> torch.Tensor:
        return self.encode_depth(depth)


def build_model(arch: ArchConfig, depth_only: bool = False) -> nn.Module:
    return DepthOnlyModel(arch) if depth_only else CmwaeModel(arch)


def freeze(model: nn.Module) -> nn.Module:
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


# ------------------------------------------------------------- pair-level API


def encode(model: CmwaeModel, pair) -> np.ndarray:
    """Latent vector of one ImagePair."""
    return model.encode_batch(pair.gray[None], pair.depth[None])[0]


def encode_depth_only(model: DepthOnlyModel, depth: np.ndarray) -> np.ndarray:
    return model.encode_batch(np.zeros_like(depth)[None], np.asarray(depth)[None])[0]


def decode_depth(model, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 1:
        raise ConfigError(f"expected a single latent vector, got shape {z.shape}")
    return model.decode_batch(z[None])[0]
