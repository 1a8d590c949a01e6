"""Self-describing checkpoints: a JSON header plus named float tensors (safetensors)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch
from safetensors import safe_open
from safetensors.numpy import save_file

from xmodal.config import ArchConfig
from xmodal.cmwae.model import CmwaeModel, DepthOnlyModel
from xmodal.errors import ConfigError

FORMAT_VERSION = "1"


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # a single metadata key: safetensors does not preserve key order, and
    # checkpoints must be byte-identical across runs
    meta = {"xmodal": json.dumps({**header, "format_version": FORMAT_VERSION}, sort_keys=True)}
    tmp = path.with_name(path.name + ".tmp")
    save_file({k: np.ascontiguousarray(tensors[k]) for k in sorted(tensors)}, str(tmp), metadata=meta)
    tmp.replace(path)
    return path


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with safe_open(str(path), framework="numpy") as fh:
        meta = fh.metadata() or {}
        tensors = {k: fh.get_tensor(k) for k in fh.keys()}
    header = json.loads(meta.get("xmodal", "{}"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format {header.get('format_version')!r}")
    return tensors, header


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_cmwae(model, path: str | Path, scheme: str, master_seed: int, **extra) -> Path:
    header = {
        "kind": model.kind,
        "arch": model.arch.model_dump(mode="json"),
        "latent_dim": model.arch.latent_dim,
        "scheme": scheme,
        "master_seed": master_seed,
        **extra,
    }
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return save_tensors(path, tensors, header)


def load_cmwae(path: str | Path):
    """Rebuild a model from its checkpoint; returns (model, header)."""
    tensors, header = load_tensors(path)
    arch = ArchConfig.model_validate(header["arch"])
    cls = DepthOnlyModel if header["kind"] == DepthOnlyModel.kind else CmwaeModel
    model = cls(arch)
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    model.eval()
    return model, header
