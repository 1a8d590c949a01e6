from xmodal.cmwae.checkpoint import load_cmwae, save_cmwae
from xmodal.cmwae.losses import CmwaeLossBreakdown, loss_mmd, loss_reconstruction, loss_total
from xmodal.cmwae.model import (
    CmwaeModel,
    DepthOnlyModel,
    build_model,
    decode_depth,
    encode,
    encode_depth_only,
    freeze,
)
from xmodal.cmwae.pair import ImagePair
from xmodal.cmwae.train import train_cmwae

__all__ = [
    "CmwaeLossBreakdown",
    "CmwaeModel",
    "DepthOnlyModel",
    "ImagePair",
    "build_model",
    "decode_depth",
    "encode",
    "encode_depth_only",
    "freeze",
    "load_cmwae",
    "loss_mmd",
    "loss_reconstruction",
    "loss_total",
    "save_cmwae",
    "train_cmwae",
]
