from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xmodal.errors import ConfigError


@dataclass(frozen=True)
class ImagePair:
    """Registered grayscale and depth frames, both normalised to [0, 1]."""

    gray: np.ndarray
    depth: np.ndarray
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.gray.shape != self.depth.shape or self.gray.ndim != 2:
            raise ConfigError(f"gray {self.gray.shape} and depth {self.depth.shape} must be equal 2-D shapes")
        if self.valid_mask is None:
            object.__setattr__(self, "valid_mask", self.depth > 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.gray.shape

    def check(self) -> None:
        """Raise if a value-range or validity invariant is violated."""
        for name, arr in (("gray", self.gray), ("depth", self.depth)):
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ConfigError(f"{name} values must lie in [0, 1]")
        if np.any(self.depth[~self.valid_mask] != 0):
            raise ConfigError("invalid depth pixels must be exactly 0")
