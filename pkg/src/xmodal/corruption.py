"""Seeded square-patch depth dropout.

Patch sides are in pixels. The dataset schemes S1/S2 state theirs for a
224x224 image and rescale them for other resolutions (see
:meth:`CorruptionSpec.scaled`); policy-training and evaluation masks do not.
Sides larger than the frame are clamped. Coverage is always the union of
corrupted pixels.
"""

from __future__ import annotations

import base64
import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xmodal._accel import njit, select
from xmodal.errors import ConfigError

REFERENCE_SIZE = 224
INVALID_DEPTH = 0.0

# scheme 1 histogram: (coverage, percent of dataset); the 50% bucket absorbs rounding
S1_BUCKETS = ((0.25, 5), (0.30, 10), (0.35, 15), (0.40, 20), (0.45, 20), (0.50, 30))
S1_SIDES = (50, 100)
S2_SIDE = 100
S2_COVERAGE = (0.20, 0.50)
POLICY_TRAIN_SIDES = (1, 30)
POLICY_TRAIN_COVERAGE = 0.5
EVAL_SIDES = (1, 50)

_CHUNK = 64


class CorruptionKind(str, enum.Enum):
    S1 = "s1"
    S2 = "s2"
    POLICY_TRAIN = "policy_train"
    EVAL = "eval"


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    target_coverage: float
    patch_side_min: int
    patch_side_max: int
    fixed_side: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.target_coverage <= 1.0:
            raise ConfigError(f"target_coverage must lie in [0, 1], got {self.target_coverage}")
        if self.fixed_side is not None:
            if self.fixed_side < 1:
                raise ConfigError(f"fixed_side must be >= 1, got {self.fixed_side}")
        elif not 1 <= self.patch_side_min <= self.patch_side_max:
            raise ConfigError(
                f"need 1 <= patch_side_min <= patch_side_max, got {self.patch_side_min}, {self.patch_side_max}"
            )

    @property
    def side_range(self) -> tuple[int, int]:
        if self.fixed_side is not None:
            return self.fixed_side, self.fixed_side
        return self.patch_side_min, self.patch_side_max

    def scaled(self, image_size: int) -> "CorruptionSpec":
        """Rescale patch sides from the 224-pixel reference to ``image_size``.

        Used by the dataset schemes, whose 50-100 px patches do not fit a
        64 px frame.
        """
        if image_size == REFERENCE_SIZE:
            return self
        f = image_size / REFERENCE_SIZE
        lo = max(1, round(self.patch_side_min * f))
        hi = max(lo, round(self.patch_side_max * f))
        fixed = None if self.fixed_side is None else max(1, round(self.fixed_side * f))
        return CorruptionSpec(self.kind, self.target_coverage, lo, hi, fixed)


def s1_spec(coverage: float) -> CorruptionSpec:
    return CorruptionSpec(CorruptionKind.S1, coverage, *S1_SIDES)


def s2_spec(coverage: float) -> CorruptionSpec:
    return CorruptionSpec(CorruptionKind.S2, coverage, S2_SIDE, S2_SIDE, fixed_side=S2_SIDE)


def policy_train_spec() -> CorruptionSpec:
    return CorruptionSpec(CorruptionKind.POLICY_TRAIN, POLICY_TRAIN_COVERAGE, *POLICY_TRAIN_SIDES)


def eval_spec(coverage: float) -> CorruptionSpec:
    return CorruptionSpec(CorruptionKind.EVAL, coverage, *EVAL_SIDES)


@dataclass
class CorruptionMask:
    mask: np.ndarray
    patches: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def achieved_coverage(self) -> float:
        return int(self.mask.sum()) / self.mask.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @classmethod
    def empty(cls, height: int, width: int) -> "CorruptionMask":
        return cls(np.zeros((height, width), dtype=bool), [])

    def to_json(self) -> str:
        return json.dumps(
            {
                "height": self.mask.shape[0],
                "width": self.mask.shape[1],
                "achieved_coverage": self.achieved_coverage,
                "rle": base64.b64encode(encode_rle(self.mask)).decode("ascii"),
                "patches": [list(p) for p in self.patches],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CorruptionMask":
        d = json.loads(text)
        mask = decode_rle(base64.b64decode(d["rle"]))
        return cls(mask, [tuple(p) for p in d["patches"]])


def pixels_needed(target_coverage: float, n_pixels: int) -> int:
    """Smallest pixel count whose fraction of ``n_pixels`` reaches the target."""
    n = min(n_pixels, math.ceil(target_coverage * n_pixels))
    while n > 0 and (n - 1) / n_pixels >= target_coverage:
        n -= 1
    while n < n_pixels and n / n_pixels < target_coverage:
        n += 1
    return n


@njit
def _accumulate_numba(mask, rows, cols, sides, covered, needed):
    for k in range(rows.shape[0]):
        if covered >= needed:
            return k, covered
        r = rows[k]
        c = cols[k]
        s = sides[k]
        for i in range(r, r + s):
            for j in range(c, c + s):
                if not mask[i, j]:
                    mask[i, j] = True
                    covered += 1
    return rows.shape[0], covered


def _accumulate_numpy(mask, rows, cols, sides, covered, needed):
    for k in range(rows.shape[0]):
        if covered >= needed:
            return k, covered
        r, c, s = int(rows[k]), int(cols[k]), int(sides[k])
        block = mask[r : r + s, c : c + s]
        covered += s * s - int(np.count_nonzero(block))
        block[...] = True
    return rows.shape[0], covered


def make_mask(
    spec: CorruptionSpec, height: int, width: int, rng: np.random.Generator, backend: str | None = None
) -> CorruptionMask:
    """Drop square patches at uniform positions until the union reaches the target.

    Sides are clamped to the image; each patch lies fully inside the frame.
    """
    if not 0.0 <= spec.target_coverage <= 1.0:
        raise ConfigError(f"target_coverage must lie in [0, 1], got {spec.target_coverage}")
    n_pix = height * width
    needed = pixels_needed(spec.target_coverage, n_pix)
    mask = np.zeros((height, width), dtype=bool)
    if needed == 0:
        return CorruptionMask(mask, [])
    lo, hi = spec.side_range
    cap = min(height, width)
    accumulate = select(_accumulate_numba, _accumulate_numpy, backend)
    patches: list[tuple[int, int, int]] = []
    covered = 0
    while covered < needed:
        sides = np.minimum(rng.integers(lo, hi + 1, size=_CHUNK), cap).astype(np.int64)
        rows = rng.integers(0, height - sides + 1).astype(np.int64)
        cols = rng.integers(0, width - sides + 1).astype(np.int64)
        used, covered = accumulate(mask, rows, cols, sides, covered, needed)
        patches.extend(zip(rows[:used].tolist(), cols[:used].tolist(), sides[:used].tolist()))
    return CorruptionMask(mask, patches)


def apply_mask(depth: np.ndarray, mask: CorruptionMask | np.ndarray) -> np.ndarray:
    """Copy of ``depth`` with masked pixels set to the invalid sentinel."""
    m = mask.mask if isinstance(mask, CorruptionMask) else mask
    if m.shape != depth.shape[-2:]:
        raise ConfigError(f"mask shape {m.shape} does not match depth shape {depth.shape}")
    out = depth.copy()
    out[..., m] = INVALID_DEPTH
    return out


def policy_train_mask(height: int, width: int, rng: np.random.Generator, backend: str | None = None) -> CorruptionMask:
    # sides stay in pixels at every resolution; only the dataset schemes rescale
    return make_mask(policy_train_spec(), height, width, rng, backend)


def eval_mask(
    height: int, width: int, target_coverage: float, rng: np.random.Generator, backend: str | None = None
) -> CorruptionMask:
    return make_mask(eval_spec(target_coverage), height, width, rng, backend)


# ---------------------------------------------------------------- dataset schemes


def assign_s1_levels(dataset_size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-index coverage for scheme 1 (every image corrupted, 25%..50%)."""
    if dataset_size < 1:
        raise ConfigError("dataset_size must be >= 1")
    perm = rng.permutation(dataset_size)
    counts = [dataset_size * pct // 100 for _, pct in S1_BUCKETS[:-1]]
    counts.append(dataset_size - sum(counts))
    coverage = np.empty(dataset_size, dtype=np.float64)
    start = 0
    for (level, _), n in zip(S1_BUCKETS, counts):
        coverage[perm[start : start + n]] = level
        start += n
    return coverage


def assign_s2_levels(dataset_size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-index coverage for scheme 2; 0 marks a pristine image."""
    if dataset_size < 1:
        raise ConfigError("dataset_size must be >= 1")
    perm = rng.permutation(dataset_size)
    n_clean = math.ceil(dataset_size / 2)
    coverage = np.zeros(dataset_size, dtype=np.float64)
    corrupted = perm[n_clean:]
    coverage[corrupted] = rng.uniform(*S2_COVERAGE, size=corrupted.size)
    return coverage


class CorruptionScheme(str, enum.Enum):
    NONE = "none"
    S1 = "s1"
    S2 = "s2"

    def assign(self, dataset_size: int, rng: np.random.Generator) -> np.ndarray:
        if self is CorruptionScheme.S1:
            return assign_s1_levels(dataset_size, rng)
        if self is CorruptionScheme.S2:
            return assign_s2_levels(dataset_size, rng)
        if dataset_size < 1:
            raise ConfigError("dataset_size must be >= 1")
        return np.zeros(dataset_size, dtype=np.float64)

    def spec(self, coverage: float, image_size: int) -> CorruptionSpec:
        if self is CorruptionScheme.S1:
            return s1_spec(coverage).scaled(image_size)
        if self is CorruptionScheme.S2:
            return s2_spec(coverage).scaled(image_size)
        raise ConfigError("scheme 'none' has no corruption spec")


# ---------------------------------------------------------------- serialization


def encode_rle(mask: np.ndarray) -> bytes:
    """Row-major run lengths, alternating starting with unset pixels."""
    flat = np.asarray(mask, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat.size and flat[0]:
        runs = np.concatenate(([0], runs))
    h, w = mask.shape
    return struct.pack("<II", h, w) + runs.astype("<u4").tobytes()


def decode_rle(blob: bytes) -> np.ndarray:
    h, w = struct.unpack_from("<II", blob)
    runs = np.frombuffer(blob, dtype="<u4", offset=8)
    values = np.arange(runs.size) % 2 == 1
    return np.repeat(values, runs).reshape(h, w)


def dump_mask(mask: CorruptionMask, out_dir: str | Path, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(mask.to_json())
    return path
