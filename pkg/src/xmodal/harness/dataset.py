"""Paired grayscale/depth datasets on disk.

Layout: ``gray_NNNNNN.png`` (8-bit, or colour converted by luminance) and
``depth_NNNNNN.png`` (16-bit unsigned millimetres, 0 = invalid), optionally
listed in ``manifest.csv`` with columns ``gray_path,depth_path``.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from xmodal.cmwae.pair import ImagePair
from xmodal.config import DatasetConfig, SimConfig
from xmodal.errors import DatasetError
from xmodal.harness.rng import derive_rng_stream
from xmodal.simkit.camera import HIT_ROOM, Camera
from xmodal.simkit.dynamics import RobotState
from xmodal.simkit.room import WALL_MARGIN, RoomSpec, box_distance, sample_room

LUMA = np.array([0.299, 0.587, 0.114])
MANIFEST = "manifest.csv"
_PAIR_RE = re.compile(r"^(gray|depth)_(\d+)\.[A-Za-z0-9]+$")


@dataclass
class PairedDataset:
    gray: np.ndarray  # (N, H, W) float32 in [0, 1]
    depth: np.ndarray  # (N, H, W) float32 in [0, 1]
    entries: list[tuple[str, str]]
    root: Path | None = None

    def __len__(self) -> int:
        return self.gray.shape[0]

    @property
    def image_size(self) -> int:
        return self.gray.shape[-1]

    def pair(self, i: int) -> ImagePair:
        return ImagePair(self.gray[i], self.depth[i])

    def subset(self, idx) -> "PairedDataset":
        idx = np.asarray(idx)
        return PairedDataset(self.gray[idx], self.depth[idx], [self.entries[i] for i in idx], self.root)


def gray_to_unit(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    x = arr.astype(np.float64) / scale
    if x.ndim == 3:
        x = x[..., :3] @ LUMA
    return x.astype(np.float32)


def depth_mm_to_unit(mm: np.ndarray, d_max: float = 10.0) -> np.ndarray:
    cap = d_max * 1000.0
    return (np.minimum(mm.astype(np.float64), cap) / cap).astype(np.float32)


def unit_to_depth_mm(depth: np.ndarray, d_max: float = 10.0) -> np.ndarray:
    return np.rint(np.asarray(depth, dtype=np.float64) * d_max * 1000.0).astype(np.uint16)


def unit_to_gray_u8(gray: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(gray, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def _read(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode in ("P", "LA", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            return np.array(im)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc


def _resize(arr: np.ndarray, size: int, resample) -> np.ndarray:
    if arr.shape[:2] == (size, size):
        return arr
    mode = "F" if arr.dtype.kind == "f" else None
    im = Image.fromarray(arr.astype(np.float32) if mode else arr, mode=mode)
    return np.array(im.resize((size, size), resample=resample))


def _list_entries(root: Path) -> list[tuple[str, str]]:
    manifest = root / MANIFEST
    if manifest.exists():
        with manifest.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and not {"gray_path", "depth_path"} <= set(rows[0]):
            raise DatasetError(f"{manifest} must have gray_path and depth_path columns")
        return sorted((r["gray_path"], r["depth_path"]) for r in rows)
    found: dict[str, dict[str, str]] = {}
    for p in root.iterdir():
        m = _PAIR_RE.match(p.name)
        if m:
            found.setdefault(m.group(2), {})[m.group(1)] = p.name
    entries = []
    for key in sorted(found):
        item = found[key]
        missing = {"gray", "depth"} - set(item)
        if missing:
            present = next(iter(item.values()))
            raise DatasetError(f"{root / present}: missing {missing.pop()} counterpart")
        entries.append((item["gray"], item["depth"]))
    return entries


def ingest_dataset(root: str | Path, d_max: float = 10.0, image_size: int | None = None) -> PairedDataset:
    """Load every pair under ``root`` in lexicographic order.

    Colour frames are converted to gray with Rec. 601 luma weights; depth is
    read as millimetres, clamped to ``d_max`` and scaled to [0, 1].
    ``image_size`` resizes (bilinear gray, nearest depth) when given.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    entries = _list_entries(root)
    if not entries:
        raise DatasetError(f"no image pairs found in {root}")
    grays, depths = [], []
    for g_name, d_name in entries:
        g_path, d_path = root / g_name, root / d_name
        for p in (g_path, d_path):
            if not p.exists():
                raise DatasetError(f"{p}: file listed in dataset does not exist")
        g = _read(g_path)
        d = _read(d_path)
        if d.ndim != 2:
            raise DatasetError(f"{d_path}: depth must be single-channel, got shape {d.shape}")
        if g.shape[:2] != d.shape:
            raise DatasetError(f"{g_path} {g.shape[:2]} and {d_path} {d.shape} differ in resolution")
        if np.any(d < 0):
            raise DatasetError(f"{d_path}: negative depth values")
        gray = gray_to_unit(g)
        depth = depth_mm_to_unit(d, d_max)
        if image_size is not None:
            gray = _resize(gray, image_size, Image.BILINEAR)
            depth = _resize(depth, image_size, Image.NEAREST)
        grays.append(gray)
        depths.append(depth)
    shapes = {g.shape for g in grays}
    if len(shapes) != 1:
        raise DatasetError(f"{root}: pairs have differing resolutions {sorted(shapes)}")
    return PairedDataset(np.stack(grays), np.stack(depths), entries, root)


def write_pair(root: Path, index: int, gray: np.ndarray, depth: np.ndarray, d_max: float = 10.0) -> tuple[str, str]:
    g_name, d_name = f"gray_{index:06d}.png", f"depth_{index:06d}.png"
    Image.fromarray(unit_to_gray_u8(gray), mode="L").save(root / g_name)
    Image.fromarray(unit_to_depth_mm(depth, d_max)).save(root / d_name)
    return g_name, d_name


def write_manifest(root: Path, entries: list[tuple[str, str]]) -> None:
    with (root / MANIFEST).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gray_path", "depth_path"])
        w.writerows(entries)


def write_dataset(ds: PairedDataset, root: str | Path, d_max: float = 10.0) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = [write_pair(root, i, ds.gray[i], ds.depth[i], d_max) for i in range(len(ds))]
    write_manifest(root, entries)


# ------------------------------------------------------------ synthetic frames


def _inside_free_space(room: RoomSpec, p: np.ndarray, clearance: float) -> bool:
    if np.any(p[:2] < clearance) or p[0] > room.length - clearance or p[1] > room.width - clearance:
        return False
    if p[2] < clearance or p[2] > room.height - clearance:
        return False
    return all(box_distance(p, o.center, o.half_extents, o.yaw) > clearance for o in room.obstacles)


def _near_obstacle(depth, ids, d_max, near_range) -> bool:
    return bool(np.any((ids > HIT_ROOM) & (depth > 0) & (depth * d_max < near_range)))


def synthetic_frame(index: int, aimed: bool, seed: int, sim: SimConfig, ds: DatasetConfig, camera: Camera):
    """Render one frame; aimed frames look at an obstacle within ``near_range``."""
    rng = derive_rng_stream(seed, "dataset", index)
    lo = 1 if aimed and ds.max_obstacles > 0 else 0
    level = int(rng.integers(lo, ds.max_obstacles + 1))
    room = sample_room(level, rng, sim)
    for _ in range(200):
        if aimed and room.obstacles:
            target = room.obstacles[rng.integers(len(room.obstacles))]
            heading = rng.uniform(-np.pi, np.pi)
            dist = rng.uniform(1.0, 0.8 * ds.near_range)
            pos = target.center + dist * np.array([np.cos(heading), np.sin(heading), 0.0])
            pos[2] = rng.uniform(1.0, room.height - 1.0)
            yaw = heading + np.pi + rng.uniform(-0.3, 0.3)
        else:
            pos = rng.uniform([WALL_MARGIN] * 3, room.dims - WALL_MARGIN)
            yaw = rng.uniform(-np.pi, np.pi)
        if not _inside_free_space(room, pos, 0.35):
            continue
        state = RobotState.at_rest(pos, yaw)
        frame = camera.render(room, state)
        if not aimed or _near_obstacle(frame.depth, frame.hit_id, sim.d_max, ds.near_range):
            return frame
    raise RuntimeError(f"could not place a camera for synthetic frame {index}")


def generate_synthetic_dataset(
    n: int,
    out_dir: str | Path,
    seed: int,
    sim: SimConfig | None = None,
    ds: DatasetConfig | None = None,
    image_size: int | None = None,
) -> PairedDataset:
    """Render ``n`` random-room frames to ``out_dir`` and ingest them back.

    A fixed quota (``near_obstacle_fraction``) of frames is constructed to
    show an obstacle closer than ``near_range``.
    """
    sim = sim or SimConfig()
    ds = ds or DatasetConfig()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    camera = Camera(sim, image_size or sim.render_size)
    n_aimed = math.ceil(ds.near_obstacle_fraction * n) if ds.max_obstacles > 0 else 0
    aimed = np.zeros(n, dtype=bool)
    aimed[derive_rng_stream(seed, "dataset-aim").permutation(n)[:n_aimed]] = True
    entries = []
    for i in range(n):
        frame = synthetic_frame(i, bool(aimed[i]), seed, sim, ds, camera)
        entries.append(write_pair(root, i, frame.gray, frame.depth, sim.d_max))
    write_manifest(root, entries)
    return ingest_dataset(root, sim.d_max)
