"""Room generation: four walls, a floor, floating box obstacles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xmodal.config import SimConfig

# (thickness, width, height) in metres
OBSTACLE_CATALOG: dict[str, tuple[float, float, float]] = {
    "panel": (0.1, 1.2, 3.0),
    "rod": (0.1, 0.1, 2.0),
    "plate_small": (0.1, 0.5, 0.5),
    "plate_large": (0.1, 1.0, 1.0),
}
SHAPES = tuple(OBSTACLE_CATALOG)
PANEL_ONLY_MAX_LEVEL = 5

ROOM_LENGTH = (10.0, 12.0)
ROOM_WIDTH = (5.0, 8.0)
ROOM_HEIGHT = (4.0, 6.0)
WALL_MARGIN = 0.5
START_FRACTION = 0.2
GOAL_FRACTION = 0.1
ALBEDO_RANGE = (0.2, 0.9)


@dataclass(frozen=True)
class Obstacle:
    shape: str
    center: np.ndarray
    yaw: float
    albedo: float

    @property
    def size(self) -> tuple[float, float, float]:
        return OBSTACLE_CATALOG[self.shape]

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.asarray(self.size)


@dataclass
class RoomSpec:
    length: float
    width: float
    height: float
    start: np.ndarray
    goal: np.ndarray
    start_yaw: float = 0.0
    obstacles: list[Obstacle] = field(default_factory=list)

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])


def box_distance(point: np.ndarray, center: np.ndarray, half: np.ndarray, yaw: float) -> float:
    """Euclidean distance from a point to a yawed box (0 inside)."""
    c, s = np.cos(yaw), np.sin(yaw)
    r = np.asarray(point, dtype=float) - center
    local = np.array([c * r[0] + s * r[1], -s * r[0] + c * r[1], r[2]])
    excess = np.maximum(np.abs(local) - half, 0.0)
    return float(np.sqrt(excess @ excess))


def _sample_obstacle(shape, length, width, height, rng):
    half = 0.5 * np.asarray(OBSTACLE_CATALOG[shape])
    yaw = rng.uniform(-np.pi, np.pi)
    c, s = abs(np.cos(yaw)), abs(np.sin(yaw))
    ext = np.array([c * half[0] + s * half[1], s * half[0] + c * half[1], half[2]])
    lo = WALL_MARGIN + ext
    hi = np.array([length, width, height]) - WALL_MARGIN - ext
    center = rng.uniform(lo, np.maximum(lo, hi))
    albedo = rng.uniform(*ALBEDO_RANGE)
    return Obstacle(shape, center, float(yaw), float(albedo))


def sample_room(level: int, rng: np.random.Generator, cfg: SimConfig | None = None, max_tries: int = 50) -> RoomSpec:
    """Random room with exactly ``level`` obstacles.

    Levels up to 5 use panels only; higher levels draw uniformly from the
    whole catalog. Obstacles are redrawn (up to ``max_tries``) when they come
    closer than ``obstacle_clearance`` to the start or goal.
    """
    if level < 0:
        raise ValueError("curriculum level must be >= 0")
    cfg = cfg or SimConfig()
    length = rng.uniform(*ROOM_LENGTH)
    width = rng.uniform(*ROOM_WIDTH)
    height = rng.uniform(*ROOM_HEIGHT)

    start = np.array(
        [
            rng.uniform(WALL_MARGIN, START_FRACTION * length),
            rng.uniform(1.0, width - 1.0),
            rng.uniform(1.0, height - 1.0),
        ]
    )
    goal = np.array(
        [
            rng.uniform((1.0 - GOAL_FRACTION) * length, length - WALL_MARGIN),
            rng.uniform(1.0, width - 1.0),
            rng.uniform(1.0, height - 1.0),
        ]
    )
    start_yaw = rng.uniform(-cfg.start_yaw_jitter, cfg.start_yaw_jitter) if cfg.start_yaw_jitter > 0 else 0.0

    obstacles = []
    for _ in range(level):
        shape = "panel" if level <= PANEL_ONLY_MAX_LEVEL else SHAPES[rng.integers(len(SHAPES))]
        for _ in range(max_tries):
            obs = _sample_obstacle(shape, length, width, height, rng)
            clear = min(
                box_distance(p, obs.center, obs.half_extents, obs.yaw) for p in (start, goal)
            )
            if clear >= cfg.obstacle_clearance:
                break
        obstacles.append(obs)
    return RoomSpec(length, width, height, start, goal, float(start_yaw), obstacles)


@dataclass
class RoomBatch:
    """Rooms packed into padded arrays for the batched kernels."""

    dims: np.ndarray  # (N, 3)
    centers: np.ndarray  # (N, B, 3)
    half: np.ndarray  # (N, B, 3)
    yaw_cs: np.ndarray  # (N, B, 2) cos, sin
    albedo: np.ndarray  # (N, B)
    count: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.dims.shape[0]


def pack_rooms(rooms: list[RoomSpec], max_boxes: int | None = None) -> RoomBatch:
    n = len(rooms)
    b = max([len(r.obstacles) for r in rooms] + [max_boxes or 0, 1])
    batch = RoomBatch(
        dims=np.array([r.dims for r in rooms], dtype=np.float64).reshape(n, 3),
        centers=np.zeros((n, b, 3)),
        half=np.zeros((n, b, 3)),
        yaw_cs=np.zeros((n, b, 2)),
        albedo=np.zeros((n, b)),
        count=np.zeros(n, dtype=np.int64),
    )
    for i, room in enumerate(rooms):
        set_room(batch, i, room)
    return batch


def set_room(batch: RoomBatch, i: int, room: RoomSpec) -> None:
    k = len(room.obstacles)
    if k > batch.centers.shape[1]:
        raise ValueError(f"room has {k} obstacles, batch holds at most {batch.centers.shape[1]}")
    batch.dims[i] = room.dims
    batch.count[i] = k
    for j, obs in enumerate(room.obstacles):
        batch.centers[i, j] = obs.center
        batch.half[i, j] = obs.half_extents
        batch.yaw_cs[i, j] = (np.cos(obs.yaw), np.sin(obs.yaw))
        batch.albedo[i, j] = obs.albedo
