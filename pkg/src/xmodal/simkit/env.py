"""Batched navigation environments with per-env random streams."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from xmodal.config import RewardConfig, SimConfig
from xmodal.harness.rng import derive_rng_stream
from xmodal.policy.actions import action_to_command, clip_action
from xmodal.policy.reward import RewardBreakdown, compute_reward
from xmodal.simkit.camera import Camera, sample_perturbation
from xmodal.simkit.dynamics import RobotState, check_collision, disturb_from_uniforms, step
from xmodal.simkit.room import RoomBatch, RoomSpec, pack_rooms, sample_room, set_room


class Outcome(enum.IntEnum):
    RUNNING = 0
    SUCCESS = 1
    CRASH = 2
    TIMEOUT = 3


@dataclass
class StepResult:
    reward: np.ndarray
    breakdown: RewardBreakdown
    terminal: np.ndarray  # episode ended with no future (crash, or success when it terminates)
    truncated: np.ndarray  # clock ran out
    outcome: np.ndarray  # Outcome per env, RUNNING while the episode continues

    @property
    def done(self) -> np.ndarray:
        return self.terminal | self.truncated


class BatchNavEnv:
    """``num_envs`` independent rooms stepped in lockstep.

    Every episode of env ``i`` draws its room, camera perturbation and
    disturbances from the stream ``(seed, f"{label}:{i}", episode)``, so the
    sequence of rooms an env sees does not depend on the others.

    With ``terminate_on_success`` false the episode keeps running after the
    goal is reached and the outcome is Success if it was reached at any step.
    The caller resets finished envs with :meth:`reset`.
    """

    def __init__(
        self,
        num_envs: int,
        sim: SimConfig | None = None,
        reward: RewardConfig | None = None,
        seed: int = 0,
        level: int = 0,
        label: str = "env",
        terminate_on_success: bool = True,
        size: int | None = None,
        backend: str | None = None,
        rooms: list[RoomSpec] | None = None,
    ):
        if num_envs < 1:
            raise ValueError("num_envs must be >= 1")
        self.sim = sim or SimConfig()
        self.reward_cfg = reward or RewardConfig()
        self.seed = seed
        self.label = label
        self.level = level
        self.terminate_on_success = terminate_on_success
        self.backend = backend
        self.camera = Camera(self.sim, size)
        self.num_envs = num_envs
        self.episode_index = np.full(num_envs, -1, dtype=np.int64)
        self.rooms: list[RoomSpec] = [None] * num_envs  # type: ignore[list-item]
        self.streams: list[np.random.Generator] = [None] * num_envs  # type: ignore[list-item]
        self.perturbation = np.zeros((num_envs, 6))
        self.state = RobotState.at_rest(np.zeros((num_envs, 3)))
        self.goal = np.zeros((num_envs, 3))
        self.initial_dist = np.ones(num_envs)
        self.prev_dist = np.ones(num_envs)
        self.a_prev = np.zeros((num_envs, 3))
        self.t = np.zeros(num_envs, dtype=np.int64)
        self.reached = np.zeros(num_envs, dtype=bool)
        self.path_length = np.zeros(num_envs)
        self.episode_return = np.zeros(num_envs)
        self.batch = None
        self.reset(np.arange(num_envs), rooms)

    def set_level(self, level: int) -> None:
        """Applies to episodes started after this call."""
        if level < 0:
            raise ValueError("curriculum level must be >= 0")
        self.level = level

    def _load_room(self, i: int, room: RoomSpec) -> None:
        capacity = 0 if self.batch is None else self.batch.centers.shape[1]
        if self.batch is None or len(room.obstacles) > capacity:
            rooms = [r if r is not None else room for r in self.rooms]
            rooms[i] = room
            self.batch = pack_rooms(rooms, max(capacity, len(room.obstacles)))
        else:
            set_room(self.batch, i, room)
        self.rooms[i] = room

    def reset(
        self, idx, rooms: list[RoomSpec] | None = None, streams: list[np.random.Generator] | None = None
    ) -> None:
        """Start a new episode in each env of ``idx``.

        ``rooms`` and ``streams`` replace the sampled room and the derived
        per-episode generator, one entry per index.
        """
        idx = np.flatnonzero(idx) if np.asarray(idx).dtype == bool else np.asarray(idx, dtype=np.int64)
        for k, i in enumerate(idx):
            self.episode_index[i] += 1
            if streams is not None:
                rng = streams[k]
            else:
                rng = derive_rng_stream(self.seed, f"{self.label}:{i}", int(self.episode_index[i]))
            room = rooms[k] if rooms is not None else sample_room(self.level, rng, self.sim)
            self.streams[i] = rng
            self._load_room(i, room)
            self.perturbation[i] = sample_perturbation(rng, 1, self.sim)[0]
            self.state.assign([i], RobotState.at_rest(room.start, room.start_yaw))
            self.goal[i] = room.goal
            d = float(np.linalg.norm(room.goal - room.start))
            self.initial_dist[i] = max(d, 1e-6)
            self.prev_dist[i] = d
            self.reached[i] = d <= self.sim.success_radius
        self.a_prev[idx] = 0.0
        self.t[idx] = 0
        self.path_length[idx] = 0.0
        self.episode_return[idx] = 0.0

    def render(self, idx=None) -> tuple[np.ndarray, np.ndarray]:
        """Depth and gray frames (float32) for all envs or the subset ``idx``."""
        if idx is None:
            depth, gray, _ = self.camera.render_batch(self.batch, self.state, self.perturbation, self.backend)
            return depth, gray
        idx = np.asarray(idx)
        sub = _take_rooms(self.batch, idx)
        depth, gray, _ = self.camera.render_batch(sub, self.state.take(idx), self.perturbation[idx], self.backend)
        return depth, gray

    def step(self, action: np.ndarray) -> StepResult:
        a = clip_action(np.asarray(action, dtype=np.float64).reshape(self.num_envs, 3))
        before = self.state.position.copy()
        state = step(self.state, action_to_command(a), self.sim.dt, self.sim)
        u = np.stack([rng.random(5) for rng in self.streams])
        state, _ = disturb_from_uniforms(state, u, self.sim)
        self.state = state
        self.t += 1
        self.path_length += np.linalg.norm(state.position - before, axis=1)

        crashed = check_collision(self.batch, state.position, self.sim.robot_radius)
        dist = np.linalg.norm(self.goal - state.position, axis=1)
        breakdown = compute_reward(self.prev_dist, dist, self.initial_dist, a, self.a_prev, crashed, self.reward_cfg)
        at_goal = (dist <= self.sim.success_radius) & ~crashed
        self.reached |= at_goal
        self.prev_dist = dist
        self.a_prev = a
        self.episode_return += breakdown.total

        terminal = crashed | (at_goal if self.terminate_on_success else False)
        truncated = ~terminal & (self.t >= self.sim.max_steps)
        outcome = np.full(self.num_envs, Outcome.RUNNING, dtype=np.int64)
        over = terminal | truncated
        outcome[over & ~self.reached & crashed] = Outcome.CRASH
        outcome[over & ~self.reached & ~crashed] = Outcome.TIMEOUT
        outcome[over & self.reached] = Outcome.SUCCESS
        if self.terminate_on_success:
            outcome[over & crashed] = Outcome.CRASH
        return StepResult(breakdown.total, breakdown, terminal, truncated, outcome)


def _take_rooms(batch: RoomBatch, idx) -> RoomBatch:
    return RoomBatch(batch.dims[idx], batch.centers[idx], batch.half[idx], batch.yaw_cs[idx], batch.albedo[idx], batch.count[idx])
