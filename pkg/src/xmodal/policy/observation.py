"""Policy observation: goal direction/distance, attitude, rates, latent, last action."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xmodal.corruption import CorruptionMask, apply_mask
from xmodal.errors import ConfigError
from xmodal.simkit.dynamics import RobotState, world_to_yaw_frame

STATE_DIM = 12  # n_hat 3, n_dist 1, pitch/roll 2, v 3, omega 3
ACTION_DIM = 3
AT_GOAL_EPS = 1e-6


def observation_dim(latent_dim: int) -> int:
    return STATE_DIM + latent_dim + ACTION_DIM


@dataclass
class Observation:
    n_hat: np.ndarray
    n_dist: float
    pitch: float
    roll: float
    v: np.ndarray
    omega: np.ndarray
    z: np.ndarray
    a_prev: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.n_hat, [self.n_dist, self.pitch, self.roll], self.v, self.omega, self.z, self.a_prev]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray, latent_dim: int) -> "Observation":
        z_end = STATE_DIM + latent_dim
        return cls(vec[0:3], float(vec[3]), float(vec[4]), float(vec[5]), vec[6:9], vec[9:12], vec[12:z_end], vec[z_end:])


def goal_geometry(state: RobotState, goal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit goal direction in the vehicle frame and the goal distance."""
    rel = world_to_yaw_frame(np.atleast_2d(goal) - state.position, state.yaw)
    dist = np.linalg.norm(rel, axis=-1)
    safe = np.where(dist < AT_GOAL_EPS, 1.0, dist)
    n_hat = np.where((dist < AT_GOAL_EPS)[:, None], 0.0, rel / safe[:, None])
    return n_hat, dist


def observation_batch(state: RobotState, goal: np.ndarray, z: np.ndarray, a_prev: np.ndarray) -> np.ndarray:
    """(N, 15 + L) observation matrix."""
    n_hat, dist = goal_geometry(state, goal)
    n = len(state)
    omega = np.zeros((n, 3))
    omega[:, 2] = state.yaw_rate
    return np.concatenate(
        [
            n_hat,
            dist[:, None],
            state.pitch[:, None],
            state.roll[:, None],
            state.body_velocity(),
            omega,
            np.asarray(z, dtype=np.float64).reshape(n, -1),
            np.asarray(a_prev, dtype=np.float64).reshape(n, 3),
        ],
        axis=1,
    )


def assemble_observation(
    state: RobotState,
    goal: np.ndarray,
    frame,
    encoder,
    a_prev: np.ndarray,
    corrupt: CorruptionMask | None = None,
) -> Observation:
    """Single-robot observation; the depth frame is masked before encoding."""
    depth = frame.depth if corrupt is None else apply_mask(frame.depth, corrupt)
    expected = getattr(encoder, "image_size", depth.shape[-1])
    if depth.shape != (expected, expected):
        raise ConfigError(f"encoder expects {expected}x{expected} frames, got {depth.shape}")
    z = encoder.encode_batch(frame.gray[None], depth[None])[0]
    vec = observation_batch(state.take(slice(0, 1)), goal, z[None], np.asarray(a_prev)[None])[0]
    return Observation.from_vector(vec, z.shape[0])
