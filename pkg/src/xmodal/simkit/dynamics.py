"""First-order velocity / yaw-rate tracking with quasi-static tilt.

All functions are vectorised over a leading batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from xmodal.config import SimConfig
from xmodal.simkit.room import RoomBatch

GRAVITY = 9.81


def wrap_angle(a):
    """Wrap to (-pi, pi]; in-range values pass through unchanged."""
    a = np.asarray(a, dtype=np.float64)
    return np.where((a > -np.pi) & (a <= np.pi), a, np.pi - np.mod(np.pi - a, 2.0 * np.pi))


@dataclass
class RobotState:
    position: np.ndarray  # (N, 3) inertial
    velocity: np.ndarray  # (N, 3) inertial
    yaw: np.ndarray  # (N,)
    yaw_rate: np.ndarray  # (N,)
    pitch: np.ndarray  # (N,)
    roll: np.ndarray  # (N,)

    @classmethod
    def at_rest(cls, position, yaw=0.0) -> "RobotState":
        p = np.atleast_2d(np.asarray(position, dtype=np.float64)).copy()
        n = p.shape[0]
        return cls(
            position=p,
            velocity=np.zeros((n, 3)),
            yaw=np.broadcast_to(np.asarray(yaw, dtype=np.float64), (n,)).copy(),
            yaw_rate=np.zeros(n),
            pitch=np.zeros(n),
            roll=np.zeros(n),
        )

    def __len__(self) -> int:
        return self.position.shape[0]

    def copy(self) -> "RobotState":
        return RobotState(*(np.array(getattr(self, f)) for f in _FIELDS))

    def take(self, idx) -> "RobotState":
        return RobotState(*(np.array(getattr(self, f)[idx]) for f in _FIELDS))

    def assign(self, idx, other: "RobotState") -> None:
        for f in _FIELDS:
            getattr(self, f)[idx] = getattr(other, f)

    def body_velocity(self) -> np.ndarray:
        return world_to_yaw_frame(self.velocity, self.yaw)


_FIELDS = ("position", "velocity", "yaw", "yaw_rate", "pitch", "roll")


def yaw_frame_to_world(vec: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    return np.stack([c * x - s * y, s * x + c * y, z], axis=-1)


def world_to_yaw_frame(vec: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    return np.stack([c * x + s * y, -s * x + c * y, z], axis=-1)


def step(state: RobotState, command: np.ndarray, dt: float, cfg: SimConfig | None = None) -> RobotState:
    """Advance one control period.

    ``command`` is (v_x, v_y, v_z, yaw_rate) in the yaw-aligned body frame;
    a 3-column (v_x, v_z, yaw_rate) command is accepted too.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = cfg or SimConfig()
    u = np.atleast_2d(np.asarray(command, dtype=np.float64))
    if u.shape[-1] == 3:
        u = np.stack([u[:, 0], np.zeros(len(u)), u[:, 1], u[:, 2]], axis=-1)
    v_cmd = yaw_frame_to_world(u[:, :3], state.yaw)
    accel = (v_cmd - state.velocity) / cfg.tau_v
    velocity = state.velocity + min(dt, cfg.tau_v) * accel
    yaw_rate = state.yaw_rate + min(dt / cfg.tau_yaw, 1.0) * (u[:, 3] - state.yaw_rate)
    yaw = wrap_angle(state.yaw + dt * yaw_rate)
    position = state.position + dt * velocity
    a_body = world_to_yaw_frame(accel, state.yaw)
    lim = cfg.tilt_limit
    pitch = np.clip(np.arctan2(a_body[:, 0], GRAVITY), -lim, lim)
    roll = np.clip(np.arctan2(a_body[:, 1], GRAVITY), -lim, lim)
    return RobotState(position, velocity, yaw, yaw_rate, pitch, roll)


def apply_disturbance(
    state: RobotState, rng: np.random.Generator, cfg: SimConfig | None = None, prob: float | None = None
) -> tuple[RobotState, np.ndarray]:
    """Bernoulli velocity / yaw-rate kicks; returns the new state and the fired mask.

    Five uniforms are drawn per robot on every call, so the stream stays
    aligned whatever the outcome.
    """
    return disturb_from_uniforms(state, rng.random((len(state), 5)), cfg, prob)


def disturb_from_uniforms(
    state: RobotState, u: np.ndarray, cfg: SimConfig | None = None, prob: float | None = None
) -> tuple[RobotState, np.ndarray]:
    """Kick model driven by pre-drawn U(0, 1) variates, one row of five per robot."""
    cfg = cfg or SimConfig()
    p = cfg.disturbance_prob if prob is None else prob
    fire = u[:, 0] < p
    if not fire.any():
        return state, fire
    dv = (2.0 * u[:, 1:4] - 1.0) * cfg.disturbance_velocity
    dw = (2.0 * u[:, 4] - 1.0) * cfg.disturbance_yaw_rate
    return (
        replace(
            state,
            velocity=state.velocity + np.where(fire[:, None], dv, 0.0),
            yaw_rate=state.yaw_rate + np.where(fire, dw, 0.0),
        ),
        fire,
    )


def check_collision(rooms: RoomBatch, position: np.ndarray, radius: float) -> np.ndarray:
    """Sphere vs walls, floor and yawed obstacle boxes. Returns (N,) bool."""
    p = np.atleast_2d(position)
    dims = rooms.dims
    hit = (
        (p[:, 0] - radius < 0.0)
        | (p[:, 0] + radius > dims[:, 0])
        | (p[:, 1] - radius < 0.0)
        | (p[:, 1] + radius > dims[:, 1])
        | (p[:, 2] - radius < 0.0)
    )
    if rooms.centers.shape[1]:
        r = p[:, None, :] - rooms.centers
        c, s = rooms.yaw_cs[..., 0], rooms.yaw_cs[..., 1]
        local = np.stack([c * r[..., 0] + s * r[..., 1], -s * r[..., 0] + c * r[..., 1], r[..., 2]], axis=-1)
        excess = np.maximum(np.abs(local) - rooms.half, 0.0)
        d2 = np.einsum("nbk,nbk->nb", excess, excess)
        valid = np.arange(rooms.centers.shape[1])[None, :] < rooms.count[:, None]
        hit |= np.any(valid & (d2 < radius * radius), axis=1)
    return hit
