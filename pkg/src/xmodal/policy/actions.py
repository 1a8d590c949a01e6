"""Action bounds, tanh squashing and conversion to velocity commands."""

import numpy as np

# speed [m/s], inclination [rad], yaw rate [rad/s]
ACTION_LOW = np.array([0.0, -np.pi / 4, -np.pi / 3])
ACTION_HIGH = np.array([2.0, np.pi / 4, np.pi / 3])
ACTION_MID = 0.5 * (ACTION_HIGH + ACTION_LOW)
ACTION_HALF = 0.5 * (ACTION_HIGH - ACTION_LOW)


def squash(pre: np.ndarray) -> np.ndarray:
    """Map unbounded pre-activations onto the action box."""
    return ACTION_MID + ACTION_HALF * np.tanh(pre)


def clip_action(a: np.ndarray) -> np.ndarray:
    return np.clip(a, ACTION_LOW, ACTION_HIGH)


def action_to_command(a: np.ndarray) -> np.ndarray:
    """(speed, inclination, yaw rate) -> (v_x, v_y, v_z, yaw_rate) in the body frame."""
    a = np.asarray(a, dtype=np.float64)
    speed, incl, wz = a[..., 0], a[..., 1], a[..., 2]
    return np.stack([speed * np.cos(incl), np.zeros_like(speed), speed * np.sin(incl), wz], axis=-1)
