"""Navigation reward: goal-distance shaping, action smoothness, crash penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xmodal.config import RewardConfig


def kernel_r(x, nu):
    """exp(-x^2 / nu)."""
    return np.exp(-np.square(x) / nu)


@dataclass
class RewardBreakdown:
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p_crash: np.ndarray
    weighted: dict[str, np.ndarray]
    total: np.ndarray


def compute_reward(
    prev_dist,
    cur_dist,
    initial_dist,
    action,
    prev_action,
    crashed,
    params: RewardConfig | None = None,
) -> RewardBreakdown:
    """Per-transition reward, vectorised over a leading batch axis.

    ``initial_dist`` is the episode's starting goal distance (the r3 scale).
    The progress term is ``nu4 * (d_t - d_{t-1})`` exactly as written in the
    reward definition, so with a positive weight it grows when the robot
    moves away from the goal. ``progress_sign = -1`` in the config reverses it.
    """
    p = params or RewardConfig()
    cur = np.asarray(cur_dist, dtype=np.float64)
    prev = np.asarray(prev_dist, dtype=np.float64)
    nu3 = np.asarray(initial_dist, dtype=np.float64)
    if np.any(nu3 <= 0):
        raise ValueError("initial goal distance (nu3) must be positive")
    a = np.asarray(action, dtype=np.float64)
    a_prev = np.asarray(prev_action, dtype=np.float64)

    r1 = kernel_r(cur, p.nu1)
    r2 = kernel_r(cur, p.nu2)
    r3 = np.abs(nu3 - cur) / nu3
    r4 = p.progress_sign * p.nu4 * (cur - prev)
    p1 = np.sum(np.asarray(p.nu5) * (kernel_r(a, np.asarray(p.nu6)) - 1.0), axis=-1)
    p2 = np.sum(np.asarray(p.nu7) * (kernel_r(a - a_prev, np.asarray(p.nu8)) - 1.0), axis=-1)
    p_crash = np.where(np.asarray(crashed, dtype=bool), -p.nu9, 0.0)

    lam, eta = p.lambdas, p.etas
    weighted = {
        "r1": lam[0] * r1,
        "r2": lam[1] * r2,
        "r3": lam[2] * r3,
        "r4": lam[3] * r4,
        "p1": eta[0] * p1,
        "p2": eta[1] * p2,
        "p_crash": p_crash,
    }
    total = sum(weighted.values())
    return RewardBreakdown(r1, r2, r3, r4, p1, p2, p_crash, weighted, total)
