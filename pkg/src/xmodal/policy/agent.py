"""Actor-critic wrapped as a stateful batch policy."""

from __future__ import annotations

import numpy as np
import torch

from xmodal.policy.actions import squash
from xmodal.policy.network import ActorCritic
from xmodal.policy.observation import Observation


class PolicyAgent:
    """Holds the recurrent state between calls.

    ``deterministic`` agents act on the squashed mean; stochastic ones add
    Gaussian noise from ``rng`` in pre-squash space.
    """

    def __init__(self, model: ActorCritic, deterministic: bool = True, rng: np.random.Generator | None = None):
        self.model = model.eval()
        self.deterministic = deterministic
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = model.initial_state(1)

    def reset(self, n: int = 1) -> None:
        self.hidden = self.model.initial_state(n)

    def reset_envs(self, idx) -> None:
        self.hidden[torch.as_tensor(idx)] = 0.0

    @torch.no_grad()
    def act(self, obs: np.ndarray) -> np.ndarray:
        obs_t = torch.as_tensor(obs, dtype=self.hidden.dtype)
        mean, _, self.hidden = self.model.step(obs_t, self.hidden)
        pre = mean.numpy().astype(np.float64)
        if not self.deterministic:
            pre = pre + np.exp(self.model.log_std.numpy()) * self.rng.standard_normal(pre.shape)
        return squash(pre)

    def __call__(self, observation: Observation) -> np.ndarray:
        if self.hidden.shape[0] != 1:
            self.reset(1)
        return self.act(observation.flatten()[None])[0]


class ZeroPolicy:
    """Commands zero speed, zero inclination and zero yaw rate."""

    deterministic = True

    def reset(self, n: int = 1) -> None:
        pass

    def reset_envs(self, idx) -> None:
        pass

    def act(self, obs: np.ndarray) -> np.ndarray:
        return np.zeros((obs.shape[0], 3))

    def __call__(self, observation: Observation) -> np.ndarray:
        return np.zeros(3)
