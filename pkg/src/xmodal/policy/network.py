"""Recurrent Gaussian actor-critic."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from xmodal.policy.actions import ACTION_HALF, ACTION_MID
from xmodal.policy.observation import ACTION_DIM

BODY_WIDTHS = (256, 128, 64)
OBS_CLIP = 5.0


class ActorCritic(nn.Module):
    """Dense ELU trunk, a GRU cell, then action-mean and value heads.

    Means live in pre-squash space; ``squash_torch`` maps them onto the
    action box. Log-stddevs are free parameters, one per action component.
    Inputs are standardised with running statistics that are stored with the
    weights and only change through :meth:`update_obs_stats`.
    """

    def __init__(self, obs_dim: int, hidden_size: int = 64, init_log_std: float = -0.5):
        super().__init__()
        self.obs_dim = obs_dim
        self.hidden_size = hidden_size
        layers: list[nn.Module] = []
        width = obs_dim
        for w in BODY_WIDTHS:
            layers += [nn.Linear(width, w), nn.ELU()]
            width = w
        self.body = nn.Sequential(*layers)
        self.gru = nn.GRUCell(width, hidden_size)
        self.mean_head = nn.Linear(hidden_size, ACTION_DIM)
        self.value_head = nn.Linear(hidden_size, 1)
        self.log_std = nn.Parameter(torch.full((ACTION_DIM,), float(init_log_std)))
        self.register_buffer("obs_mean", torch.zeros(obs_dim))
        self.register_buffer("obs_var", torch.ones(obs_dim))
        self.register_buffer("obs_count", torch.zeros(()))
        with torch.no_grad():
            self.mean_head.weight.mul_(0.01)
            self.mean_head.bias.zero_()

    def normalize(self, obs: torch.Tensor) -> torch.Tensor:
        z = (obs - self.obs_mean) / torch.sqrt(self.obs_var + 1e-8)
        return z.clamp(-OBS_CLIP, OBS_CLIP)

    @torch.no_grad()
    def update_obs_stats(self, batch: np.ndarray) -> None:
        """Fold a (..., D) batch into the running mean and variance."""
        x = torch.as_tensor(np.asarray(batch).reshape(-1, self.obs_dim), dtype=torch.float64)
        n_b = x.shape[0]
        if n_b == 0:
            return
        mean_b = x.mean(0)
        var_b = x.var(0, unbiased=False)
        n_a = float(self.obs_count)
        total = n_a + n_b
        delta = mean_b - self.obs_mean.double()
        mean = self.obs_mean.double() + delta * (n_b / total)
        m2 = self.obs_var.double() * n_a + var_b * n_b + delta.square() * (n_a * n_b / total)
        self.obs_mean.copy_(mean)
        self.obs_var.copy_(m2 / total)
        self.obs_count.fill_(total)

    def initial_state(self, n: int) -> torch.Tensor:
        return torch.zeros(n, self.hidden_size, dtype=self.log_std.dtype)

    def _check(self, obs: torch.Tensor) -> None:
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has {obs.shape[-1]} features, network expects {self.obs_dim}")

    def step(self, obs: torch.Tensor, hidden: torch.Tensor):
        """One time step for a batch: returns (mean, value, new hidden)."""
        self._check(obs)
        if hidden.shape != (obs.shape[0], self.hidden_size):
            raise ValueError(f"hidden state shape {tuple(hidden.shape)} does not match ({obs.shape[0]}, {self.hidden_size})")
        h = self.gru(self.body(self.normalize(obs)), hidden)
        return self.mean_head(h), self.value_head(h).squeeze(-1), h

    def unroll(self, obs: torch.Tensor, hidden: torch.Tensor, starts: torch.Tensor):
        """Replay a (T, N, D) rollout, zeroing the hidden state where ``starts`` is set."""
        self._check(obs)
        t_len, n = obs.shape[:2]
        feats = self.body(self.normalize(obs).reshape(t_len * n, -1)).reshape(t_len, n, -1)
        keep = (~starts).to(feats.dtype).unsqueeze(-1)
        outs = []
        h = hidden
        for t in range(t_len):
            h = self.gru(feats[t], h * keep[t])
            outs.append(h)
        hs = torch.stack(outs)
        return self.mean_head(hs), self.value_head(hs).squeeze(-1)

    def distribution(self, mean: torch.Tensor) -> torch.distributions.Normal:
        return torch.distributions.Normal(mean, self.log_std.exp().expand_as(mean))


def squash_torch(pre: torch.Tensor) -> torch.Tensor:
    mid = torch.as_tensor(ACTION_MID, dtype=pre.dtype)
    half = torch.as_tensor(ACTION_HALF, dtype=pre.dtype)
    return mid + half * torch.tanh(pre)


def gaussian_log_prob(pre: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log density summed over the last axis."""
    z = (pre - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * np.log(2.0 * np.pi), axis=-1)
