"""Clipped-surrogate PPO over recurrent rollouts from a batch of rooms."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from xmodal.cmwae.checkpoint import file_sha256, load_tensors, save_tensors
from xmodal.config import PPOConfig, RewardConfig, SimConfig
from xmodal.corruption import apply_mask, policy_train_mask
from xmodal.errors import ConfigError, TrainingDivergedError
from xmodal.harness.rng import derive_rng_stream, derive_seed
from xmodal.policy.actions import ACTION_HIGH, ACTION_LOW, squash
from xmodal.policy.curriculum import CurriculumState, curriculum_update
from xmodal.policy.network import ActorCritic, gaussian_log_prob
from xmodal.policy.observation import observation_batch, observation_dim
from xmodal.simkit.env import BatchNavEnv, Outcome

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "level", "success", "timeout", "crash", "mean_reward", "mean_episode_len")


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalised advantage estimates for (T, N) arrays; returns (adv, returns).

    ``dones[t]`` cuts the recursion after step t. Truncated episodes are
    expected to carry their bootstrap value inside ``rewards``.
    """
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(last_value)
    next_value = last_value
    for t in range(t_len - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        gae = delta + gamma * lam * live * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


def ppo_loss(
    model: ActorCritic,
    obs: torch.Tensor,
    hidden: torch.Tensor,
    starts: torch.Tensor,
    pre_actions: torch.Tensor,
    old_logp: torch.Tensor,
    advantages: torch.Tensor,
    returns: torch.Tensor,
    clip: float,
    value_coef: float,
    entropy_coef: float,
):
    """Negative clipped surrogate + value error - entropy bonus, on a (T, N) slice.

    Log-probabilities are taken in pre-squash space; the tanh Jacobian is
    identical for old and new policy and cancels in the ratio.
    """
    mean, value = model.unroll(obs, hidden, starts)
    dist = model.distribution(mean)
    logp = dist.log_prob(pre_actions).sum(-1)
    ratio = torch.exp(logp - old_logp)
    surrogate = torch.minimum(ratio * advantages, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages)
    policy_loss = -surrogate.mean()
    value_loss = 0.5 * (returns - value).pow(2).mean()
    entropy = dist.entropy().sum(-1).mean()
    total = policy_loss + value_coef * value_loss - entropy_coef * entropy
    stats = {
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(entropy.detach()),
        "approx_kl": float((old_logp - logp).mean().detach()),
    }
    return total, stats


class ReturnScaler:
    """Divides rewards by the running std of each env's discounted return."""

    def __init__(self, num_envs: int, gamma: float, enabled: bool = True):
        self.gamma = gamma
        self.enabled = enabled
        self.ret = np.zeros(num_envs)
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    @property
    def std(self) -> float:
        if not self.enabled or self.count < 2:
            return 1.0
        return float(np.sqrt(self.m2 / self.count) + 1e-8)

    def __call__(self, reward: np.ndarray, done: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return reward
        self.ret = self.ret * self.gamma + reward
        # Chan et al. parallel update of mean and M2
        n, m, v = len(self.ret), float(self.ret.mean()), float(self.ret.var())
        total = self.count + n
        delta = m - self.mean
        self.m2 += v * n + delta * delta * self.count * n / total
        self.mean += delta * n / total
        self.count = total
        self.ret[done] = 0.0
        return reward / self.std


@dataclass
class Rollout:
    obs: np.ndarray  # (T, N, D)
    starts: np.ndarray  # (T, N) hidden reset before step t
    hidden0: np.ndarray  # (N, H)
    pre_actions: np.ndarray  # (T, N, 3)
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    corrupted: np.ndarray  # (T, N) bool
    raw_rewards: np.ndarray  # (T, N) unscaled, without bootstrap
    last_value: np.ndarray = field(default=None)  # type: ignore[assignment]


class _Collector:
    """Steps the env batch with the current policy, corrupting a subset per step."""

    def __init__(self, env: BatchNavEnv, encoder, model: ActorCritic, cfg: PPOConfig, seed: int):
        self.env = env
        self.encoder = encoder
        self.model = model
        self.cfg = cfg
        self.noise = derive_rng_stream(seed, "policy-noise")
        self.corrupt_rng = derive_rng_stream(seed, "train-corruption")
        self.n_corrupt = int(round(cfg.corrupt_fraction * env.num_envs))
        n = env.num_envs
        self.hidden = model.initial_state(n)
        self.starts = np.ones(n, dtype=bool)
        self.masks: dict[int, object] = {}
        self._draw_masks()
        self.obs = self._observe(np.arange(n))
        self.last_outcome = np.zeros(n, dtype=np.int64)
        self.scaler = ReturnScaler(n, cfg.gamma, cfg.scale_rewards)

    def _draw_masks(self) -> None:
        n, size = self.env.num_envs, self.env.camera.size
        chosen = self.corrupt_rng.choice(n, self.n_corrupt, replace=False) if self.n_corrupt else []
        self.masks = {int(i): policy_train_mask(size, size, self.corrupt_rng) for i in np.sort(chosen)}

    def corrupted_now(self) -> np.ndarray:
        flags = np.zeros(self.env.num_envs, dtype=bool)
        flags[list(self.masks)] = True
        return flags

    def _observe(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        depth, gray = self.env.render(idx)
        for k, i in enumerate(idx):
            mask = self.masks.get(int(i))
            if mask is not None:
                depth[k] = apply_mask(depth[k], mask)
        z = self.encoder.encode_batch(gray, depth)
        return observation_batch(self.env.state.take(idx), self.env.goal[idx], z, self.env.a_prev[idx])

    def collect(self, steps: int, gamma: float, outcomes: list[tuple[int, int, int]]) -> Rollout:
        env, model = self.env, self.model
        n = env.num_envs
        dim = self.obs.shape[1]
        ro = Rollout(
            obs=np.zeros((steps, n, dim), dtype=np.float32),
            starts=np.zeros((steps, n), dtype=bool),
            hidden0=self.hidden.numpy().copy(),
            pre_actions=np.zeros((steps, n, 3), dtype=np.float32),
            logp=np.zeros((steps, n), dtype=np.float32),
            values=np.zeros((steps, n), dtype=np.float32),
            rewards=np.zeros((steps, n), dtype=np.float32),
            dones=np.zeros((steps, n), dtype=np.float32),
            corrupted=np.zeros((steps, n), dtype=bool),
            raw_rewards=np.zeros((steps, n), dtype=np.float32),
        )
        log_std = model.log_std.detach().numpy().astype(np.float64)
        for t in range(steps):
            ro.obs[t] = self.obs
            ro.starts[t] = self.starts
            ro.corrupted[t] = self.corrupted_now()
            with torch.no_grad():
                mean, value, h_new = model.step(torch.from_numpy(self.obs.astype(np.float32)), self.hidden)
            mean_np = mean.numpy().astype(np.float64)
            pre = mean_np + np.exp(log_std) * self.noise.standard_normal(mean_np.shape)
            ro.pre_actions[t] = pre
            ro.logp[t] = gaussian_log_prob(pre.astype(np.float32), mean_np.astype(np.float32), log_std.astype(np.float32))
            ro.values[t] = value.numpy()
            res = env.step(squash(pre))
            ro.raw_rewards[t] = res.reward
            reward = self.scaler(res.reward.astype(np.float64), res.done)
            self._draw_masks()
            next_obs = self._observe(np.arange(n))
            trunc = np.flatnonzero(res.truncated)
            if trunc.size:
                with torch.no_grad():
                    _, v_final, _ = model.step(torch.from_numpy(next_obs[trunc].astype(np.float32)), h_new[trunc])
                reward[trunc] += gamma * v_final.numpy()
            ro.rewards[t] = reward
            done = res.done
            ro.dones[t] = done
            finished = np.flatnonzero(done)
            for i in finished:
                outcomes.append((int(i), int(res.outcome[i]), int(env.t[i])))
            if finished.size:
                env.reset(finished)
                next_obs[finished] = self._observe(finished)
                h_new[torch.from_numpy(finished)] = 0.0
            self.obs, self.hidden, self.starts = next_obs, h_new, done.copy()
        with torch.no_grad():
            _, last_value, _ = model.step(torch.from_numpy(self.obs.astype(np.float32)), self.hidden)
        ro.last_value = last_value.numpy()
        return ro


@dataclass
class PPOResult:
    model: ActorCritic
    log_rows: list[dict]
    level: int
    checkpoint: Path | None


def write_log(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def train_ppo(
    encoder,
    cfg: PPOConfig,
    sim: SimConfig | None = None,
    reward: RewardConfig | None = None,
    seed: int = 0,
    out_dir: str | Path | None = None,
    encoder_path: str | Path | None = None,
    tag: str = "policy",
) -> PPOResult:
    """Train a recurrent policy on top of a frozen encoder.

    Each step ``round(corrupt_fraction * num_envs)`` envs, re-drawn
    uniformly, see their depth masked before encoding. The curriculum moves
    once every env has finished an episode at the current level, using the
    latest outcome of each env. Episodes do not end on reaching the goal; an
    episode counts as a success if the goal was reached at any step.
    """
    sim = sim or SimConfig()
    reward = reward or RewardConfig()
    for p in encoder.parameters():
        if p.requires_grad:
            raise ConfigError("the encoder must be frozen before policy training")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(derive_seed(seed, "policy-init"))
    obs_dim = observation_dim(encoder.latent_dim)
    model = ActorCritic(obs_dim, cfg.hidden_size, cfg.init_log_std)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    env = BatchNavEnv(
        cfg.num_envs, sim, reward, seed=seed, level=cfg.start_level, label="env", terminate_on_success=False,
        size=encoder.image_size,
    )
    collector = _Collector(env, encoder, model, cfg, seed)
    model.update_obs_stats(collector.obs)
    curriculum = CurriculumState(cfg.start_level, cfg.tau_low, cfg.tau_high, cfg.max_level)
    window = np.full(cfg.num_envs, -1, dtype=np.int64)
    mb_rng = derive_rng_stream(seed, "ppo-minibatch")
    enc_hash = file_sha256(encoder_path) if encoder_path is not None else ""
    rows: list[dict] = []
    ckpt = None
    start = time.perf_counter()

    def save(iteration: int) -> Path | None:
        if out is None:
            return None
        header = {
            "obs_dim": obs_dim,
            "hidden_size": cfg.hidden_size,
            "action_low": ACTION_LOW.tolist(),
            "action_high": ACTION_HIGH.tolist(),
            "encoder_sha256": enc_hash,
            "master_seed": seed,
            "iteration": iteration,
            "level": curriculum.level,
        }
        return save_policy(model, out / f"{tag}.safetensors", header)

    for it in range(1, cfg.iterations + 1):
        outcomes: list[tuple[int, int, int]] = []
        model.eval()
        ro = collector.collect(cfg.rollout_steps, cfg.gamma, outcomes)
        adv, ret = compute_gae(ro.rewards, ro.values, ro.dones, ro.last_value, cfg.gamma, cfg.gae_lambda)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        model.train()
        groups = np.array_split(np.arange(cfg.num_envs), min(cfg.minibatches, cfg.num_envs))
        stats = {}
        stop = False
        for _ in range(cfg.epochs):
            if stop:
                break
            perm = mb_rng.permutation(cfg.num_envs)
            for g in groups:
                e = np.sort(perm[g])
                loss, stats = ppo_loss(
                    model,
                    torch.from_numpy(ro.obs[:, e]),
                    torch.from_numpy(ro.hidden0[e]),
                    torch.from_numpy(ro.starts[:, e]),
                    torch.from_numpy(ro.pre_actions[:, e]),
                    torch.from_numpy(ro.logp[:, e]),
                    torch.from_numpy(adv[:, e].astype(np.float32)),
                    torch.from_numpy(ret[:, e].astype(np.float32)),
                    cfg.clip,
                    cfg.value_coef,
                    cfg.entropy_coef,
                )
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite PPO loss at iteration {it}; last checkpoint: {ckpt}")
                if cfg.target_kl is not None and stats["approx_kl"] > cfg.target_kl:
                    stop = True
                    break
                opt.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
                opt.step()

        model.update_obs_stats(ro.obs)
        level_now = curriculum.level
        codes = np.array([o for _, o, _ in outcomes], dtype=np.int64)
        lengths = [steps for _, _, steps in outcomes]
        for i, o, _ in outcomes:
            window[i] = o
        if (window >= 0).all():
            rate = float(np.mean(window == Outcome.SUCCESS))
            curriculum = curriculum_update(curriculum, rate)
            window[:] = -1
            if curriculum.level != level_now:
                env.set_level(curriculum.level)
        n_done = max(len(codes), 1)
        row = {
            "iteration": it,
            "level": level_now,
            "success": float(np.sum(codes == Outcome.SUCCESS)) / n_done if len(codes) else float("nan"),
            "timeout": float(np.sum(codes == Outcome.TIMEOUT)) / n_done if len(codes) else float("nan"),
            "crash": float(np.sum(codes == Outcome.CRASH)) / n_done if len(codes) else float("nan"),
            "mean_reward": float(ro.raw_rewards.mean()),
            "mean_episode_len": float(np.mean(lengths)) if lengths else float("nan"),
            **stats,
        }
        rows.append(row)
        log.info(
            "iter %d level %d success %.2f crash %.2f reward %.3f kl %.4f",
            it, level_now, row["success"], row["crash"], row["mean_reward"], stats.get("approx_kl", 0.0),
        )
        if out is not None:
            write_log(rows, out / f"{tag}_log.csv")
            if it % cfg.checkpoint_every == 0:
                ckpt = save(it)
        if cfg.time_budget_s is not None and time.perf_counter() - start > cfg.time_budget_s:
            log.info("time budget reached after %d iterations", it)
            break
    ckpt = save(rows[-1]["iteration"])
    model.eval()
    return PPOResult(model, rows, curriculum.level, ckpt)


def save_policy(model: ActorCritic, path: str | Path, header: dict) -> Path:
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return save_tensors(path, tensors, {"kind": "policy", **header})


def load_policy(path: str | Path) -> tuple[ActorCritic, dict]:
    tensors, header = load_tensors(path)
    if header.get("kind") != "policy":
        raise ConfigError(f"{path} is not a policy checkpoint")
    model = ActorCritic(header["obs_dim"], header["hidden_size"])
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    model.eval()
    return model, header


def check_encoder_match(header: dict, encoder_path: str | Path) -> None:
    want = header.get("encoder_sha256")
    if want and want != file_sha256(encoder_path):
        raise ConfigError(f"policy was trained with a different encoder than {encoder_path}")


__all__ = [
    "LOG_COLUMNS",
    "PPOResult",
    "Rollout",
    "check_encoder_match",
    "compute_gae",
    "load_policy",
    "ppo_loss",
    "save_policy",
    "train_ppo",
    "write_log",
]
