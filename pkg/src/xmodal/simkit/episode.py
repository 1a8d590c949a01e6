"""Closed-loop episodes: render, encode, act, step until an outcome."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xmodal.config import RewardConfig, SimConfig
from xmodal.corruption import CorruptionMask, apply_mask, policy_train_mask
from xmodal.errors import EpisodeError
from xmodal.harness.rng import derive_rng_stream
from xmodal.policy.observation import ACTION_DIM, STATE_DIM, Observation, observation_batch
from xmodal.simkit.env import BatchNavEnv, Outcome
from xmodal.simkit.room import RoomSpec


@dataclass
class EpisodeRecord:
    outcome: Outcome
    steps: int
    path_length: float
    total_reward: float
    final_distance: float
    coverage: list[float] = field(default_factory=list)  # achieved mask coverage per step


def _observe(env: BatchNavEnv, encoder, idx, masks) -> tuple[np.ndarray, np.ndarray]:
    depth, gray = env.render(idx)
    coverage = np.zeros(len(idx))
    for k, i in enumerate(idx):
        if masks[i] is not None:
            depth[k] = apply_mask(depth[k], masks[i])
            coverage[k] = masks[i].achieved_coverage
    z = encoder.encode_batch(gray, depth)
    obs = observation_batch(env.state.take(idx), env.goal[idx], z, env.a_prev[idx])
    return obs, coverage


def run_episode(
    room: RoomSpec,
    policy,
    encoder,
    corruption_on: bool,
    rng: np.random.Generator,
    sim: SimConfig | None = None,
    reward: RewardConfig | None = None,
) -> EpisodeRecord:
    """One episode with a per-step ``policy(Observation) -> action``.

    When ``corruption_on`` a single training-style mask is drawn at the start
    and applied to every depth frame. ``rng`` drives the camera perturbation,
    the mask and the disturbances.
    """
    env = BatchNavEnv(1, sim, reward, terminate_on_success=True, rooms=[room])
    env.reset([0], rooms=[room], streams=[rng])
    size = env.camera.size
    masks = [policy_train_mask(size, size, rng) if corruption_on else None]
    if hasattr(policy, "reset"):
        policy.reset(1)
    record = EpisodeRecord(Outcome.RUNNING, 0, 0.0, 0.0, float(env.prev_dist[0]))
    if env.reached[0]:
        record.outcome = Outcome.SUCCESS
        return record
    idx = np.array([0])
    while True:
        obs, cov = _observe(env, encoder, idx, masks)
        record.coverage.append(float(cov[0]))
        try:
            action = np.asarray(policy(Observation.from_vector(obs[0], obs.shape[1] - STATE_DIM - ACTION_DIM)), dtype=np.float64)
        except Exception as exc:
            raise EpisodeError(f"policy failed at step {int(env.t[0])} of episode in room {room.dims.tolist()}: {exc}") from exc
        res = env.step(action[None])
        record.total_reward += float(res.reward[0])
        if res.done[0]:
            break
    record.outcome = Outcome(int(res.outcome[0]))
    record.steps = int(env.t[0])
    record.path_length = float(env.path_length[0])
    record.final_distance = float(env.prev_dist[0])
    return record


def run_episodes(
    rooms: list[RoomSpec],
    agent,
    encoder,
    corruption_on: bool,
    seed: int,
    label: str,
    sim: SimConfig | None = None,
    reward: RewardConfig | None = None,
    backend: str | None = None,
    first_index: int = 0,
) -> list[EpisodeRecord]:
    """Run one episode per room in lockstep with a batch ``agent``.

    Episode ``k`` draws its perturbation and disturbances from
    ``(seed, label, first_index + k)`` and its mask from a sibling stream, so
    clean and corrupted runs share everything but the mask, and results do not depend on how
    episodes are grouped into batches. Finished envs are no longer rendered
    and their records are frozen at the final step.
    """
    n = len(rooms)
    streams = [derive_rng_stream(seed, label, first_index + k) for k in range(n)]
    env = BatchNavEnv(n, sim, reward, seed=seed, label=label, terminate_on_success=True, backend=backend, rooms=rooms)
    env.reset(np.arange(n), rooms=rooms, streams=streams)
    size = env.camera.size
    masks: list[CorruptionMask | None] = [
        policy_train_mask(size, size, derive_rng_stream(seed, f"{label}:mask", first_index + k)) if corruption_on else None
        for k in range(n)
    ]
    agent.reset(n)
    records = [EpisodeRecord(Outcome.RUNNING, 0, 0.0, 0.0, float(env.prev_dist[k])) for k in range(n)]
    active = ~env.reached.copy()
    for k in np.flatnonzero(~active):
        records[k].outcome = Outcome.SUCCESS
    obs_full = None
    while active.any():
        idx = np.flatnonzero(active)
        obs, cov = _observe(env, encoder, idx, masks)
        if obs_full is None:
            obs_full = np.zeros((n, obs.shape[1]))
        obs_full[idx] = obs
        for k, c in zip(idx, cov):
            records[k].coverage.append(float(c))
        actions = agent.act(obs_full)
        actions[~active] = 0.0
        res = env.step(actions)
        for k in idx:
            records[k].total_reward += float(res.reward[k])
            if res.done[k]:
                records[k].outcome = Outcome(int(res.outcome[k]))
                records[k].steps = int(env.t[k])
                records[k].path_length = float(env.path_length[k])
                records[k].final_distance = float(env.prev_dist[k])
                active[k] = False
    return records
