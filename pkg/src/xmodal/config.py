"""Run configuration.

One YAML file, one section per subsystem. Unknown keys and out-of-range values
are rejected at load time, before any computation starts. The key schema is
documented in CONFIG_SCHEMA.md.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from xmodal.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ArchConfig(_Section):
    """CMWAE architecture hyperparameters."""

    image_size: int = Field(64, ge=8)
    latent_dim: int = Field(64, ge=1)
    enc_channels: tuple[int, int, int, int, int] = (32, 64, 96, 64, 64)
    first_kernel: int = Field(11, ge=1)
    first_stride: int = Field(4, ge=1)
    first_padding: int = Field(2, ge=0)
    final_pool: bool = False
    feature_grid: int = Field(3, ge=1)
    branch_width: int = Field(256, ge=1)
    dec_channels: tuple[int, int, int, int] = (64, 32, 16, 8)
    dec_base: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _positive_channels(self):
        if min(self.enc_channels) < 1 or min(self.dec_channels) < 1:
            raise ValueError("channel counts must be positive")
        return self

    @classmethod
    def preset(cls, profile: str) -> "ArchConfig":
        if profile == "desk":
            return cls()
        if profile == "full":
            return cls(
                image_size=224,
                enc_channels=(64, 192, 384, 256, 256),
                final_pool=True,
                feature_grid=6,
                branch_width=1024,
                dec_channels=(256, 128, 64, 32),
                dec_base=6,
            )
        if profile == "mini":
            return cls(
                image_size=16,
                latent_dim=8,
                enc_channels=(4, 4, 4, 4, 4),
                first_kernel=3,
                first_stride=1,
                first_padding=1,
                feature_grid=2,
                branch_width=8,
                dec_channels=(4, 4, 4, 4),
                dec_base=1,
            )
        raise ConfigError(f"unknown profile {profile!r}")


class CmwaeTrainConfig(_Section):
    lam: float = Field(10.0, gt=0)
    learning_rate: float = Field(1e-4, gt=0)
    batch_size: int = Field(32, ge=2)
    epochs: int = Field(50, ge=1)
    checkpoint_every: int = Field(5, ge=1)
    depth_only: bool = False


class SimConfig(_Section):
    render_size: int = Field(64, ge=4)
    hfov_deg: float = Field(87.0, gt=0, lt=180)
    vfov_deg: float = Field(58.0, gt=0, lt=180)
    d_max: float = Field(10.0, gt=0)
    dt: float = Field(0.1, gt=0)
    episode_seconds: float = Field(10.0, gt=0)
    tau_v: float = Field(0.3, gt=0)
    tau_yaw: float = Field(0.2, gt=0)
    tilt_limit: float = Field(0.35, gt=0)
    robot_radius: float = Field(0.3, gt=0)
    success_radius: float = Field(1.0, gt=0)
    disturbance_prob: float = Field(0.05, ge=0, le=1)
    disturbance_velocity: float = Field(0.3, ge=0)
    disturbance_yaw_rate: float = Field(0.2, ge=0)
    camera_translation: float = Field(0.05, ge=0)
    camera_rotation_deg: float = Field(3.0, ge=0)
    start_yaw_jitter: float = Field(0.3, ge=0)
    obstacle_clearance: float = Field(1.0, ge=0)
    ambient: float = Field(0.15, ge=0, le=1)
    wall_albedo: float = Field(0.5, ge=0, le=1)

    @property
    def max_steps(self) -> int:
        return math.ceil(round(self.episode_seconds / self.dt, 9))


class RewardConfig(_Section):
    lambdas: tuple[float, float, float, float] = (5.0, 5.0, 1.0, 4.0)
    etas: tuple[float, float] = (1.0, 1.0)
    nu1: float = 0.5
    nu2: float = 8.0
    nu4: float = 1.0
    nu5: tuple[float, float, float] = (0.1, 0.2, 0.2)
    nu6: tuple[float, float, float] = (4.0, 1.0, 1.0)
    nu7: tuple[float, float, float] = (0.3, 0.3, 0.3)
    nu8: tuple[float, float, float] = (0.5, 0.5, 0.5)
    nu9: float = 100.0
    # +1 keeps the progress term as written (it grows when the goal distance
    # grows); -1 rewards closing the distance instead.
    progress_sign: Literal[1, -1] = 1

    @model_validator(mode="after")
    def _positive(self):
        values = [*self.lambdas, *self.etas, self.nu1, self.nu2, self.nu4, *self.nu5, *self.nu6, *self.nu7, *self.nu8, self.nu9]
        if min(values) <= 0:
            raise ValueError("all reward coefficients must be strictly positive")
        return self


class PPOConfig(_Section):
    num_envs: int = Field(64, ge=1)
    rollout_steps: int = Field(64, ge=1)
    iterations: int = Field(1000, ge=1)
    gamma: float = Field(0.99, gt=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    clip: float = Field(0.2, gt=0)
    learning_rate: float = Field(3e-4, gt=0)
    epochs: int = Field(4, ge=1)
    minibatches: int = Field(4, ge=1)
    entropy_coef: float = Field(1e-3, ge=0)
    value_coef: float = Field(0.5, ge=0)
    max_grad_norm: float = Field(1.0, gt=0)
    target_kl: float | None = Field(0.03, gt=0)
    scale_rewards: bool = True
    hidden_size: int = Field(64, ge=1)
    init_log_std: float = -0.5
    corrupt_fraction: float = Field(0.5, ge=0, le=1)
    start_level: int = Field(0, ge=0)
    max_level: int = Field(20, ge=0)
    tau_low: float = Field(0.30, ge=0, le=1)
    tau_high: float = Field(0.70, ge=0, le=1)
    checkpoint_every: int = Field(50, ge=1)
    time_budget_s: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _ordering(self):
        if self.tau_low > self.tau_high:
            raise ValueError("tau_low must not exceed tau_high")
        if self.start_level > self.max_level:
            raise ValueError("start_level must not exceed max_level")
        return self


class EvalConfig(_Section):
    recon_levels: tuple[float, ...] = (0.0, 0.2, 0.3, 0.4, 0.5)
    policy_levels: tuple[int, ...] = (0, 5, 10, 15, 20)
    episodes_per_cell: int = Field(256, ge=1)
    batch_envs: int = Field(64, ge=1)
    deterministic_policy: bool = True

    @model_validator(mode="after")
    def _ranges(self):
        if any(not 0 <= c <= 1 for c in self.recon_levels):
            raise ValueError("recon_levels must lie in [0, 1]")
        if any(lv < 0 for lv in self.policy_levels):
            raise ValueError("policy_levels must be >= 0")
        return self


class DatasetConfig(_Section):
    count: int = Field(1000, ge=1)
    max_obstacles: int = Field(10, ge=0)
    near_obstacle_fraction: float = Field(0.4, ge=0, le=1)
    near_range: float = Field(5.0, gt=0)
    test_fraction: float = Field(0.1, gt=0, lt=1)


class RunConfig(_Section):
    master_seed: int = Field(0, ge=0)
    profile: Literal["desk", "full"] = "desk"
    cmwae: ArchConfig | None = None
    train: CmwaeTrainConfig = CmwaeTrainConfig()
    sim: SimConfig = SimConfig()
    reward: RewardConfig = RewardConfig()
    ppo: PPOConfig = PPOConfig()
    eval: EvalConfig = EvalConfig()
    dataset: DatasetConfig = DatasetConfig()

    @property
    def arch(self) -> ArchConfig:
        return self.cmwae if self.cmwae is not None else ArchConfig.preset(self.profile)


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a YAML config; top-level ``overrides`` win over file values."""
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=True)
