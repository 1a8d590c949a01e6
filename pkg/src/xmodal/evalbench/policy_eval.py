"""Outcome rates of a navigation policy per (condition, obstacle level)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from xmodal.config import RewardConfig, SimConfig
from xmodal.harness.rng import derive_rng_stream
from xmodal.simkit.env import Outcome
from xmodal.simkit.episode import EpisodeRecord, run_episodes
from xmodal.simkit.room import sample_room

CONDITIONS = ("clean", "corrupted")
POLICY_LEVELS = (0, 5, 10, 15, 20)


@dataclass
class PolicyReport:
    cells: dict[tuple[str, int], list[EpisodeRecord]] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.cells)

    def counts(self, condition: str, level: int) -> dict[str, int]:
        outs = [r.outcome for r in self.cells[(condition, level)]]
        return {
            "success": sum(o == Outcome.SUCCESS for o in outs),
            "timeout": sum(o == Outcome.TIMEOUT for o in outs),
            "crash": sum(o == Outcome.CRASH for o in outs),
            "episodes": len(outs),
        }

    def percentages(self, condition: str, level: int) -> dict[str, float]:
        c = self.counts(condition, level)
        n = max(c["episodes"], 1)
        return {k: 100.0 * c[k] / n for k in ("success", "timeout", "crash")}

    def success(self, condition: str, level: int) -> float:
        return self.percentages(condition, level)["success"]


def eval_rooms(level: int, episodes: int, seed: int, sim: SimConfig | None = None):
    """Rooms depend only on (seed, level, episode), so every policy and condition sees the same set."""
    return [sample_room(level, derive_rng_stream(seed, f"eval-room:{level}", k), sim) for k in range(episodes)]


def eval_policy(
    agent,
    encoder,
    levels=POLICY_LEVELS,
    conditions=CONDITIONS,
    episodes_per_cell: int = 256,
    seed: int = 0,
    sim: SimConfig | None = None,
    reward: RewardConfig | None = None,
    batch_envs: int = 64,
) -> PolicyReport:
    """Run ``episodes_per_cell`` fresh-room episodes per cell.

    Clean episodes see raw depth; corrupted ones apply one training-style
    mask, drawn at the start, to every frame of the episode. Episodes end on
    success, crash or timeout.
    """
    report = PolicyReport()
    for condition in conditions:
        if condition not in CONDITIONS:
            raise ValueError(f"unknown condition {condition!r}")
        for level in levels:
            rooms = eval_rooms(int(level), episodes_per_cell, seed, sim)
            records: list[EpisodeRecord] = []
            for lo in range(0, episodes_per_cell, batch_envs):
                records += run_episodes(
                    rooms[lo : lo + batch_envs],
                    agent,
                    encoder,
                    condition == "corrupted",
                    seed,
                    f"eval:{level}",
                    sim,
                    reward,
                    first_index=lo,
                )
            report.cells[(condition, int(level))] = records
    return report


def mean_coverage(record: EpisodeRecord) -> float:
    return float(np.mean(record.coverage)) if record.coverage else 0.0
