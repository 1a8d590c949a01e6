from dataclasses import dataclass, replace


@dataclass(frozen=True)
class CurriculumState:
    level: int = 0
    tau_low: float = 0.30
    tau_high: float = 0.70
    max_level: int | None = None

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("curriculum level must be >= 0")


def curriculum_update(cur: CurriculumState, success_rate: float) -> CurriculumState:
    """Move one level up above tau_high, one down below tau_low, floored at 0."""
    level = cur.level
    if success_rate > cur.tau_high:
        level += 1
    elif success_rate < cur.tau_low:
        level -= 1
    level = max(level, 0)
    if cur.max_level is not None:
        level = min(level, cur.max_level)
    return replace(cur, level=level)
