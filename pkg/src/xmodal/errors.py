class ConfigError(ValueError):
    """Invalid configuration or mismatched shapes."""


class DatasetError(ValueError):
    """A dataset directory or file could not be ingested."""


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite during optimisation."""


class EpisodeError(RuntimeError):
    """A policy raised while stepping an episode."""
