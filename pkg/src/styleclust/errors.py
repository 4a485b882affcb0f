"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad field value, shape/resolution
    mismatch between data and networks, conflicting checkpoint metadata)."""


class DatasetError(ValueError):
    """Dataset cannot be loaded or is unusable (empty folder, no decodable
    images, labels required but absent)."""


class CheckpointError(RuntimeError):
    """Checkpoint file is missing, truncated, or carries an unknown version."""
