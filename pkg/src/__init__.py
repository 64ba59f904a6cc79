from . import config, metrics, occupancy, utils

__all__ = ["config", "metrics", "occupancy", "utils"]
