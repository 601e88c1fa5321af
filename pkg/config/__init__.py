"""
Configuration package for the EMS audit pipeline.

This package holds the YAML-backed pipeline configuration, its defaults and
the environment variables that feed them.
"""

from config.pipeline_config import (
    DEFAULT_SEED,
    LOG_LEVEL_ENV,
    SEED_ENV,
    PathsConfig,
    PipelineConfig,
    debug_enabled,
    env_log_level,
    env_seed,
    load_pipeline_config,
    validate_paths,
)

__all__ = [
    "DEFAULT_SEED",
    "SEED_ENV",
    "LOG_LEVEL_ENV",
    "PathsConfig",
    "PipelineConfig",
    "load_pipeline_config",
    "validate_paths",
    "env_seed",
    "env_log_level",
    "debug_enabled",
]
