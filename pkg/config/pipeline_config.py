"""
Pipeline configuration.

A pipeline run is configured by a YAML file, command-line flags and a few
environment variables. Flags win over the file, the file wins over the
environment, and the environment wins over the built-in defaults.

Contract:
- Input: optional YAML file (``--config demo.yaml``), flag overrides, env vars
- Output: a ``PipelineConfig`` whose seed has been pushed into every
  stochastic stage (synthetic generation, splitting, training)
- Fallback: packaged gazetteer and protocol rules, ``DEFAULT_SEED``

Environment Variables:
- EMS_AUDIT_SEED: seed used when neither a flag nor the file sets one
- EMS_AUDIT_LOG_LEVEL: default log level (DEBUG, INFO, WARNING, ERROR)
- DEBUG: any non-empty value other than 0/false enables debug logging

Example file:
    seed: 7
    paths:
      work_dir: runs/demo
      gazetteer: null        # packaged list
      rules: null            # packaged protocol table
    split: [0.9, 0.05, 0.05]
    labelling:
      max_edit_distance: 1
      extra_kept_symbols: ""
    hyperparams:
      batch_size: 32
      max_epochs: 60
    synth:
      n_documents: 2000
      misspelling_rate: 0.05
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from ems_audit.records import DEFAULT_SPLIT_FRACTIONS
from ems_audit.synth import SynthConfig
from ems_audit.tagger import Hyperparams

DEFAULT_SEED = 7
DEFAULT_WORK_DIR = "runs/default"
DEFAULT_LOG_LEVEL = "WARNING"

SEED_ENV = "EMS_AUDIT_SEED"
LOG_LEVEL_ENV = "EMS_AUDIT_LOG_LEVEL"

_TOP_LEVEL_KEYS = {"seed", "paths", "split", "labelling", "hyperparams", "synth", "report_format"}


def env_seed() -> Optional[int]:
    """Seed from ``EMS_AUDIT_SEED``, or None when unset or blank.

    Raises:
        ValueError: If the variable is set to a non-integer.
    """
    value = os.getenv(SEED_ENV, "").strip()
    if not value:
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ValueError(f"{SEED_ENV} must be an integer, got {value!r}") from e


def debug_enabled() -> bool:
    return os.getenv("DEBUG", "").strip().lower() not in ("", "0", "false", "no")


def env_log_level() -> int:
    """Log level named by ``EMS_AUDIT_LOG_LEVEL`` (WARNING when unset or unknown)."""
    name = os.getenv(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL).strip().upper() or DEFAULT_LOG_LEVEL
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


@dataclass(frozen=True)
class PathsConfig:
    """File locations; ``None`` means the packaged default or a work-dir file."""

    work_dir: Path = Path(DEFAULT_WORK_DIR)
    records: Optional[Path] = None
    gold: Optional[Path] = None
    gazetteer: Optional[Path] = None
    rules: Optional[Path] = None
    overrides: Optional[Path] = None
    model: Optional[Path] = None

    @classmethod
    def from_config(
        cls, config: Dict[str, Any] | None, base_dir: Path | None = None
    ) -> "PathsConfig":
        """Build from a mapping; relative paths resolve against ``base_dir``."""
        config = dict(config or {})
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown paths: {', '.join(sorted(unknown))}")

        def resolve(value: Any) -> Optional[Path]:
            if value is None or value == "":
                return None
            path = Path(str(value)).expanduser()
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return path

        values = {k: resolve(v) for k, v in config.items()}
        if values.get("work_dir") is None:
            values.pop("work_dir", None)
        return cls(**values)

    def in_work_dir(self, name: str) -> Path:
        return self.work_dir / name

    @property
    def model_path(self) -> Path:
        return self.model or self.in_work_dir("model.ckpt")


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    split_fractions: Tuple[float, float, float] = DEFAULT_SPLIT_FRACTIONS
    max_edit_distance: int = 1
    extra_kept_symbols: str = ""
    report_format: str = "text"
    seed: int = DEFAULT_SEED

    @classmethod
    def from_config(
        cls, config: Dict[str, Any] | None, base_dir: Path | None = None
    ) -> "PipelineConfig":
        """Build from a parsed YAML mapping.

        Raises:
            ValueError: On unknown keys or invalid values.
        """
        config = dict(config or {})
        unknown = set(config) - _TOP_LEVEL_KEYS
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        labelling = dict(config.get("labelling") or {})
        unknown = set(labelling) - {"max_edit_distance", "extra_kept_symbols"}
        if unknown:
            raise ValueError(f"unknown labelling keys: {', '.join(sorted(unknown))}")
        seed = config.get("seed")
        if seed is None:
            seed = env_seed()
        split = config.get("split")
        result = cls(
            paths=PathsConfig.from_config(config.get("paths"), base_dir),
            hyperparams=Hyperparams.from_config(config.get("hyperparams")),
            synth=SynthConfig.from_config(config.get("synth")),
            split_fractions=tuple(float(f) for f in split) if split else DEFAULT_SPLIT_FRACTIONS,
            max_edit_distance=int(labelling.get("max_edit_distance", 1)),
            extra_kept_symbols=str(labelling.get("extra_kept_symbols", "")),
            report_format=str(config.get("report_format", "text")),
        )
        return result.with_seed(DEFAULT_SEED if seed is None else int(seed))

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with ``seed`` applied to every stochastic stage."""
        return replace(
            self,
            seed=seed,
            hyperparams=replace(self.hyperparams, seed=seed),
            synth=replace(self.synth, seed=seed),
        )

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """Apply flag values; ``None`` means the flag was not given."""
        config = self
        seed = overrides.pop("seed", None)
        work_dir = overrides.pop("work_dir", None)
        if work_dir is not None:
            config = replace(config, paths=replace(config.paths, work_dir=Path(work_dir)))
        path_keys = set(PathsConfig.__dataclass_fields__) - {"work_dir"}
        path_values = {k: Path(v) for k, v in overrides.items() if k in path_keys and v is not None}
        if path_values:
            config = replace(config, paths=replace(config.paths, **path_values))
        plain = {k: v for k, v in overrides.items() if k not in path_keys and v is not None}
        if plain:
            config = replace(config, **plain)
        if seed is not None:
            config = config.with_seed(seed)
        return config

    def to_dict(self) -> Dict[str, Any]:
        paths = {k: (str(v) if v is not None else None) for k, v in asdict(self.paths).items()}
        synth = asdict(self.synth)
        synth["entity_profile"] = {e.value: v for e, v in self.synth.entity_profile.items()}
        synth["filler_phrases"] = list(self.synth.filler_phrases)
        return {
            "seed": self.seed,
            "paths": paths,
            "split": list(self.split_fractions),
            "labelling": {
                "max_edit_distance": self.max_edit_distance,
                "extra_kept_symbols": self.extra_kept_symbols,
            },
            "hyperparams": self.hyperparams.to_dict(),
            "synth": synth,
            "report_format": self.report_format,
        }


def load_pipeline_config(config_path: Path | str | None = None) -> PipelineConfig:
    """Load a pipeline configuration file.

    Relative paths in the file resolve against the file's directory. Without a
    file the defaults apply, with the seed taken from ``EMS_AUDIT_SEED`` when set.

    Raises:
        ValueError: If the file cannot be parsed or holds invalid settings.
    """
    if config_path is None:
        return PipelineConfig.from_config({})
    config_path = Path(config_path)
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ValueError(f"Failed to parse configuration file {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"Failed to load configuration: {config_path} is not a mapping")
    logging.debug(f"Loaded configuration from {config_path}")
    return PipelineConfig.from_config(data, base_dir=config_path.parent)


def validate_paths(paths: List[Path | None]) -> None:
    """Check that every given input path exists before a stage runs.

    Raises:
        FileNotFoundError: Naming every missing path.
    """
    missing = [str(p) for p in paths if p is not None and not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"missing input files: {', '.join(missing)}")
