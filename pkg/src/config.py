"""
Configuration loader for the diffusion lab.

Two layers:
- ``settings``: process-level knobs read from ``JDIFF_*`` environment variables.
- ``load_experiment_config``: the declarative experiment file (``config.json``)
  merged with defaults and dotted CLI overrides.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from pydantic import ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.exceptions import ConfigurationError
from src.models import ExperimentConfig
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

# Path to the default experiment file
CONFIG_FILE = Path(__file__).parent.parent / "config.json"


class Settings(BaseSettings):
    """Environment-driven settings for the CLI process."""

    log_level: str = "INFO"
    log_dir: Optional[Path] = None
    log_color: Optional[bool] = None
    num_threads: Optional[int] = None
    runs_dir: Optional[Path] = None
    run_slow: bool = False

    model_config = SettingsConfigDict(env_prefix="JDIFF_", extra="ignore")


def _set_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted path, creating intermediate sections."""
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigurationError(dotted, f"'{key}' is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(item: str) -> tuple:
    """
    Parse one ``section.field=value`` override.

    Values are decoded as JSON when possible (numbers, booleans, lists),
    otherwise kept as strings.

    Args:
        item: Override string

    Returns:
        (dotted_key, value) tuple
    """
    if "=" not in item:
        raise ConfigurationError(item, "override must look like section.field=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(item, "empty override key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_experiment_config(
    path: Optional[Path] = None,
    overrides: Optional[Iterable[str]] = None
) -> ExperimentConfig:
    """
    Load the experiment config from file or use defaults, then apply overrides.

    Args:
        path: Config file (defaults to ``config.json`` at the repository root)
        overrides: Iterable of ``section.field=value`` strings

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigurationError: If the file is unreadable or a field is invalid
    """
    path = Path(path) if path else CONFIG_FILE
    raw: Dict[str, Any] = {}
    if path.exists():
        try:
            with open(path, 'r') as f:
                raw = json.load(f)
            logger.info(f"Configuration loaded from {path}")
        except json.JSONDecodeError as e:
            raise ConfigurationError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}")
    else:
        logger.warning(f"Config file {path} not found, using defaults")

    for item in overrides or ():
        key, value = parse_override(item)
        _set_dotted(raw, key, value)

    try:
        return ExperimentConfig.model_validate(raw)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigurationError(field, first["msg"])


def write_resolved_config(cfg: ExperimentConfig, run_dir: Path) -> Path:
    """
    Freeze the resolved configuration into a run directory.

    Args:
        cfg: Resolved configuration
        run_dir: Run directory

    Returns:
        Path of the written snapshot
    """
    target = run_dir / "config.resolved.json"
    FileOperations.write_text_atomic(target, cfg.canonical_json() + "\n")
    return target


# Global settings instance
settings = Settings()
