"""
Process settings loaded from environment variables and .env file, plus the
experiment config file: TOML with flat dotted keys, overridable by
KEY=VALUE strings and echoed back in the same form.
"""

import hashlib
import json
import sys
from collections.abc import Sequence
from functools import lru_cache
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from semalign.exceptions import ConfigError, InputFileError
from semalign.schemas import CliConfig


class Settings(BaseSettings):
    """Typed process configuration (SEMALIGN_* environment variables)."""

    model_config = SettingsConfigDict(
        env_prefix="SEMALIGN_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"


@lru_cache
def get_settings() -> Settings:
    """Return cached settings singleton."""
    return Settings()


def parse_value(raw: str) -> Any:
    """Read an override value as a TOML value; bare words stay strings."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def parse_override(text: str) -> tuple[str, Any]:
    """Split "dotted.key=value"."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{text}' is not KEY=VALUE")
    return key, parse_value(raw.strip())


def set_dotted(tree: dict[str, Any], key: str, value: Any) -> None:
    """Assign tree[a][b][c] = value for key "a.b.c"."""
    *parents, leaf = key.split(".")
    node = tree
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"'{key}': '{part}' is a value, not a section")
        node = child
    node[leaf] = value


def flatten(tree: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested mapping to flat dotted keys, preserving order."""
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def load_cli_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> CliConfig:
    """Defaults, then the config file, then overrides; unknown keys are rejected."""
    tree: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                tree = tomllib.load(handle)
        except FileNotFoundError:
            raise InputFileError(path, "no such file") from None
        except OSError as exc:
            raise InputFileError(path, exc.strerror or "cannot be read") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for text in overrides:
        set_dotted(tree, *parse_override(text))
    try:
        return CliConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int | float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list | tuple):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    raise ConfigError(f"cannot render {value!r} as TOML")


def echo_config(cfg: CliConfig) -> str:
    """Effective config as flat dotted-key TOML; unset optional keys are omitted."""
    flat = flatten(cfg.model_dump(mode="json"))
    lines = [f"{key} = {_toml_value(value)}" for key, value in flat.items() if value is not None]
    return "\n".join(lines) + "\n"


def config_hash(echo: str) -> str:
    """Short content hash naming a run's output directory."""
    return hashlib.sha256(echo.encode("utf-8")).hexdigest()[:12]
