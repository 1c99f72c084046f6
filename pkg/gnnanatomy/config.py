from __future__ import annotations

import dataclasses
import logging
import os
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values

from .errors import ConfigError
from .training import TrainConfig

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
THREADS_ENV = "GNNANATOMY_THREADS"
LOG_LEVEL_ENV = "GNNANATOMY_LOG_LEVEL"


def setup_logging(level: Optional[str] = None) -> None:
    """root 핸들러를 한 번 설정한다. 우선순위: 인자 > GNNANATOMY_LOG_LEVEL > INFO"""
    name = (level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)


def worker_count(flag: Optional[int] = None) -> int:
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--workers must be >= 1, got {flag}")
        return flag
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _field_types() -> Dict[str, Any]:
    return {f.name: f for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str) -> Any:
    default = _field_types()[key].default
    text = raw.strip()
    if key == "hidden_width":
        if text.lower() in ("", "none", "auto"):
            return None
        return _as_int(key, text)
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return _as_int(key, text)
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"config key {key!r}: expected a number, got {raw!r}") from None
    return text


def _as_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected an integer, got {text!r}") from None


def read_config_file(path: str) -> Dict[str, Any]:
    """``key = value`` 줄을 TrainConfig 필드 값으로 변환한다. 모르는 키는 ConfigError."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    known = _field_types()
    out: Dict[str, Any] = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if raw is None:
            raise ConfigError(f"{path}: config key {key!r} has no value")
        out[key] = _coerce(key, raw)
    return out


def load_train_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """flags (overrides, None은 무시) > config file > defaults"""
    merged: Dict[str, Any] = {}
    if path:
        merged.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _field_types():
            raise ConfigError(f"unknown training option {key!r}")
        merged[key] = value
    try:
        return TrainConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
