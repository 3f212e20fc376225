"""Run configuration: ``key = value`` files merged with command-line flags."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


def _floats(text: str):
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _ints(text: str):
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _basis(text: str) -> str:
    value = str(text).strip().upper()
    if value not in ("X", "Z"):
        raise ValueError(f"basis must be x or z, got {text!r}")
    return value


# Every recognised key and its parser.
KEYS: Dict[str, Callable[[Any], Any]] = {
    "seed": int,
    "threads": int,
    "distance": int,
    "distances": _ints,
    "p_prime": float,
    "p_values": _floats,
    "cycles": int,
    "shots": int,
    "basis": _basis,
    "variant": str,
    "graph_mode": str,
    "passes": int,
    "threshold": float,
    "out": str,
    "input": str,
    "model": str,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "p_mix": float,
    "batches": _ints,
    "repeats": int,
}


def read_config_file(path) -> Dict[str, str]:
    """Plain ``key = value`` lines; '#' starts a comment; no sections needed."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_string("[run]\n" + fh.read(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser["run"])


def merge(file_values: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Validate and merge; command-line values win over file values."""
    out: Dict[str, Any] = {}
    for source in (file_values, overrides):
        for key, raw in source.items():
            if raw is None:
                continue
            norm = key.replace("-", "_")
            if norm not in KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                out[norm] = KEYS[norm](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    return out


@dataclass
class RunConfig:
    command: str
    values: Dict[str, Any]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def require(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"{self.command} needs --{key.replace('_', '-')}")
        return self.values[key]

    def echo(self) -> Dict[str, Any]:
        """Effective configuration for provenance records."""
        out = {"command": self.command}
        out.update({k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())})
        return out


def load(command: str, config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    file_values = read_config_file(config_path) if config_path else {}
    return RunConfig(command, merge(file_values, overrides))
