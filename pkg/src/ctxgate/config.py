"""Layered CLI configuration: flags > environment > config file > defaults.

Every effective value remembers where it came from so ``config show``
can print provenance. Secrets never live here; the embedder config
stores only the *name* of the environment variable holding the key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import yaml

DEFAULTS: dict[str, object] = {
    "policy": "p5",
    "threshold": 0.0,
    "distribution_source": "positive",
    "negative_strategy": "cross_topic",
    "negative_sample_n": 100_000,
    "seed": 0,
    "k": 3,
    "host": "127.0.0.1",
    "port": 8000,
    "embedder_base_url": "",
    "embedder_model": "",
    "embedder_api_key_env": "CTXGATE_API_KEY",
    "embedder_timeout": 30.0,
    "embedder_max_batch": 64,
}

ENV_PREFIX = "CTXGATE_"


@dataclass(frozen=True)
class ConfigValue:
    value: object
    source: str  # "flag" | "env" | "file" | "default"


class CliConfig:
    def __init__(self, values: dict[str, ConfigValue]):
        self._values = values

    @classmethod
    def load(cls, config_file: str | None = None,
             flag_overrides: dict[str, object] | None = None,
             env: dict[str, str] | None = None) -> "CliConfig":
        env = os.environ if env is None else env
        values = {k: ConfigValue(v, "default") for k, v in DEFAULTS.items()}
        if config_file:
            raw = yaml.safe_load(open(config_file, encoding="utf-8")) or {}
            for k, v in raw.items():
                if k in DEFAULTS:
                    values[k] = ConfigValue(type(DEFAULTS[k])(v), "file")
        for k in DEFAULTS:
            env_key = ENV_PREFIX + k.upper()
            if env_key in env:
                values[k] = ConfigValue(type(DEFAULTS[k])(env[env_key]), "env")
        for k, v in (flag_overrides or {}).items():
            if v is not None:
                values[k] = ConfigValue(v, "flag")
        return cls(values)

    def get(self, key: str):
        return self._values[key].value

    def show(self) -> str:
        lines = []
        for key in sorted(self._values):
            cv = self._values[key]
            lines.append(f"{key} = {cv.value!r}  ({cv.source})")
        return "\n".join(lines)
