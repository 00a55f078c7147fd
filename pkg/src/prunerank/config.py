"""Settings resolution: CLI flag > environment variable > config file > default.

The config file is INI-style (``[section]`` headers, ``key = value`` lines)
and read with :mod:`configparser`. See ``data/prunerank.sample.conf`` in the package.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import InputError
from .pruner import PruningOptions
from .scorer import ScorerConfig

ENV_CONFIG = "PRUNERANK_CONFIG"
ENV_ENDPOINT = "PRUNERANK_SCORER_ENDPOINT"
ENV_THRESHOLD = "PRUNERANK_THRESHOLD"


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_str(v) -> Optional[str]:
    v = None if v is None else str(v).strip()
    return v or None


# key -> (parser, default)
FIELDS: dict[str, tuple[Any, Any]] = {
    "service.listen": (str, "127.0.0.1:8080"),
    "service.max_batch": (int, 64),
    "service.request_timeout": (float, 30.0),
    "service.max_concurrency": (int, 16),
    "scorer.backend": (str, "lexical"),
    "scorer.endpoint": (_opt_str, None),
    "scorer.model_path": (_opt_str, None),
    "scorer.batch_size": (int, 16),
    "scorer.timeout": (float, 30.0),
    "scorer.max_in_flight": (int, 4),
    "pruning.threshold": (float, 0.5),
    "pruning.always_keep_first": (_bool, False),
    "pruning.basis": (str, "characters"),
}

ENV_FIELDS = {
    "scorer.endpoint": ENV_ENDPOINT,
    "pruning.threshold": ENV_THRESHOLD,
}


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = f"{section}.{key}"
            if name not in FIELDS:
                raise InputError(f"unknown config key {name!r} in {path}")
            out[name] = value
    return out


def resolve(
    cli: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
    config_path=None,
) -> dict[str, Any]:
    """Merge all sources into one typed flat mapping.

    ``cli`` entries set to ``None`` count as absent. The config file is
    ``config_path`` if given, else ``$PRUNERANK_CONFIG`` if set.
    """
    cli = {k: v for k, v in (cli or {}).items() if v is not None}
    env = os.environ if env is None else env
    config_path = config_path or env.get(ENV_CONFIG) or None
    file_values = read_config_file(config_path) if config_path else {}
    out = {}
    for key, (parse, default) in FIELDS.items():
        if key in cli:
            raw = cli[key]
        elif key in ENV_FIELDS and env.get(ENV_FIELDS[key]):
            raw = env[ENV_FIELDS[key]]
        elif key in file_values:
            raw = file_values[key]
        else:
            out[key] = default
            continue
        try:
            out[key] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad value for {key}: {raw!r}") from exc
    return out


def scorer_config(values: Mapping[str, Any]) -> ScorerConfig:
    backend = values["scorer.backend"]
    return ScorerConfig(
        backend=backend,
        endpoint=values["scorer.endpoint"] if backend == "remote" else None,
        model_path=values["scorer.model_path"] if backend == "toy-model" else None,
        batch_size=values["scorer.batch_size"],
        timeout=values["scorer.timeout"],
        max_in_flight=values["scorer.max_in_flight"],
    )


def pruning_options(values: Mapping[str, Any]) -> PruningOptions:
    return PruningOptions(
        threshold=values["pruning.threshold"],
        always_keep_first=values["pruning.always_keep_first"],
        basis=values["pruning.basis"],
    )


@dataclass(frozen=True)
class ServiceConfig:
    listen_address: str = "127.0.0.1:8080"
    scorer: ScorerConfig = ScorerConfig()
    default_threshold: float = 0.5
    max_batch: int = 64
    request_timeout: float = 30.0
    max_concurrency: int = 16
    always_keep_first: bool = False
    basis: str = "characters"

    def __post_init__(self):
        if not 0.0 <= self.default_threshold <= 1.0:
            raise InputError("default_threshold must lie in [0, 1]")
        if self.max_batch < 1 or self.max_concurrency < 1:
            raise InputError("max_batch and max_concurrency must be at least 1")
        self.host_port()

    def host_port(self) -> tuple[str, int]:
        host, sep, port = self.listen_address.rpartition(":")
        if not sep or not port.isdigit():
            raise InputError(f"listen address must be host:port, got {self.listen_address!r}")
        return host or "127.0.0.1", int(port)


def service_config(values: Mapping[str, Any]) -> ServiceConfig:
    return ServiceConfig(
        listen_address=values["service.listen"],
        scorer=scorer_config(values),
        default_threshold=values["pruning.threshold"],
        max_batch=values["service.max_batch"],
        request_timeout=values["service.request_timeout"],
        max_concurrency=values["service.max_concurrency"],
        always_keep_first=values["pruning.always_keep_first"],
        basis=values["pruning.basis"],
    )


def sample_config_text() -> str:
    return (Path(__file__).parent / "data" / "prunerank.sample.conf").read_text(encoding="utf-8")
