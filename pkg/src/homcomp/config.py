"""JSON run configuration: defaults, strict key checking, resolution."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .cost_model import DEFAULT_M_LIMIT, ClusterConfig, CodecProfile, ConfigError, Strategy

OUTPUT_FORMATS = ("csv", "json", "svg")

_SCHEMA: dict[str, Any] = {
    "cluster": {"workers", "minibatch_time", "iterations", "weight_bytes", "bandwidth",
                "minibatch", "dataset"},
    "strategy": None,
    "profile": {"rho", "compression_ratio", "h", "compress_s", "decompress_s"},
    "sweep": {"m_min", "m_max", "h", "rho"},
    "frontier": {"r", "rho"},
    "m_limit": None,
    "updates": None,
    "output": {"path", "format"},
}


def default_config_dict() -> dict:
    text = resources.files("homcomp").joinpath("data/alexnet_like.json").read_text()
    return json.loads(text)


def _check_keys(raw: dict) -> None:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = _SCHEMA[key]
        if allowed is not None and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be an object")
            extra = set(value) - allowed
            if extra:
                raise ConfigError(f"unknown key(s) in {key!r}: {', '.join(sorted(extra))}")


def merge(base: dict, override: dict) -> dict:
    _check_keys(override)
    out = copy.deepcopy(base)
    ratio_keys = {"rho", "compression_ratio"}
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            base = out[key]
            if key == "profile" and ratio_keys & set(value):
                # a new ratio replaces the old one whichever convention it used
                base = {k: v for k, v in base.items() if k not in ratio_keys}
            out[key] = {**base, **value}
        else:
            out[key] = copy.deepcopy(value)
    return out


def _float_list(name: str, values) -> tuple[float, ...]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{name} must be a non-empty list")
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must contain numbers") from None


def _profile(raw: Optional[dict]) -> Optional[CodecProfile]:
    if raw is None:
        return None
    raw = dict(raw)
    if ("rho" in raw) == ("compression_ratio" in raw):
        raise ConfigError("profile needs exactly one of 'rho' (compressed/original) "
                          "or 'compression_ratio' (original/compressed)")
    rest = {k: float(raw[k]) for k in ("h", "compress_s", "decompress_s") if k in raw}
    if "compression_ratio" in raw:
        return CodecProfile.from_table_ratio(float(raw["compression_ratio"]), **rest)
    return CodecProfile(rho=float(raw["rho"]), **rest)


@dataclass(frozen=True)
class RunConfig:
    cluster: ClusterConfig
    strategy: Strategy = Strategy.VANILLA
    profile: Optional[CodecProfile] = None
    m_range: tuple[int, int] = (1, 25)
    h_list: tuple[float, ...] = (1.0,)
    rho_list: tuple[float, ...] = (0.2, 0.5)
    r: float = 4.0
    frontier_rho: tuple[float, ...] = (0.2, 0.5)
    m_limit: int = DEFAULT_M_LIMIT
    updates: int = 10
    output_path: Optional[str] = None
    output_format: str = "csv"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def workers_range(self) -> range:
        return range(self.m_range[0], self.m_range[1] + 1)

    def resolved(self) -> dict:
        """The exact settings this run used, loadable as a config file."""
        return copy.deepcopy(self.raw)


def from_dict(raw: dict) -> RunConfig:
    _check_keys(raw)
    try:
        cluster = ClusterConfig(**raw["cluster"])
    except TypeError as exc:
        raise ConfigError(f"cluster: {exc}") from None
    strategy = Strategy.parse(raw.get("strategy", "vanilla"))
    profile = _profile(raw.get("profile"))
    if strategy is not Strategy.VANILLA and profile is None:
        raise ConfigError(f"strategy {strategy.value!r} needs a profile")
    sweep = raw.get("sweep") or {}
    m_min, m_max = int(sweep.get("m_min", 1)), int(sweep.get("m_max", 25))
    if not 1 <= m_min <= m_max:
        raise ConfigError("sweep needs 1 <= m_min <= m_max")
    if m_max > cluster.minibatch:
        raise ConfigError(f"sweep m_max {m_max} exceeds minibatch {cluster.minibatch}")
    frontier = raw.get("frontier") or {}
    output = raw.get("output") or {}
    fmt = output.get("format", "csv")
    if fmt not in OUTPUT_FORMATS:
        raise ConfigError(f"output format must be one of {OUTPUT_FORMATS}")
    updates = raw.get("updates", 10)
    m_limit = raw.get("m_limit", DEFAULT_M_LIMIT)
    for name, v in (("updates", updates), ("m_limit", m_limit)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{name} must be an integer >= 1")
    r = float(frontier.get("r", 4.0))
    if r < 1:
        raise ConfigError("frontier r must be >= 1")
    return RunConfig(
        cluster=cluster,
        strategy=strategy,
        profile=profile,
        m_range=(m_min, m_max),
        h_list=_float_list("sweep.h", sweep.get("h", [1.0])),
        rho_list=_float_list("sweep.rho", sweep.get("rho", [0.2, 0.5])),
        r=r,
        frontier_rho=_float_list("frontier.rho", frontier.get("rho", [0.2, 0.5])),
        m_limit=m_limit,
        updates=updates,
        output_path=output.get("path"),
        output_format=fmt,
        raw=copy.deepcopy(raw),
    )


def load(path: Optional[str | Path] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults <- config file <- overrides.

    A report file written by this tool is accepted too: its embedded
    ``config`` object is used.
    """
    raw = default_config_dict()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if isinstance(data, dict) and "config" in data and "cluster" not in data:
            data = data["config"]
        raw = merge(raw, data)
    if overrides:
        raw = merge(raw, overrides)
    return from_dict(raw)
