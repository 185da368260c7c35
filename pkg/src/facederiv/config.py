"""Run configuration: a flat JSON document whose keys mirror :class:`RunConfig`."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .dfpca import DEFAULT_THRESHOLD
from .errors import ConfigError
from .face import GridSpec
from .simulate import Setting

__all__ = ["RunConfig", "load_config"]


@dataclass(frozen=True)
class RunConfig:
    c: int = 38
    q: int = 3
    d: int = 1
    l1: int = 2
    l2: int = 3
    lambda_min: float = 1e-6
    lambda_max: float = 1e6
    lambda_count: int = 25
    w_min: float = 0.0
    w_max: float = 1.0
    w_count: int = 11
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    setting: str = Setting.DENSE_CLEAN.value
    n: int = 100
    J: int = 101
    replicates: int = 50
    components: tuple[str, ...] = ("X1", "X2")
    jobs: int = 1

    def __post_init__(self) -> None:
        for name in ("c", "q", "d", "l1", "l2", "lambda_count", "w_count", "n", "J", "replicates", "jobs"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.q < 0 or self.c <= self.q:
            raise ConfigError(f"need c > q >= 0, got c={self.c}, q={self.q}")
        if self.d < 0:
            raise ConfigError("derivative order d must be nonnegative")
        if self.d > 0 and self.q < self.d + 2:
            raise ConfigError(f"degree q={self.q} is too low for derivative order d={self.d}; need q >= d + 2")
        if min(self.l1, self.l2) < 1 or max(self.l1, self.l2) >= self.c:
            raise ConfigError(f"penalty orders must lie in [1, c), got ({self.l1}, {self.l2})")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in (0, 1], got {self.threshold}")
        if not 0.0 < self.lambda_min <= self.lambda_max or self.lambda_count < 1:
            raise ConfigError("lambda grid needs 0 < lambda_min <= lambda_max and at least one point")
        if not 0.0 <= self.w_min <= self.w_max <= 1.0 or self.w_count < 1:
            raise ConfigError("w grid needs 0 <= w_min <= w_max <= 1 and at least one point")
        if self.jobs < 1 or self.replicates < 1 or self.n < 1 or self.J < 2:
            raise ConfigError("jobs, replicates and n must be positive and J at least 2")
        Setting.parse(self.setting)
        if not self.components:
            raise ConfigError("at least one component is required")

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec.log_spaced(
            self.lambda_min, self.lambda_max, self.lambda_count, self.w_min, self.w_max, self.w_count
        )

    def updated(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        return self.from_mapping({**asdict(self), **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        values = dict(data)
        if "components" in values:
            comp = values["components"]
            values["components"] = tuple(comp.split(",")) if isinstance(comp, str) else tuple(comp)
        try:
            return replace(cls(), **values)
        except TypeError as exc:  # pragma: no cover - guarded by the key check
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        data = asdict(self)
        data["components"] = list(self.components)
        return json.dumps(data, indent=2, sort_keys=True)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_mapping(data)
