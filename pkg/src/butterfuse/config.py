"""Run configuration: a flat ``key=value`` file overridable from the command line."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .losses import LossWeights

PRECISIONS = {"double": np.float64, "single": np.float32}
INITS = ("random", "zero")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    damping_size: int = 3  # F
    amplifier_size: int = 3  # F_hat
    channels: int = 8  # C
    lambda_iou: float = 7.5
    lambda_cls: float = 0.5
    lambda_dfl: float = 1.5
    alpha: float = 0.25
    gamma: float = 2.0
    precision: str = "double"
    init: str = "random"
    params: str = ""  # directory of saved FAFCE parameters; empty means initialise
    upsample: str = "clfd"
    amplify: bool = True
    share_gates: bool = False
    threshold: float = 1e-4
    eps: float = 1e-4
    probes: int = 12  # finite-difference probes per parameter group for large targets
    cases: int = 1000
    out: str = ""

    def __post_init__(self):
        for name in ("damping_size", "amplifier_size"):
            f = getattr(self, name)
            if f < 1 or f % 2 == 0:
                raise ConfigError(f"invalid kernel size: {name}={f} must be odd and positive")
        for name in ("lambda_iou", "lambda_cls", "lambda_dfl"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if not 0 <= self.alpha <= 1 or self.gamma < 0:
            raise ConfigError(f"need 0 <= alpha <= 1 and gamma >= 0, got {self.alpha}, {self.gamma}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")
        if self.upsample not in ("clfd", "nearest"):
            raise ConfigError(f"upsample must be 'clfd' or 'nearest', got {self.upsample!r}")
        if self.threshold < 0 or self.eps <= 0 or self.probes < 1 or self.cases < 1:
            raise ConfigError("threshold >= 0, eps > 0, probes >= 1 and cases >= 1 required")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_iou, self.lambda_cls, self.lambda_dfl)

    def rng(self, stream: int = 0) -> np.random.Generator:
        """PCG64 generator for ``(seed, stream)``."""
        return np.random.default_rng([self.seed, stream])


def _convert(name: str, kind: Any, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        if kind in (bool, "bool"):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def make_config(values: Mapping[str, Any] = ()) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in dict(values).items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[name] = _convert(name, known[name], raw)
    return RunConfig(**kwargs)


def parse_config(text: str) -> dict[str, str]:
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None, overrides: Mapping[str, Any] = ()) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values.update(parse_config(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: v for k, v in dict(overrides).items() if v is not None})
    return make_config(values)


def replace(config: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(config, **changes)
