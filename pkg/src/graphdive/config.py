"""Training configuration and the flat ``key = value`` text format.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma separated
and integer ranges may be written ``2..8``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

VARIANTS = ("pri", "post", "mean_mix", "baseline_bce", "baseline_focal", "baseline_reweight")
BASELINES = ("baseline_bce", "baseline_focal", "baseline_reweight")
SPLIT_STRATEGIES = ("auto", "provided", "random_stratified")

_ALIASES = {"lambda": "lam", "backbone_kind": "backbone", "gamma": "focal_gamma"}


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "pri"
    M: int = 3
    lam: float = 0.1
    tau: float = 1.0
    backbone: str = "gcn"
    d: int = 64
    K: int = 5
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    gate_mode: str = "individual"
    cosine_gate: bool = False
    gate_bias: bool = False
    focal_gamma: float = 2.0
    grid_m: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    grid_lambda: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0, 10.0)
    seeds: tuple[int, ...] = ()
    split: str = "auto"
    split_ratios: tuple[float, ...] = (0.8, 0.1, 0.1)
    split_file: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.focal_gamma < 0:
            raise ConfigError("focal_gamma must be nonnegative")
        if self.backbone not in ("gcn", "gin"):
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.split not in SPLIT_STRATEGIES:
            raise ConfigError(f"unknown split strategy {self.split!r}")
        if self.d < 1 or self.K < 1:
            raise ConfigError("d and K must be >= 1")

    @property
    def is_baseline(self) -> bool:
        return self.variant in BASELINES

    @property
    def experts(self) -> int:
        """Experts actually built; baselines are single-expert classifiers."""
        return 1 if self.is_baseline else self.M

    @property
    def seed_list(self) -> tuple[int, ...]:
        return self.seeds or (self.seed,)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, value in data.items():
            key = _ALIASES.get(key, key)
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, value, cls)
        return cls(**kwargs)

    def dumps(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, value, cls=TrainConfig):
    default = next(f for f in dataclasses.fields(cls) if f.name == key).default
    if isinstance(default, bool):
        return value if isinstance(value, bool) else _parse_bool(str(value))
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, (list, tuple)):
            return tuple(value)
        if key in ("grid_m", "seeds"):
            return parse_int_list(str(value))
        return parse_float_list(str(value))
    return str(value)


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path) -> TrainConfig:
    try:
        return TrainConfig.from_dict(parse_kv(Path(path).read_text()))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
