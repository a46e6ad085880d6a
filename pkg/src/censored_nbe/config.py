"""Versioned JSON experiment configuration.

Example::

    {
      "version": 1,
      "family": "gp",
      "grid": "g8",
      "tau": 0.9,
      "train": {"K": 5000, "m_ladder": [10, 50], "max_epochs": 30},
      "n_test": 1000,
      "m": 50,
      "cpl_h_max": [3.0],
      "output_dir": "runs/gp",
      "seed": 0
    }

Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .censoring import CensoringScheme, preset_scheme
from .exceptions import InvalidArgument
from .processes import canonical_family
from .spatial import GRID_PRESETS
from .training import PriorSpec, TrainConfig

__all__ = ["ExperimentConfig", "load_config", "CONFIG_VERSION"]

CONFIG_VERSION = 1

_TRAIN_KEYS = {
    "K", "m_ladder", "loss", "tau_mode", "tau_range", "refresh_period", "lr",
    "batch_size", "max_epochs", "patience", "channels",
}


@dataclass
class ExperimentConfig:
    family: str = "gp"
    grid: str = "g8"
    tau: float = 0.9
    margin: str | None = None
    c_policy: str | None = None
    prior: dict | None = None
    train: dict = field(default_factory=dict)
    m: int = 50
    n_test: int = 1000
    cpl_h_max: list = field(default_factory=lambda: [3.0])
    output_dir: str = "out"
    seed: int = 0
    deterministic: bool = False
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise InvalidArgument(f"unsupported config version {self.version}")
        self.family = canonical_family(self.family)
        if self.grid not in GRID_PRESETS:
            raise InvalidArgument(f"unknown grid preset {self.grid!r}")
        unknown = set(self.train) - _TRAIN_KEYS
        if unknown:
            raise InvalidArgument(f"unknown train fields {sorted(unknown)}")
        if self.n_test < 1 or self.m < 1:
            raise InvalidArgument("n_test and m must be positive")
        self.cpl_h_max = [float(h) for h in self.cpl_h_max]

    def prior_spec(self) -> PriorSpec:
        if self.prior is None:
            return PriorSpec.simulation_study(self.family)
        return PriorSpec.from_dict(self.prior)

    def scheme(self) -> CensoringScheme:
        base = preset_scheme(self.family, self.tau)
        return CensoringScheme(self.tau, self.margin or base.margin,
                               self.c_policy or base.c_policy)

    def train_config(self) -> TrainConfig:
        kw = dict(self.train)
        ladder = tuple(kw.pop("m_ladder", (10, self.m) if self.m > 10 else (self.m,)))
        if ladder[-1] != self.m:
            raise InvalidArgument(f"m ladder {ladder} must end at m={self.m}")
        if "tau_range" in kw:
            kw["tau_range"] = tuple(kw["tau_range"])
        return TrainConfig(self.prior_spec(), m_ladder=ladder, tau=self.tau, seed=self.seed,
                           **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` with value ``None`` are ignored."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidArgument("config must be a JSON object")
    return config_from_dict(raw, **overrides)


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidArgument(f"unknown config fields {sorted(unknown)}")
    raw = dict(raw)
    train = dict(raw.get("train", {}))
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "K":
            train["K"] = val
        elif key == "m" and "m_ladder" in train:
            raw["m"] = int(val)
            train["m_ladder"] = [v for v in train["m_ladder"] if v < val] + [int(val)]
        else:
            raw[key] = val
    raw["train"] = train
    return ExperimentConfig(**raw)
