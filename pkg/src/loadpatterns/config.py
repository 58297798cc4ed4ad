"""Pipeline configuration: JSON schema, defaults and CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigInvalidError


@dataclass
class GridConfig:
    layers: list[int] = field(default_factory=lambda: [3])
    widths: list[int] = field(default_factory=lambda: [64])
    learning_rates: list[float] = field(default_factory=lambda: [0.1, 0.03, 0.01])


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 2000
    patience: int = 20
    coupling: str = "softmax"


@dataclass
class GbtConfig:
    trees: int = 100
    depth: int = 3
    shrinkage: float = 0.1


@dataclass
class PipelineConfig:
    meter_csv: str = ""
    survey_csv: str = ""
    out_dir: str = "artifacts"
    seed: int = 0
    k_range: tuple[int, int] = (2, 10)
    restarts: int = 10
    max_iter: int = 100
    max_profiles_per_class: int | None = 2000
    memory_budget_mb: float = 512.0
    bins: int = 5
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    grid: GridConfig = field(default_factory=GridConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gbt: GbtConfig = field(default_factory=GbtConfig)
    benchmark1_features: str = "all"
    benchmark2_features: str = "all"

    def validate(self) -> None:
        if not self.meter_csv or not self.survey_csv:
            raise ConfigInvalidError("meter_csv and survey_csv paths are required")
        lo, hi = self.k_range
        if lo < 2 or hi < lo:
            raise ConfigInvalidError(f"invalid k_range {self.k_range}")
        if self.bins < 2:
            raise ConfigInvalidError("bins must be at least 2")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigInvalidError(f"split fractions {self.split} must sum to 1")
        if self.restarts < 1 or self.max_iter < 1:
            raise ConfigInvalidError("restarts and max_iter must be at least 1")
        if not self.grid.layers or not self.grid.widths or not self.grid.learning_rates:
            raise ConfigInvalidError("hyperparameter grid must be non-empty")
        for mode in (self.benchmark1_features, self.benchmark2_features):
            if mode not in ("all", "unselected"):
                raise ConfigInvalidError(f"unknown benchmark feature mode {mode!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {
            "meter_csv", "survey_csv", "out_dir", "seed", "k_range", "restarts",
            "max_iter", "max_profiles_per_class", "memory_budget_mb", "bins",
            "split", "grid", "train", "gbt", "benchmark1_features",
            "benchmark2_features",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalidError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for key in ("meter_csv", "survey_csv", "out_dir", "benchmark1_features",
                    "benchmark2_features"):
            if key in data:
                setattr(cfg, key, str(data[key]))
        for key in ("seed", "restarts", "max_iter", "bins"):
            if key in data:
                setattr(cfg, key, int(data[key]))
        if "max_profiles_per_class" in data:
            v = data["max_profiles_per_class"]
            cfg.max_profiles_per_class = None if v is None else int(v)
        if "memory_budget_mb" in data:
            cfg.memory_budget_mb = float(data["memory_budget_mb"])
        if "k_range" in data:
            lo, hi = data["k_range"]
            cfg.k_range = (int(lo), int(hi))
        if "split" in data:
            cfg.split = tuple(float(v) for v in data["split"])
        if "grid" in data:
            g = data["grid"]
            cfg.grid = GridConfig(
                layers=[int(v) for v in g.get("layers", [3])],
                widths=[int(v) for v in g.get("widths", [64])],
                learning_rates=[float(v) for v in g.get("learning_rates", [0.1, 0.03, 0.01])],
            )
        if "train" in data:
            t = data["train"]
            cfg.train = TrainConfig(
                batch_size=int(t.get("batch_size", 32)),
                max_epochs=int(t.get("max_epochs", 2000)),
                patience=int(t.get("patience", 20)),
                coupling=str(t.get("coupling", "softmax")),
            )
        if "gbt" in data:
            b = data["gbt"]
            cfg.gbt = GbtConfig(
                trees=int(b.get("trees", 100)),
                depth=int(b.get("depth", 3)),
                shrinkage=float(b.get("shrinkage", 0.1)),
            )
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigInvalidError(f"cannot read config {path}: {exc}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalidError(f"config {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigInvalidError("config root must be a JSON object")
        return cls.from_dict(data)


def parse_k_range(text: str) -> tuple[int, int]:
    """Parse a LO:HI flag value like "2:10"."""
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigInvalidError(f"bad k-range {text!r}, expected LO:HI")


def parse_grid(text: str) -> GridConfig:
    """Parse a LAYERS:WIDTHS:LRS flag value like "2,3:16,64:0.1,0.03"."""
    try:
        layers, widths, lrs = text.split(":")
        return GridConfig(
            layers=[int(v) for v in layers.split(",")],
            widths=[int(v) for v in widths.split(",")],
            learning_rates=[float(v) for v in lrs.split(",")],
        )
    except ValueError:
        raise ConfigInvalidError(
            f"bad grid {text!r}, expected LAYERS:WIDTHS:LRS with comma lists"
        )
