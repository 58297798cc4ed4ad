"""Synthetic cohort generator with known ground truth.

Households get socioeconomic attributes drawn from fixed categorical and
count distributions; a softmax link over configured feature strengths turns
those attributes into a true pattern distribution per household. Each day
samples an archetype shape from that distribution, perturbs it hourly and
rescales it into a plausible kWh range, producing exactly the CSV formats
the ingest module consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .errors import ConfigInvalidError
from .ingest import (
    FEATURE_NAMES,
    RawMeterSeries,
    SocioRecord,
    write_meter_csv,
    write_survey_csv,
)
from .neural import softmax
from .validation import HOURS_PER_DAY

_HOURS = np.arange(HOURS_PER_DAY, dtype=np.float64)


def _bump(center: float, width: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.exp(-((_HOURS - center) ** 2) / (2.0 * width**2))


def _minmax(shape: np.ndarray) -> np.ndarray:
    return (shape - shape.min()) / (shape.max() - shape.min())


def default_archetypes() -> list[np.ndarray]:
    """Six plausible daily shapes: evening-peak variants plus midday and
    dual-peak patterns."""
    shapes = [
        _bump(19, 2.5) + 0.15 * _bump(7, 1.5),
        _bump(21, 2.0) + 0.10 * _bump(8, 2.0),
        _bump(17, 3.0) + 0.30 * _bump(6, 1.5),
        _bump(7, 1.5, 0.9) + _bump(20, 2.0),
        _bump(12, 3.0),
        _bump(11, 2.0, 0.9) + _bump(20, 1.8),
    ]
    return [_minmax(s) for s in shapes]


@dataclass
class GeneratorConfig:
    """Everything the generator needs, seed included."""

    households: int = 60
    days: int = 90
    archetypes: list = field(default_factory=default_archetypes)
    # feature name -> {pattern index: link strength on the standardized value}
    dependence: dict = field(
        default_factory=lambda: {"age_65p": {0: 1.0}, "education": {1: 1.0}}
    )
    # per-pattern constant added to the softmax scores; skews the base rates
    pattern_offsets: list | None = None
    noise: float = 0.02
    seed: int = 0
    start: date = date(2017, 1, 2)

    def validate(self) -> None:
        if self.households < 10:
            raise ConfigInvalidError("need at least 10 households")
        if self.days < 1:
            raise ConfigInvalidError("need at least 1 day")
        if self.noise < 0:
            raise ConfigInvalidError("noise must be non-negative")
        if not self.archetypes:
            raise ConfigInvalidError("need at least one archetype")
        for i, arch in enumerate(self.archetypes):
            arr = np.asarray(arch, dtype=np.float64)
            if arr.shape != (HOURS_PER_DAY,):
                raise ConfigInvalidError(f"archetype {i} must have 24 values")
            if arr.min() != 0.0 or arr.max() != 1.0:
                raise ConfigInvalidError(f"archetype {i} must span [0, 1] exactly")
        k = len(self.archetypes)
        for feature, links in self.dependence.items():
            if feature not in FEATURE_NAMES:
                raise ConfigInvalidError(f"unknown feature {feature!r} in dependence map")
            for pattern in links:
                if not 0 <= int(pattern) < k:
                    raise ConfigInvalidError(
                        f"dependence on {feature!r} references pattern {pattern}, "
                        f"but there are only {k} archetypes"
                    )
        if self.pattern_offsets is not None and len(self.pattern_offsets) != k:
            raise ConfigInvalidError(
                f"{len(self.pattern_offsets)} pattern offsets for {k} archetypes"
            )

    def to_dict(self) -> dict:
        return {
            "households": self.households,
            "days": self.days,
            "archetypes": [[float(v) for v in a] for a in self.archetypes],
            "dependence": {
                f: {str(p): float(s) for p, s in links.items()}
                for f, links in self.dependence.items()
            },
            "pattern_offsets": None
            if self.pattern_offsets is None
            else [float(v) for v in self.pattern_offsets],
            "noise": self.noise,
            "seed": self.seed,
            "start": self.start.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        kwargs = dict(data)
        if "archetypes" in kwargs:
            kwargs["archetypes"] = [np.asarray(a, dtype=np.float64) for a in kwargs["archetypes"]]
        if "dependence" in kwargs:
            kwargs["dependence"] = {
                f: {int(p): float(s) for p, s in links.items()}
                for f, links in kwargs["dependence"].items()
            }
        if "start" in kwargs and isinstance(kwargs["start"], str):
            kwargs["start"] = date.fromisoformat(kwargs["start"])
        return cls(**kwargs)


def _draw_survey(rng: np.random.Generator, households: int) -> list[SocioRecord]:
    records = []
    for i in range(households):
        records.append(
            SocioRecord(
                household_id=f"H{i + 1:04d}",
                age_counts=(
                    int(rng.choice([0, 1, 2, 3], p=[0.55, 0.20, 0.15, 0.10])),
                    int(rng.choice([0, 1, 2], p=[0.60, 0.25, 0.15])),
                    int(rng.choice([0, 1, 2, 3], p=[0.25, 0.35, 0.30, 0.10])),
                    int(rng.choice([0, 1, 2], p=[0.55, 0.30, 0.15])),
                    int(rng.choice([0, 1, 2], p=[0.60, 0.25, 0.15])),
                ),
                income_code=int(rng.integers(1, 10)),
                education_code=int(rng.integers(1, 5)),
                sqft=int(rng.integers(800, 4200)),
            )
        )
    return records


def true_distributions(
    records: list[SocioRecord],
    dependence: dict,
    n_patterns: int,
    pattern_offsets=None,
) -> np.ndarray:
    """Softmax link from standardized planted features to pattern shares."""
    n = len(records)
    scores = np.zeros((n, n_patterns))
    if pattern_offsets is not None:
        scores += np.asarray(pattern_offsets, dtype=np.float64)
    matrix = np.vstack([r.feature_vector() for r in records])
    for feature, links in dependence.items():
        col = matrix[:, FEATURE_NAMES.index(feature)]
        std = col.std()
        z = (col - col.mean()) / std if std > 0 else np.zeros(n)
        for pattern, strength in links.items():
            scores[:, int(pattern)] += float(strength) * z
    return softmax(scores)


@dataclass
class GeneratedCohort:
    meter_csv: str
    survey_csv: str
    truth: dict


def generate(config: GeneratorConfig) -> GeneratedCohort:
    """Produce meter and survey CSV text plus the ground-truth record."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    archetypes = [np.asarray(a, dtype=np.float64) for a in config.archetypes]
    k = len(archetypes)

    records = _draw_survey(rng, config.households)
    truth_p = true_distributions(records, config.dependence, k, config.pattern_offsets)

    series = []
    for i, record in enumerate(records):
        base = float(rng.uniform(0.3, 0.8))
        scale = float(rng.uniform(1.5, 3.0))
        timestamps = []
        loads = []
        for d in range(config.days):
            day = config.start + timedelta(days=d)
            pattern = int(rng.choice(k, p=truth_p[i]))
            shape = archetypes[pattern]
            if config.noise > 0:
                shape = shape + rng.normal(0.0, config.noise, HOURS_PER_DAY)
            kwh = base + scale * shape
            for hour in range(HOURS_PER_DAY):
                timestamps.append(datetime(day.year, day.month, day.day, hour))
                loads.append(round(float(kwh[hour]), 6))
        series.append(
            RawMeterSeries(
                household_id=record.household_id,
                timestamps=timestamps,
                loads=np.array(loads),
            )
        )

    truth = {
        "archetypes": [[float(v) for v in a] for a in archetypes],
        "true_distributions": {
            r.household_id: [float(p) for p in truth_p[i]]
            for i, r in enumerate(records)
        },
        "dependence": {
            f: {str(p): float(s) for p, s in links.items()}
            for f, links in config.dependence.items()
        },
        "planted_features": sorted(config.dependence),
        "config": config.to_dict(),
    }
    return GeneratedCohort(
        meter_csv=write_meter_csv(series),
        survey_csv=write_survey_csv(records),
        truth=truth,
    )
