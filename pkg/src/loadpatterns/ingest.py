"""Meter and survey file parsing, day splitting, scaling and ordinal encoding.

Meter CSV format: ``household_id,timestamp,kwh`` with ISO-8601 timestamps at
hour resolution. Survey CSV format:
``household_id,age_u12,age_13_24,age_25_49,age_50_64,age_65p,income,education,sqft``
where income and education may be either textual labels or their ordinal codes.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

from .errors import (
    DegenerateDayError,
    DuplicateReadingError,
    MalformedRowError,
    MissingFieldError,
    NegativeLoadError,
    UnknownCategoryError,
)
from .validation import HOURS_PER_DAY

WEEKDAY = "weekday"
WEEKEND = "weekend"
DAY_CLASSES = (WEEKDAY, WEEKEND)

METER_HEADER = ["household_id", "timestamp", "kwh"]
SURVEY_HEADER = [
    "household_id",
    "age_u12",
    "age_13_24",
    "age_25_49",
    "age_50_64",
    "age_65p",
    "income",
    "education",
    "sqft",
]

AGE_FEATURES = ("age_u12", "age_13_24", "age_25_49", "age_50_64", "age_65p")
FEATURE_NAMES = AGE_FEATURES + ("income", "education", "sqft")
# sqft is the only feature treated as continuous; the rest are small-integer codes.
CONTINUOUS_FEATURES = ("sqft",)

# Ordinal encoding of the survey's categorical answers. Annual income spans
# nine brackets, education four levels.
INCOME_CODES = {
    "Less than $10,000": 1,
    "$10,000 - 19,999": 2,
    "$20,000 - 34,999": 3,
    "$35,000 - 49,999": 4,
    "$50,000 - 74,999": 5,
    "$75,000 - 99,999": 6,
    "$100,000 - 149,999": 7,
    "$150,000 - 299,000": 8,
    "$300,000 - 1,000,000": 9,
}
EDUCATION_CODES = {
    "High School graduate": 1,
    "Some college/trade/vocational school": 2,
    "College graduate": 3,
    "Postgraduate degree": 4,
}


def _normalize_label(label: str) -> str:
    return re.sub(r"\s+", " ", label.strip()).casefold()


_INCOME_LOOKUP = {_normalize_label(k): v for k, v in INCOME_CODES.items()}
_EDUCATION_LOOKUP = {_normalize_label(k): v for k, v in EDUCATION_CODES.items()}
INCOME_LABELS = {v: k for k, v in INCOME_CODES.items()}
EDUCATION_LABELS = {v: k for k, v in EDUCATION_CODES.items()}


@dataclass
class RawMeterSeries:
    """One household's hourly readings, sorted by timestamp."""

    household_id: str
    timestamps: list[datetime]
    loads: np.ndarray  # kWh, non-negative

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass
class DayProfile:
    """A min-max scaled 24-hour load shape for one household-day."""

    household_id: str
    day: date
    day_class: str
    values: np.ndarray  # 24 floats in [0, 1], min 0 and max 1


@dataclass
class SocioRecord:
    """One household's encoded socioeconomic attributes."""

    household_id: str
    age_counts: tuple[int, int, int, int, int]
    income_code: int
    education_code: int
    sqft: int

    def feature_vector(self) -> np.ndarray:
        return np.array(
            [*self.age_counts, self.income_code, self.education_code, self.sqft],
            dtype=np.float64,
        )


@dataclass
class IngestReport:
    """Counters for the run report."""

    meter_rows: int = 0
    survey_rows: int = 0
    households_with_meter: int = 0
    households_with_survey: int = 0
    dropped_incomplete_days: int = 0
    dropped_degenerate_days: int = 0
    excluded_households: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "meter_rows": self.meter_rows,
            "survey_rows": self.survey_rows,
            "households_with_meter": self.households_with_meter,
            "households_with_survey": self.households_with_survey,
            "dropped_incomplete_days": self.dropped_incomplete_days,
            "dropped_degenerate_days": self.dropped_degenerate_days,
            "excluded_households": sorted(self.excluded_households),
        }


def _open_text(file) -> io.TextIOBase:
    if isinstance(file, (str, bytes)) and not isinstance(file, str):
        return io.StringIO(file.decode("utf-8"))
    if isinstance(file, str):
        return io.StringIO(file)
    if isinstance(file, (io.RawIOBase, io.BufferedIOBase)):
        return io.TextIOWrapper(file, encoding="utf-8")
    return file


def _parse_timestamp(text: str, row_num: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise MalformedRowError(f"row {row_num}: bad timestamp {text!r}") from exc
    if ts.minute or ts.second or ts.microsecond:
        raise MalformedRowError(f"row {row_num}: timestamp {text!r} is not at hour resolution")
    return ts


def parse_meter(file) -> list[RawMeterSeries]:
    """Parse a meter CSV into one series per household.

    Accepts a path-opened text stream, a text string or raw bytes. Rows are
    grouped by household and sorted by timestamp; a repeated (household,
    date, hour) or a negative kWh value is an error naming the row.
    """
    stream = _open_text(file)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRowError("meter file is empty, expected a header row")
    if [h.strip() for h in header] != METER_HEADER:
        raise MalformedRowError(f"bad meter header {header!r}, expected {METER_HEADER}")

    rows: dict[str, list[tuple[datetime, float]]] = {}
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedRowError(f"row {row_num}: expected 3 columns, got {len(row)}")
        household, ts_text, kwh_text = row
        household = household.strip()
        if not household:
            raise MalformedRowError(f"row {row_num}: empty household_id")
        ts = _parse_timestamp(ts_text, row_num)
        try:
            kwh = float(kwh_text)
        except ValueError as exc:
            raise MalformedRowError(f"row {row_num}: bad kwh value {kwh_text!r}") from exc
        if not np.isfinite(kwh):
            raise MalformedRowError(f"row {row_num}: non-finite kwh value {kwh_text!r}")
        if kwh < 0:
            raise NegativeLoadError(f"row {row_num}: negative load {kwh} for {household}")
        rows.setdefault(household, []).append((ts, kwh))

    series = []
    for household in sorted(rows):
        readings = sorted(rows[household], key=lambda r: r[0])
        seen: set[tuple[date, int]] = set()
        for ts, _ in readings:
            key = (ts.date(), ts.hour)
            if key in seen:
                raise DuplicateReadingError(
                    f"household {household}: duplicate reading for {ts.date()} hour {ts.hour}"
                )
            seen.add(key)
        series.append(
            RawMeterSeries(
                household_id=household,
                timestamps=[ts for ts, _ in readings],
                loads=np.array([kwh for _, kwh in readings], dtype=np.float64),
            )
        )
    return series


def meter_row_count(series: list[RawMeterSeries]) -> int:
    return sum(len(s) for s in series)


def split_days(series: RawMeterSeries) -> tuple[list[np.ndarray], list[np.ndarray], int]:
    """Group a series into complete raw day vectors by calendar day type.

    Returns (weekday_vectors, weekend_vectors, dropped_count). A date counts
    only when all 24 hours are present; Monday through Friday is a weekday.
    """
    by_date: dict[date, dict[int, float]] = {}
    for ts, kwh in zip(series.timestamps, series.loads):
        by_date.setdefault(ts.date(), {})[ts.hour] = kwh

    weekday, weekend = [], []
    dropped = 0
    for day in sorted(by_date):
        hours = by_date[day]
        if len(hours) != HOURS_PER_DAY:
            dropped += 1
            continue
        vec = np.array([hours[h] for h in range(HOURS_PER_DAY)], dtype=np.float64)
        if day.weekday() < 5:
            weekday.append(vec)
        else:
            weekend.append(vec)
    return weekday, weekend, dropped


def normalize_day(raw) -> np.ndarray:
    """Min-max scale a raw 24-hour vector so its min is 0 and max is 1.

    Raises DegenerateDayError when all readings are equal, because the
    scaling denominator vanishes and the flat shape carries no information.
    """
    vec = np.asarray(raw, dtype=np.float64)
    if vec.shape != (HOURS_PER_DAY,):
        raise ValueError(f"expected {HOURS_PER_DAY} values, got shape {vec.shape}")
    lo = vec.min()
    hi = vec.max()
    if hi == lo:
        raise DegenerateDayError(f"flat day (all readings {lo})")
    return (vec - lo) / (hi - lo)


def day_profiles(series: RawMeterSeries, report: IngestReport | None = None) -> list[DayProfile]:
    """Split, scale and tag every usable day of a series."""
    by_date: dict[date, dict[int, float]] = {}
    for ts, kwh in zip(series.timestamps, series.loads):
        by_date.setdefault(ts.date(), {})[ts.hour] = kwh

    profiles = []
    for day in sorted(by_date):
        hours = by_date[day]
        if len(hours) != HOURS_PER_DAY:
            if report is not None:
                report.dropped_incomplete_days += 1
            continue
        vec = np.array([hours[h] for h in range(HOURS_PER_DAY)], dtype=np.float64)
        try:
            values = normalize_day(vec)
        except DegenerateDayError:
            if report is not None:
                report.dropped_degenerate_days += 1
            continue
        profiles.append(
            DayProfile(
                household_id=series.household_id,
                day=day,
                day_class=WEEKDAY if day.weekday() < 5 else WEEKEND,
                values=values,
            )
        )
    return profiles


def _code_from_field(
    text: str, lookup: dict[str, int], valid: range, what: str, household: str
) -> int:
    raw = text.strip()
    if not raw:
        raise MissingFieldError(f"household {household}: missing {what}")
    normalized = _normalize_label(raw)
    if normalized in lookup:
        return lookup[normalized]
    try:
        code = int(raw)
    except ValueError:
        raise UnknownCategoryError(f"household {household}: unknown {what} label {raw!r}")
    if code not in valid:
        raise UnknownCategoryError(f"household {household}: {what} code {code} out of range")
    return code


def parse_survey(file) -> list[SocioRecord]:
    """Parse a survey CSV, mapping textual labels to their ordinal codes."""
    stream = _open_text(file)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRowError("survey file is empty, expected a header row")
    if [h.strip() for h in header] != SURVEY_HEADER:
        raise MalformedRowError(f"bad survey header {header!r}, expected {SURVEY_HEADER}")

    records = []
    seen: set[str] = set()
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SURVEY_HEADER):
            raise MalformedRowError(
                f"row {row_num}: expected {len(SURVEY_HEADER)} columns, got {len(row)}"
            )
        household = row[0].strip()
        if not household:
            raise MissingFieldError(f"row {row_num}: empty household_id")
        if household in seen:
            raise MalformedRowError(f"row {row_num}: duplicate survey row for {household}")
        seen.add(household)

        ages = []
        for name, cell in zip(AGE_FEATURES, row[1:6]):
            cell = cell.strip()
            if not cell:
                raise MissingFieldError(f"household {household}: missing {name}")
            try:
                count = int(cell)
            except ValueError as exc:
                raise MalformedRowError(
                    f"row {row_num}: bad {name} value {cell!r}"
                ) from exc
            if count < 0:
                raise MalformedRowError(f"row {row_num}: negative {name} count {count}")
            ages.append(count)

        income = _code_from_field(row[6], _INCOME_LOOKUP, range(1, 10), "income", household)
        education = _code_from_field(
            row[7], _EDUCATION_LOOKUP, range(1, 5), "education", household
        )

        sqft_text = row[8].strip()
        if not sqft_text:
            raise MissingFieldError(f"household {household}: missing sqft")
        try:
            sqft = int(sqft_text)
        except ValueError as exc:
            raise MalformedRowError(f"row {row_num}: bad sqft value {sqft_text!r}") from exc
        if sqft <= 0:
            raise MalformedRowError(f"row {row_num}: sqft must be positive, got {sqft}")

        records.append(
            SocioRecord(
                household_id=household,
                age_counts=tuple(ages),
                income_code=income,
                education_code=education,
                sqft=sqft,
            )
        )
    return records


def write_meter_csv(series: list[RawMeterSeries]) -> str:
    """Serialize meter series back to the CSV format parse_meter accepts."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METER_HEADER)
    for s in series:
        for ts, kwh in zip(s.timestamps, s.loads):
            writer.writerow([s.household_id, ts.isoformat(), repr(float(kwh))])
    return out.getvalue()


def write_survey_csv(records: list[SocioRecord], labels: bool = True) -> str:
    """Serialize survey records; by default income/education go out as labels."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SURVEY_HEADER)
    for r in records:
        income = INCOME_LABELS[r.income_code] if labels else r.income_code
        education = EDUCATION_LABELS[r.education_code] if labels else r.education_code
        writer.writerow([r.household_id, *r.age_counts, income, education, r.sqft])
    return out.getvalue()


@dataclass
class ProfilePool:
    """All of one day-class's scaled profiles stacked for clustering."""

    day_class: str
    values: np.ndarray  # (n_profiles, 24)
    household_ids: list[str]
    days: list[date]

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_profiles(cls, day_class: str, profiles: list[DayProfile]) -> "ProfilePool":
        selected = [p for p in profiles if p.day_class == day_class]
        values = (
            np.vstack([p.values for p in selected])
            if selected
            else np.empty((0, HOURS_PER_DAY))
        )
        return cls(
            day_class=day_class,
            values=values,
            household_ids=[p.household_id for p in selected],
            days=[p.day for p in selected],
        )


def build_cohort(
    series: list[RawMeterSeries], records: list[SocioRecord]
) -> tuple[list[SocioRecord], ProfilePool, ProfilePool, IngestReport]:
    """Join meter and survey data into the modelling cohort.

    A household stays in the cohort only when it has survey data plus at
    least one usable profile in each day class; everything else is excluded
    and counted in the report.
    """
    report = IngestReport(
        meter_rows=meter_row_count(series),
        survey_rows=len(records),
        households_with_meter=len(series),
        households_with_survey=len(records),
    )
    surveys = {r.household_id: r for r in records}
    profiles_by_household: dict[str, list[DayProfile]] = {}
    for s in series:
        profiles_by_household[s.household_id] = day_profiles(s, report)

    cohort_ids = []
    all_profiles: list[DayProfile] = []
    for household in sorted(set(surveys) | set(profiles_by_household)):
        profs = profiles_by_household.get(household, [])
        classes = {p.day_class for p in profs}
        if household in surveys and classes == set(DAY_CLASSES):
            cohort_ids.append(household)
            all_profiles.extend(profs)
        else:
            report.excluded_households.append(household)

    cohort = [surveys[h] for h in cohort_ids]
    weekday_pool = ProfilePool.from_profiles(WEEKDAY, all_profiles)
    weekend_pool = ProfilePool.from_profiles(WEEKEND, all_profiles)
    return cohort, weekday_pool, weekend_pool, report


def feature_matrix(records: list[SocioRecord]) -> np.ndarray:
    """Stack cohort records into an (n_households, 8) feature matrix."""
    if not records:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack([r.feature_vector() for r in records])
