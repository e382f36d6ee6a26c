"""Launch calendars: generation, JSON persistence and admissibility checks.

Dates are workday numbers inside a year, 1..261. A calendar is fixed for the
whole horizon before any simulation or optimization starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

WORKDAYS_PER_YEAR = 261
MIN_SPACING_DAYS = 15
STARTUP_COUNTS = (1, 2, 4, 11)
SAMPLED_RANGE = (6, 12)

# Probability of n launches in a post-startup year, in CDF evaluation order.
YEAR_COUNT_LAW = (
    (6, 1 / 16),
    (7, 1 / 16),
    (8, 1 / 12),
    (9, 3 / 24),
    (10, 1 / 3),
    (11, 1 / 6),
    (12, 1 / 6),
)

# Launch dates for each admissible yearly count. Launches bunch up towards
# the end of the year.
DATES_TABLE: dict[int, tuple[int, ...]] = {
    1: (130,),
    2: (87, 174),
    4: (52, 104, 156, 208),
    6: (37, 74, 111, 148, 185, 222),
    7: (32, 64, 96, 128, 160, 192, 224),
    8: (29, 58, 87, 116, 145, 174, 203, 232),
    9: (27, 54, 81, 111, 136, 161, 186, 211, 236),
    10: (26, 52, 78, 107, 129, 151, 173, 195, 217, 239),
    11: (23, 46, 69, 92, 121, 141, 161, 181, 201, 221, 241),
    12: (21, 42, 63, 84, 117, 135, 153, 171, 189, 207, 225, 243),
}

_COUNTS = np.array([n for n, _ in YEAR_COUNT_LAW])
_CDF = np.cumsum([p for _, p in YEAR_COUNT_LAW])


class UnsupportedCount(ValueError):
    pass


class CalendarFormatError(ValueError):
    pass


@dataclass
class LaunchYear:
    count: int
    dates: list[int]


@dataclass
class Calendar:
    horizon_years: int
    years: list[LaunchYear]
    # An explicit calendar skips the startup-count and sampled-range rules.
    explicit: bool = False

    @property
    def counts(self) -> list[int]:
        return [y.count for y in self.years]

    @property
    def total_launches(self) -> int:
        return sum(y.count for y in self.years)

    def absolute_ticks(self, workdays_per_year: int = WORKDAYS_PER_YEAR) -> np.ndarray:
        """Scheduled launch instants in half-day ticks from process start.

        Workday ``d`` of year ``t`` (both 1-based) starts at tick
        ``(t - 1) * 2 * workdays + 2 * (d - 1)``.
        """
        ticks = [
            2 * workdays_per_year * y + 2 * (d - 1)
            for y, ly in enumerate(self.years)
            for d in ly.dates
        ]
        return np.asarray(ticks, dtype=np.int64)

    def to_dict(self) -> dict:
        doc = {
            "horizon_years": self.horizon_years,
            "years": [{"count": y.count, "dates": list(y.dates)} for y in self.years],
        }
        if self.explicit:
            doc["explicit"] = True
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Calendar":
        try:
            horizon = int(doc["horizon_years"])
            years = [
                LaunchYear(int(y["count"]), [int(d) for d in y["dates"]])
                for y in doc["years"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise CalendarFormatError(f"malformed calendar document: {exc}") from exc
        return cls(horizon, years, explicit=bool(doc.get("explicit", False)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Calendar":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CalendarFormatError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)


def year_count_from_uniform(u: float) -> int:
    return int(_COUNTS[min(int(np.searchsorted(_CDF, u, side="right")), len(_COUNTS) - 1)])


def sample_year_count(rng: np.random.Generator) -> int:
    """Number of launches in a post-startup year."""
    return year_count_from_uniform(rng.random())


def sample_year_counts(rng: np.random.Generator, size: int) -> np.ndarray:
    idx = np.searchsorted(_CDF, rng.random(size), side="right")
    return _COUNTS[np.minimum(idx, len(_COUNTS) - 1)]


def dates_for_count(n: int) -> list[int]:
    try:
        return list(DATES_TABLE[n])
    except KeyError:
        raise UnsupportedCount(
            f"no launch dates defined for {n} launches per year "
            f"(supported: {sorted(DATES_TABLE)})"
        ) from None


def calendar_from_counts(counts: Sequence[int], explicit: bool = False) -> Calendar:
    years = [LaunchYear(int(n), dates_for_count(int(n))) for n in counts]
    return Calendar(len(years), years, explicit=explicit)


def build_calendar(horizon_years: int, rng: np.random.Generator) -> Calendar:
    """Startup years followed by independently sampled yearly counts."""
    if horizon_years < 1:
        raise ValueError("horizon_years must be >= 1")
    head = list(STARTUP_COUNTS[:horizon_years])
    tail = sample_year_counts(rng, max(0, horizon_years - len(STARTUP_COUNTS)))
    return calendar_from_counts(head + [int(n) for n in tail])


def regular_calendar(horizon_years: int, launches_per_year: int = 10) -> Calendar:
    """Startup years then a constant count every remaining year."""
    head = list(STARTUP_COUNTS[:horizon_years])
    return calendar_from_counts(
        head + [launches_per_year] * max(0, horizon_years - len(STARTUP_COUNTS))
    )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_calendar(c: Calendar, workdays: int = WORKDAYS_PER_YEAR) -> ValidationReport:
    report = ValidationReport()
    bad = report.violations.append
    if c.horizon_years != len(c.years):
        bad(f"horizon_years={c.horizon_years} but {len(c.years)} years listed")
    for t, y in enumerate(c.years, start=1):
        if y.count != len(y.dates):
            bad(f"year {t}: count {y.count} != {len(y.dates)} dates")
        for d in y.dates:
            if not 1 <= d <= workdays:
                bad(f"year {t}: date {d} outside [1, {workdays}]")
        for a, b in zip(y.dates, y.dates[1:]):
            if b - a < MIN_SPACING_DAYS:
                bad(f"year {t}: dates {a} and {b} spaced by {b - a} < {MIN_SPACING_DAYS}")
        if c.explicit:
            continue
        if t <= len(STARTUP_COUNTS):
            if y.count != STARTUP_COUNTS[t - 1]:
                bad(f"year {t}: startup year must have {STARTUP_COUNTS[t - 1]} launches, got {y.count}")
        elif not SAMPLED_RANGE[0] <= y.count <= SAMPLED_RANGE[1]:
            bad(f"year {t}: {y.count} launches outside {SAMPLED_RANGE}")
    prev = None
    for t, y in enumerate(c.years, start=1):
        if not y.dates:
            continue
        if prev is not None:
            pt, last = prev
            gap = (t - pt) * workdays - last + y.dates[0]
            if gap < MIN_SPACING_DAYS:
                bad(f"years {pt}->{t}: cross-year spacing {gap} < {MIN_SPACING_DAYS}")
        prev = (t, y.dates[-1])
    return report
