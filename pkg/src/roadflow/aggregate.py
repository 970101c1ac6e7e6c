"""Aggregate hourly per-class station records into windowed observations.

Raw records carry vehicles/hour for classes 5..13 per (station, direction,
hour). A window selects hours by day kind, time-of-day band, and month; the
surviving hours collapse into one observation with a mean hourly volume and
a class-share vector. Time bands use half-open hour ranges so the four
bands partition the day, with the night band wrapping midnight.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Iterable

from .errors import ValidationError
from .match import DirectionCode
from .network import ClassShare, EdgeId, N_CLASSES


class DayFilter(Enum):
    ALL = "all"
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


class HourBand(Enum):
    """Time-of-day bands; T0 covers 22:00-4:00 and wraps midnight."""

    ALL = "allday"
    T0 = "t0"
    T1 = "t1"
    T2 = "t2"
    T3 = "t3"


_BAND_HOURS: dict[HourBand, frozenset[int]] = {
    HourBand.T0: frozenset((22, 23, 0, 1, 2, 3)),
    HourBand.T1: frozenset(range(4, 10)),
    HourBand.T2: frozenset(range(10, 16)),
    HourBand.T3: frozenset(range(16, 22)),
}


@dataclass(frozen=True)
class AggregationWindow:
    """Which hours contribute: day kind x hour band x month (None = all)."""

    day: DayFilter = DayFilter.ALL
    hour_band: HourBand = HourBand.ALL
    month: int | None = None

    def __post_init__(self) -> None:
        if self.month is not None and not 1 <= self.month <= 12:
            raise ValidationError(f"month filter out of range 1..12: {self.month!r}")

    def label(self) -> str:
        """Stable label used in file names and report columns."""
        parts = []
        if self.day is not DayFilter.ALL:
            parts.append(self.day.value)
        if self.hour_band is not HourBand.ALL:
            parts.append(self.hour_band.value)
        if self.month is not None:
            parts.append(f"m{self.month:02d}")
        return "_".join(parts) if parts else "all"


@dataclass(frozen=True)
class HourlyClassRecord:
    """Vehicles/hour for classes 5..13 at one station, direction, and hour."""

    station_id: str
    direction: DirectionCode
    timestamp: datetime
    counts: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != N_CLASSES:
            raise ValidationError(
                f"record at {self.station_id!r} needs {N_CLASSES} class counts, "
                f"got {len(self.counts)}"
            )
        if any(c < 0 for c in self.counts):
            raise ValidationError(f"negative class count at {self.station_id!r}")


@dataclass(frozen=True)
class StationObservation:
    """Aggregated observation for one (station, direction, window)."""

    station_id: str
    direction: DirectionCode
    window: AggregationWindow
    mean_hourly_volume: float
    class_share: ClassShare
    n_hours: int
    matched_edge: EdgeId | None = None
    region_tag: str | None = None


@dataclass(frozen=True)
class SkippedStation:
    station_id: str
    direction: DirectionCode
    reason: str


@dataclass(frozen=True)
class AggregationResult:
    observations: list[StationObservation]
    skipped: list[SkippedStation]


def window_from_label(label: str) -> AggregationWindow:
    """Inverse of :meth:`AggregationWindow.label`."""
    text = label.strip().lower()
    if text in ("", "all"):
        return AggregationWindow()
    day = DayFilter.ALL
    band = HourBand.ALL
    month: int | None = None
    for part in text.split("_"):
        if part in (DayFilter.WEEKDAY.value, DayFilter.WEEKEND.value):
            day = DayFilter(part)
        elif part in ("t0", "t1", "t2", "t3"):
            band = HourBand(part)
        elif part.startswith("m") and part[1:].isdigit():
            month = int(part[1:])
        else:
            raise ValidationError(f"unrecognized window label part: {part!r} in {label!r}")
    return AggregationWindow(day=day, hour_band=band, month=month)


def window_from_dict(mapping: dict) -> AggregationWindow:
    """Build a window from a config mapping with keys day/hour_band/month."""
    try:
        day = DayFilter(str(mapping.get("day", "all")).lower())
    except ValueError:
        raise ValidationError(f"unknown day filter: {mapping.get('day')!r}") from None
    band_raw = str(mapping.get("hour_band", "allday")).lower()
    if band_raw in ("all", "allday"):
        band = HourBand.ALL
    else:
        try:
            band = HourBand(band_raw)
        except ValueError:
            raise ValidationError(f"unknown hour band: {mapping.get('hour_band')!r}") from None
    month = mapping.get("month")
    return AggregationWindow(
        day=day, hour_band=band, month=None if month in (None, "all") else int(month)
    )


def window_membership(timestamp: datetime, window: AggregationWindow) -> bool:
    """True when the record's hour falls inside the window.

    Hour bands are half-open: 04:00 belongs to the morning band, not the
    night band. Weekdays are Monday through Friday.
    """
    if window.month is not None and timestamp.month != window.month:
        return False
    if window.day is DayFilter.WEEKDAY and timestamp.weekday() > 4:
        return False
    if window.day is DayFilter.WEEKEND and timestamp.weekday() <= 4:
        return False
    if window.hour_band is not HourBand.ALL:
        return timestamp.hour in _BAND_HOURS[window.hour_band]
    return True


def aggregate_records(
    records: Iterable[HourlyClassRecord], window: AggregationWindow
) -> AggregationResult:
    """Collapse hourly records into per-(station, direction) observations.

    Stations whose hours all fall outside the window, or whose surviving
    counts are all zero, are omitted and reported in ``skipped``.
    """
    seen: set[tuple[str, str, datetime]] = set()
    groups: dict[tuple[str, DirectionCode], list[HourlyClassRecord]] = {}
    survivors: dict[tuple[str, DirectionCode], list[HourlyClassRecord]] = {}
    for rec in records:
        key = (rec.station_id, rec.direction.name, rec.timestamp)
        if key in seen:
            raise ValidationError(
                f"duplicate record for station {rec.station_id!r} "
                f"{rec.direction.name} at {rec.timestamp.isoformat()}"
            )
        seen.add(key)
        group = (rec.station_id, rec.direction)
        groups.setdefault(group, [])
        survivors.setdefault(group, [])
        groups[group].append(rec)
        if window_membership(rec.timestamp, window):
            survivors[group].append(rec)

    observations: list[StationObservation] = []
    skipped: list[SkippedStation] = []
    for group in sorted(groups, key=lambda g: (g[0], g[1].name)):
        station_id, direction = group
        kept = survivors[group]
        if not kept:
            skipped.append(SkippedStation(station_id, direction, "no hours in window"))
            continue
        totals = [0.0] * N_CLASSES
        for rec in kept:
            for i, c in enumerate(rec.counts):
                totals[i] += c
        grand_total = sum(totals)
        if grand_total <= 0.0:
            skipped.append(SkippedStation(station_id, direction, "zero total count"))
            continue
        observations.append(
            StationObservation(
                station_id=station_id,
                direction=direction,
                window=window,
                mean_hourly_volume=grand_total / len(kept),
                class_share=ClassShare.from_counts(totals),
                n_hours=len(kept),
            )
        )
    return AggregationResult(observations=observations, skipped=skipped)
