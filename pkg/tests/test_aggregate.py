"""Hourly-record aggregation and time-window membership."""

from __future__ import annotations

from datetime import datetime

import pytest
from hypothesis import given, strategies as st

from roadflow.aggregate import (
    AggregationWindow,
    DayFilter,
    HourBand,
    HourlyClassRecord,
    aggregate_records,
    window_from_dict,
    window_from_label,
    window_membership,
)
from roadflow.errors import ValidationError
from roadflow.match import DirectionCode


def counts(**kwargs):
    """Per-class counts given as class5=..., class9=..., others zero."""
    vec = [0.0] * 9
    for key, value in kwargs.items():
        vec[int(key.removeprefix("class")) - 5] = float(value)
    return tuple(vec)


def rec(station, hour, day=15, month=7, year=2021, direction=DirectionCode.E, **class_counts):
    return HourlyClassRecord(
        station_id=station,
        direction=direction,
        timestamp=datetime(year, month, day, hour),
        counts=counts(**class_counts),
    )


class TestWindowMembership:
    def test_band_boundary_is_half_open(self):
        t1 = AggregationWindow(hour_band=HourBand.T1)
        t0 = AggregationWindow(hour_band=HourBand.T0)
        four_am = datetime(2021, 7, 15, 4, 0)
        assert window_membership(four_am, t1) is True
        assert window_membership(four_am, t0) is False

    def test_ten_pm_belongs_to_night_band(self):
        assert window_membership(datetime(2021, 7, 15, 22, 0), AggregationWindow(hour_band=HourBand.T0))

    def test_weekday_filter_excludes_saturday(self):
        saturday = datetime(2021, 7, 17, 13, 0)
        assert window_membership(saturday, AggregationWindow(day=DayFilter.WEEKDAY)) is False
        assert window_membership(saturday, AggregationWindow(day=DayFilter.WEEKEND)) is True

    def test_month_filter(self):
        july = datetime(2021, 7, 1, 0, 0)
        assert window_membership(july, AggregationWindow(month=7)) is True
        assert window_membership(july, AggregationWindow(month=3)) is False

    def test_bad_month_rejected(self):
        with pytest.raises(ValidationError):
            AggregationWindow(month=13)

    @given(st.integers(0, 23))
    def test_bands_partition_the_day(self, hour):
        ts = datetime(2021, 7, 15, hour)
        hits = [
            band
            for band in (HourBand.T0, HourBand.T1, HourBand.T2, HourBand.T3)
            if window_membership(ts, AggregationWindow(hour_band=band))
        ]
        assert len(hits) == 1


class TestAggregation:
    def test_hand_arithmetic(self):
        records = [
            rec("s1", 10, class5=10, class9=30),
            rec("s1", 11, class5=30, class9=50),
        ]
        result = aggregate_records(records, AggregationWindow())
        (obs,) = result.observations
        assert obs.mean_hourly_volume == pytest.approx(60.0)
        assert obs.class_share.share(5) == pytest.approx(1 / 3)
        assert obs.class_share.share(9) == pytest.approx(2 / 3)
        assert obs.n_hours == 2

    def test_night_band_wraps_midnight(self):
        records = [
            rec("s1", 23, class9=10),
            rec("s1", 2, day=16, class9=20),
        ]
        result = aggregate_records(records, AggregationWindow(hour_band=HourBand.T0))
        (obs,) = result.observations
        assert obs.n_hours == 2

    def test_station_outside_month_filter_is_skipped_with_reason(self):
        records = [rec("s1", 10, month=7, class9=10)]
        result = aggregate_records(records, AggregationWindow(month=3))
        assert result.observations == []
        (skip,) = result.skipped
        assert skip.station_id == "s1"
        assert "no hours" in skip.reason

    def test_zero_total_count_station_is_skipped(self):
        records = [rec("s1", 10)]
        result = aggregate_records(records, AggregationWindow())
        assert result.observations == []
        (skip,) = result.skipped
        assert "zero total" in skip.reason

    def test_band_hours_sum_to_all_band_hours(self):
        records = [rec("s1", h, class9=h + 1) for h in range(24)]
        all_hours = aggregate_records(records, AggregationWindow()).observations[0].n_hours
        per_band = sum(
            aggregate_records(records, AggregationWindow(hour_band=b)).observations[0].n_hours
            for b in (HourBand.T0, HourBand.T1, HourBand.T2, HourBand.T3)
        )
        assert all_hours == 24
        assert per_band == all_hours

    def test_share_invariant_under_uniform_scaling(self):
        base = [rec("s1", 10, class5=4, class9=12), rec("s1", 11, class5=8, class9=6)]
        scaled = [
            HourlyClassRecord(r.station_id, r.direction, r.timestamp, tuple(7 * c for c in r.counts))
            for r in base
        ]
        share_a = aggregate_records(base, AggregationWindow()).observations[0].class_share
        share_b = aggregate_records(scaled, AggregationWindow()).observations[0].class_share
        assert share_a.p == pytest.approx(share_b.p, abs=1e-12)

    def test_single_record_reproduces_its_shares(self):
        records = [rec("s1", 10, class5=25, class9=75)]
        (obs,) = aggregate_records(records, AggregationWindow()).observations
        assert obs.class_share.share(5) == pytest.approx(0.25)
        assert obs.class_share.share(9) == pytest.approx(0.75)
        assert obs.mean_hourly_volume == pytest.approx(100.0)

    def test_directions_grouped_separately(self):
        records = [
            rec("s1", 10, direction=DirectionCode.E, class9=10),
            rec("s1", 10, direction=DirectionCode.W, class9=30),
        ]
        result = aggregate_records(records, AggregationWindow())
        assert len(result.observations) == 2
        by_dir = {o.direction: o for o in result.observations}
        assert by_dir[DirectionCode.E].mean_hourly_volume == pytest.approx(10.0)
        assert by_dir[DirectionCode.W].mean_hourly_volume == pytest.approx(30.0)

    def test_duplicate_hour_rejected(self):
        records = [rec("s1", 10, class9=1), rec("s1", 10, class9=2)]
        with pytest.raises(ValidationError, match="duplicate"):
            aggregate_records(records, AggregationWindow())

    def test_output_sorted_by_station_then_direction(self):
        records = [
            rec("s2", 10, class9=1),
            rec("s1", 10, direction=DirectionCode.W, class9=1),
            rec("s1", 10, direction=DirectionCode.E, class9=1),
        ]
        result = aggregate_records(records, AggregationWindow())
        keys = [(o.station_id, o.direction.name) for o in result.observations]
        assert keys == sorted(keys)

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError):
            rec("s1", 10, class9=-5)


class TestWindowLabels:
    @pytest.mark.parametrize(
        "window,label",
        [
            (AggregationWindow(), "all"),
            (AggregationWindow(day=DayFilter.WEEKDAY, hour_band=HourBand.T2), "weekday_t2"),
            (AggregationWindow(month=7), "m07"),
            (AggregationWindow(day=DayFilter.WEEKEND, hour_band=HourBand.T0, month=12), "weekend_t0_m12"),
        ],
    )
    def test_label_round_trip(self, window, label):
        assert window.label() == label
        assert window_from_label(label) == window

    def test_bad_label_rejected(self):
        with pytest.raises(ValidationError):
            window_from_label("weekday_t9")

    def test_window_from_dict(self):
        w = window_from_dict({"day": "weekday", "hour_band": "t1", "month": 7})
        assert w == AggregationWindow(day=DayFilter.WEEKDAY, hour_band=HourBand.T1, month=7)
        assert window_from_dict({}) == AggregationWindow()
        with pytest.raises(ValidationError):
            window_from_dict({"day": "someday"})
