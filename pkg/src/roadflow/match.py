"""Geometric matching: prior-weight transfer and station snapping.

Two procedures connect external data to the analysis network. The first
moves daily truck volumes from a dense bidirectional inventory network onto
the sparse directed network: buffer each target edge, collect dense segments
that intersect the buffer, keep the ones roughly parallel to the edge, and
take the median of their values. The second snaps a point observation with
a posted travel direction onto the nearest direction-consistent edge, so
the two directions of one physical station land on the two opposing edges.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import ValidationError
from .geo import (
    GeoPoint,
    angular_diff_deg,
    bounding_box,
    boxes_overlap,
    expand_box_m,
    initial_bearing_deg,
    point_polyline_distance_m,
    polyline_min_distance_m,
)
from .network import Edge, EdgeId, RoadNetwork, id_sort_key


class MatchError(ValidationError):
    """Weight transfer or snapping could not be performed."""


class SnapError(MatchError):
    """No acceptable edge found for a station."""


class DirectionCode(Enum):
    """The eight posted travel directions and their azimuths."""

    N = 0.0
    NE = 45.0
    E = 90.0
    SE = 135.0
    S = 180.0
    SW = 225.0
    W = 270.0
    NW = 315.0

    @property
    def azimuth_deg(self) -> float:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "DirectionCode":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValidationError(f"unknown direction code: {text!r}") from None


@dataclass(frozen=True)
class MatchConfig:
    """Tolerances for weight transfer and station snapping.

    ``bearing_tolerance_deg`` keeps only dense segments within +/-15 degrees
    of the edge's travel direction by default; the station tolerance of 45
    degrees is the half-sector bound of the eight-direction code.
    """

    buffer_radius_m: float = 100.0
    bearing_tolerance_deg: float = 15.0
    station_bearing_tolerance_deg: float = 45.0
    snap_max_distance_m: float = 500.0

    def __post_init__(self) -> None:
        for name in ("buffer_radius_m", "snap_max_distance_m"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("bearing_tolerance_deg", "station_bearing_tolerance_deg"):
            v = getattr(self, name)
            if not 0 < v < 90:
                raise ValidationError(f"{name} must be in (0, 90)")


@dataclass(frozen=True)
class DenseRoad:
    """One segment of the dense inventory network, volume counted two-way
    unless flagged one-way."""

    segment_id: str
    aadt: float
    one_way: bool
    geometry: tuple[GeoPoint, ...]


@dataclass(frozen=True)
class DirectedSegment:
    """A single travel direction of a dense segment with its share of the
    daily volume."""

    segment_id: str
    aadt: float
    geometry: tuple[GeoPoint, ...]


@dataclass(frozen=True)
class Station:
    """A point observation site with a posted travel direction."""

    station_id: str
    direction: DirectionCode
    point: GeoPoint
    region_tag: str | None = None


@dataclass(frozen=True)
class EdgeWeightMatch:
    """Weight-transfer outcome for one target edge."""

    weight: float | None
    n_candidates: int
    n_after_bearing_filter: int


@dataclass(frozen=True)
class SnapResult:
    edge_id: EdgeId
    distance_m: float


def edge_bearing(edge: Edge) -> float:
    """Prevailing travel direction: forward azimuth from the first to the
    last geometry point, degrees in [0, 360)."""
    first, last = edge.geometry[0], edge.geometry[-1]
    if abs(first.lon - last.lon) < 1e-12 and abs(first.lat - last.lat) < 1e-12:
        raise MatchError(f"edge {edge.id!r} has coincident endpoints; bearing undefined")
    return initial_bearing_deg(first, last)


def _segment_bearing(geometry: Sequence[GeoPoint]) -> float:
    return initial_bearing_deg(geometry[0], geometry[-1])


def directionalize_and_halve(roads: Iterable[DenseRoad]) -> list[DirectedSegment]:
    """Split two-way segments into opposing directed halves.

    A two-way segment's volume counts both directions, so each half carries
    aadt/2; a one-way segment passes through unchanged.
    """
    out: list[DirectedSegment] = []
    for road in roads:
        if road.aadt < 0:
            raise ValidationError(f"segment {road.segment_id!r} has negative AADT {road.aadt!r}")
        geometry = tuple(GeoPoint(*p) for p in road.geometry)
        if road.one_way:
            out.append(DirectedSegment(road.segment_id, road.aadt, geometry))
        else:
            half = road.aadt / 2.0
            out.append(DirectedSegment(f"{road.segment_id}+", half, geometry))
            out.append(DirectedSegment(f"{road.segment_id}-", half, tuple(reversed(geometry))))
    return out


def transfer_weights(
    target_net: RoadNetwork,
    dense_segments: Sequence[DirectedSegment],
    cfg: MatchConfig | None = None,
) -> dict[EdgeId, EdgeWeightMatch]:
    """Assign each target edge the median volume of nearby parallel dense
    segments.

    For every edge: collect dense segments within ``buffer_radius_m`` of its
    geometry, drop those whose bearing differs from the edge bearing by more
    than ``bearing_tolerance_deg``, and take the median of the survivors'
    values. Edges with no survivors get ``weight=None`` and are resolved
    later by the weight imputation pre-pass.
    """
    cfg = cfg or MatchConfig()
    if target_net.n_edges == 0:
        raise MatchError("target network has no edges")

    seg_info = [
        (seg, _segment_bearing(seg.geometry), bounding_box(seg.geometry))
        for seg in dense_segments
        if len(seg.geometry) >= 2
    ]

    result: dict[EdgeId, EdgeWeightMatch] = {}
    for eid in target_net.edge_ids:
        edge = target_net.edge(eid)
        ebearing = edge_bearing(edge)
        ebox = expand_box_m(bounding_box(edge.geometry), cfg.buffer_radius_m)
        survivors: list[float] = []
        n_candidates = 0
        for seg, sbearing, sbox in seg_info:
            if not boxes_overlap(ebox, sbox):
                continue
            if polyline_min_distance_m(edge.geometry, seg.geometry) > cfg.buffer_radius_m:
                continue
            n_candidates += 1
            if angular_diff_deg(sbearing, ebearing) <= cfg.bearing_tolerance_deg:
                survivors.append(seg.aadt)
        weight = statistics.median(survivors) if survivors else None
        result[eid] = EdgeWeightMatch(weight, n_candidates, len(survivors))
    return result


def snap_station(
    station: Station, target_net: RoadNetwork, cfg: MatchConfig | None = None
) -> SnapResult:
    """Snap a station to the nearest edge consistent with its direction.

    Candidates are edges within ``snap_max_distance_m`` of the station point
    whose bearing lies within ``station_bearing_tolerance_deg`` of the posted
    direction's azimuth. Ties in distance break toward the smaller edge id.
    """
    cfg = cfg or MatchConfig()
    point = GeoPoint(*station.point)
    candidates: list[tuple[float, EdgeId]] = []
    for eid in target_net.edge_ids:
        edge = target_net.edge(eid)
        d = point_polyline_distance_m(point, edge.geometry)
        if d <= cfg.snap_max_distance_m:
            candidates.append((d, eid))
    if not candidates:
        raise SnapError(
            f"station {station.station_id!r} ({station.direction.name}): no edge within "
            f"{cfg.snap_max_distance_m} m"
        )
    azimuth = station.direction.azimuth_deg
    consistent = [
        (d, eid)
        for d, eid in candidates
        if angular_diff_deg(edge_bearing(target_net.edge(eid)), azimuth)
        <= cfg.station_bearing_tolerance_deg
    ]
    if not consistent:
        raise SnapError(
            f"station {station.station_id!r} ({station.direction.name}): no direction-"
            f"consistent edge among {len(candidates)} within range"
        )
    d, eid = min(consistent, key=lambda item: (item[0], id_sort_key(item[1])))
    return SnapResult(edge_id=eid, distance_m=d)
