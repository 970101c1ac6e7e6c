"""Great-circle geometry on WGS84 lon/lat coordinates.

All functions work on ``GeoPoint`` (lon, lat) tuples in decimal degrees and
return distances in meters on a mean-radius sphere. The spherical-trig forms
follow https://www.movable-type.co.uk/scripts/latlong.html. Crossing tests
between polylines are planar (adequate at road-link extent) and delegate to
shapely.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

from shapely.geometry import LineString

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_MILE = 1609.344

# Central angle below which a segment is treated as a point (~6 um on Earth).
_DEGENERATE_ANGLE = 1e-12


class GeoPoint(NamedTuple):
    lon: float
    lat: float


def central_angle(a: GeoPoint, b: GeoPoint) -> float:
    """Central angle between two points, in radians (haversine form)."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * math.asin(min(1.0, math.sqrt(max(0.0, h))))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters."""
    return central_angle(a, b) * EARTH_RADIUS_M


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from ``a`` toward ``b``, degrees in [0, 360)."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return (math.degrees(math.atan2(y, x)) + 360.0) % 360.0


def angular_diff_deg(a: float, b: float) -> float:
    """Smallest absolute angle between two bearings, degrees in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def point_segment_distance_m(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance from ``p`` to the segment ``a``-``b`` in meters.

    Uses the cross-track/along-track decomposition; the endpoints own the
    regions before and after the segment.
    """
    d_ap = central_angle(a, p)
    d_ab = central_angle(a, b)
    if d_ab < _DEGENERATE_ANGLE:
        return d_ap * EARTH_RADIUS_M
    if d_ap < _DEGENERATE_ANGLE:
        return 0.0
    brg_ap = math.radians(initial_bearing_deg(a, p))
    brg_ab = math.radians(initial_bearing_deg(a, b))
    if math.cos(brg_ap - brg_ab) < 0.0:  # nearest point lies behind a
        return d_ap * EARTH_RADIUS_M
    sin_xt = max(-1.0, min(1.0, math.sin(d_ap) * math.sin(brg_ap - brg_ab)))
    d_xt = math.asin(sin_xt)
    cos_xt = math.cos(d_xt)
    if cos_xt <= 0.0:
        return abs(d_xt) * EARTH_RADIUS_M
    d_at = math.acos(max(-1.0, min(1.0, math.cos(d_ap) / cos_xt)))
    if d_at > d_ab:  # nearest point lies beyond b
        return central_angle(b, p) * EARTH_RADIUS_M
    return abs(d_xt) * EARTH_RADIUS_M


def point_polyline_distance_m(p: GeoPoint, line: Sequence[GeoPoint]) -> float:
    """Minimum great-circle distance from ``p`` to a polyline, in meters."""
    if len(line) == 1:
        return haversine_m(p, line[0])
    return min(point_segment_distance_m(p, line[i], line[i + 1]) for i in range(len(line) - 1))


def polylines_cross(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> bool:
    """True when the two polylines touch or cross in the lon/lat plane."""
    return LineString(a).intersects(LineString(b))


def polyline_min_distance_m(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> float:
    """Minimum great-circle distance between two polylines, in meters.

    Crossing polylines are at distance zero; otherwise the minimum is
    attained at a vertex of one line against the other.
    """
    if len(a) >= 2 and len(b) >= 2 and polylines_cross(a, b):
        return 0.0
    d1 = min(point_polyline_distance_m(p, b) for p in a)
    d2 = min(point_polyline_distance_m(p, a) for p in b)
    return min(d1, d2)


def polyline_length_miles(line: Sequence[GeoPoint]) -> float:
    """Great-circle length of a polyline in miles."""
    meters = sum(haversine_m(line[i], line[i + 1]) for i in range(len(line) - 1))
    return meters / METERS_PER_MILE


def bounding_box(line: Sequence[GeoPoint]) -> tuple[float, float, float, float]:
    """(min_lon, min_lat, max_lon, max_lat) of a polyline."""
    lons = [p.lon for p in line]
    lats = [p.lat for p in line]
    return min(lons), min(lats), max(lons), max(lats)


def expand_box_m(
    box: tuple[float, float, float, float], radius_m: float
) -> tuple[float, float, float, float]:
    """Grow a lon/lat box by ``radius_m`` meters on every side."""
    min_lon, min_lat, max_lon, max_lat = box
    dlat = math.degrees(radius_m / EARTH_RADIUS_M)
    mid_lat = 0.5 * (min_lat + max_lat)
    coslat = max(0.01, math.cos(math.radians(mid_lat)))
    dlon = dlat / coslat
    return min_lon - dlon, min_lat - dlat, max_lon + dlon, max_lat + dlat


def boxes_overlap(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])
