"""File formats: network/dense/station/hourly ingestion and result export.

All readers normalize ids to strings and raise :class:`IngestionError` with
the offending path in the message. All writers emit ``\\n``-terminated rows
with ``repr``-formatted floats, so identical inputs produce byte-identical
files on any platform.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from shapely import wkt as shapely_wkt

from .aggregate import (
    AggregationWindow,
    HourlyClassRecord,
    StationObservation,
    window_from_label,
)
from .errors import ValidationError
from .evaluate import MetricsReport
from .geo import GeoPoint
from .impute import ImputeResult
from .match import DenseRoad, DirectionCode, EdgeWeightMatch, Station
from .network import (
    ClassShare,
    Edge,
    EdgeId,
    EdgeState,
    N_CLASSES,
    RoadNetwork,
    Status,
    VEHICLE_CLASSES,
    build_network,
)

_SHARE_COLUMNS = [f"p_class_{c:02d}" for c in VEHICLE_CLASSES]
_COUNT_COLUMNS = [f"class_{c:02d}" for c in VEHICLE_CLASSES]


class IngestionError(ValidationError):
    """A file could not be read or fails schema validation."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_csv(path: str | Path, required: Sequence[str]) -> tuple[list[dict], Path]:
    p = Path(path)
    if not p.exists():
        raise IngestionError(f"input file not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in required if c not in fields]
        if missing:
            raise IngestionError(f"{p}: missing required columns {missing}")
        rows = list(reader)
    return rows, p


def _write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _parse_wkt_linestring(text: str, context: str) -> tuple[GeoPoint, ...]:
    try:
        geom = shapely_wkt.loads(text)
    except Exception as exc:
        raise IngestionError(f"{context}: bad WKT geometry ({exc})") from None
    if geom.geom_type != "LineString":
        raise IngestionError(f"{context}: expected LINESTRING, got {geom.geom_type}")
    return tuple(GeoPoint(float(x), float(y)) for x, y in geom.coords)


def _wkt_linestring(geometry: Sequence[GeoPoint]) -> str:
    inner = ", ".join(f"{p.lon!r} {p.lat!r}" for p in geometry)
    return f"LINESTRING ({inner})"


def _float_or_none(raw: str | None):
    if raw is None or raw.strip() == "":
        return None
    return float(raw)


# ---------------------------------------------------------------------------
# Analysis network
# ---------------------------------------------------------------------------

def read_network_geojson(path: str | Path) -> tuple[RoadNetwork, dict[EdgeId, float]]:
    """Read a directed network from a GeoJSON FeatureCollection.

    Each LineString feature carries properties ``edge_id``, ``tail_node``,
    ``head_node``, ``length_mi`` and optionally ``aadt_truck`` and
    ``region_tag``; node coordinates are inferred from geometry endpoints.
    Returns the network and the prior weights found in ``aadt_truck``.
    """
    p = Path(path)
    if not p.exists():
        raise IngestionError(f"input file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{p}: invalid JSON ({exc})") from None
    if doc.get("type") != "FeatureCollection":
        raise IngestionError(f"{p}: expected a FeatureCollection")

    nodes: dict[str, GeoPoint] = {}
    edges: list[Edge] = []
    weights: dict[EdgeId, float] = {}
    for feature in doc.get("features", []):
        props = feature.get("properties") or {}
        geom = feature.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise IngestionError(f"{p}: feature geometry must be LineString")
        for key in ("edge_id", "tail_node", "head_node", "length_mi"):
            if key not in props:
                raise IngestionError(f"{p}: feature missing property {key!r}")
        eid = str(props["edge_id"])
        tail = str(props["tail_node"])
        head = str(props["head_node"])
        coords = tuple(GeoPoint(float(c[0]), float(c[1])) for c in geom.get("coordinates", ()))
        if len(coords) < 2:
            raise IngestionError(f"{p}: edge {eid} needs at least 2 coordinates")
        for nid, pt in ((tail, coords[0]), (head, coords[-1])):
            known = nodes.get(nid)
            if known is None:
                nodes[nid] = pt
            elif abs(known.lon - pt.lon) > 1e-6 or abs(known.lat - pt.lat) > 1e-6:
                raise IngestionError(
                    f"{p}: node {nid} has conflicting coordinates {known} vs {pt}"
                )
        edges.append(
            Edge(
                id=eid,
                tail=tail,
                head=head,
                geometry=coords,
                length_mi=float(props["length_mi"]),
                region_tag=(str(props["region_tag"]) if props.get("region_tag") else None),
            )
        )
        if props.get("aadt_truck") is not None:
            weights[eid] = float(props["aadt_truck"])
    try:
        return build_network(nodes, edges), weights
    except ValidationError as exc:
        raise IngestionError(f"{p}: {exc}") from None


def write_network_geojson(
    net: RoadNetwork, path: str | Path, weights: Mapping[EdgeId, float] | None = None
) -> None:
    features = []
    for eid in net.edge_ids:
        e = net.edge(eid)
        props = {
            "edge_id": str(eid),
            "tail_node": str(e.tail),
            "head_node": str(e.head),
            "length_mi": e.length_mi,
        }
        if weights and eid in weights:
            props["aadt_truck"] = weights[eid]
        if e.region_tag is not None:
            props["region_tag"] = e.region_tag
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.lon, p.lat] for p in e.geometry],
                },
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_network_csv(path: str | Path) -> tuple[RoadNetwork, dict[EdgeId, float]]:
    """Read the plain CSV edge list used by headless tests."""
    rows, p = _open_csv(path, ["edge_id", "tail", "head", "length_mi", "aadt_truck", "wkt_geometry"])
    nodes: dict[str, GeoPoint] = {}
    edges: list[Edge] = []
    weights: dict[EdgeId, float] = {}
    for row in rows:
        eid = str(row["edge_id"])
        coords = _parse_wkt_linestring(row["wkt_geometry"], f"{p} edge {eid}")
        tail, head = str(row["tail"]), str(row["head"])
        for nid, pt in ((tail, coords[0]), (head, coords[-1])):
            known = nodes.get(nid)
            if known is None:
                nodes[nid] = pt
            elif abs(known.lon - pt.lon) > 1e-6 or abs(known.lat - pt.lat) > 1e-6:
                raise IngestionError(f"{p}: node {nid} has conflicting coordinates")
        region = (row.get("region_tag") or "").strip() or None
        edges.append(
            Edge(
                id=eid,
                tail=tail,
                head=head,
                geometry=coords,
                length_mi=float(row["length_mi"]),
                region_tag=region,
            )
        )
        w = _float_or_none(row.get("aadt_truck"))
        if w is not None:
            weights[eid] = w
    try:
        return build_network(nodes, edges), weights
    except ValidationError as exc:
        raise IngestionError(f"{p}: {exc}") from None


def write_network_csv(
    net: RoadNetwork, path: str | Path, weights: Mapping[EdgeId, float] | None = None
) -> None:
    header = ["edge_id", "tail", "head", "length_mi", "aadt_truck", "wkt_geometry", "region_tag"]
    rows = []
    for eid in net.edge_ids:
        e = net.edge(eid)
        rows.append(
            [
                eid,
                e.tail,
                e.head,
                e.length_mi,
                (weights or {}).get(eid),
                _wkt_linestring(e.geometry),
                e.region_tag,
            ]
        )
    _write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Dense inventory network and stations
# ---------------------------------------------------------------------------

def read_dense_csv(path: str | Path) -> list[DenseRoad]:
    rows, p = _open_csv(path, ["segment_id", "aadt", "one_way", "wkt_geometry"])
    roads = []
    for row in rows:
        sid = str(row["segment_id"])
        one_way_raw = row["one_way"].strip()
        if one_way_raw not in ("0", "1"):
            raise IngestionError(f"{p}: segment {sid}: one_way must be 0 or 1")
        roads.append(
            DenseRoad(
                segment_id=sid,
                aadt=float(row["aadt"]),
                one_way=one_way_raw == "1",
                geometry=_parse_wkt_linestring(row["wkt_geometry"], f"{p} segment {sid}"),
            )
        )
    return roads


def write_dense_csv(roads: Sequence[DenseRoad], path: str | Path) -> None:
    header = ["segment_id", "aadt", "one_way", "wkt_geometry"]
    rows = [
        [r.segment_id, r.aadt, 1 if r.one_way else 0, _wkt_linestring(r.geometry)]
        for r in roads
    ]
    _write_csv(path, header, rows)


def read_stations_csv(path: str | Path) -> list[Station]:
    rows, p = _open_csv(path, ["station_id", "direction", "lat", "lon"])
    stations = []
    for row in rows:
        try:
            direction = DirectionCode.parse(row["direction"])
        except ValidationError as exc:
            raise IngestionError(f"{p}: station {row['station_id']}: {exc}") from None
        stations.append(
            Station(
                station_id=str(row["station_id"]),
                direction=direction,
                point=GeoPoint(float(row["lon"]), float(row["lat"])),
                region_tag=(row.get("region_tag") or "").strip() or None,
            )
        )
    return stations


def write_stations_csv(stations: Sequence[Station], path: str | Path) -> None:
    header = ["station_id", "direction", "lat", "lon", "region_tag"]
    rows = [
        [s.station_id, s.direction.name, s.point.lat, s.point.lon, s.region_tag]
        for s in stations
    ]
    _write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Match reports
# ---------------------------------------------------------------------------

def write_weight_report(
    matches: Mapping[EdgeId, EdgeWeightMatch], path: str | Path
) -> None:
    header = ["edge_id", "weight", "n_candidates", "n_after_bearing_filter"]
    rows = [
        [eid, m.weight, m.n_candidates, m.n_after_bearing_filter]
        for eid, m in sorted(matches.items(), key=lambda kv: str(kv[0]))
    ]
    _write_csv(path, header, rows)


def read_weights_csv(path: str | Path) -> dict[EdgeId, float]:
    """Read back the weight column of a weight report; unset rows skipped."""
    rows, _ = _open_csv(path, ["edge_id", "weight"])
    out: dict[EdgeId, float] = {}
    for row in rows:
        w = _float_or_none(row.get("weight"))
        if w is not None:
            out[str(row["edge_id"])] = w
    return out


def write_snap_report(
    snaps: Sequence[tuple[Station, EdgeId | None, float | None]], path: str | Path
) -> None:
    """Rows of (station, matched edge or None, snap distance); unmatched
    stations keep empty fields so they stay visible in the report."""
    header = ["station_id", "direction", "matched_edge_id", "snap_distance_m"]
    rows = [
        [s.station_id, s.direction.name, eid, dist]
        for s, eid, dist in sorted(snaps, key=lambda t: (t[0].station_id, t[0].direction.name))
    ]
    _write_csv(path, header, rows)


def read_snap_report(path: str | Path) -> dict[tuple[str, str], EdgeId]:
    """Map (station_id, direction name) -> matched edge, skipping unmatched."""
    rows, _ = _open_csv(path, ["station_id", "direction", "matched_edge_id"])
    out: dict[tuple[str, str], EdgeId] = {}
    for row in rows:
        eid = (row.get("matched_edge_id") or "").strip()
        if eid:
            out[(str(row["station_id"]), str(row["direction"]))] = eid
    return out


# ---------------------------------------------------------------------------
# Hourly class records and aggregated observations
# ---------------------------------------------------------------------------

def read_hourly_csv(path: str | Path) -> tuple[list[HourlyClassRecord], int]:
    """Read hourly per-class counts.

    Returns the records plus a count of ignored out-of-range class columns
    (classes below 5 or above 13 are dropped).
    """
    rows, p = _open_csv(path, ["station_id", "direction", "timestamp", *_COUNT_COLUMNS])
    fields = rows[0].keys() if rows else _COUNT_COLUMNS
    ignored_columns = [
        c
        for c in fields
        if c.startswith("class_")
        and c not in _COUNT_COLUMNS
        and c[len("class_"):].isdigit()
    ]
    records = []
    for row in rows:
        try:
            ts = datetime.fromisoformat(row["timestamp"])
        except ValueError:
            raise IngestionError(
                f"{p}: station {row['station_id']}: bad timestamp {row['timestamp']!r}"
            ) from None
        try:
            direction = DirectionCode.parse(row["direction"])
        except ValidationError as exc:
            raise IngestionError(f"{p}: station {row['station_id']}: {exc}") from None
        counts = tuple(float(row[c] or 0.0) for c in _COUNT_COLUMNS)
        records.append(
            HourlyClassRecord(
                station_id=str(row["station_id"]),
                direction=direction,
                timestamp=ts,
                counts=counts,
            )
        )
    keys = set()
    for rec in records:
        key = (rec.station_id, rec.direction.name, rec.timestamp)
        if key in keys:
            raise IngestionError(
                f"{p}: duplicate record for {rec.station_id} {rec.direction.name} "
                f"at {rec.timestamp.isoformat()}"
            )
        keys.add(key)
    return records, len(ignored_columns)


def write_hourly_csv(records: Sequence[HourlyClassRecord], path: str | Path) -> None:
    header = ["station_id", "direction", "timestamp", *_COUNT_COLUMNS]
    rows = [
        [r.station_id, r.direction.name, r.timestamp.isoformat(), *r.counts]
        for r in records
    ]
    _write_csv(path, header, rows)


def write_observations_csv(
    observations: Sequence[StationObservation], path: str | Path
) -> None:
    header = [
        "station_id",
        "direction",
        "window",
        "mean_hourly_volume",
        "n_hours",
        *_SHARE_COLUMNS,
    ]
    rows = [
        [
            o.station_id,
            o.direction.name,
            o.window.label(),
            o.mean_hourly_volume,
            o.n_hours,
            *o.class_share.p,
        ]
        for o in observations
    ]
    _write_csv(path, header, rows)


def read_observations_csv(path: str | Path) -> list[StationObservation]:
    rows, p = _open_csv(
        path,
        ["station_id", "direction", "window", "mean_hourly_volume", "n_hours", *_SHARE_COLUMNS],
    )
    out = []
    for row in rows:
        try:
            window = window_from_label(row["window"])
            direction = DirectionCode.parse(row["direction"])
            share = ClassShare(tuple(float(row[c]) for c in _SHARE_COLUMNS))
        except ValidationError as exc:
            raise IngestionError(f"{p}: station {row['station_id']}: {exc}") from None
        out.append(
            StationObservation(
                station_id=str(row["station_id"]),
                direction=direction,
                window=window,
                mean_hourly_volume=float(row["mean_hourly_volume"]),
                class_share=share,
                n_hours=int(row["n_hours"]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Imputation results
# ---------------------------------------------------------------------------

def _imputed_rows(
    net: RoadNetwork,
    states: Mapping[EdgeId, EdgeState],
    components: Mapping[EdgeId, int],
):
    for eid in net.edge_ids:
        s = states[eid]
        share = s.class_share.p if s.class_share is not None else [None] * N_CLASSES
        yield eid, s, share, components[eid]


def write_imputed_csv(
    net: RoadNetwork,
    states: Mapping[EdgeId, EdgeState],
    components: Mapping[EdgeId, int],
    path: str | Path,
) -> None:
    header = ["edge_id", "status", "weight", "volume", *_SHARE_COLUMNS, "component_id"]
    rows = [
        [eid, s.status.value, s.weight, s.volume, *share, comp]
        for eid, s, share, comp in _imputed_rows(net, states, components)
    ]
    _write_csv(path, header, rows)


def write_imputed_geojson(
    net: RoadNetwork,
    states: Mapping[EdgeId, EdgeState],
    components: Mapping[EdgeId, int],
    path: str | Path,
) -> None:
    features = []
    for eid, s, share, comp in _imputed_rows(net, states, components):
        e = net.edge(eid)
        props = {
            "edge_id": str(eid),
            "status": s.status.value,
            "weight": s.weight,
            "volume": s.volume,
            "component_id": comp,
        }
        for col, value in zip(_SHARE_COLUMNS, share):
            props[col] = value
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[pt.lon, pt.lat] for pt in e.geometry],
                },
                "properties": props,
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_imputed_csv(
    path: str | Path,
) -> dict[EdgeId, EdgeState]:
    rows, p = _open_csv(path, ["edge_id", "status", "weight", "volume", *_SHARE_COLUMNS])
    out: dict[EdgeId, EdgeState] = {}
    for row in rows:
        shares = [_float_or_none(row[c]) for c in _SHARE_COLUMNS]
        share = None
        if all(v is not None for v in shares):
            share = ClassShare(tuple(shares))
        out[str(row["edge_id"])] = EdgeState(
            weight=_float_or_none(row["weight"]),
            volume=_float_or_none(row["volume"]),
            class_share=share,
            status=Status(row["status"]),
        )
    return out


def write_trace_csv(result: ImputeResult, path: str | Path) -> None:
    header = ["epoch", "max_delta", "newly_valued_count"]
    rows = [[t.epoch, t.max_delta, t.newly_valued] for t in result.trace]
    _write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Metrics reports
# ---------------------------------------------------------------------------

def write_metrics_long(report: MetricsReport, path: str | Path) -> None:
    """Long-format metrics: one row per (cell, metric)."""
    header = ["fold", "region", "class", "window", "metric", "value", "n"]
    rows = []
    for cell in report.cells:
        fold_label = cell.scope if cell.fold is None else str(cell.fold)
        for metric in ("mae", "rmse", "r2", "cel"):
            value = getattr(cell, metric)
            if value is None:
                # Undefined r2 on a scored cell stays visible as an empty row.
                if metric != "r2" or cell.mae is None or cell.n < 2:
                    continue
            rows.append(
                [
                    fold_label,
                    cell.region,
                    cell.vehicle_class,
                    cell.window,
                    f"{cell.payload}_{metric}",
                    value,
                    cell.n,
                ]
            )
    _write_csv(path, header, rows)


def write_metrics_summary(report: MetricsReport, path: str | Path) -> None:
    """Pooled volume metrics per window (plus the all-window row)."""
    header = ["window", "n", "r2", "mae", "rmse"]
    rows = []
    pooled = [
        c
        for c in report.cells
        if c.scope == "pooled"
        and c.payload == "volume"
        and c.vehicle_class is None
        and c.region is None
    ]
    for cell in sorted(pooled, key=lambda c: (c.window is not None, c.window or "")):
        rows.append([cell.window or "pooled", cell.n, cell.r2, cell.mae, cell.rmse])
    if not rows:
        rows.append(["pooled", 0, None, None, None])
    _write_csv(path, header, rows)
