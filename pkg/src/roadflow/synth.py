"""Synthetic networks and an exact fixed-point oracle.

The oracle assembles the linear system the iterative sweep converges to
(each unknown edge equals the weight-normalized average of its neighbors)
and solves it densely. It is deliberately simple and exact rather than
scalable; fixtures are capped in size accordingly. Grid fixtures reproduce
the corner-to-corner demonstration setup; random fixtures provide
model-consistent ground truth for cross-validation checks.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .aggregate import AggregationWindow, StationObservation
from .errors import NumericalError, ValidationError
from .geo import GeoPoint, polyline_length_miles
from .impute import Payload
from .match import DirectionCode
from .network import (
    ClassShare,
    Edge,
    EdgeId,
    EdgeState,
    N_CLASSES,
    RoadNetwork,
    Status,
    build_network,
    id_sort_key,
)

#: Dense-solve guard: networks beyond this many unknowns belong to the
#: iterative solver, not the oracle.
MAX_ORACLE_UNKNOWNS = 2500

_GRID_LON0 = -98.0
_GRID_LAT0 = 35.0
_GRID_SPACING_DEG = 0.01


class OracleError(NumericalError):
    """The exact solve failed (singular or unreachable system)."""


@dataclass(frozen=True)
class GridSpec:
    """Lattice of rows x cols nodes with all edges directed up and right.

    The first out-edge of the lower-left node is pinned at ``source_value``
    and the first in-edge of the upper-right node at ``sink_value``; every
    edge carries the same prior weight.
    """

    rows: int = 10
    cols: int = 10
    source_value: float = 0.1
    sink_value: float = 1.0
    uniform_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise ValidationError(f"grid needs rows, cols >= 2, got {self.rows}x{self.cols}")
        if not self.uniform_weight > 0:
            raise ValidationError("uniform_weight must be positive")


def _grid_point(r: int, c: int) -> GeoPoint:
    return GeoPoint(_GRID_LON0 + c * _GRID_SPACING_DEG, _GRID_LAT0 + r * _GRID_SPACING_DEG)


def make_grid(spec: GridSpec) -> tuple[RoadNetwork, dict[EdgeId, EdgeState]]:
    """Build the directed grid and its state table with two observed edges."""
    nodes = {
        f"n-{r:04d}-{c:04d}": _grid_point(r, c)
        for r in range(spec.rows)
        for c in range(spec.cols)
    }
    edges = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            here = f"n-{r:04d}-{c:04d}"
            if c + 1 < spec.cols:
                geom = (_grid_point(r, c), _grid_point(r, c + 1))
                edges.append(
                    Edge(
                        id=f"h-{r:04d}-{c:04d}",
                        tail=here,
                        head=f"n-{r:04d}-{c + 1:04d}",
                        geometry=geom,
                        length_mi=polyline_length_miles(geom),
                    )
                )
            if r + 1 < spec.rows:
                geom = (_grid_point(r, c), _grid_point(r + 1, c))
                edges.append(
                    Edge(
                        id=f"v-{r:04d}-{c:04d}",
                        tail=here,
                        head=f"n-{r + 1:04d}-{c:04d}",
                        geometry=geom,
                        length_mi=polyline_length_miles(geom),
                    )
                )
    net = build_network(nodes, edges)

    source_edge = net.out_edges(f"n-{0:04d}-{0:04d}")[0]
    sink_edge = net.in_edges(f"n-{spec.rows - 1:04d}-{spec.cols - 1:04d}")[0]
    states = {
        eid: EdgeState(weight=spec.uniform_weight) for eid in net.edge_ids
    }
    states[source_edge] = EdgeState(
        weight=spec.uniform_weight, volume=spec.source_value, status=Status.OBSERVED
    )
    states[sink_edge] = EdgeState(
        weight=spec.uniform_weight, volume=spec.sink_value, status=Status.OBSERVED
    )
    return net, states


def grid_pinned_edges(net: RoadNetwork, spec: GridSpec) -> tuple[EdgeId, EdgeId]:
    """(source, sink) edge ids of a grid built from ``spec``."""
    return (
        net.out_edges(f"n-{0:04d}-{0:04d}")[0],
        net.in_edges(f"n-{spec.rows - 1:04d}-{spec.cols - 1:04d}")[0],
    )


def fixed_point_oracle(
    net: RoadNetwork,
    states: Mapping[EdgeId, EdgeState],
    payload: Payload = Payload.VOLUME,
) -> dict[EdgeId, float] | dict[EdgeId, ClassShare]:
    """Solve the imputation fixed point exactly with a dense linear solve.

    Unknown edge values satisfy ``y_u = P_uu y_u + P_uo y_o`` where ``P``
    row-normalizes neighbor weights (with the same uniform fallback as the
    sweep when a neighborhood's weights sum to zero). Every unknown must be
    reachable from an observed edge through the neighbor relation.
    """
    if payload is Payload.BOTH:
        raise ValidationError("oracle solves one payload at a time")
    ids = net.edge_ids

    def pinned_value(eid: EdgeId):
        s = states[eid]
        if s.status is not Status.OBSERVED:
            return None
        v = s.volume if payload is Payload.VOLUME else s.class_share
        if v is None:
            raise ValidationError(f"observed edge {eid!r} lacks a {payload.value} value")
        return v

    pinned = {eid: pinned_value(eid) for eid in ids}
    unknowns = [eid for eid in ids if pinned[eid] is None]
    if not unknowns:
        return {eid: pinned[eid] for eid in ids}
    if len(unknowns) > MAX_ORACLE_UNKNOWNS:
        raise ValidationError(
            f"{len(unknowns)} unknown edges exceed the dense-solve cap of {MAX_ORACLE_UNKNOWNS}"
        )
    observed_ids = [eid for eid in ids if pinned[eid] is not None]
    if not observed_ids:
        raise OracleError("no observed edges; the system is singular")

    reached = set(observed_ids)
    frontier = list(observed_ids)
    while frontier:
        nxt = []
        for eid in frontier:
            for nb in net.neighbor_edges(eid):
                if nb not in reached:
                    reached.add(nb)
                    nxt.append(nb)
        frontier = nxt
    unreachable = [eid for eid in unknowns if eid not in reached]
    if unreachable:
        raise OracleError(
            f"{len(unreachable)} unknown edges unreachable from any observation "
            f"(first: {unreachable[0]!r})"
        )

    col = {eid: k for k, eid in enumerate(unknowns)}
    nu = len(unknowns)
    width = N_CLASSES if payload is Payload.CLASS_SHARE else 1
    a = np.eye(nu, dtype=float)
    b = np.zeros((nu, width), dtype=float)
    for eid in unknowns:
        row = col[eid]
        nbrs = net.neighbor_edges(eid)
        weights = []
        for nb in nbrs:
            wt = states[nb].weight
            if wt is None:
                raise ValidationError(f"edge {nb!r} has no weight; resolve weights first")
            weights.append(float(wt))
        denom = sum(weights)
        for nb, wt in zip(nbrs, weights):
            coef = wt / denom if denom > 0 else 1.0 / len(nbrs)
            if nb in col:
                a[row, col[nb]] -= coef
            else:
                v = pinned[nb]
                if payload is Payload.VOLUME:
                    b[row, 0] += coef * v
                else:
                    for c in range(N_CLASSES):
                        b[row, c] += coef * v.p[c]

    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"singular imputation system: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise OracleError("non-finite oracle solution")
    residual = float(np.max(np.abs(a @ x - b)))
    scale = max(1.0, float(np.max(np.abs(b))))
    if residual > 1e-7 * scale:
        raise OracleError(f"ill-conditioned imputation system (residual {residual:.3e})")

    if payload is Payload.VOLUME:
        out_v: dict[EdgeId, float] = {}
        for eid in ids:
            out_v[eid] = float(x[col[eid], 0]) if eid in col else float(pinned[eid])
        return out_v
    out_s: dict[EdgeId, ClassShare] = {}
    for eid in ids:
        if eid in col:
            row_vals = x[col[eid]]
            total = float(row_vals.sum())
            if abs(total - 1.0) > 1e-12 and total > 0:
                row_vals = row_vals / total
            out_s[eid] = ClassShare(tuple(float(v) for v in row_vals))
        else:
            out_s[eid] = pinned[eid]
    return out_s


@dataclass(frozen=True)
class RandomFixture:
    """A strongly connected random network with model-consistent truth.

    ``anchor_edges`` are always-observed boundary pins that generated the
    ground truth; ``station_edges`` are the exposed observations, safe to
    mask in cross-validation because the truth satisfies the averaging
    relation at every non-anchor edge.
    """

    network: RoadNetwork
    states: dict[EdgeId, EdgeState]
    truth_volume: dict[EdgeId, float]
    truth_share: dict[EdgeId, ClassShare]
    station_edges: tuple[EdgeId, ...]
    anchor_edges: tuple[EdgeId, ...]


def make_random_fixture(n_edges: int, observation_fraction: float, seed: int) -> RandomFixture:
    """Deterministic random fixture: network, states, and exact ground truth.

    Nodes sit on a jittered lattice at plausible lon/lat; a shuffled cycle
    through all nodes guarantees strong connectivity before extra random
    edges are added. Ground truth comes from the dense oracle pinned at a
    few anchor edges, and ``observation_fraction`` of the edges are exposed
    as observed stations.
    """
    if n_edges < 8:
        raise ValidationError(f"fixture needs at least 8 edges, got {n_edges}")
    if not 0 < observation_fraction < 1:
        raise ValidationError(
            f"observation_fraction must be in (0, 1), got {observation_fraction!r}"
        )
    rng = random.Random(seed)

    n_nodes = min(n_edges, max(4, round(n_edges * 0.6)))
    side = math.ceil(math.sqrt(n_nodes))
    node_ids = [f"n{i:05d}" for i in range(n_nodes)]
    nodes: dict[str, GeoPoint] = {}
    for i, nid in enumerate(node_ids):
        lon = -95.0 + 0.01 * (i % side) + rng.uniform(-0.002, 0.002)
        lat = 37.0 + 0.01 * (i // side) + rng.uniform(-0.002, 0.002)
        nodes[nid] = GeoPoint(lon, lat)
    mid_lon = sorted(p.lon for p in nodes.values())[n_nodes // 2]

    order = list(range(n_nodes))
    rng.shuffle(order)
    pairs: list[tuple[int, int]] = [
        (order[k], order[(k + 1) % n_nodes]) for k in range(n_nodes)
    ]
    used = set(pairs)
    attempts = 0
    while len(pairs) < n_edges:
        attempts += 1
        if attempts > 1000 * n_edges:
            raise ValidationError("could not place the requested number of edges")
        u = rng.randrange(n_nodes)
        v = rng.randrange(n_nodes)
        # No antiparallel duplicates: a straight-line opposite edge would be
        # a reverse twin, and twin exclusion can strand it without neighbors.
        if u == v or (u, v) in used or (v, u) in used:
            continue
        used.add((u, v))
        pairs.append((u, v))

    edges = []
    for k, (u, v) in enumerate(pairs):
        geom = (nodes[node_ids[u]], nodes[node_ids[v]])
        mid = 0.5 * (geom[0].lon + geom[1].lon)
        edges.append(
            Edge(
                id=f"e{k:05d}",
                tail=node_ids[u],
                head=node_ids[v],
                geometry=geom,
                length_mi=polyline_length_miles(geom),
                region_tag="west" if mid < mid_lon else "east",
            )
        )
    net = build_network(nodes, edges)

    all_ids = sorted(net.edge_ids, key=id_sort_key)
    states = {eid: EdgeState(weight=rng.uniform(200.0, 5000.0)) for eid in all_ids}

    n_anchor = max(2, n_edges // 40)
    anchors = tuple(sorted(rng.sample(all_ids, n_anchor), key=id_sort_key))
    for eid in anchors:
        raw = [rng.uniform(0.05, 1.0) for _ in range(N_CLASSES)]
        states[eid].volume = rng.uniform(10.0, 100.0)
        states[eid].class_share = ClassShare.from_counts(raw)
        states[eid].status = Status.OBSERVED

    truth_volume = fixed_point_oracle(net, states, Payload.VOLUME)
    truth_share = fixed_point_oracle(net, states, Payload.CLASS_SHARE)

    non_anchor = [eid for eid in all_ids if eid not in set(anchors)]
    n_station = min(len(non_anchor), max(1, round(observation_fraction * n_edges)))
    stations = tuple(sorted(rng.sample(non_anchor, n_station), key=id_sort_key))
    for eid in stations:
        states[eid].volume = truth_volume[eid]
        states[eid].class_share = truth_share[eid]
        states[eid].status = Status.OBSERVED

    return RandomFixture(
        network=net,
        states=states,
        truth_volume=truth_volume,
        truth_share=truth_share,
        station_edges=stations,
        anchor_edges=anchors,
    )


_DIRECTION_WHEEL = (
    DirectionCode.N,
    DirectionCode.NE,
    DirectionCode.E,
    DirectionCode.SE,
    DirectionCode.S,
    DirectionCode.SW,
    DirectionCode.W,
    DirectionCode.NW,
)


def nearest_direction(bearing_deg: float) -> DirectionCode:
    """Quantize a bearing to the nearest of the eight direction codes."""
    return _DIRECTION_WHEEL[round((bearing_deg % 360.0) / 45.0) % 8]


@dataclass(frozen=True)
class PipelineDataset:
    """Paths and ground truth of a generated end-to-end input set."""

    network_path: str
    dense_path: str
    stations_path: str
    hourly_path: str
    fixture: RandomFixture
    station_ids: tuple[str, ...]
    truth_volume: dict[EdgeId, float]
    truth_share: dict[EdgeId, ClassShare]


def make_pipeline_dataset(
    out_dir,
    n_edges: int = 60,
    observation_fraction: float = 0.3,
    seed: int = 0,
    n_days: int = 3,
    include_unmatched_station: bool = False,
    constant_value: float | None = None,
) -> PipelineDataset:
    """Write a complete synthetic input set for the file-based pipeline.

    Produces a network GeoJSON, a dense two-way inventory CSV whose halved
    values recover each edge's prior weight, a stations CSV at edge
    midpoints, and an hourly class-count CSV whose 24-hour profile averages
    exactly to each station's true hourly volume.

    With ``constant_value`` set, every edge's true volume is that constant
    and every share vector is one fixed distribution: a globally harmonic
    field that any subset of stations reproduces exactly, so
    cross-validation through the files recovers it to float precision.
    """
    from datetime import datetime, timedelta
    from pathlib import Path

    from .io import (
        write_dense_csv,
        write_hourly_csv,
        write_network_geojson,
        write_stations_csv,
    )
    from .aggregate import HourlyClassRecord
    from .match import DenseRoad, Station, edge_bearing

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fx = make_random_fixture(n_edges, observation_fraction, seed)
    rng = random.Random(seed + 1)
    net = fx.network
    if constant_value is not None:
        fixed_share = ClassShare.from_counts([3, 1, 1, 1, 6, 1, 1, 1, 3])
        truth_volume = {eid: float(constant_value) for eid in net.edge_ids}
        truth_share = {eid: fixed_share for eid in net.edge_ids}
    else:
        truth_volume = fx.truth_volume
        truth_share = fx.truth_share

    write_network_geojson(net, out / "network.geojson")

    dense: list[DenseRoad] = []
    for eid in net.edge_ids:
        if rng.random() < 0.1:
            continue  # leave some edges uncovered for the weight pre-pass
        edge = net.edge(eid)
        a, b = edge.geometry[0], edge.geometry[-1]
        # Perpendicular offset ~20 m keeps segments inside the match buffer.
        dx, dy = b.lon - a.lon, b.lat - a.lat
        norm = math.hypot(dx, dy)
        off = 0.0002
        ox, oy = -dy / norm * off, dx / norm * off
        n_pieces = rng.randint(2, 3)
        weight = fx.states[eid].weight
        for k in range(n_pieces):
            t0, t1 = k / n_pieces, (k + 1) / n_pieces
            p0 = GeoPoint(a.lon + dx * t0 + ox, a.lat + dy * t0 + oy)
            p1 = GeoPoint(a.lon + dx * t1 + ox, a.lat + dy * t1 + oy)
            noisy = weight * rng.uniform(0.9, 1.1)
            dense.append(DenseRoad(f"d-{eid}-{k}", 2.0 * noisy, False, (p0, p1)))
    write_dense_csv(dense, out / "dense.csv")

    stations: list[Station] = []
    records: list[HourlyClassRecord] = []
    station_ids = []
    start = datetime(2021, 7, 12, 0, 0)
    for idx, eid in enumerate(fx.station_edges):
        edge = net.edge(eid)
        a, b = edge.geometry[0], edge.geometry[-1]
        sid = f"st{idx:04d}"
        station_ids.append(sid)
        direction = nearest_direction(edge_bearing(edge))
        point = GeoPoint(0.5 * (a.lon + b.lon), 0.5 * (a.lat + b.lat) + 0.00005)
        stations.append(Station(sid, direction, point, region_tag=edge.region_tag))
        volume = truth_volume[eid]
        share = truth_share[eid]
        for day in range(n_days):
            for hour in range(24):
                # Full-period cosine: the 24 samples average exactly to 1.
                profile = 1.0 + 0.5 * math.cos(2.0 * math.pi * (hour - 15) / 24.0)
                ts = start + timedelta(days=day, hours=hour)
                counts = tuple(volume * profile * p for p in share.p)
                records.append(HourlyClassRecord(sid, direction, ts, counts))
    if include_unmatched_station:
        stations.append(
            Station("st-offgrid", DirectionCode.N, GeoPoint(-80.0, 25.0), region_tag=None)
        )
    write_stations_csv(stations, out / "stations.csv")
    write_hourly_csv(records, out / "hourly.csv")

    return PipelineDataset(
        network_path=str(out / "network.geojson"),
        dense_path=str(out / "dense.csv"),
        stations_path=str(out / "stations.csv"),
        hourly_path=str(out / "hourly.csv"),
        fixture=fx,
        station_ids=tuple(station_ids),
        truth_volume=truth_volume,
        truth_share=truth_share,
    )


def fixture_observations(fixture: RandomFixture) -> list[StationObservation]:
    """Synthetic station observations for the fixture's exposed edges."""
    from .match import edge_bearing  # local import to keep module load light

    window = AggregationWindow()
    out = []
    for idx, eid in enumerate(fixture.station_edges):
        edge = fixture.network.edge(eid)
        out.append(
            StationObservation(
                station_id=f"st{idx:04d}",
                direction=nearest_direction(edge_bearing(edge)),
                window=window,
                mean_hourly_volume=fixture.truth_volume[eid],
                class_share=fixture.truth_share[eid],
                n_hours=24,
                matched_edge=eid,
                region_tag=edge.region_tag,
            )
        )
    return out
