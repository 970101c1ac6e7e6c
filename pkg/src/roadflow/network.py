"""Directed road-network graph, per-edge state, and adjacency queries.

The network is a directed multigraph: every edge carries one travel
direction, so a two-way road contributes two edges whose opposing geometry
marks them as reverse twins. All adjacency queries return edge ids in a
fixed ascending order: downstream sweeps are order-sensitive, so ordering
is part of the contract. Networks are immutable once built and safe to
share across threads; mutable per-edge state lives in a separate table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

from .errors import ValidationError
from .geo import GeoPoint

NodeId = Union[str, int]
EdgeId = Union[str, int]

#: FHWA vehicle classes covered by class-share vectors (two-axle single-unit
#: trucks through multi-trailer trucks).
VEHICLE_CLASSES: tuple[int, ...] = tuple(range(5, 14))
N_CLASSES = len(VEHICLE_CLASSES)

#: Components of a class-share vector must sum to 1 within this tolerance.
SHARE_SUM_TOL = 1e-9

#: Edge geometry endpoints must coincide with node coordinates within this
#: many degrees (~0.1 m).
ENDPOINT_SNAP_TOL_DEG = 1e-6


class NetworkError(ValidationError):
    """Inconsistent network definition (dangling reference, bad edge, ...)."""


def id_sort_key(identifier: NodeId) -> tuple[int, object]:
    """Total order over identifiers that tolerates mixed int/str ids."""
    if isinstance(identifier, bool):  # bool is an int subclass; keep ids sane
        raise NetworkError(f"boolean identifier not allowed: {identifier!r}")
    if isinstance(identifier, int):
        return (0, identifier)
    return (1, str(identifier))


class Status(str, Enum):
    """Provenance of an edge's payload values."""

    OBSERVED = "observed"
    IMPUTED = "imputed"
    UNSET = "unset"


@dataclass(frozen=True)
class ClassShare:
    """Probability vector over vehicle classes 5..13.

    Components must lie in [0, 1] and sum to 1 within ``SHARE_SUM_TOL``.
    Use :meth:`from_counts` to build one from raw per-class counts.
    """

    p: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.p) != N_CLASSES:
            raise ValidationError(f"class share needs {N_CLASSES} components, got {len(self.p)}")
        for v in self.p:
            if not (-1e-12 <= v <= 1.0 + 1e-12):
                raise ValidationError(f"class share component out of [0, 1]: {v!r}")
        total = sum(self.p)
        if abs(total - 1.0) > SHARE_SUM_TOL:
            raise ValidationError(f"class share components sum to {total!r}, expected 1")

    @classmethod
    def from_counts(cls, counts: Sequence[float]) -> "ClassShare":
        """Normalize nonnegative per-class counts into a share vector."""
        if len(counts) != N_CLASSES:
            raise ValidationError(f"expected {N_CLASSES} counts, got {len(counts)}")
        if any(c < 0 for c in counts):
            raise ValidationError("negative class count")
        total = float(sum(counts))
        if total <= 0.0:
            raise ValidationError("cannot build a class share from all-zero counts")
        return cls(tuple(float(c) / total for c in counts))

    @classmethod
    def uniform(cls) -> "ClassShare":
        return cls(tuple(1.0 / N_CLASSES for _ in range(N_CLASSES)))

    def share(self, vehicle_class: int) -> float:
        """Share of one vehicle class (5..13)."""
        if vehicle_class not in VEHICLE_CLASSES:
            raise ValidationError(f"vehicle class out of range 5..13: {vehicle_class}")
        return self.p[vehicle_class - VEHICLE_CLASSES[0]]

    def as_tuple(self) -> tuple[float, ...]:
        return self.p


@dataclass(frozen=True)
class Edge:
    """One directed travel lane bundle between two nodes.

    ``geometry`` runs from the tail node to the head node; ``reverse_twin``
    names the opposing-direction edge of a two-way road when one exists.
    """

    id: EdgeId
    tail: NodeId
    head: NodeId
    geometry: tuple[GeoPoint, ...]
    length_mi: float
    reverse_twin: EdgeId | None = None
    region_tag: str | None = None


@dataclass
class EdgeState:
    """Mutable per-edge payload: prior weight, values, and their provenance.

    ``weight`` is the daily-truck-volume prior used by the neighbor
    averaging; ``volume`` and ``class_share`` are the imputed payloads.
    Observed values are pinned and never overwritten by the solver.
    """

    weight: float | None = None
    volume: float | None = None
    class_share: ClassShare | None = None
    status: Status = Status.UNSET

    def __post_init__(self) -> None:
        if self.weight is not None and self.weight < 0:
            raise ValidationError(f"negative edge weight: {self.weight!r}")
        if self.status is Status.OBSERVED and self.volume is None and self.class_share is None:
            raise ValidationError("observed edge must carry a volume or a class share")


class RoadNetwork:
    """Immutable directed multigraph with precomputed adjacency indices.

    Build instances through :func:`build_network`; the constructor assumes
    already-validated inputs.
    """

    def __init__(
        self,
        nodes: dict[NodeId, GeoPoint],
        edges: dict[EdgeId, Edge],
        in_edges: dict[NodeId, tuple[EdgeId, ...]],
        out_edges: dict[NodeId, tuple[EdgeId, ...]],
        neighbors: dict[EdgeId, tuple[EdgeId, ...]],
    ) -> None:
        self._nodes = MappingProxyType(dict(nodes))
        self._edges = MappingProxyType(dict(edges))
        self._in = in_edges
        self._out = out_edges
        self._neighbors = neighbors
        self._edge_ids = tuple(sorted(edges, key=id_sort_key))

    @property
    def nodes(self) -> Mapping[NodeId, GeoPoint]:
        return self._nodes

    @property
    def edges(self) -> Mapping[EdgeId, Edge]:
        return self._edges

    @property
    def edge_ids(self) -> tuple[EdgeId, ...]:
        """All edge ids in ascending order (the canonical sweep order)."""
        return self._edge_ids

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def edge(self, edge_id: EdgeId) -> Edge:
        try:
            return self._edges[edge_id]
        except KeyError:
            raise NetworkError(f"unknown edge: {edge_id!r}") from None

    def in_edges(self, node: NodeId) -> tuple[EdgeId, ...]:
        """Edges whose head is ``node``, ascending by edge id."""
        if node not in self._nodes:
            raise NetworkError(f"unknown node: {node!r}")
        return self._in.get(node, ())

    def out_edges(self, node: NodeId) -> tuple[EdgeId, ...]:
        """Edges whose tail is ``node``, ascending by edge id."""
        if node not in self._nodes:
            raise NetworkError(f"unknown node: {node!r}")
        return self._out.get(node, ())

    def neighbor_edges(self, edge_id: EdgeId) -> tuple[EdgeId, ...]:
        """Neighbors of an edge: inbound links at its tail plus outbound
        links at its head, excluding the edge itself and its reverse twin.

        A pure function of topology; repeated calls return the identical
        ordered tuple.
        """
        if edge_id not in self._edges:
            raise NetworkError(f"unknown edge: {edge_id!r}")
        return self._neighbors[edge_id]


def _geometry_reversed_match(a: Edge, b: Edge, tol: float = ENDPOINT_SNAP_TOL_DEG) -> bool:
    if len(a.geometry) != len(b.geometry):
        return False
    for p, q in zip(a.geometry, reversed(b.geometry)):
        if abs(p.lon - q.lon) > tol or abs(p.lat - q.lat) > tol:
            return False
    return True


def _detect_reverse_twins(edges: dict[EdgeId, Edge]) -> dict[EdgeId, EdgeId]:
    by_ends: dict[tuple[NodeId, NodeId], list[EdgeId]] = {}
    for eid in sorted(edges, key=id_sort_key):
        e = edges[eid]
        by_ends.setdefault((e.tail, e.head), []).append(eid)
    twin: dict[EdgeId, EdgeId] = {}
    for eid in sorted(edges, key=id_sort_key):
        if eid in twin:
            continue
        e = edges[eid]
        for cand in by_ends.get((e.head, e.tail), ()):
            if cand == eid or cand in twin:
                continue
            if _geometry_reversed_match(e, edges[cand]):
                twin[eid] = cand
                twin[cand] = eid
                break
    return twin


def build_network(
    nodes: Mapping[NodeId, GeoPoint] | Mapping[NodeId, tuple[float, float]],
    edges: Iterable[Edge],
) -> RoadNetwork:
    """Validate nodes and edges and assemble a :class:`RoadNetwork`.

    Checks for duplicate edge ids, dangling node references, self-loops,
    non-positive lengths, and geometry endpoints that stray from their node
    coordinates. Reverse twins are detected by matching (tail, head) against
    (head, tail) with near-identical reversed geometry.
    """
    node_map: dict[NodeId, GeoPoint] = {nid: GeoPoint(*pt) for nid, pt in nodes.items()}
    edge_map: dict[EdgeId, Edge] = {}
    for e in edges:
        if e.id in edge_map:
            raise NetworkError(f"duplicate edge id: {e.id!r}")
        if e.tail not in node_map:
            raise NetworkError(f"edge {e.id!r} references undeclared tail node {e.tail!r}")
        if e.head not in node_map:
            raise NetworkError(f"edge {e.id!r} references undeclared head node {e.head!r}")
        if e.tail == e.head:
            raise NetworkError(f"edge {e.id!r} is a self-loop at node {e.tail!r}")
        if not e.length_mi > 0:
            raise NetworkError(f"edge {e.id!r} has non-positive length {e.length_mi!r}")
        if len(e.geometry) < 2:
            raise NetworkError(f"edge {e.id!r} needs at least 2 geometry points")
        geometry = tuple(GeoPoint(*p) for p in e.geometry)
        for endpoint, node in ((geometry[0], e.tail), (geometry[-1], e.head)):
            ref = node_map[node]
            if (
                abs(endpoint.lon - ref.lon) > ENDPOINT_SNAP_TOL_DEG
                or abs(endpoint.lat - ref.lat) > ENDPOINT_SNAP_TOL_DEG
            ):
                raise NetworkError(
                    f"edge {e.id!r} geometry endpoint {endpoint} does not coincide "
                    f"with node {node!r} at {ref}"
                )
        edge_map[e.id] = replace(e, geometry=geometry)

    twins = _detect_reverse_twins(edge_map)
    for eid, tid in twins.items():
        edge_map[eid] = replace(edge_map[eid], reverse_twin=tid)

    in_lists: dict[NodeId, list[EdgeId]] = {}
    out_lists: dict[NodeId, list[EdgeId]] = {}
    for eid in sorted(edge_map, key=id_sort_key):
        e = edge_map[eid]
        out_lists.setdefault(e.tail, []).append(eid)
        in_lists.setdefault(e.head, []).append(eid)
    in_idx = {n: tuple(lst) for n, lst in in_lists.items()}
    out_idx = {n: tuple(lst) for n, lst in out_lists.items()}

    neighbors: dict[EdgeId, tuple[EdgeId, ...]] = {}
    for eid in sorted(edge_map, key=id_sort_key):
        e = edge_map[eid]
        excluded = {eid}
        if e.reverse_twin is not None:
            excluded.add(e.reverse_twin)
        merged = set(in_idx.get(e.tail, ())) | set(out_idx.get(e.head, ()))
        neighbors[eid] = tuple(sorted(merged - excluded, key=id_sort_key))

    return RoadNetwork(node_map, edge_map, in_idx, out_idx, neighbors)


def effective_in_edges(net: RoadNetwork, edge_id: EdgeId) -> tuple[EdgeId, ...]:
    """Inbound links at the edge's tail, excluding the edge's reverse twin."""
    e = net.edge(edge_id)
    excluded = {edge_id, e.reverse_twin}
    return tuple(x for x in net.in_edges(e.tail) if x not in excluded)


def effective_out_edges(net: RoadNetwork, edge_id: EdgeId) -> tuple[EdgeId, ...]:
    """Outbound links at the edge's head, excluding the edge's reverse twin."""
    e = net.edge(edge_id)
    excluded = {edge_id, e.reverse_twin}
    return tuple(x for x in net.out_edges(e.head) if x not in excluded)


def neighbor_components(net: RoadNetwork) -> dict[EdgeId, int]:
    """Connected components of the edge-neighbor relation.

    Values flow only along this relation, so edges in different components
    never exchange information. Component ids are numbered by the smallest
    edge id each component contains.
    """
    parent: dict[EdgeId, EdgeId] = {eid: eid for eid in net.edge_ids}

    def find(x: EdgeId) -> EdgeId:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for eid in net.edge_ids:
        for nb in net.neighbor_edges(eid):
            ra, rb = find(eid), find(nb)
            if ra != rb:
                if id_sort_key(ra) <= id_sort_key(rb):
                    parent[rb] = ra
                else:
                    parent[ra] = rb

    roots: dict[EdgeId, int] = {}
    component: dict[EdgeId, int] = {}
    for eid in net.edge_ids:  # ascending: root numbering follows smallest member
        r = find(eid)
        if r not in roots:
            roots[r] = len(roots)
        component[eid] = roots[r]
    return component


def init_states(
    net: RoadNetwork, weights: Mapping[EdgeId, float] | None = None
) -> dict[EdgeId, EdgeState]:
    """Fresh all-unset state table, optionally seeded with prior weights."""
    states = {}
    for eid in net.edge_ids:
        w = None if weights is None else weights.get(eid)
        states[eid] = EdgeState(weight=w)
    return states


def copy_states(states: Mapping[EdgeId, EdgeState]) -> dict[EdgeId, EdgeState]:
    """Independent copy of a state table (class shares are immutable)."""
    return {
        eid: EdgeState(
            weight=s.weight, volume=s.volume, class_share=s.class_share, status=s.status
        )
        for eid, s in states.items()
    }
