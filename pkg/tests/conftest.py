"""Shared fixtures: small hand-built networks used across the suite."""

from __future__ import annotations

import pytest

from roadflow.geo import GeoPoint
from roadflow.network import Edge, build_network


def make_edge(eid, tail, head, nodes, length=1.0, region=None):
    return Edge(
        id=eid,
        tail=tail,
        head=head,
        geometry=(nodes[tail], nodes[head]),
        length_mi=length,
        region_tag=region,
    )


FORK_NODES = {
    "A": GeoPoint(-0.02, 0.01),
    "B": GeoPoint(-0.02, -0.01),
    "C": GeoPoint(-0.01, 0.0),
    "D": GeoPoint(0.01, 0.0),
    "E": GeoPoint(0.02, 0.01),
    "F": GeoPoint(0.02, -0.01),
}


@pytest.fixture
def fork_net():
    """Two links merging into a middle link that splits again:
    A->C, B->C, C->D, D->E, D->F."""
    edges = [
        make_edge("AC", "A", "C", FORK_NODES),
        make_edge("BC", "B", "C", FORK_NODES),
        make_edge("CD", "C", "D", FORK_NODES),
        make_edge("DE", "D", "E", FORK_NODES),
        make_edge("DF", "D", "F", FORK_NODES),
    ]
    return build_network(FORK_NODES, edges)


@pytest.fixture
def fork_net_twoway():
    """The fork network plus the opposing direction D->C of the middle link."""
    edges = [
        make_edge("AC", "A", "C", FORK_NODES),
        make_edge("BC", "B", "C", FORK_NODES),
        make_edge("CD", "C", "D", FORK_NODES),
        make_edge("DC", "D", "C", FORK_NODES),
        make_edge("DE", "D", "E", FORK_NODES),
        make_edge("DF", "D", "F", FORK_NODES),
    ]
    return build_network(FORK_NODES, edges)


CHAIN_NODES = {
    "A": GeoPoint(0.0, 0.0),
    "B": GeoPoint(0.01, 0.0),
    "C": GeoPoint(0.02, 0.0),
    "D": GeoPoint(0.03, 0.0),
}


@pytest.fixture
def chain_net():
    """Straight corridor A->B->C->D."""
    edges = [
        make_edge("e1", "A", "B", CHAIN_NODES),
        make_edge("e2", "B", "C", CHAIN_NODES),
        make_edge("e3", "C", "D", CHAIN_NODES),
    ]
    return build_network(CHAIN_NODES, edges)


CROSSING_NODES = {
    "W": GeoPoint(-84.02, 33.0),
    "E": GeoPoint(-83.98, 33.0),
    "S": GeoPoint(-84.0, 32.98),
    "N": GeoPoint(-84.0, 33.02),
}


@pytest.fixture
def crossing_net():
    """East-west divided highway (twin pair) crossed by a north-south
    arterial overpass."""
    edges = [
        make_edge("i-east", "W", "E", CROSSING_NODES, 2.7),
        make_edge("i-west", "E", "W", CROSSING_NODES, 2.7),
        make_edge("a-north", "S", "N", CROSSING_NODES, 2.7),
    ]
    return build_network(CROSSING_NODES, edges)
