import numpy as np
import pytest

from app.core.exceptions import (
    DisconnectedNetworkError,
    NetworkValidationError,
    NoBoundaryError,
    UnknownVertexError,
)
from app.core.network import (
    BOUNDARY_LABEL,
    build_network,
    subnetwork,
    vertex_conductance,
    wired_quotient,
)


def _grid(side):
    edges = []
    for x in range(side):
        for y in range(side):
            if x + 1 < side:
                edges.append(((x, y), (x + 1, y), 1.0))
            if y + 1 < side:
                edges.append(((x, y), (x, y + 1), 1.0))
    return build_network(edges)


def test_path_vertex_conductance():
    """The middle of a unit path has conductance 2."""
    network = build_network([(0, 1, 1), (1, 2, 1)])
    assert network.num_vertices == 3
    assert network.num_edges == 2
    assert vertex_conductance(network, 1) == 2.0
    assert vertex_conductance(network, 0) == 1.0


def test_parallel_edges_stay_distinct():
    network = build_network([(0, 1, 1), (0, 1, 1)])
    assert network.num_vertices == 2
    assert network.num_edges == 2
    assert vertex_conductance(network, 0) == 2.0


def test_self_loop_counts_twice():
    """A self-loop contributes twice its conductance and appears twice in the adjacency."""
    network = build_network([(0, 0, 1)])
    assert network.num_vertices == 1
    assert vertex_conductance(network, 0) == 2.0
    assert len(network.incident(0)) == 2
    assert network.is_self_loop(0)


def test_invalid_conductance():
    with pytest.raises(NetworkValidationError):
        build_network([(0, 1, 0.0)])
    with pytest.raises(NetworkValidationError):
        build_network([(0, 1, -1.0)])
    with pytest.raises(NetworkValidationError):
        build_network([(0, 1, float("inf"))])


def test_empty_and_disconnected():
    with pytest.raises(NetworkValidationError):
        build_network([])
    with pytest.raises(DisconnectedNetworkError):
        build_network([(0, 1, 1), (2, 3, 1)])


def test_labels_map_back_to_ids():
    network = build_network([("a", "b", 1), ("b", "c", 2)])
    assert network.vertex_of("a") == 0
    assert network.vertex_of("c") == 2
    with pytest.raises(UnknownVertexError):
        network.vertex_of("z")
    with pytest.raises(UnknownVertexError):
        network.incident(7)


def test_quotient_of_path():
    """Path 0-1-2-3 retaining {1, 2}: edges 1-∂, 1-2, 2-∂."""
    network = build_network([(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    wq = wired_quotient(network, [1, 2])

    assert wq.boundary == 2
    assert wq.network.num_vertices == 3
    assert wq.network.num_edges == 3
    assert wq.network.labels == [1, 2, BOUNDARY_LABEL]
    assert wq.network.endpoints(0) == (wq.boundary, 0)
    assert wq.network.endpoints(1) == (0, 1)
    assert wq.network.endpoints(2) == (1, wq.boundary)
    assert wq.boundary_conductance == 2.0
    assert wq.edge_map.tolist() == [0, 1, 2]
    assert wq.to_quotient(0) == wq.boundary
    assert wq.to_base(1) == 2
    assert wq.to_base(wq.boundary) is None


def test_quotient_of_triangle():
    """Both neighbours wired: two parallel edges between 0 and ∂."""
    network = build_network([(0, 1, 1), (1, 2, 1), (0, 2, 1)])
    wq = wired_quotient(network, [0])

    assert wq.network.num_vertices == 2
    assert wq.network.num_edges == 2
    assert all(set(wq.network.endpoints(e)) == {0, wq.boundary} for e in range(2))
    # the edge 1-2 lies entirely outside and is dropped
    assert sorted(wq.edge_map.tolist()) == [0, 2]


def test_inner_box_crossing_edges():
    """The inner 3x3 of a 5x5 grid has 12 edges crossing to ∂."""
    network = _grid(5)
    inner = [network.vertex_of((x, y)) for x in range(1, 4) for y in range(1, 4)]
    wq = wired_quotient(network, inner)

    crossing = [e for e in range(wq.network.num_edges) if wq.boundary in wq.network.endpoints(e)]
    assert len(crossing) == 12
    assert wq.boundary_conductance == 12.0
    assert wq.network.num_edges == 12 + 12


def test_quotient_errors():
    network = build_network([(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    with pytest.raises(NoBoundaryError):
        wired_quotient(network, [0, 1, 2, 3])
    with pytest.raises(DisconnectedNetworkError):
        wired_quotient(network, [0, 2])
    with pytest.raises(NetworkValidationError):
        wired_quotient(network, [])


def test_restrict_commutes_with_direct_quotient():
    """Wiring in two steps gives the same quotient, edge for edge, as wiring once."""
    network = build_network([(v, v + 1, 1.0 + v) for v in range(4)])
    wq = wired_quotient(network, [1, 2, 3])
    restricted = wq.restrict([wq.to_quotient(2)])
    direct = wired_quotient(network, [2])

    assert restricted.vertex_map == direct.vertex_map
    assert restricted.edge_map.tolist() == direct.edge_map.tolist()
    assert np.allclose(restricted.network.conductance, direct.network.conductance)
    assert restricted.boundary_conductance == direct.boundary_conductance

    with pytest.raises(NetworkValidationError):
        wq.restrict([wq.boundary])


def test_subnetwork_keeps_edge_identity():
    network = build_network([(0, 1, 1), (1, 2, 2), (2, 0, 3), (2, 3, 4)])
    sub, vertex_map, edge_map = subnetwork(network, [0, 1, 2])

    assert sub.num_vertices == 3
    assert edge_map == [0, 1, 2]
    assert vertex_map == {0: 0, 1: 1, 2: 2}
    assert sub.conductance.tolist() == [1.0, 2.0, 3.0]
