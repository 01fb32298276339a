from typing import Any, Dict, FrozenSet, Hashable, Iterable, List, NamedTuple, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.core.exceptions import (
    DisconnectedNetworkError,
    NetworkValidationError,
    NoBoundaryError,
    UnknownVertexError,
)

logger = logging.getLogger(__name__)

BOUNDARY_LABEL = "∂"


class OrientedEdge(NamedTuple):
    """An edge traversed from its tail to its head."""

    edge_id: int
    tail: int
    head: int

    def reversed(self) -> "OrientedEdge":
        return OrientedEdge(self.edge_id, self.head, self.tail)


class Network:
    """
    Finite weighted multigraph on dense integer vertex ids.

    Parallel edges and self-loops are kept as distinct edge ids. A self-loop
    contributes twice its conductance to the vertex conductance and shows up
    twice in the adjacency index, once per orientation.
    """

    def __init__(self, num_vertices: int, edge_a: Sequence[int], edge_b: Sequence[int],
                 conductance: Sequence[float], labels: Optional[Sequence[Hashable]] = None):
        self.num_vertices = int(num_vertices)
        self.edge_a = np.asarray(edge_a, dtype=np.int64)
        self.edge_b = np.asarray(edge_b, dtype=np.int64)
        self.conductance = np.asarray(conductance, dtype=np.float64)
        self.num_edges = len(self.conductance)
        self.labels: List[Hashable] = list(labels) if labels is not None else list(range(self.num_vertices))

        if not (len(self.edge_a) == len(self.edge_b) == self.num_edges):
            raise NetworkValidationError("Edge endpoint and conductance arrays differ in length")
        if len(self.labels) != self.num_vertices:
            raise NetworkValidationError("Label list does not match the vertex count")
        if self.num_edges and (self.edge_a.min() < 0 or self.edge_b.min() < 0
                               or max(self.edge_a.max(), self.edge_b.max()) >= self.num_vertices):
            raise NetworkValidationError("Edge endpoint outside the vertex range")
        bad = ~np.isfinite(self.conductance) | (self.conductance <= 0)
        if bad.any():
            raise NetworkValidationError(
                f"Conductances must be positive and finite; edge {int(np.flatnonzero(bad)[0])} is not"
            )

        self.vertex_conductance = (
            np.bincount(self.edge_a, weights=self.conductance, minlength=self.num_vertices)
            + np.bincount(self.edge_b, weights=self.conductance, minlength=self.num_vertices)
        )
        self._build_adjacency()
        self._label_index: Optional[Dict[Hashable, int]] = None

    def _build_adjacency(self):
        """Build the half-edge index and the per-vertex step tables used by walks."""
        targets: List[List[int]] = [[] for _ in range(self.num_vertices)]
        edges: List[List[int]] = [[] for _ in range(self.num_vertices)]
        weights: List[List[float]] = [[] for _ in range(self.num_vertices)]
        for e, (a, b, c) in enumerate(zip(self.edge_a.tolist(), self.edge_b.tolist(),
                                          self.conductance.tolist())):
            targets[a].append(b)
            edges[a].append(e)
            weights[a].append(c)
            targets[b].append(a)
            edges[b].append(e)
            weights[b].append(c)

        self.adjacency: List[List[Tuple[int, int]]] = [
            list(zip(edges[v], targets[v])) for v in range(self.num_vertices)
        ]
        self.step_table: List[Tuple[List[float], List[int], List[int]]] = []
        for v in range(self.num_vertices):
            total = math.fsum(weights[v])
            running = 0.0
            cumulative = []
            for w in weights[v]:
                running += w
                cumulative.append(running / total)
            if cumulative:
                cumulative[-1] = 1.0
            self.step_table.append((cumulative, targets[v], edges[v]))

    def check_vertex(self, v: int) -> int:
        if not isinstance(v, (int, np.integer)) or not 0 <= v < self.num_vertices:
            raise UnknownVertexError(v)
        return int(v)

    def incident(self, v: int) -> List[Tuple[int, int]]:
        """Half-edges at `v` as (edge_id, other endpoint); self-loops appear twice."""
        return self.adjacency[self.check_vertex(v)]

    def endpoints(self, edge_id: int) -> Tuple[int, int]:
        return int(self.edge_a[edge_id]), int(self.edge_b[edge_id])

    def other_end(self, edge_id: int, v: int) -> int:
        a, b = self.endpoints(edge_id)
        if v == a:
            return b
        if v == b:
            return a
        raise UnknownVertexError(f"Vertex {v} is not an endpoint of edge {edge_id}")

    def is_self_loop(self, edge_id: int) -> bool:
        return self.edge_a[edge_id] == self.edge_b[edge_id]

    def edges(self) -> Iterable[Tuple[int, int, float, int]]:
        """Iterate (a, b, conductance, edge_id) in edge-id order."""
        for e in range(self.num_edges):
            yield int(self.edge_a[e]), int(self.edge_b[e]), float(self.conductance[e]), e

    def vertex_of(self, label: Hashable) -> int:
        """Map an external label back to its dense vertex id."""
        if self._label_index is None:
            self._label_index = {label: v for v, label in enumerate(self.labels)}
        try:
            return self._label_index[label]
        except KeyError:
            raise UnknownVertexError(label) from None

    def is_connected(self) -> bool:
        if self.num_vertices <= 1:
            return True
        graph = coo_matrix(
            (np.ones(self.num_edges), (self.edge_a, self.edge_b)),
            shape=(self.num_vertices, self.num_vertices),
        )
        n_components, _ = connected_components(graph, directed=False)
        return n_components == 1

    def __repr__(self) -> str:
        return f"Network(vertices={self.num_vertices}, edges={self.num_edges})"


def build_network(edge_list: Iterable[Tuple[Hashable, Hashable, float]],
                  require_connected: bool = True) -> Network:
    """
    Build a network from (u, v, conductance) triples.

    Vertex labels are compacted to dense ids: integer labels keep their sorted
    order, other labels are numbered in order of first appearance.

    Args:
        edge_list: Iterable of (u, v, conductance) triples
        require_connected: Raise if the resulting network is disconnected

    Returns:
        The validated Network
    """
    triples = [(u, v, float(c)) for u, v, c in edge_list]
    if not triples:
        raise NetworkValidationError("Edge list is empty")

    seen: Dict[Hashable, None] = {}
    for u, v, _ in triples:
        seen.setdefault(u)
        seen.setdefault(v)
    labels = list(seen)
    if all(isinstance(label, (int, np.integer)) for label in labels):
        labels.sort()
    index = {label: i for i, label in enumerate(labels)}

    network = Network(
        len(labels),
        [index[u] for u, _, _ in triples],
        [index[v] for _, v, _ in triples],
        [c for _, _, c in triples],
        labels=labels,
    )
    if require_connected and not network.is_connected():
        raise DisconnectedNetworkError("Network must be connected")
    return network


def vertex_conductance(network: Network, v: int) -> float:
    """Sum of the conductances of the edges at `v`, self-loops counted twice."""
    return float(network.vertex_conductance[network.check_vertex(v)])


def subnetwork(network: Network, vertices: Iterable[int]) -> Tuple[Network, Dict[int, int], List[int]]:
    """
    Induced subnetwork on `vertices`, preserving edge identity.

    Returns:
        (subnetwork, map from original to new vertex ids, list mapping new edge ids to original ones)
    """
    kept = sorted({network.check_vertex(v) for v in vertices})
    vertex_map = {v: i for i, v in enumerate(kept)}
    edge_a, edge_b, conductance, edge_map = [], [], [], []
    for a, b, c, e in network.edges():
        if a in vertex_map and b in vertex_map:
            edge_a.append(vertex_map[a])
            edge_b.append(vertex_map[b])
            conductance.append(c)
            edge_map.append(e)
    sub = Network(len(kept), edge_a, edge_b, conductance, labels=[network.labels[v] for v in kept])
    return sub, vertex_map, edge_map


class WiredQuotient:
    """
    A network with everything outside `retained` wired into one boundary vertex.

    Quotient vertex ids are the retained base vertices in ascending order,
    followed by the boundary vertex. `edge_map[q]` is the base edge id of
    quotient edge q.
    """

    def __init__(self, base: Network, retained: FrozenSet[int], network: Network,
                 boundary: int, edge_map: np.ndarray, vertex_map: Dict[int, int]):
        self.base = base
        self.retained = retained
        self.network = network
        self.boundary = boundary
        self.edge_map = edge_map
        self.vertex_map = vertex_map
        self.base_vertices = sorted(retained)

    @property
    def interior(self) -> range:
        """Quotient ids of the retained vertices."""
        return range(self.boundary)

    @property
    def boundary_conductance(self) -> float:
        return float(self.network.vertex_conductance[self.boundary])

    def to_quotient(self, base_vertex: int) -> int:
        """Quotient id of a base vertex; vertices outside the retained set map to the boundary."""
        return self.vertex_map.get(base_vertex, self.boundary)

    def to_base(self, quotient_vertex: int) -> Optional[int]:
        """Base id of a quotient vertex, or None for the boundary."""
        if quotient_vertex == self.boundary:
            return None
        return self.base_vertices[quotient_vertex]

    def base_edge(self, quotient_edge: int) -> int:
        return int(self.edge_map[quotient_edge])

    def restrict(self, retained: Iterable[int]) -> "WiredQuotient":
        """
        Wire a smaller set of quotient vertices.

        The result's `base` is this quotient's base network and its edge map
        refers to base edges, so it can be compared with a direct quotient.
        """
        retained = list(retained)
        if self.boundary in retained:
            raise NetworkValidationError("The boundary vertex cannot be retained")
        inner = wired_quotient(self.network, retained)
        composed_vertices = {self.to_base(q): i for q, i in inner.vertex_map.items()}
        return WiredQuotient(
            base=self.base,
            retained=frozenset(composed_vertices),
            network=inner.network,
            boundary=inner.boundary,
            edge_map=self.edge_map[inner.edge_map],
            vertex_map=composed_vertices,
        )

    def __repr__(self) -> str:
        return (f"WiredQuotient(retained={len(self.retained)}, edges={self.network.num_edges}, "
                f"c(∂)={self.boundary_conductance:g})")


def wired_quotient(network: Network, retained: Iterable[int]) -> WiredQuotient:
    """
    Wire every vertex outside `retained` into a single boundary vertex.

    Edges with both endpoints outside are dropped (this includes every would-be
    self-loop at the boundary); edges with one endpoint outside are re-attached
    to the boundary with their conductance unchanged.

    Args:
        network: The base network
        retained: Base vertex ids to keep

    Returns:
        The WiredQuotient
    """
    kept = frozenset(network.check_vertex(v) for v in retained)
    if not kept:
        raise NetworkValidationError("Retained vertex set is empty")
    if len(kept) == network.num_vertices:
        raise NoBoundaryError("Retained set covers every vertex; nothing to wire")
    inner, _, _ = subnetwork(network, kept)
    if not inner.is_connected():
        raise DisconnectedNetworkError("Retained vertex set must induce a connected subgraph")

    base_vertices = sorted(kept)
    vertex_map = {v: i for i, v in enumerate(base_vertices)}
    boundary = len(base_vertices)

    edge_a, edge_b, conductance, edge_map = [], [], [], []
    for a, b, c, e in network.edges():
        qa = vertex_map.get(a, boundary)
        qb = vertex_map.get(b, boundary)
        if qa == boundary and qb == boundary:
            continue
        edge_a.append(qa)
        edge_b.append(qb)
        conductance.append(c)
        edge_map.append(e)

    labels: List[Any] = [network.labels[v] for v in base_vertices] + [BOUNDARY_LABEL]
    quotient = Network(boundary + 1, edge_a, edge_b, conductance, labels=labels)
    logger.debug(f"Wired {network.num_vertices - boundary} vertices into the boundary; "
                 f"{quotient.num_edges} edges survive")
    return WiredQuotient(
        base=network,
        retained=kept,
        network=quotient,
        boundary=boundary,
        edge_map=np.asarray(edge_map, dtype=np.int64),
        vertex_map=vertex_map,
    )
