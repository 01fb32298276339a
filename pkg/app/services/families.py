from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any, Dict, FrozenSet, Hashable, List, Optional, Tuple
import logging

import numpy as np
from scipy.stats import binom

from app.core.exceptions import DisconnectedNetworkError, NetworkValidationError, VertexBudgetError
from app.core.network import Network, WiredQuotient, subnetwork, wired_quotient
from app.core.spanning import OrientedForest, past
from app.core.walks import hitting_split
from app.models.family import FamilySpec, QuotientSpec
from app.services.potential import effective_conductance, series_parallel_reduce
from app.services.stats import bernoulli_sigma
from app.utils.rng import Rng
from app.utils.serialization import load_network

logger = logging.getLogger(__name__)

Address = Tuple[int, ...]


@dataclass
class GeneratedNetwork:
    """
    A generated family member.

    `frontier` holds the vertices that are wired into the boundary when the
    network is quotiented; `tree_vertices` maps addresses of the embedded
    tree (empty tuple = root) to vertex ids; `exact_conductance[e]` is the
    exact rational conductance of edge e.
    """

    spec: FamilySpec
    network: Network
    frontier: FrozenSet[int] = frozenset()
    designated: Dict[str, int] = field(default_factory=dict)
    tree_vertices: Dict[Address, int] = field(default_factory=dict)
    exact_conductance: List[Fraction] = field(default_factory=list)


class _Builder:
    def __init__(self, budget: int):
        self.budget = budget
        self.labels: List[Hashable] = []
        self.index: Dict[Hashable, int] = {}
        self.edge_a: List[int] = []
        self.edge_b: List[int] = []
        self.exact: List[Fraction] = []

    def vertex(self, label: Hashable) -> int:
        if label in self.index:
            return self.index[label]
        if len(self.labels) >= self.budget:
            raise VertexBudgetError(f"Family exceeds the vertex budget of {self.budget}")
        self.index[label] = len(self.labels)
        self.labels.append(label)
        return self.index[label]

    def edge(self, a: Hashable, b: Hashable, conductance: Fraction):
        self.edge_a.append(self.vertex(a))
        self.edge_b.append(self.vertex(b))
        self.exact.append(conductance)

    def stretched(self, a: Hashable, b: Hashable, length: int, multiplicity: int,
                  conductance: Fraction, explicit: bool, tag: Hashable):
        """
        Join a and b by a path of `length` steps, each step made of
        `multiplicity` parallel edges; reduced form is one edge of
        conductance multiplicity / length.
        """
        if not explicit:
            self.edge(a, b, conductance * multiplicity / length)
            return
        chain = [a] + [(tag, i) for i in range(1, length)] + [b]
        for x, y in zip(chain, chain[1:]):
            for _ in range(multiplicity):
                self.edge(x, y, conductance)

    def build(self) -> Network:
        return Network(len(self.labels), self.edge_a, self.edge_b,
                       [float(c) for c in self.exact], labels=self.labels)


def _grid(builder: _Builder, d: int, radius: int, conductance: Fraction, wired: bool,
          prefix: Tuple = ()) -> List[int]:
    """Add the box [-radius, radius]^d; return the frontier ids (outside neighbours when wired)."""
    frontier = []
    points = list(product(range(-radius, radius + 1), repeat=d))
    for point in points:
        builder.vertex(prefix + point)
    for point in points:
        for axis in range(d):
            for sign in (1, -1):
                neighbour = point[:axis] + (point[axis] + sign,) + point[axis + 1:]
                inside = abs(neighbour[axis]) <= radius
                if inside and sign == 1:
                    builder.edge(prefix + point, prefix + neighbour, conductance)
                elif not inside and wired:
                    builder.edge(prefix + point, prefix + neighbour, conductance)
                    frontier.append(builder.index[prefix + neighbour])
    return frontier


def _stretched_tree(builder: _Builder, spec: FamilySpec, conductance: Fraction,
                    tree_vertices: Dict[Address, int]) -> List[int]:
    """3-regular tree to the depth cap; the edge above u is a path of length k^|u|."""
    explicit = spec.stretch == "explicit"
    frontier = []
    tree_vertices[()] = builder.vertex(("T", ()))
    level: List[Address] = [()]
    for depth in range(1, spec.depth + 1):
        next_level = []
        for parent in level:
            for i in range(3 if parent == () else 2):
                child = parent + (i,)
                tree_vertices[child] = builder.vertex(("T", child))
                builder.stretched(("T", child), ("T", parent), spec.k ** depth, 1, conductance,
                                  explicit, ("TP", child))
                next_level.append(child)
        level = next_level
    frontier.extend(tree_vertices[a] for a in level)
    return frontier


def _attach_hanging_trees(builder: _Builder, spec: FamilySpec, conductance: Fraction,
                          tree_vertices: Dict[Address, int]) -> List[int]:
    """
    Per tree vertex u above the depth cap: an m-fold path of length k^(|u|+1)
    to the root of a binary tree whose edges are m-fold paths of the same
    length, cut at total depth D with its leaves on the frontier.
    """
    explicit = spec.stretch == "explicit"
    frontier = []
    for address in list(tree_vertices):
        norm = len(address)
        if norm >= spec.depth:
            continue
        length = spec.k ** (norm + 1)
        builder.stretched(("T", address), ("S", address, ()), length, spec.m, conductance,
                          explicit, ("AP", address))
        level: List[Address] = [()]
        for _ in range(spec.depth - norm):
            next_level = []
            for parent in level:
                for i in range(2):
                    child = parent + (i,)
                    builder.stretched(("S", address, child), ("S", address, parent), length, spec.m,
                                      conductance, explicit, ("SP", address, child))
                    next_level.append(child)
            level = next_level
        frontier.extend(builder.index[("S", address, leaf)] for leaf in level)
    return frontier


def _load_network_file(spec: FamilySpec) -> GeneratedNetwork:
    network = load_network(spec.path)
    if network.num_vertices > spec.vertex_budget:
        raise VertexBudgetError(f"{spec.path} exceeds the vertex budget of {spec.vertex_budget}")
    if not network.is_connected():
        raise DisconnectedNetworkError(f"Network in {spec.path} is disconnected")
    logger.info(f"Loaded {spec.path}: {network.num_vertices} vertices, {network.num_edges} edges")
    return GeneratedNetwork(
        spec=spec,
        network=network,
        exact_conductance=[Fraction(c) for c in network.conductance.tolist()],
    )


def generate(spec: FamilySpec) -> GeneratedNetwork:
    """
    Build the network described by `spec`.

    Raises:
        VertexBudgetError: if the family would exceed `spec.vertex_budget` vertices
    """
    if spec.family == "network_file":
        return _load_network_file(spec)
    builder = _Builder(spec.vertex_budget)
    conductance = Fraction(spec.conductance)
    wired = spec.boundary == "wired"
    frontier: List[int] = []
    designated: Dict[str, int] = {}
    tree_vertices: Dict[Address, int] = {}

    if spec.family in ("complete", "cycle", "path"):
        n = spec.size
        for v in range(n):
            builder.vertex(v)
        if spec.family == "complete":
            pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
        elif spec.family == "cycle":
            pairs = [(v, (v + 1) % n) for v in range(n)]
        else:
            pairs = [(v, v + 1) for v in range(n - 1)]
        for a, b in pairs:
            builder.edge(a, b, conductance)
    elif spec.family == "grid_box":
        frontier = _grid(builder, spec.d, spec.radius, conductance, wired)
        designated["origin"] = builder.index[(0,) * spec.d]
    elif spec.family == "joined_grids":
        origin = (0,) * spec.d
        frontier = _grid(builder, spec.d, spec.radius, conductance, wired, prefix=("L",))
        frontier += _grid(builder, spec.d, spec.radius, conductance, wired, prefix=("R",))
        builder.edge(("L",) + origin, ("R",) + origin, conductance)
        designated["left_origin"] = builder.index[("L",) + origin]
        designated["right_origin"] = builder.index[("R",) + origin]
    elif spec.family == "grid_with_paths":
        frontier = _grid(builder, spec.d, spec.radius, conductance, wired)
        anchors = [(0,) * spec.d, (2,) + (0,) * (spec.d - 1)]
        for j, anchor in enumerate(anchors):
            chain = [anchor] + [("path", j, i) for i in range(1, spec.path_length + 1)]
            for a, b in zip(chain, chain[1:]):
                builder.edge(a, b, conductance)
            if wired:
                frontier.append(builder.index[chain[-1]])
            designated[f"path_{j}_anchor"] = builder.index[anchor]
        designated["origin"] = builder.index[anchors[0]]
    elif spec.family == "regular_tree":
        tree_vertices[()] = builder.vertex(("T", ()))
        level: List[Address] = [()]
        for _ in range(spec.depth):
            next_level = []
            for parent in level:
                for i in range(spec.branching):
                    child = parent + (i,)
                    tree_vertices[child] = builder.vertex(("T", child))
                    builder.edge(("T", child), ("T", parent), conductance)
                    next_level.append(child)
            level = next_level
        if wired:
            frontier = [tree_vertices[a] for a in level]
    elif spec.family in ("stretched_tree", "counterexample_gkm"):
        frontier = _stretched_tree(builder, spec, conductance, tree_vertices)
        if spec.family == "counterexample_gkm":
            frontier += _attach_hanging_trees(builder, spec, conductance, tree_vertices)
        if not wired:
            frontier = []
    if tree_vertices:
        designated["root"] = tree_vertices[()]

    network = builder.build()
    if not network.is_connected():
        raise DisconnectedNetworkError(f"Generated {spec.family} network is disconnected")
    logger.info(f"Generated {spec.family}: {network.num_vertices} vertices, {network.num_edges} edges, "
                f"{len(set(frontier))} frontier vertices")
    return GeneratedNetwork(
        spec=spec,
        network=network,
        frontier=frozenset(frontier),
        designated=designated,
        tree_vertices=tree_vertices,
        exact_conductance=builder.exact,
    )


def as_label(value: Any) -> Hashable:
    """Labels read from JSON or TOML arrive as lists; family labels are tuples."""
    if isinstance(value, list):
        return tuple(as_label(v) for v in value)
    return value


def build_quotient(generated: GeneratedNetwork, quotient: Optional[QuotientSpec] = None) -> WiredQuotient:
    """Wire the frontier, or an explicit vertex set, into the boundary."""
    quotient = quotient or QuotientSpec()
    network = generated.network
    everything = frozenset(range(network.num_vertices))
    if quotient.mode == "frontier":
        retained = everything - generated.frontier
    else:
        listed = frozenset(network.vertex_of(as_label(v)) for v in quotient.vertices)
        retained = listed if quotient.mode == "retain" else everything - listed
    return wired_quotient(network, retained)


def p_mk_bounds(k: int, m: int) -> Tuple[Fraction, Fraction]:
    """k/(k+2+m) <= p(m, k) <= (k+2)/(k+2+2m)."""
    return Fraction(k, k + 2 + m), Fraction(k + 2, k + 2 + 2 * m)


def regime_flags(k: int, m: int) -> Dict[str, bool]:
    """
    Supercritical when the Binomial(2, p) process sitting inside the root's
    past has mean above 1 even at the lower bound; critical or subcritical
    when the dominating Binomial(3, p) process has mean at most 1 even at
    the upper bound.
    """
    lower, upper = p_mk_bounds(k, m)
    return {"supercritical": 2 * lower > 1, "critical_or_subcritical": 3 * upper <= 1}


def _counterexample_quotient(k: int, m: int, depth: int, stretch: str) -> Tuple[GeneratedNetwork, WiredQuotient]:
    if k < 1 or m < 1:
        raise ValueError("k and m must be positive")
    if depth < 2:
        raise ValueError("Depth must be at least 2 to contain a tree vertex below the root's children")
    generated = generate(FamilySpec(family="counterexample_gkm", k=k, m=m, depth=depth, stretch=stretch))
    return generated, build_quotient(generated)


def p_mk(k: int, m: int, depth: int, stretch: str = "reduced") -> Fraction:
    """
    Exact probability that the walk from a depth-1 tree vertex u ever hits
    the root v on the depth-cut counterexample network, with the frontier
    wired (reaching it counts as never hitting v).

    u is a cut vertex between the path up to v and everything below u, so
    the answer is C_up / (C_up + C_down), both found by series-parallel
    reduction with exact conductances.
    """
    generated, wq = _counterexample_quotient(k, m, depth, stretch)
    network = wq.network
    u = wq.to_quotient(generated.tree_vertices[(0,)])
    v = wq.to_quotient(generated.tree_vertices[()])
    boundary = wq.boundary

    block = {u}
    stack = [u]
    while stack:
        x = stack.pop()
        for _, y in network.incident(x):
            if y not in block and y not in (v, boundary):
                block.add(y)
                stack.append(y)
    upward = set()
    stack = [v]
    while stack:
        x = stack.pop()
        for _, y in network.incident(x):
            if y in block and y != u and y not in upward:
                upward.add(y)
                stack.append(y)
    downward = block - upward

    def exact_conductance(vertices) -> Tuple[Network, Dict[int, int], Dict[int, Fraction]]:
        sub, vertex_map, edge_map = subnetwork(network, vertices)
        exact = {i: generated.exact_conductance[wq.base_edge(q)] for i, q in enumerate(edge_map)}
        return sub, vertex_map, exact

    up_net, up_map, up_exact = exact_conductance(upward | {u, v})
    c_up = series_parallel_reduce(up_net, [up_map[u]], [up_map[v]], up_exact)
    down_net, down_map, down_exact = exact_conductance(downward | {u, boundary})
    c_down = series_parallel_reduce(down_net, [down_map[u]], [down_map[boundary]], down_exact)
    p = c_up / (c_up + c_down)
    logger.info(f"p(m={m}, k={k}) at depth {depth}: {p} ~ {float(p):.6f}")
    return p


def _tag(label: Hashable) -> Tuple:
    """Stretched-path vertices are labelled (tag, i); everything else is its own tag."""
    if isinstance(label, tuple) and label and isinstance(label[0], tuple):
        return label[0]
    return label if isinstance(label, tuple) else ()


def _reduce_edges(generated: GeneratedNetwork, wq: WiredQuotient, edge_ids: List[int],
                  sources: List[int], sinks: List[int]) -> Fraction:
    """Exact effective conductance of the sub-multigraph made of `edge_ids`."""
    network = wq.network
    vertices = sorted({x for e in edge_ids for x in network.endpoints(e)})
    index = {v: i for i, v in enumerate(vertices)}
    sub = Network(
        len(vertices),
        [index[network.endpoints(e)[0]] for e in edge_ids],
        [index[network.endpoints(e)[1]] for e in edge_ids],
        [float(network.conductance[e]) for e in edge_ids],
    )
    exact = {i: generated.exact_conductance[wq.base_edge(e)] for i, e in enumerate(edge_ids)}
    return series_parallel_reduce(sub, [index[v] for v in sources if v in index],
                                  [index[v] for v in sinks if v in index], exact)


def neighbour_visit_probability(k: int, m: int, depth: int, stretch: str = "reduced") -> Fraction:
    """
    Exact probability that the walk from u ever reaches a tree neighbour of
    u (the root v or a child of u) on the same depth cut as p_mk. Hitting v
    needs a tree neighbour first, so this bounds p_mk from above.

    The tree side is the three stretched edges at u; the hanging side is the
    attachment path and S(u), wired at its leaves.
    """
    generated, wq = _counterexample_quotient(k, m, depth, stretch)
    network = wq.network
    u_address: Address = (0,)
    u = wq.to_quotient(generated.tree_vertices[u_address])
    tree_addresses = {u_address, (0, 0), (0, 1)}
    neighbours = {wq.to_quotient(generated.tree_vertices[a]) for a in [(), (0, 0), (0, 1)]}

    hanging, tree_paths = set(), set()
    for q, label in enumerate(network.labels):
        tag = _tag(label)
        if len(tag) >= 2 and tag[0] in ("AP", "S", "SP") and tag[1] == u_address:
            hanging.add(q)
        elif len(tag) >= 2 and tag[0] == "TP" and tag[1] in tree_addresses:
            tree_paths.add(q)

    tree_edges, hanging_edges = [], []
    for a, b, _, e in network.edges():
        if a in hanging or b in hanging:
            hanging_edges.append(e)
        elif a in tree_paths or b in tree_paths or {a, b} in ({u, n} for n in neighbours):
            tree_edges.append(e)

    c_tree = _reduce_edges(generated, wq, tree_edges, [u], sorted(neighbours))
    c_hanging = _reduce_edges(generated, wq, hanging_edges, [u], [wq.boundary])
    return c_tree / (c_tree + c_hanging)


def p_mk_monte_carlo(k: int, m: int, depth: int, samples: int, rng: Rng,
                     stretch: str = "reduced") -> Tuple[float, float]:
    """Frequency of walks from u that reach the root before the frontier, with its standard error."""
    generated, wq = _counterexample_quotient(k, m, depth, stretch)
    u = wq.to_quotient(generated.tree_vertices[(0,)])
    v = wq.to_quotient(generated.tree_vertices[()])
    counts = hitting_split(wq.network, u, {v, wq.boundary}, rng, samples)
    finished = sum(counts.values())
    if finished == 0:
        raise NetworkValidationError("Every hitting walk reached the step cap")
    estimate = counts.get(v, 0) / finished
    return estimate, bernoulli_sigma(estimate, finished)


def branching_survival(n: int, p: float, generations: int) -> float:
    """
    Probability that a Galton-Watson process with Binomial(n, p) offspring
    is still alive after `generations`, by iterating the generating function
    from 0.
    """
    if n < 1:
        raise ValueError("Offspring law needs n >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Offspring probability must lie in [0, 1], got {p}")
    if generations < 0:
        raise ValueError("Generations must be nonnegative")
    coefficients = binom.pmf(np.arange(n + 1), n, float(p))[::-1]
    extinct = 0.0
    for _ in range(generations):
        extinct = float(np.polyval(coefficients, extinct))
    return 1.0 - extinct


def root_past_offspring(forest: OrientedForest, generated: GeneratedNetwork, wq: WiredQuotient) -> int:
    """Number of tree children of the root that lie in the root's past."""
    root = wq.to_quotient(generated.tree_vertices[()])
    if root == wq.boundary or root not in forest:
        return 0
    root_past = past(forest, root)
    count = 0
    for address, vertex in generated.tree_vertices.items():
        if len(address) != 1:
            continue
        child = wq.to_quotient(vertex)
        if child != wq.boundary and child in root_past:
            count += 1
    return count


def expected_root_past_offspring(generated: GeneratedNetwork, wq: WiredQuotient) -> float:
    """
    Mean of `root_past_offspring` under the wired uniform spanning forest.

    Each tree child c of the root is a cut vertex of the quotient minus the
    boundary, so the loop-erased walk from c leaves through the root with
    probability C_up / (C_up + C_down), the effective conductances from c to
    the boundary on either side of c.
    """
    network = wq.network
    root = wq.to_quotient(generated.tree_vertices[()])
    boundary = wq.boundary
    if root == boundary:
        return 0.0
    mean = 0.0
    for address, vertex in generated.tree_vertices.items():
        if len(address) != 1:
            continue
        child = wq.to_quotient(vertex)
        if child == boundary:
            continue
        block = {child}
        stack = [child]
        while stack:
            x = stack.pop()
            for _, y in network.incident(x):
                if y not in block and y not in (root, boundary):
                    block.add(y)
                    stack.append(y)
        upward = set()
        stack = [root]
        while stack:
            x = stack.pop()
            for _, y in network.incident(x):
                if y in block and y != child and y not in upward:
                    upward.add(y)
                    stack.append(y)
        downward = block - upward

        up_net, up_map, _ = subnetwork(network, (set(range(network.num_vertices)) - downward) | {child})
        c_up = effective_conductance(up_net, [up_map[child]], [up_map[boundary]])
        down_net, down_map, _ = subnetwork(network, downward | {boundary})
        c_down = effective_conductance(down_net, [down_map[child]], [down_map[boundary]])
        mean += c_up / (c_up + c_down)
    return mean
