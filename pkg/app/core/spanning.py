from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union
import logging
import math
import numbers

from app.config.settings import STEP_CAP
from app.core.exceptions import ForestInvariantError, StepCapExceededError, UnknownVertexError
from app.core.network import Network, OrientedEdge, WiredQuotient
from app.core.walks import cover_walk, first_entry_edges, loop_erase, random_walk
from app.models.records import ForestRecord, ParentRecord
from app.utils.rng import Rng

logger = logging.getLogger(__name__)

ForestKey = Tuple[Tuple[int, int], ...]


class OrientedForest:
    """
    Parent-edge map v -> edge emanating from v, plus the root set.

    Every non-root vertex has exactly one parent edge whose tail is itself;
    following parent edges always ends at a root.
    """

    def __init__(self, parents: Mapping[int, OrientedEdge], roots: Iterable[int]):
        self.parents: Dict[int, OrientedEdge] = dict(parents)
        self.roots: FrozenSet[int] = frozenset(roots)
        self._children: Optional[Dict[int, List[int]]] = None

    @classmethod
    def from_entries(cls, entries: Mapping[int, OrientedEdge], roots: Iterable[int]) -> "OrientedForest":
        """Forest of reversed first-entry edges."""
        return cls({v: e.reversed() for v, e in entries.items()}, roots)

    @property
    def vertices(self) -> FrozenSet[int]:
        return frozenset(self.parents) | self.roots

    def __len__(self) -> int:
        return len(self.parents) + len(self.roots)

    def __contains__(self, v: int) -> bool:
        return v in self.parents or v in self.roots

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrientedForest):
            return NotImplemented
        return self.roots == other.roots and self.parents == other.parents

    def __repr__(self) -> str:
        return f"OrientedForest(vertices={len(self)}, roots={sorted(self.roots)})"

    def parent(self, v: int) -> Optional[int]:
        if v in self.roots:
            return None
        try:
            return self.parents[v].head
        except KeyError:
            raise UnknownVertexError(v) from None

    @property
    def children(self) -> Dict[int, List[int]]:
        if self._children is None:
            children: Dict[int, List[int]] = {v: [] for v in self.vertices}
            for v, edge in self.parents.items():
                children.setdefault(edge.head, []).append(v)
            self._children = children
        return self._children

    def path_to_root(self, v: int) -> List[int]:
        if v not in self:
            raise UnknownVertexError(v)
        path = [v]
        seen = {v}
        while path[-1] not in self.roots:
            head = self.parents[path[-1]].head
            if head in seen:
                raise ForestInvariantError(f"Cycle through vertex {head}")
            seen.add(head)
            path.append(head)
        return path

    def depth(self, v: int) -> int:
        return len(self.path_to_root(v)) - 1

    def root_of(self, v: int) -> int:
        return self.path_to_root(v)[-1]

    def edge_ids(self) -> FrozenSet[int]:
        return frozenset(e.edge_id for e in self.parents.values())

    def canonical_key(self) -> ForestKey:
        """Sorted (vertex, parent edge id) pairs; a hashable exact key for distribution tests."""
        return tuple(sorted((v, e.edge_id) for v, e in self.parents.items()))

    def validate(self, network: Optional[Network] = None) -> None:
        """
        Check the forest invariants.

        Raises:
            ForestInvariantError: on a cycle, a parent edge not leaving its vertex,
                a root with a parent, or (given `network`) an edge that does not
                join its tail and head
        """
        overlap = self.roots & frozenset(self.parents)
        if overlap:
            raise ForestInvariantError(f"Roots with a parent edge: {sorted(overlap)}")
        for v, edge in self.parents.items():
            if edge.tail != v:
                raise ForestInvariantError(f"Parent edge of {v} does not emanate from it")
            if edge.head not in self:
                raise ForestInvariantError(f"Parent of {v} is not in the forest")
            if network is not None:
                a, b = network.endpoints(edge.edge_id)
                if {a, b} != {edge.tail, edge.head} or a == b:
                    raise ForestInvariantError(f"Edge {edge.edge_id} does not join {edge.tail} and {edge.head}")

        settled = set(self.roots)
        for v in self.parents:
            trail = []
            u = v
            on_trail = set()
            while u not in settled:
                if u in on_trail:
                    raise ForestInvariantError(f"Cycle through vertex {u}")
                on_trail.add(u)
                trail.append(u)
                u = self.parents[u].head
            settled.update(trail)

    def is_valid(self, network: Optional[Network] = None) -> bool:
        try:
            self.validate(network)
        except ForestInvariantError:
            return False
        return True

    def to_record(self) -> ForestRecord:
        return ForestRecord(
            roots=sorted(self.roots),
            parents=[ParentRecord(v=v, edge_id=e.edge_id, head=e.head) for v, e in sorted(self.parents.items())],
        )

    @classmethod
    def from_record(cls, record: ForestRecord) -> "OrientedForest":
        return cls({p.v: OrientedEdge(p.edge_id, p.v, p.head) for p in record.parents}, record.roots)


def _roots_of(root: Union[int, Iterable[int]]) -> List[int]:
    if isinstance(root, numbers.Integral):
        return [int(root)]
    return sorted(set(root))


def aldous_broder(network: Network, root: int, rng: Rng, step_cap: int = STEP_CAP) -> OrientedForest:
    """
    Classic Aldous-Broder: walk from `root` until every vertex is visited and
    keep the reversed first-entry edges, oriented toward the root.
    """
    walk = cover_walk(network, root, rng, step_cap)
    if walk.truncated:
        raise StepCapExceededError(f"Cover walk from {root} exceeded {step_cap} steps")
    return OrientedForest.from_entries(first_entry_edges([walk]), [root])


def wilson(network: Network, root: Union[int, Iterable[int]], rng: Rng,
           step_cap: int = STEP_CAP) -> OrientedForest:
    """
    Wilson's algorithm: join loop-erased walks into the growing tree.

    Unvisited vertices are scanned in ascending id order. With a set of
    roots the result is the forest rooted at that set.

    Args:
        network: Finite connected network
        root: Root vertex, or an iterable of roots
        rng: Random source
        step_cap: Step cap per walk

    Returns:
        OrientedForest with parent edges pointing toward the roots
    """
    roots = _roots_of(root)
    for r in roots:
        network.check_vertex(r)
    in_tree = set(roots)
    parents: Dict[int, OrientedEdge] = {}
    for v in range(network.num_vertices):
        if v in in_tree:
            continue
        walk = random_walk(network, v, in_tree, rng, step_cap)
        if walk.truncated:
            raise StepCapExceededError(f"Wilson walk from {v} exceeded {step_cap} steps")
        branch = loop_erase(walk)
        for step in branch.oriented_steps():
            parents[step.tail] = step
            in_tree.add(step.tail)
    return OrientedForest(parents, roots)


def past(forest: OrientedForest, v: int) -> FrozenSet[int]:
    """Vertices whose path to the root passes through `v`, including `v`."""
    if v not in forest:
        raise UnknownVertexError(v)
    children = forest.children
    found = {v}
    stack = [v]
    while stack:
        for child in children.get(stack.pop(), ()):
            if child not in found:
                found.add(child)
                stack.append(child)
    return frozenset(found)


def trunk_and_ends_stats(forest: OrientedForest, wq: Optional[WiredQuotient] = None) -> List[dict]:
    """
    Deterministic per-component statistics of a finite forest.

    One entry per root: component size, the number of vertices at each depth
    below the root (the root's past by generation), the largest past of any
    vertex, and, given the quotient, how many component vertices touch the
    boundary. A component rooted at the boundary also reports the sizes of
    the branches hanging from it, which are the finite pieces of the forest
    components in the limit.
    """
    children = forest.children
    boundary_neighbours = set()
    if wq is not None:
        boundary_neighbours = {u for _, u in wq.network.incident(wq.boundary) if u != wq.boundary}

    stats = []
    for root in sorted(forest.roots):
        order = [root]
        depth = {root: 0}
        i = 0
        while i < len(order):
            u = order[i]
            i += 1
            for child in children.get(u, ()):
                depth[child] = depth[u] + 1
                order.append(child)

        past_size = {}
        for u in reversed(order):
            past_size[u] = 1 + sum(past_size[c] for c in children.get(u, ()))

        profile = [0] * (max(depth.values()) + 1)
        for d in depth.values():
            profile[d] += 1

        entry = {
            "root": root,
            "size": len(order),
            "depth_profile": profile,
            "max_past_size": max(past_size.values()),
        }
        if wq is not None:
            entry["boundary_attachment_count"] = sum(1 for u in order if u in boundary_neighbours)
            if root == wq.boundary:
                entry["branch_sizes"] = sorted((past_size[c] for c in children.get(root, ())), reverse=True)
        stats.append(entry)
    return stats


def enumerate_spanning_trees(network: Network, root: int, limit: int = 100_000) -> Dict[ForestKey, float]:
    """
    Exact law of the spanning tree oriented toward `root`.

    Enumerates every (n-1)-subset of non-loop edges; the weight of a tree is
    the product of its conductances, normalized to probabilities.

    Raises:
        ValueError: if more than `limit` edge subsets would be examined
    """
    n = network.num_vertices
    candidates = [e for e in range(network.num_edges) if not network.is_self_loop(e)]
    if math.comb(len(candidates), n - 1) > limit:
        raise ValueError(f"Too many edge subsets to enumerate ({len(candidates)} choose {n - 1})")

    weights: Dict[ForestKey, float] = {}
    for subset in combinations(candidates, n - 1):
        adjacency: Dict[int, List[Tuple[int, int]]] = {}
        for e in subset:
            a, b = network.endpoints(e)
            adjacency.setdefault(a, []).append((e, b))
            adjacency.setdefault(b, []).append((e, a))
        parents: Dict[int, OrientedEdge] = {}
        seen = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for e, w in adjacency.get(u, ()):
                if w not in seen:
                    seen.add(w)
                    parents[w] = OrientedEdge(e, w, u)
                    stack.append(w)
        if len(seen) != n:
            continue
        key = OrientedForest(parents, [root]).canonical_key()
        weights[key] = math.prod(float(network.conductance[e]) for e in subset)

    total = math.fsum(weights.values())
    logger.debug(f"Enumerated {len(weights)} spanning trees rooted at {root}")
    return {key: w / total for key, w in weights.items()}
