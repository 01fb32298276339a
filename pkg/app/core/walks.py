from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Collection, Dict, Iterable, List, Sequence
import logging

from app.config.settings import STEP_CAP
from app.core.exceptions import EmptyWalkError
from app.core.network import Network, OrientedEdge, WiredQuotient
from app.models.records import StepRecord, WalkRecord
from app.utils.rng import Rng

logger = logging.getLogger(__name__)


class TerminationCause(str, Enum):
    HIT_TARGET = "hit_target"
    RETURNED = "returned_to_boundary"
    COVERED = "covered"
    STEP_CAP = "step_cap"


@dataclass
class Walk:
    """
    Alternating vertex/edge sequence: vertices[i] --edges[i]--> vertices[i + 1].
    """

    vertices: List[int]
    edges: List[int] = field(default_factory=list)
    cause: TerminationCause = TerminationCause.HIT_TARGET

    @property
    def start(self) -> int:
        if not self.vertices:
            raise EmptyWalkError("Walk has no vertices")
        return self.vertices[0]

    @property
    def end(self) -> int:
        if not self.vertices:
            raise EmptyWalkError("Walk has no vertices")
        return self.vertices[-1]

    def __len__(self) -> int:
        """Number of steps."""
        return len(self.edges)

    @property
    def truncated(self) -> bool:
        return self.cause == TerminationCause.STEP_CAP

    def oriented_steps(self) -> Iterable[OrientedEdge]:
        for i, e in enumerate(self.edges):
            yield OrientedEdge(e, self.vertices[i], self.vertices[i + 1])

    def check_incidence(self, network: Network) -> bool:
        """True if every step uses an edge joining the two vertices it links."""
        for step in self.oriented_steps():
            a, b = network.endpoints(step.edge_id)
            if {a, b} != {step.tail, step.head}:
                return False
        return True

    def to_record(self) -> WalkRecord:
        return WalkRecord(
            start=self.start,
            steps=[StepRecord(edge_id=e, to=v) for e, v in zip(self.edges, self.vertices[1:])],
            cause=self.cause.value,
        )

    @classmethod
    def from_record(cls, record: WalkRecord) -> "Walk":
        return cls(
            vertices=[record.start] + [s.to for s in record.steps],
            edges=[s.edge_id for s in record.steps],
            cause=TerminationCause(record.cause),
        )


def random_walk(network: Network, start: int, stop_set: Collection[int], rng: Rng,
                step_cap: int = STEP_CAP) -> Walk:
    """
    Run the conductance-weighted random walk until it enters `stop_set`.

    The start vertex does not count as an entry, so a walk may start inside
    `stop_set` (boundary excursions do). Each step picks an incident half-edge
    with probability c(e)/c(v); a self-loop is picked with probability
    2c(e)/c(v) and records a step that stays in place.

    Args:
        network: Network to walk on
        start: Starting vertex
        stop_set: Vertices whose entry stops the walk (read live, so it may grow)
        rng: Random source
        step_cap: Maximum number of steps

    Returns:
        The Walk; its cause is STEP_CAP if the cap was reached first
    """
    table = network.step_table
    uniform = rng.uniform
    v = network.check_vertex(start)
    vertices = [v]
    edges: List[int] = []
    for _ in range(step_cap):
        cumulative, targets, edge_ids = table[v]
        i = bisect_right(cumulative, uniform())
        edges.append(edge_ids[i])
        v = targets[i]
        vertices.append(v)
        if v in stop_set:
            return Walk(vertices, edges, TerminationCause.HIT_TARGET)
    logger.warning(f"Walk from {start} reached its step cap of {step_cap}")
    return Walk(vertices, edges, TerminationCause.STEP_CAP)


def cover_walk(network: Network, start: int, rng: Rng, step_cap: int = STEP_CAP) -> Walk:
    """Run the walk from `start` until every vertex has been visited."""
    table = network.step_table
    uniform = rng.uniform
    v = network.check_vertex(start)
    vertices = [v]
    edges: List[int] = []
    visited = {v}
    remaining = network.num_vertices - 1
    steps = 0
    while remaining:
        if steps == step_cap:
            logger.warning(f"Cover walk from {start} reached its step cap with {remaining} vertices unvisited")
            return Walk(vertices, edges, TerminationCause.STEP_CAP)
        cumulative, targets, edge_ids = table[v]
        i = bisect_right(cumulative, uniform())
        edges.append(edge_ids[i])
        v = targets[i]
        vertices.append(v)
        steps += 1
        if v not in visited:
            visited.add(v)
            remaining -= 1
    return Walk(vertices, edges, TerminationCause.COVERED)


def boundary_excursion(wq: WiredQuotient, rng: Rng, step_cap: int = STEP_CAP) -> Walk:
    """
    Walk from the boundary vertex until its first return.

    The quotient has no self-loops at the boundary, so every excursion takes
    at least two steps.
    """
    walk = random_walk(wq.network, wq.boundary, (wq.boundary,), rng, step_cap)
    if walk.cause == TerminationCause.HIT_TARGET:
        walk.cause = TerminationCause.RETURNED
    return walk


def loop_erase(walk: Walk) -> Walk:
    """
    Chronological loop erasure.

    Whenever the walk revisits a vertex, the cycle made since that vertex's
    previous occurrence on the current path is deleted.
    """
    if not walk.vertices:
        raise EmptyWalkError("Cannot loop-erase an empty walk")
    path = [walk.vertices[0]]
    path_edges: List[int] = []
    position: Dict[int, int] = {path[0]: 0}
    for e, v in zip(walk.edges, walk.vertices[1:]):
        if v in position:
            cut = position[v]
            for dropped in path[cut + 1:]:
                del position[dropped]
            del path[cut + 1:]
            del path_edges[cut:]
        else:
            position[v] = len(path)
            path.append(v)
            path_edges.append(e)
    return Walk(path, path_edges, walk.cause)


def first_entry_edges(walks: Sequence[Walk]) -> Dict[int, OrientedEdge]:
    """
    Edge used by each vertex's first-ever entry, scanning walks in order.

    Walk starts count as visits without an entry edge, so they never get one.
    """
    entries: Dict[int, OrientedEdge] = {}
    visited = set()
    for walk in walks:
        if not walk.vertices:
            continue
        visited.add(walk.vertices[0])
        for step in walk.oriented_steps():
            if step.head not in visited:
                visited.add(step.head)
                entries[step.head] = step
    return entries


def hitting_split(network: Network, start: int, targets: Collection[int], rng: Rng,
                  samples: int, step_cap: int = STEP_CAP) -> Dict[int, int]:
    """Count which target vertex ends each of `samples` walks from `start`."""
    counts: Dict[int, int] = {}
    for _ in range(samples):
        walk = random_walk(network, start, targets, rng, step_cap)
        if walk.truncated:
            continue
        counts[walk.end] = counts.get(walk.end, 0) + 1
    return counts
