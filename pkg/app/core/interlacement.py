from dataclasses import dataclass, field
from functools import cached_property
from typing import Collection, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from networkx.utils import UnionFind

from app.config.settings import EXTENSION_CAP, SIGMA_THRESHOLD, STEP_CAP
from app.core.exceptions import (
    EmptyWalkError,
    ExtensionCapExceededError,
    MismatchedWindowError,
    NetworkValidationError,
    StepCapExceededError,
)
from app.core.network import OrientedEdge, WiredQuotient
from app.core.spanning import OrientedForest, aldous_broder, wilson
from app.core.walks import Walk, boundary_excursion, first_entry_edges, random_walk
from app.models.records import ArrivalRecord, ProcessRecord, StatReport
from app.services.potential import capacity
from app.services.stats import bernoulli_sigma, z_score
from app.utils.rng import Rng

logger = logging.getLogger(__name__)


class Trajectory:
    """
    One boundary excursion, seen as a trajectory modulo time shift.

    The walk runs from the boundary back to the boundary. `origin` picks the
    representative: walk index `origin` is time 0. The canonical choice is
    1, the first interior vertex.
    """

    def __init__(self, walk: Walk, trajectory_id: int, boundary: int, origin: int = 1):
        if not walk.vertices:
            raise EmptyWalkError("Trajectory needs a nonempty walk")
        if walk.start != boundary or walk.end != boundary:
            raise NetworkValidationError("A trajectory must start and end at the boundary")
        if not 0 <= origin < len(walk.vertices):
            raise ValueError(f"Origin {origin} outside the walk")
        self.walk = walk
        self.trajectory_id = trajectory_id
        self.boundary = boundary
        self.origin = origin

    @property
    def interior_vertices(self) -> List[int]:
        return self.walk.vertices[1:-1]

    def vertex_at(self, index: int) -> int:
        """Vertex at time `index` of this representative."""
        position = self.origin + index
        if not 0 <= position < len(self.walk.vertices):
            raise IndexError(index)
        return self.walk.vertices[position]

    @cached_property
    def first_entries(self) -> Dict[int, OrientedEdge]:
        """First-entry edge of every interior vertex the excursion visits."""
        return first_entry_edges([self.walk])

    @cached_property
    def first_traversals(self) -> List[int]:
        """Edge ids in order of first traversal."""
        seen = set()
        order = []
        for e in self.walk.edges:
            if e not in seen:
                seen.add(e)
                order.append(e)
        return order

    def visits(self, v: int) -> bool:
        return v in self.first_entries

    def hits(self, K: Collection[int]) -> bool:
        return any(v in self.first_entries for v in K)

    def reanchored(self, K: Collection[int]) -> Optional["Trajectory"]:
        """
        The representative whose time 0 is the first visit to K, or None if
        the excursion misses K.
        """
        for i, v in enumerate(self.walk.vertices):
            if v in K and v != self.boundary:
                return Trajectory(self.walk, self.trajectory_id, self.boundary, origin=i)
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        # equal as trajectories modulo time shift
        return self.trajectory_id == other.trajectory_id and self.walk == other.walk

    def __hash__(self) -> int:
        return hash((self.trajectory_id, len(self.walk)))

    def __repr__(self) -> str:
        return f"Trajectory(id={self.trajectory_id}, steps={len(self.walk)}, origin={self.origin})"


class Arrival(NamedTuple):
    time: float
    trajectory: Trajectory


class PointProcess:
    """
    Poisson process of boundary excursions on a wired quotient.

    Arrivals land at rate c(∂) per unit time and carry independent
    excursions. An extensible process grows its upper end on demand in
    whole increments of 1/c(∂), drawing from its own rng, so the arrivals
    in any time range do not depend on when the growth happened. Windows cut
    from a process share its trajectories and never grow.
    """

    def __init__(self, wq: WiredQuotient, start: float, end: float, rng: Optional[Rng] = None,
                 arrivals: Iterable[Arrival] = (), extensible: bool = True,
                 step_cap: int = STEP_CAP, extension_cap: int = EXTENSION_CAP):
        if end < start:
            raise ValueError(f"Window end {end} precedes its start {start}")
        if extensible and rng is None:
            raise ValueError("An extensible process needs an rng")
        self.wq = wq
        self.start = float(start)
        self.end = float(end)
        self.rate = wq.boundary_conductance
        self.rng = rng
        self.arrivals: List[Arrival] = sorted(arrivals, key=lambda a: (a.time, a.trajectory.trajectory_id))
        self.extensible = extensible
        self.step_cap = step_cap
        self.extension_cap = extension_cap
        self.extensions = 0
        self._next_id = max((a.trajectory.trajectory_id for a in self.arrivals), default=-1) + 1

    @classmethod
    def from_walks(cls, wq: WiredQuotient, timed_walks: Sequence[Tuple[float, Walk]],
                   start: float, end: float) -> "PointProcess":
        """A fixed, non-extensible process built from given (time, excursion) pairs."""
        arrivals = [Arrival(t, Trajectory(w, i, wq.boundary)) for i, (t, w) in enumerate(sorted(
            timed_walks, key=lambda pair: pair[0]))]
        for a in arrivals:
            if not start <= a.time < end:
                raise ValueError(f"Arrival at {a.time} outside [{start}, {end})")
        return cls(wq, start, end, arrivals=arrivals, extensible=False)

    def _sample_range(self, a: float, b: float) -> List[Arrival]:
        count = self.rng.poisson(self.rate * (b - a))
        times = np.sort(self.rng.uniforms(count, a, b))
        arrivals = []
        for t in times.tolist():
            walk = boundary_excursion(self.wq, self.rng, self.step_cap)
            if walk.truncated:
                raise StepCapExceededError(f"Boundary excursion exceeded {self.step_cap} steps")
            arrivals.append(Arrival(t, Trajectory(walk, self._next_id, self.wq.boundary)))
            self._next_id += 1
        return arrivals

    def extend(self):
        """Append one increment of length 1/c(∂) to the upper end."""
        if not self.extensible:
            raise ExtensionCapExceededError("Process window is fixed and cannot be extended")
        if self.extensions >= self.extension_cap:
            raise ExtensionCapExceededError(
                f"Process needed more than {self.extension_cap} window extensions"
            )
        new_end = self.end + 1.0 / self.rate
        self.arrivals.extend(self._sample_range(self.end, new_end))
        self.end = new_end
        self.extensions += 1
        if self.extensions % 1000 == 0:
            logger.info(f"Process extended {self.extensions} times; window now ends at {self.end:.4g}")

    def extend_to(self, time: float):
        while self.end < time:
            self.extend()

    def arrivals_from(self, t: float) -> Iterator[Arrival]:
        """
        Arrivals at times >= t in time order. An extensible process keeps
        extending as the iterator is consumed; a fixed one stops at its end.
        """
        if t < self.start:
            raise ValueError(f"Time {t} precedes the process window start {self.start}")
        if self.extensible:
            self.extend_to(t)
        i = 0
        while i < len(self.arrivals) and self.arrivals[i].time < t:
            i += 1
        while True:
            while i < len(self.arrivals):
                yield self.arrivals[i]
                i += 1
            if not self.extensible:
                return
            self.extend()

    def window(self, a: float, b: float) -> "PointProcess":
        """Fixed sub-process of the arrivals in [a, b)."""
        if not self.start <= a <= b:
            raise ValueError(f"Window [{a}, {b}) is not inside the process starting at {self.start}")
        if b > self.end:
            self.extend_to(b)
        return PointProcess(
            self.wq, a, b,
            arrivals=[x for x in self.arrivals if a <= x.time < b],
            extensible=False,
        )

    def count(self, a: float, b: float) -> int:
        return sum(1 for x in self.arrivals if a <= x.time < b)

    def __len__(self) -> int:
        return len(self.arrivals)

    def to_record(self) -> ProcessRecord:
        return ProcessRecord(
            start=self.start,
            end=self.end,
            rate=self.rate,
            arrivals=[
                ArrivalRecord(time=a.time, id=a.trajectory.trajectory_id, walk=a.trajectory.walk.to_record())
                for a in self.arrivals
            ],
        )

    def __repr__(self) -> str:
        return (f"PointProcess([{self.start:g}, {self.end:g}), arrivals={len(self.arrivals)}, "
                f"rate={self.rate:g}, extensible={self.extensible})")


def sample_process(wq: WiredQuotient, a: float, b: float, rng: Rng,
                   step_cap: int = STEP_CAP, extension_cap: int = EXTENSION_CAP) -> PointProcess:
    """
    Sample the excursion process on [a, b].

    The count is Poisson(c(∂)(b - a)); given the count, arrival times are
    independent uniforms on the window, and each carries an independent
    boundary excursion. The returned process extends itself lazily past b.
    """
    if b < a:
        raise ValueError(f"Window end {b} precedes its start {a}")
    process = PointProcess(wq, a, a, rng, step_cap=step_cap, extension_cap=extension_cap)
    if b > a:
        process.arrivals = process._sample_range(a, b)
        process.end = float(b)
    return process


class Hit(NamedTuple):
    """First hit of a vertex after the reference time."""

    time: float
    trajectory_id: int
    edge: OrientedEdge


def tau(process: PointProcess, v: int, t: float) -> Hit:
    """
    First arrival at time >= t whose trajectory visits `v`, with the edge
    along which it first enters `v`.

    Raises:
        ExtensionCapExceededError: if no trajectory visits `v` before the
            extension cap (or the end of a fixed process)
    """
    wq = process.wq
    wq.network.check_vertex(v)
    if v == wq.boundary:
        raise NetworkValidationError("The boundary vertex has no hitting time")
    for arrival in process.arrivals_from(t):
        entry = arrival.trajectory.first_entries.get(v)
        if entry is not None:
            return Hit(arrival.time, arrival.trajectory.trajectory_id, entry)
    raise ExtensionCapExceededError(f"No trajectory visits {v} after time {t} in the fixed window")


@dataclass
class AbState:
    """
    The forest-valued state at time t: for each hit vertex its hitting time
    and first-entry edge. Complete once every interior vertex is assigned.
    """

    time: float
    wq: WiredQuotient
    hits: Dict[int, Hit] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.hits) == self.wq.boundary

    def forest(self, horizon: float = math.inf) -> OrientedForest:
        """Reversed entry edges of the vertices hit by `horizon`, rooted at the boundary."""
        entries = {v: h.edge for v, h in self.hits.items() if h.time <= horizon}
        return OrientedForest.from_entries(entries, [self.wq.boundary])

    def edge_ids(self) -> frozenset:
        return frozenset(h.edge.edge_id for h in self.hits.values())

    def same_as(self, other: "AbState") -> bool:
        return self.time == other.time and self.hits == other.hits


def ab_state(process: PointProcess, t: float) -> AbState:
    """
    Hitting times and entry edges of every interior vertex after time t,
    from a single pass over the arrivals. On a fixed process the state may
    be partial.
    """
    wq = process.wq
    hits: Dict[int, Hit] = {}
    remaining = wq.boundary
    if remaining == 0:
        return AbState(t, wq, hits)
    for arrival in process.arrivals_from(t):
        trajectory = arrival.trajectory
        for v, edge in trajectory.first_entries.items():
            if v not in hits:
                hits[v] = Hit(arrival.time, trajectory.trajectory_id, edge)
                remaining -= 1
        if remaining == 0:
            break
    return AbState(t, wq, hits)


def ab_forest(process: PointProcess, t: float, T: float = math.inf) -> OrientedForest:
    """
    Reversed first-entry edges after time t of the vertices first hit by time T.

    With T infinite every vertex is hit and the result is a spanning tree of
    the quotient rooted at the boundary.
    """
    if T < t:
        raise ValueError(f"Horizon {T} precedes start time {t}")
    if math.isinf(T):
        return ab_state(process, t).forest()
    if process.extensible:
        process.extend_to(T)
    entries: Dict[int, OrientedEdge] = {}
    for arrival in process.arrivals:
        if t <= arrival.time <= T:
            for v, edge in arrival.trajectory.first_entries.items():
                entries.setdefault(v, edge)
    return OrientedForest.from_entries(entries, [process.wq.boundary])


def markov_update(state: AbState, window: PointProcess) -> AbState:
    """
    Move the state from time t back to t - s using only the arrivals in
    [t - s, t): vertices hit there take their first hit in the window, every
    other vertex keeps its hit from the state.

    Raises:
        MismatchedWindowError: if the window does not end at the state's time
            or belongs to another quotient
    """
    if window.end != state.time:
        raise MismatchedWindowError(f"Window ends at {window.end}, state is at time {state.time}")
    if window.wq is not state.wq:
        raise MismatchedWindowError("Window and state live on different quotients")
    overwritten: Dict[int, Hit] = {}
    for arrival in window.arrivals:
        if not window.start <= arrival.time < window.end:
            continue
        for v, edge in arrival.trajectory.first_entries.items():
            if v not in overwritten:
                overwritten[v] = Hit(arrival.time, arrival.trajectory.trajectory_id, edge)
    hits = dict(state.hits)
    hits.update(overwritten)
    return AbState(window.start, state.wq, hits)


@dataclass
class HitTest:
    """Empirical hit rate of K over a time window against 1 - exp(-t Cap(K))."""

    K: List[int]
    t: float
    samples: int
    capacity: float
    empirical: float
    exact: float
    sigma: float
    z: float
    mean_hits: float
    expected_hits: float

    @property
    def passed(self) -> bool:
        return abs(self.z) <= SIGMA_THRESHOLD

    def to_report(self) -> StatReport:
        return StatReport(
            test="hit_probability",
            statistic=self.z,
            p_value=None,
            passed=self.passed,
            details={
                "K": self.K, "t": self.t, "samples": self.samples, "capacity": self.capacity,
                "empirical": self.empirical, "exact": self.exact, "sigma": self.sigma,
                "mean_hits": self.mean_hits, "expected_hits": self.expected_hits,
            },
        )


def hit_probability_test(wq: WiredQuotient, K: Iterable[int], t: float, samples: int, rng: Rng,
                         step_cap: int = STEP_CAP) -> HitTest:
    """
    Frequency with which some excursion arriving in a window of length t
    visits K, against the exact 1 - exp(-t Cap(K)).

    Each sample draws a Poisson(c(∂) t) number of excursions, each stopped
    as soon as it enters K or returns to the boundary.
    """
    K = sorted({int(v) for v in K})
    if not K:
        raise NetworkValidationError("K must be nonempty")
    if t < 0:
        raise ValueError(f"Window length must be nonnegative, got {t}")
    if samples < 1:
        raise ValueError("Hit test needs at least one sample")
    cap = capacity(wq, K)
    stop = frozenset(K) | {wq.boundary}
    target = frozenset(K)
    rate = wq.boundary_conductance

    hit_samples = 0
    total_hits = 0
    for _ in range(samples):
        hitting = 0
        for _ in range(rng.poisson(rate * t)):
            walk = random_walk(wq.network, wq.boundary, stop, rng, step_cap)
            if walk.truncated:
                raise StepCapExceededError(f"Excursion toward K exceeded {step_cap} steps")
            if walk.end in target:
                hitting += 1
        total_hits += hitting
        hit_samples += hitting > 0

    exact = 1.0 - math.exp(-t * cap)
    empirical = hit_samples / samples
    sigma = bernoulli_sigma(exact, samples)
    result = HitTest(
        K=K, t=t, samples=samples, capacity=cap, empirical=empirical, exact=exact, sigma=sigma,
        z=z_score(empirical, exact, sigma), mean_hits=total_hits / samples, expected_hits=t * cap,
    )
    logger.info(f"Hit test K={K} t={t}: empirical {empirical:.5f} vs exact {exact:.5f} (z={result.z:.2f})")
    return result


@dataclass
class MinimalSpanningForest:
    """Minimal spanning tree of the quotient under the interlacement edge order."""

    edge_ids: frozenset
    order: List[int]
    forest: OrientedForest


def interlacement_msf(process: PointProcess, t: float = 0.0) -> MinimalSpanningForest:
    """
    Kruskal's algorithm under the order in which trajectories arriving after
    time t first traverse edges: earlier arrivals first, then position of
    first traversal within the trajectory. The process is extended until
    every edge has been traversed, so the order is total.
    """
    wq = process.wq
    network = wq.network
    subtrees = UnionFind(range(network.num_vertices))

    order: List[int] = []
    ranked = set()
    accepted = set()
    for arrival in process.arrivals_from(t):
        for e in arrival.trajectory.first_traversals:
            if e in ranked:
                continue
            ranked.add(e)
            order.append(e)
            a, b = network.endpoints(e)
            if subtrees[a] != subtrees[b]:
                subtrees.union(a, b)
                accepted.add(e)
        if len(ranked) == network.num_edges:
            break
    if len(ranked) < network.num_edges:
        raise ExtensionCapExceededError("Fixed process ends before every edge is traversed")

    return MinimalSpanningForest(frozenset(accepted), order, _orient_toward(wq, accepted))


def _orient_toward(wq: WiredQuotient, edge_ids: Collection[int]) -> OrientedForest:
    network = wq.network
    adjacency: Dict[int, List[Tuple[int, int]]] = {}
    for e in edge_ids:
        a, b = network.endpoints(e)
        adjacency.setdefault(a, []).append((e, b))
        adjacency.setdefault(b, []).append((e, a))
    parents: Dict[int, OrientedEdge] = {}
    seen = {wq.boundary}
    stack = [wq.boundary]
    while stack:
        u = stack.pop()
        for e, w in adjacency.get(u, ()):
            if w not in seen:
                seen.add(w)
                parents[w] = OrientedEdge(e, w, u)
                stack.append(w)
    return OrientedForest(parents, [wq.boundary])


def trajectory_first_entry_tree(walk: Union[Walk, Trajectory]) -> OrientedForest:
    """Reversed first-entry edges of one walk, rooted at its start."""
    if isinstance(walk, Trajectory):
        walk = walk.walk
    if not walk.vertices:
        raise EmptyWalkError("Cannot build a first-entry tree from an empty walk")
    return OrientedForest.from_entries(first_entry_edges([walk]), [walk.start])


def _check_grid(t_grid: Sequence[float]) -> List[float]:
    grid = [float(t) for t in t_grid]
    if not grid:
        raise ValueError("Time grid is empty")
    if any(later > earlier for earlier, later in zip(grid, grid[1:])):
        raise ValueError("Time grid must be nonincreasing")
    return grid


def dynamics_states(process: PointProcess, t_grid: Sequence[float]) -> List[AbState]:
    """
    States at each time of a nonincreasing grid on one process: the state at
    the first (largest) time is computed directly and every later one by a
    Markov update over the window between them.
    """
    grid = _check_grid(t_grid)
    states = [ab_state(process, grid[0])]
    for earlier, later in zip(grid, grid[1:]):
        states.append(markov_update(states[-1], process.window(later, earlier)))
    return states


def dynamics_run(wq: WiredQuotient, t_grid: Sequence[float], rng: Rng,
                 step_cap: int = STEP_CAP) -> List[AbState]:
    """Sample a process spanning the grid and run the dynamics along it."""
    grid = _check_grid(t_grid)
    process = sample_process(wq, grid[-1], grid[0], rng, step_cap=step_cap)
    return dynamics_states(process, grid)


def sample_tree(wq: WiredQuotient, sampler: str, rng: Rng, step_cap: int = STEP_CAP) -> OrientedForest:
    """
    One spanning tree of the quotient rooted at the boundary, from classic
    Aldous-Broder, Wilson, or the excursion process at time 0.
    """
    if sampler == "aldous_broder":
        return aldous_broder(wq.network, wq.boundary, rng, step_cap)
    if sampler == "wilson":
        return wilson(wq.network, wq.boundary, rng, step_cap)
    if sampler == "interlacement":
        process = sample_process(wq, 0.0, 1.0 / wq.boundary_conductance, rng, step_cap=step_cap)
        return ab_state(process, 0.0).forest()
    raise ValueError(f"Unknown sampler: {sampler}")


def edge_marginals(wq: WiredQuotient, samples: int, rng: Rng, t: float = 0.0) -> np.ndarray:
    """
    Frequency with which each base edge lies in the forest at time t, over
    independent realizations. Base edges absent from the quotient get 0.
    """
    counts = np.zeros(wq.base.num_edges)
    increment = 1.0 / wq.boundary_conductance
    for i in range(samples):
        process = sample_process(wq, t, t + increment, rng.child(i))
        edges = sorted(ab_state(process, t).edge_ids())
        counts[wq.edge_map[edges]] += 1
    return counts / samples


def interarrival_times(process: PointProcess) -> np.ndarray:
    """
    Gaps between consecutive arrivals, the first measured from the window
    start, scaled by the rate so they are standard exponentials.
    """
    times = np.array([process.start] + [a.time for a in process.arrivals])
    return np.diff(times) * process.rate
