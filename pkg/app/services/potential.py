from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import cg, splu, spsolve

from app.config.settings import ITERATIVE_SOLVER_THRESHOLD, SOLVER_TOLERANCE
from app.core.exceptions import (
    IrreducibleNetworkError,
    NetworkValidationError,
    SingularSystemError,
    TreeCountOverflowError,
)
from app.core.network import Network, WiredQuotient
from app.services.stats import mc_mean_ci
from app.utils.rng import Rng

logger = logging.getLogger(__name__)

_DENSE_DETERMINANT_LIMIT = 2000
_LOG_FLOAT_MAX = math.log(np.finfo(np.float64).max)


def laplacian_matrix(network: Network) -> csr_matrix:
    """Weighted graph Laplacian; self-loops contribute nothing."""
    n = network.num_vertices
    loops = network.edge_a == network.edge_b
    a = network.edge_a[~loops]
    b = network.edge_b[~loops]
    c = network.conductance[~loops]
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    data = np.concatenate([-c, -c, c, c])
    return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class DirichletProblem:
    """Unit voltage on `sources`, zero voltage on `sinks`."""

    network: Network
    sources: FrozenSet[int]
    sinks: FrozenSet[int]

    def __post_init__(self):
        for v in self.sources | self.sinks:
            self.network.check_vertex(v)
        if not self.sources or not self.sinks:
            raise NetworkValidationError("Source and sink sets must be nonempty")
        if self.sources & self.sinks:
            raise NetworkValidationError("Source and sink sets must be disjoint")

    @classmethod
    def of(cls, network: Network, sources: Iterable[int], sinks: Iterable[int]) -> "DirichletProblem":
        return cls(network, frozenset(int(v) for v in sources), frozenset(int(v) for v in sinks))


def harmonic_solve(problem: DirichletProblem) -> np.ndarray:
    """
    Voltages harmonic off sources and sinks, 1 on sources and 0 on sinks.

    Uses a direct sparse factorization; above ITERATIVE_SOLVER_THRESHOLD
    unknowns it switches to conjugate gradients with the same tolerance.

    Args:
        problem: The Dirichlet problem

    Returns:
        Array of voltages indexed by vertex id
    """
    network = problem.network
    n = network.num_vertices
    voltage = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    fixed[list(problem.sources)] = True
    fixed[list(problem.sinks)] = True
    voltage[list(problem.sources)] = 1.0
    free = np.flatnonzero(~fixed)
    if len(free) == 0:
        return voltage

    fixed_ids = np.flatnonzero(fixed)
    laplacian = laplacian_matrix(network)
    l_ff = laplacian[free][:, free].tocsc()
    rhs = -(laplacian[free][:, fixed_ids] @ voltage[fixed_ids])
    if np.any(l_ff.diagonal() == 0):
        raise SingularSystemError("A free vertex has no edges to other vertices")

    if len(free) > ITERATIVE_SOLVER_THRESHOLD:
        logger.info(f"Solving {len(free)} unknowns with conjugate gradients")
        solution, info = cg(l_ff, rhs, rtol=SOLVER_TOLERANCE, atol=0.0, maxiter=10 * len(free))
        if info != 0:
            raise SingularSystemError(f"Conjugate gradients did not converge (info={info})")
    else:
        solution = spsolve(l_ff, rhs)

    if not np.all(np.isfinite(solution)):
        raise SingularSystemError("Dirichlet problem is singular; is every vertex connected to the boundary?")
    residual = np.linalg.norm(l_ff @ solution - rhs)
    scale = max(np.linalg.norm(rhs), 1.0)
    if residual > 100 * SOLVER_TOLERANCE * scale:
        raise SingularSystemError(f"Solver residual {residual:.3e} exceeds tolerance")

    voltage[free] = solution
    return voltage


def effective_conductance(network: Network, sources: Iterable[int], sinks: Iterable[int]) -> float:
    """Total current leaving `sources` when they are held at unit voltage and `sinks` at zero."""
    problem = DirichletProblem.of(network, sources, sinks)
    voltage = harmonic_solve(problem)
    current = laplacian_matrix(network) @ voltage
    return float(current[list(problem.sources)].sum())


def capacity(wq: WiredQuotient, K: Iterable[int], method: str = "solve") -> float:
    """
    Capacity of K inside the wired quotient, with the boundary playing infinity.

    Cap(K) = sum over v in K of c(v) P_v(walk leaves K and reaches the boundary
    before returning to K). `method="solve"` reads it off as the effective
    conductance between K and the boundary; `method="escape"` sums the escape
    probabilities edge by edge from the hitting-probability solve. The empty
    set has capacity 0.
    """
    K = sorted({int(v) for v in K})
    if not K:
        return 0.0
    if wq.boundary in K:
        raise NetworkValidationError("K must not contain the boundary vertex")
    if method == "solve":
        return effective_conductance(wq.network, K, [wq.boundary])
    if method != "escape":
        raise ValueError(f"Unknown capacity method: {method}")

    network = wq.network
    hit = harmonic_solve(DirichletProblem.of(network, K, [wq.boundary]))
    total = 0.0
    for v in K:
        c_v = network.vertex_conductance[v]
        # first step from v, then escape from the neighbour without touching K
        escape = math.fsum(network.conductance[e] * (1.0 - hit[u]) for e, u in network.incident(v)) / c_v
        total += c_v * escape
    return total


def spanning_tree_count(network: Network) -> float:
    """
    Weighted spanning tree count: determinant of the Laplacian with one row
    and column removed.

    Raises:
        TreeCountOverflowError: if the count does not fit in a double
    """
    if not network.is_connected():
        raise NetworkValidationError("Spanning tree count needs a connected network")
    if network.num_vertices == 1:
        return 1.0
    reduced = laplacian_matrix(network)[1:, 1:]
    if network.num_vertices <= _DENSE_DETERMINANT_LIMIT:
        sign, logdet = np.linalg.slogdet(reduced.toarray())
        if sign <= 0:
            raise SingularSystemError("Reduced Laplacian is not positive definite")
    else:
        diagonal = splu(reduced.tocsc()).U.diagonal()
        logdet = float(np.sum(np.log(np.abs(diagonal))))
    if logdet >= _LOG_FLOAT_MAX:
        raise TreeCountOverflowError(f"Tree count exp({logdet:.1f}) overflows a double")
    return float(math.exp(logdet))


def ust_edge_probability(network: Network, edge_id: int) -> float:
    """
    Probability that the weighted uniform spanning tree contains `edge_id`:
    c(e) times the effective resistance between its endpoints. Self-loops get 0.
    """
    a, b = network.endpoints(edge_id)
    if a == b:
        return 0.0
    return float(network.conductance[edge_id]) / effective_conductance(network, [a], [b])


def ust_edge_probabilities(network: Network) -> np.ndarray:
    """All Kirchhoff edge marginals at once, via the Laplacian pseudo-inverse."""
    pinv = np.linalg.pinv(laplacian_matrix(network).toarray())
    a, b = network.edge_a, network.edge_b
    resistance = pinv[a, a] + pinv[b, b] - 2 * pinv[a, b]
    probabilities = network.conductance * resistance
    probabilities[a == b] = 0.0
    return np.clip(probabilities, 0.0, 1.0)


def series_parallel_reduce(network: Network, sources: Iterable[int], sinks: Iterable[int],
                           conductances: Optional[Mapping[int, Fraction]] = None) -> Fraction:
    """
    Exact effective conductance by series and parallel moves.

    Sources are merged into one terminal and sinks into another. Self-loops
    and dangling non-terminal vertices carry no current and are dropped;
    parallel edges add; a non-terminal vertex with exactly two edges to two
    different vertices is replaced by one edge in series. The network is
    reducible when only a single terminal-to-terminal edge (or none) is left.

    Args:
        network: Network to reduce
        sources: Vertices at unit voltage
        sinks: Vertices at zero voltage
        conductances: Optional exact conductance per edge id; defaults to the
            exact binary value of each stored conductance

    Returns:
        Effective conductance as a Fraction

    Raises:
        IrreducibleNetworkError: if series and parallel moves get stuck
    """
    problem = DirichletProblem.of(network, sources, sinks)
    source, sink = -1, -2

    def terminal(v: int) -> int:
        if v in problem.sources:
            return source
        if v in problem.sinks:
            return sink
        return v

    edges: Dict[int, List] = {}
    incident: Dict[int, set] = {source: set(), sink: set()}
    for a, b, c, e in network.edges():
        value = conductances[e] if conductances is not None else Fraction(c)
        ta, tb = terminal(a), terminal(b)
        if ta == tb:
            continue
        edges[e] = [ta, tb, Fraction(value)]
        incident.setdefault(ta, set()).add(e)
        incident.setdefault(tb, set()).add(e)

    next_id = network.num_edges
    pending = list(incident)

    def other(e: int, v: int) -> int:
        a, b, _ = edges[e]
        return b if a == v else a

    def remove_edge(e: int):
        a, b, _ = edges.pop(e)
        incident[a].discard(e)
        incident[b].discard(e)

    while pending:
        v = pending.pop()
        if v not in incident:
            continue

        by_neighbour: Dict[int, int] = {}
        for e in sorted(incident[v]):
            w = other(e, v)
            if w in by_neighbour:
                keep = by_neighbour[w]
                edges[keep][2] += edges[e][2]
                remove_edge(e)
                pending.append(w)
            else:
                by_neighbour[w] = e

        if v in (source, sink):
            continue
        degree = len(incident[v])
        if degree <= 1:
            for e in list(incident[v]):
                w = other(e, v)
                remove_edge(e)
                pending.append(w)
            del incident[v]
        elif degree == 2:
            e1, e2 = sorted(incident[v])
            w1, w2 = other(e1, v), other(e2, v)
            c1, c2 = edges[e1][2], edges[e2][2]
            remove_edge(e1)
            remove_edge(e2)
            del incident[v]
            if w1 != w2:
                edges[next_id] = [w1, w2, c1 * c2 / (c1 + c2)]
                incident[w1].add(next_id)
                incident[w2].add(next_id)
                next_id += 1
            pending.extend([w1, w2])

    leftover = [v for v in incident if v not in (source, sink)]
    if leftover:
        raise IrreducibleNetworkError(
            f"Series-parallel reduction stuck with {len(leftover)} internal vertices"
        )
    return sum((edges[e][2] for e in incident[source]), Fraction(0))


class PathDistribution:
    """
    Law of a random simple path from a source set to the boundary.

    `sampler(rng)` returns the quotient edge ids of one path, in order.
    """

    def __init__(self, wq: WiredQuotient, sources: Iterable[int], sampler: Callable[[Rng], Sequence[int]]):
        self.wq = wq
        self.sources = frozenset(int(v) for v in sources)
        self.sampler = sampler

    def sample(self, rng: Rng) -> List[int]:
        path = list(self.sampler(rng))
        self.check(path)
        return path

    def check(self, path: Sequence[int]):
        """Raise unless `path` is a simple path from a source to the boundary."""
        network = self.wq.network
        if not path:
            raise NetworkValidationError("Random path is empty")
        a, b = network.endpoints(path[0])
        current = a if a in self.sources else b
        if current not in self.sources:
            raise NetworkValidationError("Random path does not start in the source set")
        visited = {current}
        for e in path:
            current = network.other_end(e, current)
            if current in visited:
                raise NetworkValidationError("Random path is not simple")
            visited.add(current)
        if current != self.wq.boundary:
            raise NetworkValidationError("Random path does not end at the boundary")

    @classmethod
    def descending(cls, wq: WiredQuotient, start: int, mode: str = "uniform") -> "PathDistribution":
        """
        Paths that always step to a vertex strictly closer (in graph distance)
        to the boundary: uniformly among such edges, or along the first one.
        On a tree with wired leaves the uniform mode is the uniform ray.
        """
        network = wq.network
        distance = {wq.boundary: 0}
        frontier = [wq.boundary]
        while frontier:
            next_frontier = []
            for u in frontier:
                for _, w in network.incident(u):
                    if w not in distance:
                        distance[w] = distance[u] + 1
                        next_frontier.append(w)
            frontier = next_frontier
        downhill = {
            v: [e for e, w in network.incident(v) if distance[w] < distance[v]]
            for v in distance if v != wq.boundary
        }

        def sampler(rng: Rng) -> List[int]:
            path = []
            v = start
            while v != wq.boundary:
                choices = downhill[v]
                e = choices[0] if mode == "first" else choices[rng.integers(len(choices))]
                path.append(e)
                v = network.other_end(e, v)
            return path

        if mode not in ("uniform", "first"):
            raise ValueError(f"Unknown path mode: {mode}")
        return cls(wq, [start], sampler)


@dataclass
class RandomPathBound:
    """Lower bound on capacity from the method of random paths."""

    bound: float
    sum_of_squares: float
    half_width: float
    ci_low: float
    ci_high: float
    samples: int


def random_path_capacity_bound(wq: WiredQuotient, sources: Iterable[int], path_dist: PathDistribution,
                               samples: int, rng: Rng, confidence: float = 0.95) -> RandomPathBound:
    """
    Capacity lower bound (sum over edges of P(e in path)^2)^-1.

    The sum equals the expected overlap |Γ ∩ Γ'| of two independent paths,
    so the point estimate is the unbiased pairwise statistic and the
    confidence interval comes from overlaps of disjoint sample pairs.

    Raises:
        ValueError: if fewer than two samples are requested
    """
    if samples < 2:
        raise ValueError("Random path bound needs at least two samples")
    if frozenset(int(v) for v in sources) != path_dist.sources:
        raise NetworkValidationError("Path distribution starts outside the requested source set")

    counts = np.zeros(wq.network.num_edges)
    paths = []
    for _ in range(samples):
        path = path_dist.sample(rng)
        counts[path] += 1
        paths.append(frozenset(path))

    sum_of_squares = float(np.sum(counts * (counts - 1)) / (samples * (samples - 1)))
    overlaps = [len(paths[i] & paths[i + 1]) for i in range(0, samples - 1, 2)]
    if len(overlaps) >= 2:
        _, half_width = mc_mean_ci(overlaps, confidence)
    else:
        half_width = float("inf")

    bound = 1.0 / sum_of_squares if sum_of_squares > 0 else float("inf")
    ci_low = 1.0 / (sum_of_squares + half_width)
    ci_high = 1.0 / (sum_of_squares - half_width) if sum_of_squares > half_width else float("inf")
    logger.info(f"Random path bound {bound:.6g} from {samples} paths (sum of squares {sum_of_squares:.6g})")
    return RandomPathBound(bound, sum_of_squares, half_width, ci_low, ci_high, samples)
