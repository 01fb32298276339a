"""
Invariant suite run by the `verify` experiment kind.

Each check returns a StatReport; the suite passes when every report does.
The quick scale keeps the whole suite to a few minutes of pure Python; the
full scale uses the acceptance sample sizes.
"""

from dataclasses import dataclass
from functools import partial
from typing import Any, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from app.config.settings import SIGMA_THRESHOLD
from app.core.interlacement import (
    ab_state,
    dynamics_states,
    hit_probability_test,
    interarrival_times,
    interlacement_msf,
    sample_process,
    sample_tree,
)
from app.core.network import WiredQuotient, build_network, wired_quotient
from app.core.replicas import run_replicas
from app.core.spanning import ForestKey, enumerate_spanning_trees
from app.core.walks import hitting_split
from app.models.family import FamilySpec
from app.models.records import StatReport
from app.services.families import (
    GeneratedNetwork,
    build_quotient,
    expected_root_past_offspring,
    generate,
    neighbour_visit_probability,
    p_mk,
    p_mk_bounds,
    p_mk_monte_carlo,
    regime_flags,
    root_past_offspring,
)
from app.services.potential import PathDistribution, capacity, random_path_capacity_bound
from app.services.stats import (
    EmpiricalDistribution,
    bernoulli_sigma,
    distribution_report,
    ks_exponential_test,
    mc_mean_ci,
    z_score,
)
from app.utils.rng import Rng

logger = logging.getLogger(__name__)

# 6 (1 - p_return) for the simple random walk on Z^3
Z3_ORIGIN_CAPACITY = 6 * (1 - 0.340537)


@dataclass(frozen=True)
class SuiteScale:
    ust_samples: int
    ust_tv_tolerance: float
    coupled_instances: int
    hit_radius: int
    hit_samples: int
    poisson_window: float
    counterexample_depths: Tuple[int, ...]
    counterexample_mc_depth: int
    counterexample_mc_samples: int
    offspring_depth: int
    offspring_samples: int
    dynamics_samples: int
    capacity_radii: Tuple[int, ...]
    capacity_mc_samples: int
    capacity_reference_tolerance: float
    path_depth: int
    path_samples: int


QUICK = SuiteScale(
    ust_samples=20_000,
    ust_tv_tolerance=0.03,
    coupled_instances=200,
    hit_radius=3,
    hit_samples=2_000,
    poisson_window=2_000.0,
    counterexample_depths=(2, 3, 4),
    counterexample_mc_depth=3,
    counterexample_mc_samples=2_000,
    offspring_depth=3,
    offspring_samples=1_000,
    dynamics_samples=5_000,
    capacity_radii=(2, 4, 6),
    capacity_mc_samples=2_000,
    capacity_reference_tolerance=0.05,
    path_depth=6,
    path_samples=5_000,
)

FULL = SuiteScale(
    ust_samples=200_000,
    ust_tv_tolerance=0.01,
    coupled_instances=1_000,
    hit_radius=8,
    hit_samples=100_000,
    poisson_window=20_000.0,
    counterexample_depths=(2, 3, 4, 5, 6),
    counterexample_mc_depth=4,
    counterexample_mc_samples=20_000,
    offspring_depth=4,
    offspring_samples=10_000,
    dynamics_samples=100_000,
    capacity_radii=(5, 10, 20),
    capacity_mc_samples=20_000,
    capacity_reference_tolerance=0.02,
    path_depth=10,
    path_samples=20_000,
)

SCALES = {"quick": QUICK, "full": FULL}


def complete_quotient(n: int = 4) -> WiredQuotient:
    """K_n with its last vertex as the boundary (the quotient is K_n itself)."""
    network = build_network([(a, b, 1.0) for a in range(n) for b in range(a + 1, n)])
    return wired_quotient(network, range(n - 1))


def cycle_quotient(n: int = 5) -> WiredQuotient:
    """C_n with one vertex wired; the quotient is C_n again."""
    network = build_network([(v, (v + 1) % n, 1.0) for v in range(n)])
    return wired_quotient(network, range(n - 1))


def random_small_quotient(rng: Rng, max_vertices: int = 8) -> WiredQuotient:
    """
    Random connected multigraph on 3..max_vertices vertices (a random tree
    plus extra edges, loops allowed) with conductances in [0.5, 2), wired
    outside a random connected set.
    """
    n = 3 + rng.integers(max_vertices - 2)
    edges = [(v, rng.integers(v), 0.5 + 1.5 * rng.uniform()) for v in range(1, n)]
    for _ in range(rng.integers(n + 1)):
        edges.append((rng.integers(n), rng.integers(n), 0.5 + 1.5 * rng.uniform()))
    network = build_network(edges)

    start = rng.integers(n)
    order = [start]
    seen = {start}
    i = 0
    while i < len(order):
        for _, w in network.incident(order[i]):
            if w not in seen:
                seen.add(w)
                order.append(w)
        i += 1
    keep = 1 + rng.integers(n - 1)
    return wired_quotient(network, order[:keep])


def _tree_key(sampler: str, wq: WiredQuotient, index: int, rng: Rng) -> ForestKey:
    return sample_tree(wq, sampler, rng).canonical_key()


def check_ust_law(name: str, wq: WiredQuotient, sampler: str, samples: int, rng: Rng,
                  tv_tolerance: float, threads: int = 1) -> StatReport:
    """Empirical tree law of `sampler` against the exact weighted law."""
    exact = enumerate_spanning_trees(wq.network, wq.boundary)
    keys = run_replicas(partial(_tree_key, sampler, wq), samples, rng, threads)
    report = distribution_report(f"ust_law[{name},{sampler}]", EmpiricalDistribution.from_samples(keys),
                                 exact, tv_tolerance=tv_tolerance)
    report.details["trees"] = len(exact)
    return report


def check_markov_identity(instances: int, rng: Rng) -> StatReport:
    """Markov updates along a random grid against states recomputed from scratch."""
    violations = 0
    for i in range(instances):
        r = rng.child(i)
        wq = random_small_quotient(r.child(0))
        grid = sorted((r.uniform() for _ in range(1 + r.integers(4))), reverse=True)
        grid = [1.0] + grid + [grid[-1], 0.0]
        process = sample_process(wq, 0.0, 1.0, r.child(1))
        for t, state in zip(grid, dynamics_states(process, grid)):
            if not state.same_as(ab_state(process, t)):
                violations += 1
                break
    return StatReport(test="markov_identity", statistic=float(violations), passed=violations == 0,
                      details={"instances": instances, "violations": violations})


def check_msf_identity(instances: int, rng: Rng) -> StatReport:
    """Kruskal under the excursion edge order against the first-entry tree."""
    violations = 0
    for i in range(instances):
        r = rng.child(i)
        wq = random_small_quotient(r.child(0))
        process = sample_process(wq, 0.0, 1.0 / wq.boundary_conductance, r.child(1))
        msf = interlacement_msf(process, 0.0)
        if msf.edge_ids != ab_state(process, 0.0).edge_ids():
            violations += 1
    return StatReport(test="msf_identity", statistic=float(violations), passed=violations == 0,
                      details={"instances": instances, "violations": violations})


def check_hitting(radius: int, samples: int, rng: Rng) -> List[StatReport]:
    """Hit rate of small sets on a wired Z^3 box against 1 - exp(-t Cap(K))."""
    generated = generate(FamilySpec(family="grid_box", d=3, radius=radius))
    wq = build_quotient(generated)
    origin = (0, 0, 0)
    cases: List[Tuple[List[Any], float]] = [
        ([origin], 0.05),
        ([origin], 0.2),
        ([origin, (1, 0, 0)], 0.1),
        ([(radius, 0, 0)], 0.1),
        ([origin, (0, 1, 0), (0, 0, 1)], 0.05),
    ]
    reports = []
    for j, (labels, t) in enumerate(cases):
        K = [wq.to_quotient(generated.network.vertex_of(label)) for label in labels]
        reports.append(hit_probability_test(wq, K, t, samples, rng.child(j)).to_report())
    return reports


def check_poisson_law(wq: WiredQuotient, window: float, rng: Rng) -> StatReport:
    """KS test of normalized inter-arrival gaps against Exp(1), plus the count z-score."""
    process = sample_process(wq, 0.0, window, rng)
    gaps = interarrival_times(process)
    statistic, p_value = ks_exponential_test(gaps, 1.0)
    expected = process.rate * window
    count_z = z_score(len(process), expected, math.sqrt(expected))
    return StatReport(
        test="poisson_arrivals",
        statistic=statistic,
        p_value=p_value,
        passed=p_value > 0.001 and abs(count_z) <= SIGMA_THRESHOLD,
        details={"arrivals": len(process), "expected": expected, "count_z": count_z},
    )


def counterexample_report(k: int, m: int, depths: Sequence[int], mc_depth: int, mc_samples: int,
                          rng: Rng, stretch: str = "reduced") -> StatReport:
    """
    Exact p(m, k) on each depth cut: at least the closed-form lower bound, at
    most the exact neighbour-visit probability of the same cut, monotone in
    depth, with a Monte Carlo cross-check at one depth and the regime flags.
    The closed-form upper bound is reported alongside.
    """
    lower, upper = p_mk_bounds(k, m)
    values = [p_mk(k, m, d, stretch) for d in depths]
    neighbour = [neighbour_visit_probability(k, m, d, stretch) for d in depths]
    within = all(lower <= p <= q for p, q in zip(values, neighbour))
    monotone = all(a <= b for a, b in zip(values, values[1:]))
    details = {
        "k": k, "m": m, "depths": list(depths),
        "p_mk": [str(p) for p in values], "p_mk_float": [float(p) for p in values],
        "neighbour_visit": [str(q) for q in neighbour],
        "lower": str(lower), "upper": str(upper),
        "within_bounds": within, "monotone": monotone,
        "within_closed_form_upper": all(p <= upper for p in values),
        **regime_flags(k, m),
    }
    agrees = True
    if mc_samples > 0:
        estimate, sigma = p_mk_monte_carlo(k, m, mc_depth, mc_samples, rng, stretch)
        exact = float(p_mk(k, m, mc_depth, stretch))
        sigma = max(sigma, bernoulli_sigma(exact, mc_samples))
        z = z_score(estimate, exact, sigma)
        agrees = abs(z) <= SIGMA_THRESHOLD
        details.update({"mc_depth": mc_depth, "mc_estimate": estimate, "mc_z": z, "mc_samples": mc_samples})
    return StatReport(
        test=f"counterexample[k={k},m={m}]",
        statistic=float(values[-1]) if values else None,
        passed=within and monotone and agrees,
        details=details,
    )


def _root_offspring(generated: GeneratedNetwork, wq: WiredQuotient, index: int, rng: Rng) -> int:
    return root_past_offspring(sample_tree(wq, "interlacement", rng), generated, wq)


def check_root_past_offspring(k: int, m: int, depth: int, samples: int, rng: Rng,
                              threads: int = 1) -> StatReport:
    """
    Mean number of the root's tree children in its past, over interlacement
    trees of a depth cut of the counterexample family, against its exact
    expectation. Whether the mean exceeds 1 is reported, not enforced: at
    shallow cuts the frontier shifts both families upward.
    """
    generated = generate(FamilySpec(family="counterexample_gkm", k=k, m=m, depth=depth, stretch="reduced"))
    wq = build_quotient(generated)
    exact = expected_root_past_offspring(generated, wq)
    counts = run_replicas(partial(_root_offspring, generated, wq), samples, rng, threads)
    mean, half_width = mc_mean_ci(counts)
    sigma = float(np.std(counts, ddof=1)) / math.sqrt(samples)
    z = z_score(mean, exact, sigma) if sigma > 0 else 0.0
    logger.info(f"Root past offspring k={k} m={m} depth={depth}: {mean:.4f} vs exact {exact:.4f} (z={z:.2f})")
    return StatReport(
        test=f"root_past_offspring[k={k},m={m}]",
        statistic=z,
        passed=abs(z) <= SIGMA_THRESHOLD,
        details={
            "k": k, "m": m, "depth": depth, "samples": samples,
            "mean": mean, "ci_low": mean - half_width, "ci_high": mean + half_width, "exact": exact,
            "exceeds_one": mean - half_width > 1, "at_most_one": mean + half_width <= 1,
            **regime_flags(k, m),
        },
    )


def _edge_pair(wq: WiredQuotient, s: float, index: int, rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
    process = sample_process(wq, 0.0, s, rng)
    later, earlier = dynamics_states(process, [s, 0.0])
    x_s = np.zeros(wq.network.num_edges, dtype=np.int8)
    x_0 = np.zeros(wq.network.num_edges, dtype=np.int8)
    x_s[sorted(later.edge_ids())] = 1
    x_0[sorted(earlier.edge_ids())] = 1
    return x_0, x_s


def stationarity_report(wq: WiredQuotient, x_0: np.ndarray, x_s: np.ndarray, s: float) -> StatReport:
    """
    Edge marginals at times 0 and s agree, and the lag-s covariance of each
    edge indicator is below 2 sum_v exp(-s Cap(v)) over its interior endpoints.

    `x_0` and `x_s` are (samples, edges) indicator arrays from coupled states.
    """
    x_0 = np.asarray(x_0, dtype=float)
    x_s = np.asarray(x_s, dtype=float)
    samples = len(x_0)
    p_0 = x_0.mean(axis=0)
    p_s = x_s.mean(axis=0)
    sigma = np.sqrt((p_0 * (1 - p_0) + p_s * (1 - p_s)) / samples)
    z = np.array([z_score(a, b, c) for a, b, c in zip(p_0, p_s, sigma)])

    single_caps = {v: capacity(wq, [v]) for v in wq.interior}
    centered = (x_0 - p_0) * (x_s - p_s)
    covariance = centered.mean(axis=0)
    covariance_sigma = centered.std(axis=0, ddof=1) / math.sqrt(samples)
    excess = []
    for e in range(wq.network.num_edges):
        ends = {v for v in wq.network.endpoints(e) if v != wq.boundary}
        bound = 2 * sum(math.exp(-s * single_caps[v]) for v in ends)
        excess.append(abs(covariance[e]) - bound - SIGMA_THRESHOLD * covariance_sigma[e])
    max_z = float(np.max(np.abs(z))) if len(z) else 0.0
    return StatReport(
        test="stationarity_and_mixing",
        statistic=max_z,
        passed=max_z <= SIGMA_THRESHOLD and max(excess, default=-1.0) <= 0,
        details={
            "s": s, "samples": samples,
            "marginals_0": p_0.tolist(), "marginals_s": p_s.tolist(),
            "covariance": covariance.tolist(), "max_covariance_excess": max(excess, default=0.0),
        },
    )


def check_stationarity(wq: WiredQuotient, s: float, samples: int, rng: Rng, threads: int = 1) -> StatReport:
    """Coupled states at times s and 0 from one process each, over independent replicas."""
    pairs = run_replicas(partial(_edge_pair, wq, s), samples, rng, threads)
    return stationarity_report(wq, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]), s)


def extrapolate_capacity(radii: Sequence[int], caps: Sequence[float]) -> Tuple[float, np.ndarray]:
    """
    Infinite-volume capacity from box capacities, fitting a polynomial in
    1/(R+1) of degree at most 2 and reading off its constant term.

    Returns the extrapolated value and the fitted coefficients (highest
    power first).
    """
    if len(radii) != len(caps) or not radii:
        raise ValueError("Need one capacity per radius")
    u = 1.0 / (np.asarray(radii, dtype=float) + 1.0)
    coefficients = np.polyfit(u, np.asarray(caps, dtype=float), min(2, len(radii) - 1))
    return float(coefficients[-1]), coefficients


def check_capacity_convergence(radii: Sequence[int], mc_samples: int, rng: Rng,
                               reference_tolerance: Optional[float] = None) -> StatReport:
    """
    Cap of the origin in wired Z^3 boxes does not increase with the radius,
    and its extrapolation to infinite volume matches a Monte Carlo escape
    estimate on the largest box once the fitted finite-size term is removed.

    With `reference_tolerance` set, the extrapolation must also lie within
    that relative distance of 6 (1 - p_return).
    """
    caps = []
    for radius in radii:
        wq = build_quotient(generate(FamilySpec(family="grid_box", d=3, radius=radius)))
        caps.append(capacity(wq, [wq.to_quotient(wq.base.vertex_of((0, 0, 0)))]))
    nonincreasing = all(b <= a * (1 + 1e-9) for a, b in zip(caps, caps[1:]))
    extrapolated, coefficients = extrapolate_capacity(radii, caps)
    finite_size = float(np.polyval(coefficients, 1.0 / (radii[-1] + 1.0))) - extrapolated

    origin = wq.to_quotient(wq.base.vertex_of((0, 0, 0)))
    c_origin = float(wq.network.vertex_conductance[origin])
    escape_counts = hitting_split(wq.network, origin, {origin, wq.boundary}, rng, mc_samples)
    finished = sum(escape_counts.values())
    escape = escape_counts.get(wq.boundary, 0) / finished
    monte_carlo = c_origin * escape - finite_size
    sigma = c_origin * bernoulli_sigma(caps[-1] / c_origin, finished)
    z = z_score(monte_carlo, extrapolated, sigma)

    reference_gap = extrapolated / Z3_ORIGIN_CAPACITY - 1
    near_reference = reference_tolerance is None or abs(reference_gap) <= reference_tolerance
    logger.info(f"Extrapolated Cap(origin) {extrapolated:.4f} from radii {list(radii)} (z={z:.2f})")
    return StatReport(
        test="capacity_convergence",
        statistic=z,
        passed=nonincreasing and abs(z) <= SIGMA_THRESHOLD and near_reference,
        details={"radii": list(radii), "capacities": caps, "extrapolated": extrapolated,
                 "finite_size": finite_size, "monte_carlo": monte_carlo, "sigma": sigma,
                 "reference": Z3_ORIGIN_CAPACITY, "reference_gap": reference_gap,
                 "nonincreasing": nonincreasing, "near_reference": near_reference},
    )


def check_random_paths(depth: int, samples: int, rng: Rng) -> List[StatReport]:
    """Random-path bound: equality on a binary tree, strictly below capacity along a ray in Z^3."""
    tree = generate(FamilySpec(family="regular_tree", branching=2, depth=depth))
    wq = build_quotient(tree)
    root = wq.to_quotient(tree.designated["root"])
    exact = capacity(wq, [root])
    result = random_path_capacity_bound(wq, [root], PathDistribution.descending(wq, root), samples, rng.child(0))
    tree_report = StatReport(
        test="random_paths[binary_tree]",
        statistic=result.bound,
        passed=abs(result.bound - exact) <= 0.01 * exact,
        details={"capacity": exact, "closed_form": 1 / (1 - 2.0 ** -depth), "bound": result.bound},
    )

    # a single coordinate ray in Z^3: overlap is the whole path, a strict lower bound
    grid = generate(FamilySpec(family="grid_box", d=3, radius=3))
    wq = build_quotient(grid)
    origin = wq.to_quotient(grid.designated["origin"])
    exact = capacity(wq, [origin])
    ray = random_path_capacity_bound(wq, [origin], PathDistribution.descending(wq, origin, mode="first"),
                                     samples, rng.child(1))
    grid_report = StatReport(
        test="random_paths[z3_greedy_ray]",
        statistic=ray.bound,
        passed=ray.ci_high < exact,
        details={"capacity": exact, "bound": ray.bound, "ci_low": ray.ci_low, "ci_high": ray.ci_high,
                 "path_length": ray.sum_of_squares},
    )
    return [tree_report, grid_report]


def run_suite(scale: str, rng: Rng, threads: int = 1) -> List[StatReport]:
    """Run every invariant check at `scale` ("quick" or "full")."""
    params = SCALES[scale]
    logger.info(f"Running the {scale} invariant suite")
    reports: List[StatReport] = []
    quotients = {"K4": complete_quotient(4), "C5": cycle_quotient(5)}
    for j, (name, wq) in enumerate(quotients.items()):
        for k, sampler in enumerate(("aldous_broder", "wilson", "interlacement")):
            reports.append(check_ust_law(name, wq, sampler, params.ust_samples, rng.child(0).child(3 * j + k),
                                         params.ust_tv_tolerance, threads))
    reports.append(check_markov_identity(params.coupled_instances, rng.child(1)))
    reports.append(check_msf_identity(params.coupled_instances, rng.child(2)))
    reports.extend(check_hitting(params.hit_radius, params.hit_samples, rng.child(3)))
    reports.append(check_poisson_law(quotients["C5"], params.poisson_window, rng.child(4)))
    for j, m in enumerate((1, 6)):
        reports.append(counterexample_report(4, m, params.counterexample_depths, params.counterexample_mc_depth,
                                             params.counterexample_mc_samples, rng.child(5).child(j)))
        reports.append(check_root_past_offspring(4, m, params.offspring_depth, params.offspring_samples,
                                                 rng.child(9).child(j), threads))
    reports.append(check_stationarity(quotients["C5"], 0.5, params.dynamics_samples, rng.child(6), threads))
    reports.append(check_capacity_convergence(params.capacity_radii, params.capacity_mc_samples, rng.child(7),
                                              params.capacity_reference_tolerance))
    reports.extend(check_random_paths(params.path_depth, params.path_samples, rng.child(8)))

    failed = [r.test for r in reports if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} of {len(reports)} checks failed: {', '.join(failed)}")
    else:
        logger.info(f"All {len(reports)} checks passed")
    return reports
