import numpy as np
import pytest

from app.core.exceptions import EmptyWalkError
from app.core.network import OrientedEdge, build_network, wired_quotient
from app.core.walks import (
    TerminationCause,
    Walk,
    boundary_excursion,
    cover_walk,
    first_entry_edges,
    hitting_split,
    loop_erase,
    random_walk,
)
from app.models.family import FamilySpec
from app.services.families import build_quotient, generate
from app.services.potential import DirichletProblem, harmonic_solve
from app.services.stats import EmpiricalDistribution, bernoulli_sigma, chi_squared_test
from app.utils.rng import Rng


def test_forced_move():
    """On a single unit edge the walk from 0 to {1} is always 0, e, 1."""
    network = build_network([(0, 1, 1)])
    rng = Rng(1)
    for _ in range(20):
        walk = random_walk(network, 0, {1}, rng)
        assert walk.vertices == [0, 1]
        assert walk.edges == [0]
        assert walk.cause == TerminationCause.HIT_TARGET


def test_transition_law():
    """With conductances 1 and 3 the first step goes to the heavier side 3/4 of the time."""
    network = build_network([(0, 1, 1.0), (0, 2, 3.0)])
    samples = 40_000
    counts = hitting_split(network, 0, {1, 2}, Rng(2), samples)
    frequency = counts[2] / samples
    assert abs(frequency - 0.75) <= 3 * bernoulli_sigma(0.75, samples)


def test_boundary_excursion_over_parallel_edges():
    """Quotient {0, ∂} with two parallel edges: the four (in, out) edge pairs are equally likely."""
    network = build_network([(0, 1, 1), (0, 1, 1)])
    wq = wired_quotient(network, [0])
    rng = Rng(3)
    keys = []
    for _ in range(8_000):
        walk = boundary_excursion(wq, rng)
        assert walk.vertices == [wq.boundary, 0, wq.boundary]
        assert walk.cause == TerminationCause.RETURNED
        keys.append(tuple(walk.edges))

    emp = EmpiricalDistribution.from_samples(keys)
    exact = {(i, j): 0.25 for i in range(2) for j in range(2)}
    _, p_value = chi_squared_test(emp, exact)
    assert p_value > 0.001


def test_step_cap_is_flagged():
    network = build_network([(v, (v + 1) % 4, 1) for v in range(4)])
    walk = random_walk(network, 0, set(), Rng(4), step_cap=10)
    assert walk.truncated
    assert len(walk) == 10
    assert walk.check_incidence(network)


def test_cover_walk_visits_everything():
    network = build_network([(v, v + 1, 1) for v in range(6)])
    walk = cover_walk(network, 3, Rng(5))
    assert set(walk.vertices) == set(range(7))
    assert walk.cause == TerminationCause.COVERED


def test_loop_erase_single_loop():
    """a,b,a,c -> a,c"""
    walk = Walk([0, 1, 0, 2], [10, 10, 12])
    erased = loop_erase(walk)
    assert erased.vertices == [0, 2]
    assert erased.edges == [12]


def test_loop_erase_simple_path_unchanged():
    walk = Walk([0, 1, 2], [10, 11])
    erased = loop_erase(walk)
    assert erased.vertices == [0, 1, 2]
    assert erased.edges == [10, 11]


def test_loop_erase_nested_loops():
    """a,b,c,b,d,a,e -> a,e"""
    walk = Walk([0, 1, 2, 1, 3, 0, 4], [10, 11, 12, 13, 14, 15])
    erased = loop_erase(walk)
    assert erased.vertices == [0, 4]
    assert erased.edges == [15]


def test_loop_erase_empty():
    with pytest.raises(EmptyWalkError):
        loop_erase(Walk([]))


def test_first_entries_along_a_path():
    walk = Walk([0, 1, 2], [5, 6])
    assert first_entry_edges([walk]) == {
        1: OrientedEdge(5, 0, 1),
        2: OrientedEdge(6, 1, 2),
    }


def test_first_entries_ignore_revisits():
    """a->b->a->c: the return to a records nothing."""
    walk = Walk([0, 1, 0, 2], [5, 5, 7])
    assert first_entry_edges([walk]) == {
        1: OrientedEdge(5, 0, 1),
        2: OrientedEdge(7, 0, 2),
    }


def test_first_entries_respect_walk_order():
    """[a->b], [c->b->d]: b keeps its entry from the first walk."""
    walks = [Walk([0, 1], [5]), Walk([2, 1, 3], [6, 7])]
    entries = first_entry_edges(walks)
    assert entries == {
        1: OrientedEdge(5, 0, 1),
        3: OrientedEdge(7, 1, 3),
    }
    assert 2 not in entries


@pytest.fixture
def path_quotient():
    """Path 0-1-2-3 with both ends wired: quotient edges ∂-1, 1-2, 2-∂ on ids 0, 1, ∂=2."""
    network = build_network([(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    return wired_quotient(network, [1, 2])


def test_excursion_visits_both_path_vertices_half_the_time(path_quotient):
    rng = Rng(6)
    samples = 20_000
    both = sum(1 for _ in range(samples) if {0, 1} <= set(boundary_excursion(path_quotient, rng).vertices))
    assert abs(both / samples - 0.5) <= 3 * bernoulli_sigma(0.5, samples)


def test_distinct_vertices_per_excursion_match_absorption_solve():
    """
    E[distinct vertices] = sum over x of P(excursion visits x), and
    P(visit x) averages the hit-x-before-∂ potential over the first step.
    """
    wq = build_quotient(generate(FamilySpec(family="grid_box", d=2, radius=1)))
    network = wq.network
    c_boundary = wq.boundary_conductance
    exact = 0.0
    for x in wq.interior:
        voltage = harmonic_solve(DirichletProblem.of(network, [x], [wq.boundary]))
        exact += sum(network.conductance[e] * voltage[y] for e, y in network.incident(wq.boundary)) / c_boundary

    rng = Rng(7)
    counts = np.array([len(set(boundary_excursion(wq, rng).vertices) - {wq.boundary}) for _ in range(20_000)])
    sigma = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - exact) <= 3 * sigma


def test_loop_erase_is_idempotent_and_keeps_walk_steps():
    network = build_network([(0, 1, 1), (1, 2, 1), (2, 0, 1), (2, 3, 2), (3, 1, 1), (3, 4, 1), (1, 1, 1)])
    rng = Rng(8)
    for _ in range(200):
        walk = random_walk(network, 0, {4}, rng)
        erased = loop_erase(walk)
        again = loop_erase(erased)
        assert again.vertices == erased.vertices
        assert again.edges == erased.edges
        assert len(set(erased.vertices)) == len(erased.vertices)
        assert erased.start == walk.start
        assert erased.end == walk.end

        steps = iter(walk.oriented_steps())
        for step in erased.oriented_steps():
            assert any(s == step for s in steps)
