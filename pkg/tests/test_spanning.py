import unittest

import pytest

from app.core.exceptions import ForestInvariantError
from app.core.network import OrientedEdge, build_network, wired_quotient
from app.core.spanning import (
    OrientedForest,
    aldous_broder,
    enumerate_spanning_trees,
    past,
    trunk_and_ends_stats,
    wilson,
)
from app.services.stats import EmpiricalDistribution, distribution_report
from app.utils.rng import Rng


def _complete(n):
    return build_network([(a, b, 1.0) for a in range(n) for b in range(a + 1, n)])


def test_path_has_one_tree():
    """P3 rooted at 2: both edges point toward the root, for either sampler."""
    network = build_network([(0, 1, 1), (1, 2, 1)])
    expected = OrientedForest({0: OrientedEdge(0, 0, 1), 1: OrientedEdge(1, 1, 2)}, [2])
    rng = Rng(1)
    for _ in range(5):
        assert aldous_broder(network, 2, rng) == expected
        assert wilson(network, 2, rng) == expected


def test_enumeration_of_k4():
    """Cayley: K4 has 16 spanning trees, each with probability 1/16."""
    law = enumerate_spanning_trees(_complete(4), 3)
    assert len(law) == 16
    assert all(p == pytest.approx(1 / 16) for p in law.values())


def test_enumeration_weights_by_conductance():
    """In a triangle with one heavy edge the trees using it carry more weight."""
    network = build_network([(0, 1, 2.0), (1, 2, 1.0), (0, 2, 1.0)])
    law = enumerate_spanning_trees(network, 2)
    assert len(law) == 3
    # trees are {01,12}: 2, {01,02}: 2, {12,02}: 1
    assert sorted(law.values()) == pytest.approx([0.2, 0.4, 0.4])


def test_enumeration_limit():
    with pytest.raises(ValueError):
        enumerate_spanning_trees(_complete(8), 0, limit=100)


class TestSamplerLaws(unittest.TestCase):
    """Empirical tree laws against the exact enumeration."""

    samples = 16_000

    def _check(self, network, root, sampler, seed):
        exact = enumerate_spanning_trees(network, root)
        rng = Rng(seed)
        keys = [sampler(network, root, rng.child(i)).canonical_key() for i in range(self.samples)]
        report = distribution_report("law", EmpiricalDistribution.from_samples(keys), exact, tv_tolerance=0.03)
        self.assertTrue(report.passed, report.details)

    def test_aldous_broder_k4(self):
        self._check(_complete(4), 3, aldous_broder, 11)

    def test_wilson_k4(self):
        self._check(_complete(4), 3, wilson, 12)

    def test_wilson_weighted_triangle(self):
        network = build_network([(0, 1, 2.0), (1, 2, 1.0), (0, 2, 1.0)])
        self._check(network, 2, wilson, 13)


def test_samples_are_valid_trees():
    network = _complete(5)
    rng = Rng(7)
    for _ in range(20):
        tree = aldous_broder(network, 0, rng)
        tree.validate(network)
        assert len(tree) == 5
        assert len(tree.edge_ids()) == 4
        assert all(tree.root_of(v) == 0 for v in range(5))


def test_wilson_with_root_set():
    """Rooting at the boundary of a quotient gives a spanning tree of the quotient."""
    network = build_network([(v, v + 1, 1) for v in range(5)])
    wq = wired_quotient(network, [1, 2, 3])
    forest = wilson(wq.network, [wq.boundary], Rng(8))
    forest.validate(wq.network)
    assert forest.roots == frozenset([wq.boundary])
    assert len(forest.parents) == 3

    forest = wilson(network, [0, 5], Rng(9))
    assert forest.roots == frozenset([0, 5])
    assert len(forest.parents) == 4


def test_past_in_a_star():
    star = OrientedForest({v: OrientedEdge(v - 1, v, 0) for v in range(1, 4)}, [0])
    assert past(star, 0) == frozenset(range(4))
    assert past(star, 2) == frozenset([2])


def test_past_along_a_path():
    """a -> b -> c rooted at c: past(b) = {a, b}."""
    forest = OrientedForest({0: OrientedEdge(0, 0, 1), 1: OrientedEdge(1, 1, 2)}, [2])
    assert past(forest, 1) == frozenset([0, 1])
    assert forest.depth(0) == 2


def test_validate_rejects_cycles():
    forest = OrientedForest({0: OrientedEdge(0, 0, 1), 1: OrientedEdge(1, 1, 0)}, [2])
    assert not forest.is_valid()
    with pytest.raises(ForestInvariantError):
        forest.validate()


def test_validate_rejects_wrong_edge():
    network = build_network([(0, 1, 1), (1, 2, 1)])
    forest = OrientedForest({0: OrientedEdge(1, 0, 1), 1: OrientedEdge(1, 1, 2)}, [2])
    with pytest.raises(ForestInvariantError):
        forest.validate(network)


def test_trunk_and_ends_stats():
    """Two components: one per root, sizes summing to the vertex count."""
    forest = OrientedForest(
        {
            1: OrientedEdge(0, 1, 0),
            2: OrientedEdge(1, 2, 0),
            3: OrientedEdge(2, 3, 0),
            5: OrientedEdge(3, 5, 4),
        },
        [0, 4],
    )
    stats = trunk_and_ends_stats(forest)
    assert [s["root"] for s in stats] == [0, 4]
    assert sum(s["size"] for s in stats) == 6
    assert stats[0]["max_past_size"] == 4
    assert stats[0]["depth_profile"] == [1, 3]
    assert stats[1]["depth_profile"] == [1, 1]


def test_trunk_and_ends_stats_with_boundary():
    network = build_network([(v, v + 1, 1) for v in range(4)])
    wq = wired_quotient(network, [1, 2, 3])
    forest = wilson(wq.network, wq.boundary, Rng(10))
    (stats,) = trunk_and_ends_stats(forest, wq)
    assert stats["size"] == 4
    assert stats["boundary_attachment_count"] == 2
    assert sum(stats["branch_sizes"]) == 3
