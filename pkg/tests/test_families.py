from fractions import Fraction

import pytest
from pydantic import ValidationError

from app.core.exceptions import DisconnectedNetworkError, VertexBudgetError
from app.core.network import OrientedEdge, build_network
from app.core.spanning import OrientedForest
from app.core.verification import check_root_past_offspring, counterexample_report
from app.models.family import FamilySpec, QuotientSpec
from app.services.families import (
    as_label,
    branching_survival,
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
from app.services.stats import bernoulli_sigma
from app.utils.rng import Rng
from app.utils.serialization import network_to_record, write_edge_list


def test_free_grid_box():
    generated = generate(FamilySpec(family="grid_box", d=2, radius=1, boundary="free"))
    assert generated.network.num_vertices == 9
    assert generated.network.num_edges == 12
    assert generated.frontier == frozenset()


def test_wired_grid_box():
    """Each of the 12 outside neighbours of the 3x3 box joins it by one edge."""
    generated = generate(FamilySpec(family="grid_box", d=2, radius=1))
    assert generated.network.num_vertices == 9 + 12
    assert generated.network.num_edges == 24
    assert len(generated.frontier) == 12

    wq = build_quotient(generated)
    assert wq.network.num_vertices == 10
    assert wq.boundary_conductance == 12.0
    assert wq.to_quotient(generated.designated["origin"]) != wq.boundary


def test_joined_grids_and_paths():
    joined = generate(FamilySpec(family="joined_grids", d=2, radius=1))
    assert joined.network.num_vertices == 2 * (9 + 12)
    assert joined.network.num_edges == 2 * 24 + 1

    with_paths = generate(FamilySpec(family="grid_with_paths", d=2, radius=2, path_length=3))
    assert with_paths.network.num_vertices == 25 + 20 + 6
    assert with_paths.network.num_edges == 40 + 20 + 6
    assert len(with_paths.frontier) == 22


def test_small_families():
    assert generate(FamilySpec(family="complete", size=4)).network.num_edges == 6
    assert generate(FamilySpec(family="cycle", size=5)).network.num_edges == 5
    assert generate(FamilySpec(family="path", size=5)).network.num_edges == 4


def test_stretched_tree_explicit():
    """k = 2, depth 2: 10 tree vertices plus 3 * 1 + 6 * 3 path vertices."""
    generated = generate(FamilySpec(family="stretched_tree", k=2, depth=2, boundary="free"))
    assert generated.network.num_vertices == 31
    assert generated.network.num_edges == 30
    assert set(generated.exact_conductance) == {Fraction(1)}
    assert len(generated.tree_vertices) == 10


def test_stretched_tree_reduced():
    generated = generate(FamilySpec(family="stretched_tree", k=2, depth=2, boundary="free", stretch="reduced"))
    assert generated.network.num_vertices == 10
    assert generated.network.num_edges == 9
    assert sorted(generated.exact_conductance) == [Fraction(1, 4)] * 6 + [Fraction(1, 2)] * 3


def test_counterexample_tree_vertex_degree():
    """Tree vertices above the depth cap carry 3 tree edges and m attachment edges."""
    m = 2
    generated = generate(FamilySpec(family="counterexample_gkm", k=2, m=m, depth=3))
    network = generated.network
    for address, v in generated.tree_vertices.items():
        if len(address) < 3:
            assert len(network.incident(v)) == 3 + m


def test_vertex_budget():
    with pytest.raises(VertexBudgetError):
        generate(FamilySpec(family="grid_box", d=3, radius=5, vertex_budget=100))


def test_family_spec_validation():
    with pytest.raises(ValidationError):
        FamilySpec(family="complete")
    with pytest.raises(ValidationError):
        FamilySpec(family="cycle", size=2)
    with pytest.raises(ValidationError):
        FamilySpec(family="grid_with_paths", radius=1)
    with pytest.raises(ValidationError):
        FamilySpec(family="torus")
    with pytest.raises(ValidationError):
        QuotientSpec(mode="retain")
    with pytest.raises(ValidationError, match="needs a path"):
        FamilySpec(family="network_file")


def test_retain_labels_from_json():
    generated = generate(FamilySpec(family="grid_box", d=2, radius=1))
    wq = build_quotient(generated, QuotientSpec(mode="retain", vertices=[[0, 0], [1, 0]]))
    assert wq.network.num_vertices == 3
    assert wq.network.labels[:2] == [(0, 0), (1, 0)]
    assert as_label([[1, 2], 3]) == ((1, 2), 3)


def test_p_mk_bounds():
    assert p_mk_bounds(4, 1) == (Fraction(4, 7), Fraction(3, 4))
    assert p_mk_bounds(4, 6)[1] == Fraction(1, 3)


def test_regime_flags():
    assert regime_flags(4, 1) == {"supercritical": True, "critical_or_subcritical": False}
    assert regime_flags(4, 6) == {"supercritical": False, "critical_or_subcritical": True}


def test_p_mk_at_depth_two():
    """
    k = 4, depth 2: the edge up to v has conductance 1/4 and the wired
    side below u has 1/8 + 1/24 (m = 1) or 1/8 + 1/4 (m = 6).
    """
    assert p_mk(4, 1, 2) == Fraction(3, 5)
    assert p_mk(4, 6, 2) == Fraction(2, 5)


def test_neighbour_visit_at_depth_two():
    assert neighbour_visit_probability(4, 1, 2) == Fraction(9, 10)
    assert neighbour_visit_probability(4, 6, 2) == Fraction(3, 5)


def test_explicit_and_reduced_agree():
    assert p_mk(2, 1, 2, "explicit") == p_mk(2, 1, 2, "reduced")


def test_p_mk_rejects_shallow_cut():
    with pytest.raises(ValueError):
        p_mk(4, 1, 1)
    with pytest.raises(ValueError):
        p_mk(0, 1, 3)


def test_p_mk_within_bounds_and_monotone():
    for k, m in [(4, 1), (4, 6)]:
        report = counterexample_report(k, m, [2, 3, 4], mc_depth=2, mc_samples=0, rng=Rng(1))
        assert report.passed, report.details
        assert report.details["within_bounds"]
        assert report.details["monotone"]


def test_p_mk_monte_carlo():
    estimate, sigma = p_mk_monte_carlo(4, 1, 2, 4_000, Rng(2))
    assert abs(estimate - 0.6) <= 3 * max(sigma, bernoulli_sigma(0.6, 4_000))


def test_branching_survival():
    assert branching_survival(2, 0.0, 10) == 0.0
    assert branching_survival(2, 0.3, 0) == 1.0
    # extinction probability ((1 - p) / p)^2 = 9/16
    assert branching_survival(2, 4 / 7, 500) == pytest.approx(7 / 16, abs=1e-6)
    # critical: survival decays like 4 / n
    assert branching_survival(2, 0.5, 1_000) < 0.01
    with pytest.raises(ValueError):
        branching_survival(2, 1.5, 10)
    with pytest.raises(ValueError):
        branching_survival(0, 0.5, 10)


def test_root_past_offspring():
    generated = generate(FamilySpec(family="regular_tree", branching=2, depth=2))
    wq = build_quotient(generated)
    root = wq.to_quotient(generated.tree_vertices[()])
    left = wq.to_quotient(generated.tree_vertices[(0,)])
    right = wq.to_quotient(generated.tree_vertices[(1,)])
    boundary = wq.boundary

    both = OrientedForest(
        {left: OrientedEdge(0, left, root), right: OrientedEdge(1, right, root),
         root: OrientedEdge(2, root, boundary)},
        [boundary],
    )
    assert root_past_offspring(both, generated, wq) == 2

    one = OrientedForest(
        {left: OrientedEdge(0, left, root), right: OrientedEdge(3, right, boundary),
         root: OrientedEdge(2, root, boundary)},
        [boundary],
    )
    assert root_past_offspring(one, generated, wq) == 1


@pytest.mark.parametrize("m, exact", [(1, Fraction(216, 155)), (6, Fraction(324, 305))])
def test_expected_root_past_offspring_at_depth_two(m, exact):
    generated = generate(FamilySpec(family="counterexample_gkm", k=4, m=m, depth=2, stretch="reduced"))
    wq = build_quotient(generated)
    assert expected_root_past_offspring(generated, wq) == pytest.approx(float(exact))


def test_root_past_offspring_check_matches_the_exact_mean():
    report = check_root_past_offspring(4, 1, 2, 500, Rng(12))
    assert report.passed, report.details
    assert report.details["ci_low"] <= report.details["mean"] <= report.details["ci_high"]
    assert report.details["exact"] == pytest.approx(216 / 155)
    assert report.details["exceeds_one"]


def test_network_file_family(tmp_path):
    network = build_network([(0, 1, 2.0), (1, 2, 0.5), (2, 0, 1.0)])
    text_file = tmp_path / "triangle.txt"
    text_file.write_text(write_edge_list(network))
    json_file = tmp_path / "triangle.json"
    json_file.write_text(network_to_record(network).model_dump_json())

    for path in (text_file, json_file):
        generated = generate(FamilySpec(family="network_file", path=str(path)))
        assert generated.network.num_vertices == 3
        assert generated.exact_conductance == [Fraction(2), Fraction(1, 2), Fraction(1)]
        wq = build_quotient(generated, QuotientSpec(mode="retain", vertices=[0, 1]))
        assert wq.network.num_vertices == 3


def test_network_file_family_checks(tmp_path):
    disconnected = tmp_path / "two_pieces.txt"
    disconnected.write_text("0 1\n2 3\n")
    with pytest.raises(DisconnectedNetworkError):
        generate(FamilySpec(family="network_file", path=str(disconnected)))

    path = tmp_path / "path.txt"
    path.write_text("".join(f"{i} {i + 1}\n" for i in range(10)))
    with pytest.raises(VertexBudgetError):
        generate(FamilySpec(family="network_file", path=str(path), vertex_budget=5))
