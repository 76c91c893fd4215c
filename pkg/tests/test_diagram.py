"""Diagrams, consistent tuple spaces, stabilization tables, and the assembly
pipeline, cross-checked against brute-force filters and closure levels."""

from __future__ import annotations

import json
from fractions import Fraction

import numpy as np
import pytest

import oracles
from conftest import cycle_space, d_of, med_of, path_space, seeded_tree
from coarsemedians import (
    BudgetError,
    ControlledMap,
    DEFAULT_BUDGET,
    FiniteMetricSpace,
    FormatError,
    MedianDiagram,
    Shape,
    ToolkitError,
    UCDiagram,
    assemble_median_cone,
    build_cone,
    certify_coarse_equivalence,
    compat_order_defect,
    cone_defect,
    diagram_from_json,
    diagram_to_json,
    factor_through_tuples,
    graph_median_op,
    median_diagram_from_json,
    median_diagram_to_json,
    median_tuple_closure,
    one_median_op,
    rips_tuple_apex,
    tuple_space,
    tuple_stabilization,
)


def collapse_diagram():
    """P3 mapped onto P2 by merging the first two points."""
    p3, p2 = path_space(3), path_space(2)
    f = ControlledMap(p3, p2, [0, 0, 1], name="c")
    shape = Shape(("X", "Y"), (("X", "Y", "c"),))
    return UCDiagram(shape, {"X": p3, "Y": p2}, {"c": f})


def chain_diagram():
    """P5 folded onto P3 around its midpoint."""
    p5, p3 = path_space(5), path_space(3)
    fold = ControlledMap(p5, p3, [2, 1, 0, 1, 2], name="fold")
    shape = Shape(("X", "Y"), (("X", "Y", "fold"),))
    return UCDiagram(shape, {"X": p5, "Y": p3}, {"fold": fold})


def product_diagram(a, b):
    shape = Shape(("L", "R"))
    return UCDiagram(shape, {"L": a, "R": b}, {})


def oracle_arrows(diagram):
    return [(i, j, mp.table) for _, i, j, mp in diagram.arrows_typed()]


def oracle_dists(diagram):
    return [s.d_at for s in diagram.spaces]


# ---------------------------------------------------------------------------
# shapes and diagram validation


def test_shape_rejects_bad_inputs():
    with pytest.raises(FormatError):
        Shape(())
    with pytest.raises(FormatError):
        Shape(("X", "X"))
    with pytest.raises(FormatError):
        Shape(("X", "Y"), (("X", "Y", "a"), ("Y", "X", "a")))
    with pytest.raises(FormatError):
        Shape(("X",), (("X", "Z", "a"),))


def test_diagram_rejects_mismatched_pieces():
    p3, p2 = path_space(3), path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "c"),))
    with pytest.raises(FormatError):
        UCDiagram(shape, {"X": p3}, {"c": ControlledMap(p3, p2, [0, 0, 1])})
    with pytest.raises(FormatError):
        UCDiagram(shape, {"X": p3, "Y": p2}, {})
    with pytest.raises(FormatError):
        UCDiagram(shape, {"X": p3, "Y": p2},
                  {"c": ControlledMap(p2, p2, [0, 1])})
    wrong_target = ControlledMap(p3, path_space(4), [0, 0, 1])
    with pytest.raises(FormatError):
        UCDiagram(shape, {"X": p3, "Y": p2}, {"c": wrong_target})


def test_diagram_common_control_dominates_every_arrow():
    diagram = chain_diagram()
    for _, _, _, mp in diagram.arrows_typed():
        for t, bound in mp.control.samples:
            assert diagram.common_control(t) >= bound


# ---------------------------------------------------------------------------
# cones


def test_cone_defect_without_arrows_is_zero():
    diagram = product_diagram(path_space(3), cycle_space(4))
    apex = path_space(3)
    legs = {"L": ControlledMap.identity(apex),
            "R": ControlledMap(apex, cycle_space(4), [0, 1, 2])}
    assert cone_defect(diagram, legs) == 0


def test_cone_defect_measures_commutation_failure():
    diagram = collapse_diagram()
    p3, p2 = diagram.spaces
    exact = {"X": ControlledMap.identity(p3),
             "Y": ControlledMap(p3, p2, [0, 0, 1])}
    assert cone_defect(diagram, exact) == 0
    bent = {"X": ControlledMap.identity(p3),
            "Y": ControlledMap(p3, p2, [1, 0, 1])}
    assert cone_defect(diagram, bent) == 1
    cone = build_cone(diagram, bent)
    assert cone.defect == 1
    assert cone.apex is p3


def test_cone_rejects_legs_from_different_apexes():
    diagram = collapse_diagram()
    p3, p2 = diagram.spaces
    with pytest.raises(FormatError):
        cone_defect(diagram, {"X": ControlledMap.identity(p3),
                              "Y": ControlledMap(p2, p2, [0, 1])})


# ---------------------------------------------------------------------------
# tuple spaces


def test_collapse_tuples_at_zero_are_the_graph_of_the_map():
    diagram = collapse_diagram()
    ts = tuple_space(diagram, 0)
    assert ts.count == 3
    assert ts.members == ((0, 0), (1, 0), (2, 1))
    assert ts.projection_defect == 0
    expected = oracles.consistent_tuples([3, 2], oracle_arrows(diagram),
                                         oracle_dists(diagram), 0)
    assert list(ts.members) == expected


def test_tuple_members_match_brute_force_filter():
    diagrams = (collapse_diagram(), chain_diagram())
    for diagram in diagrams:
        sizes = [s.n for s in diagram.spaces]
        for kappa in (0, 1, 2, Fraction(3, 2)):
            ts = tuple_space(diagram, kappa)
            expected = oracles.consistent_tuples(sizes, oracle_arrows(diagram),
                                                 oracle_dists(diagram), kappa)
            assert list(ts.members) == expected
            if not ts.empty:
                assert ts.projection_defect <= kappa


def test_tuple_metric_is_the_max_over_coordinates():
    diagram = chain_diagram()
    ts = tuple_space(diagram, 1)
    dists = oracle_dists(diagram)
    for s, a in enumerate(ts.members):
        for t, b in enumerate(ts.members):
            assert ts.space.d_at(s, t) == oracles.max_metric(dists, a, b)


def test_no_arrow_tuples_are_the_full_product():
    a, b = path_space(3), cycle_space(4)
    ts = tuple_space(product_diagram(a, b), 0)
    assert ts.count == 12
    prod = FiniteMetricSpace.linf_product([a, b])
    assert ts.space.points == prod.points
    assert np.array_equal(ts.space.scaled().matrix, prod.scaled().matrix)


def test_contradictory_arrows_empty_the_tuple_space():
    p2 = path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "same"), ("X", "Y", "swap")))
    diagram = UCDiagram(shape, {"X": p2, "Y": p2},
                        {"same": ControlledMap(p2, p2, [0, 1]),
                         "swap": ControlledMap(p2, p2, [1, 0])})
    ts = tuple_space(diagram, 0)
    assert ts.empty
    assert ts.count == 0
    full = tuple_space(diagram, 1)
    assert full.count == 4


def test_tuple_space_respects_the_candidate_budget():
    diagram = product_diagram(path_space(6), path_space(6))
    with pytest.raises(BudgetError):
        tuple_space(diagram, 0, DEFAULT_BUDGET.with_cap(10))


def test_member_position_rejects_outsiders():
    ts = tuple_space(collapse_diagram(), 0)
    assert ts.member_position((1, 0)) == 1
    with pytest.raises(FormatError):
        ts.member_position((2, 0))


# ---------------------------------------------------------------------------
# factoring cones through tuple spaces


def test_exact_cone_factors_through_the_graph_tuples():
    diagram = collapse_diagram()
    p3, p2 = diagram.spaces
    cone = build_cone(diagram, {"X": ControlledMap.identity(p3),
                                "Y": ControlledMap(p3, p2, [0, 0, 1])})
    fact = factor_through_tuples(diagram, cone)
    assert fact.kappa == 0
    assert fact.map.table == (0, 1, 2)
    for proj, leg in zip(fact.tuple_space.projections, cone.legs):
        assert np.array_equal(proj.image_indices()[np.array(fact.map.table)],
                              leg.image_indices())


def test_bent_cone_factors_at_its_own_defect():
    diagram = collapse_diagram()
    p3, p2 = diagram.spaces
    cone = build_cone(diagram, {"X": ControlledMap.identity(p3),
                                "Y": ControlledMap(p3, p2, [1, 0, 1])})
    fact = factor_through_tuples(diagram, cone)
    assert fact.kappa == cone.defect == 1
    ts = fact.tuple_space
    for z in range(p3.n):
        assert ts.members[fact.map.table[z]] == (z, [1, 0, 1][z])


def test_infinite_cone_defect_cannot_factor():
    two = FiniteMetricSpace.from_edges(range(2), [])   # two components
    shape = Shape(("X", "Y"), (("X", "Y", "a"),))
    diagram = UCDiagram(shape, {"X": two, "Y": two},
                        {"a": ControlledMap(two, two, [0, 1])})
    cone = build_cone(diagram, {"X": ControlledMap.identity(two),
                                "Y": ControlledMap(two, two, [1, 0])})
    assert cone.defect == oracles.INF
    with pytest.raises(ToolkitError):
        factor_through_tuples(diagram, cone)


# ---------------------------------------------------------------------------
# stabilization across consistency levels


def identity_diagram(space):
    shape = Shape(("X", "Y"), (("X", "Y", "id"),))
    ident = ControlledMap(space, space, list(range(space.n)), name="id")
    return UCDiagram(shape, {"X": space, "Y": space}, {"id": ident})


def test_stabilization_on_the_identity_diagram():
    table = tuple_stabilization(identity_diagram(path_space(3)), (0, 1))
    assert table.grid == (0, 1)
    assert table.counts == (3, 7)
    by_pair = {(r.kappa, r.kappa_prime): r for r in table.rows}
    assert by_pair[(0, 0)].excess == 0
    assert by_pair[(0, 1)].excess == 1
    assert by_pair[(1, 1)].excess == 0
    assert all(r.defined for r in table.rows)


def test_stabilization_excess_matches_brute_force():
    diagram = chain_diagram()
    sizes = [s.n for s in diagram.spaces]
    arrows, dists = oracle_arrows(diagram), oracle_dists(diagram)
    grid = (0, 1, 2)
    table = tuple_stabilization(diagram, grid)
    members = {g: oracles.consistent_tuples(sizes, arrows, dists, g) for g in grid}
    assert table.counts == tuple(len(members[g]) for g in grid)
    for row in table.rows:
        tight, loose = members[row.kappa], members[row.kappa_prime]
        assert row.defined
        assert row.excess == oracles.one_sided_excess(loose, tight, dists)


def test_stabilization_rows_without_members_are_flagged():
    p2 = path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "same"), ("X", "Y", "swap")))
    diagram = UCDiagram(shape, {"X": p2, "Y": p2},
                        {"same": ControlledMap(p2, p2, [0, 1]),
                         "swap": ControlledMap(p2, p2, [1, 0])})
    table = tuple_stabilization(diagram, (0, 1))
    assert table.counts == (0, 4)
    by_pair = {(r.kappa, r.kappa_prime): r for r in table.rows}
    assert not by_pair[(0, 0)].defined
    assert not by_pair[(0, 1)].defined
    assert by_pair[(1, 1)].excess == 0


def test_stabilization_rejects_bad_grids():
    diagram = identity_diagram(path_space(3))
    with pytest.raises(FormatError):
        tuple_stabilization(diagram, ())
    with pytest.raises(FormatError):
        tuple_stabilization(diagram, (1, 1))
    with pytest.raises(FormatError):
        tuple_stabilization(diagram, (2, 1))
    with pytest.raises(FormatError):
        tuple_stabilization(diagram, (0, -1))


# ---------------------------------------------------------------------------
# Rips apexes over tuple spaces


def test_single_vertex_apex_reproduces_the_space():
    p3 = path_space(3)
    diagram = UCDiagram(Shape(("X",)), {"X": p3}, {})
    apex = rips_tuple_apex(diagram, 0, 1)
    assert apex.tuple_space.count == 3
    assert np.array_equal(apex.rips.metric.scaled().matrix, p3.scaled().matrix)
    assert apex.cone.defect == 0
    leg = apex.cone.legs[0]
    assert leg.table == tuple(range(3))


def test_product_apex_carries_the_max_metric():
    a, b = path_space(3), cycle_space(4)
    apex = rips_tuple_apex(product_diagram(a, b), 0, 1)
    prod = FiniteMetricSpace.linf_product([a, b])
    assert np.array_equal(apex.tuple_space.space.scaled().matrix,
                          prod.scaled().matrix)
    assert apex.cone.defect == 0


def test_apex_cone_defect_stays_within_the_level():
    for kappa in (0, 1):
        apex = rips_tuple_apex(collapse_diagram(), kappa, 1)
        assert apex.cone.defect <= kappa
        assert apex.rips.scale == 1


def test_apex_needs_members_and_a_positive_scale():
    p2 = path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "same"), ("X", "Y", "swap")))
    diagram = UCDiagram(shape, {"X": p2, "Y": p2},
                        {"same": ControlledMap(p2, p2, [0, 1]),
                         "swap": ControlledMap(p2, p2, [1, 0])})
    with pytest.raises(ToolkitError):
        rips_tuple_apex(diagram, 0, 1)
    with pytest.raises(FormatError):
        rips_tuple_apex(collapse_diagram(), 0, 0)


def test_compat_order_defects():
    p3 = path_space(3)
    pts = p3.points
    assert compat_order_defect(p3, [pts[0]], [pts[0], pts[1]]) == 0
    assert compat_order_defect(p3, [pts[0]], [pts[2]]) == 2
    assert compat_order_defect(p3, [], [pts[0]]) == 0
    diagram = collapse_diagram()
    tight, loose = tuple_space(diagram, 0), tuple_space(diagram, 1)
    assert compat_order_defect(loose.space, tight.space.points,
                               loose.space.points) == 0


# ---------------------------------------------------------------------------
# median diagrams and closure


def median_collapse():
    diagram = collapse_diagram()
    return MedianDiagram(diagram, {"X": graph_median_op(diagram.spaces[0]),
                                   "Y": graph_median_op(diagram.spaces[1])})


def median_chain():
    diagram = chain_diagram()
    return MedianDiagram(diagram, {"X": graph_median_op(diagram.spaces[0]),
                                   "Y": graph_median_op(diagram.spaces[1])})


def test_median_diagram_constants_and_defects():
    M = median_collapse()
    assert M.common_C == 0
    assert M.cmp_defect == 0
    assert M.rho_exact
    fold = median_chain()
    arrows, dists = oracle_arrows(fold.underlying), oracle_dists(fold.underlying)
    expected = oracles.cmp_defect(5, dists[1], list(arrows[0][2]),
                                  med_of(fold.object_medians[0]),
                                  med_of(fold.object_medians[1]))
    assert fold.cmp_defect == expected == 2
    assert fold.arrow_defects[0][0] == 2


def test_median_diagram_rejects_misplaced_operators():
    diagram = collapse_diagram()
    wrong = graph_median_op(path_space(4))
    with pytest.raises(FormatError):
        MedianDiagram(diagram, {"X": wrong, "Y": graph_median_op(diagram.spaces[1])})


def test_rho_probe_is_the_worst_object_displacement():
    M = median_chain()
    for t in (0, 1, 2):
        expected = max(
            oracles.displacement_at(s.n, s.d_at, med_of(op), t)
            for s, op in zip(M.underlying.spaces, M.object_medians))
        assert M.rho_probe(t) == expected


def test_closure_level_matches_brute_force():
    for M, kappa in ((median_collapse(), 0), (median_collapse(), 1),
                     (median_chain(), 0), (median_chain(), 1)):
        report = median_tuple_closure(M, kappa)
        ts = tuple_space(M.underlying, kappa)
        expected = oracles.closure_level(
            list(ts.members), oracle_arrows(M.underlying),
            oracle_dists(M.underlying),
            [med_of(op) for op in M.object_medians])
        assert report.kappa_prime == expected
        assert report.tuple_count == ts.count
        assert report.passed


def test_closure_bound_names_are_stable():
    report = median_tuple_closure(median_collapse(), 0)
    names = [c.name for c in report.checks]
    assert names == ["closure <= cmp_defect + common_rho(kappa)",
                     "closure <= max(common_C, cmp_defect) + common_rho(kappa)"]


def test_closure_refuses_an_empty_tuple_space():
    p2 = path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "same"), ("X", "Y", "swap")))
    diagram = UCDiagram(shape, {"X": p2, "Y": p2},
                        {"same": ControlledMap(p2, p2, [0, 1]),
                         "swap": ControlledMap(p2, p2, [1, 0])})
    ident = graph_median_op(p2)
    M = MedianDiagram(diagram, {"X": ident, "Y": ident})
    with pytest.raises(ToolkitError):
        median_tuple_closure(M, 0)


# ---------------------------------------------------------------------------
# assembly


def test_assembled_cone_on_the_collapse_chain():
    M = median_collapse()
    cone = assemble_median_cone(M, 1, 1)
    assert cone.passed
    assert cone.tuple_space.count == 6
    members = list(cone.tuple_space.members)
    dists = oracle_dists(M.underlying)
    meds = [med_of(op) for op in M.object_medians]
    assert cone.induced_radius == oracles.rounding_radius(members, dists, meds)
    assert cone.certificate.constant <= 1
    for value, _ in cone.leg_defects:
        assert value <= cone.induced_radius + M.cmp_defect + M.rho_probe(1)


def test_assembled_product_median_is_exact():
    a, b = path_space(3), path_space(4)
    diagram = product_diagram(a, b)
    M = MedianDiagram(diagram, {"L": graph_median_op(a), "R": graph_median_op(b)})
    cone = assemble_median_cone(M, 0, 1)
    assert cone.passed
    assert cone.induced_radius == 0
    assert cone.certificate.constant == 0
    assert all(value == 0 for value, _ in cone.leg_defects)


def test_assembly_scales_are_coarsely_equivalent():
    M = median_collapse()
    one = assemble_median_cone(M, 1, 1)
    two = assemble_median_cone(M, 1, 2)
    w1, w2 = one.rips.metric, two.rips.metric
    f = ControlledMap.identity(w1, w2)
    g = ControlledMap.identity(w2, w1)
    eq = certify_coarse_equivalence(f, g)
    assert eq.finite
    assert eq.kappa_gf == 0 and eq.kappa_fg == 0


def test_assembly_rejects_empty_spaces_and_zero_scales():
    M = median_collapse()
    with pytest.raises(FormatError):
        assemble_median_cone(M, 1, 0)
    p2 = path_space(2)
    shape = Shape(("X", "Y"), (("X", "Y", "same"), ("X", "Y", "swap")))
    diagram = UCDiagram(shape, {"X": p2, "Y": p2},
                        {"same": ControlledMap(p2, p2, [0, 1]),
                         "swap": ControlledMap(p2, p2, [1, 0])})
    ident = graph_median_op(p2)
    M2 = MedianDiagram(diagram, {"X": ident, "Y": ident})
    with pytest.raises(ToolkitError):
        assemble_median_cone(M2, 0, 1)


def test_assembled_cone_description_is_json_ready():
    cone = assemble_median_cone(median_collapse(), 0, 1)
    text = json.dumps(cone.describe(), sort_keys=True)
    assert "closure" in text and "leg_defects" in text


# ---------------------------------------------------------------------------
# JSON wire format


def test_diagram_json_round_trip():
    diagram = chain_diagram()
    obj = diagram_to_json(diagram)
    back = diagram_from_json(obj)
    assert back.shape.vertices == diagram.shape.vertices
    assert back.shape.arrows == diagram.shape.arrows
    for mine, theirs in zip(diagram.maps, back.maps):
        assert mine.table == theirs.table
    for mine, theirs in zip(diagram.spaces, back.spaces):
        assert np.array_equal(mine.scaled().matrix, theirs.scaled().matrix)


def test_median_diagram_json_round_trip():
    M = median_chain()
    back = median_diagram_from_json(median_diagram_to_json(M))
    assert back.common_C == M.common_C
    assert back.cmp_defect == M.cmp_defect
    for mine, theirs in zip(M.object_medians, back.object_medians):
        assert np.array_equal(mine.flat_table(), theirs.flat_table())


def test_diagram_json_file_references(tmp_path):
    diagram = collapse_diagram()
    obj = diagram_to_json(diagram)
    (tmp_path / "shape.json").write_text(json.dumps(obj["shape"]))
    (tmp_path / "x.json").write_text(json.dumps(obj["objects"]["X"]))
    refs = {"shape": "shape.json",
            "objects": {"X": "x.json", "Y": obj["objects"]["Y"]},
            "maps": obj["maps"]}
    back = diagram_from_json(refs, base_dir=tmp_path)
    assert back.shape.arrows == diagram.shape.arrows
    assert back.spaces[0].points == diagram.spaces[0].points


def test_diagram_json_rejects_incomplete_objects():
    diagram = collapse_diagram()
    obj = diagram_to_json(diagram)
    with pytest.raises(FormatError):
        diagram_from_json({k: v for k, v in obj.items() if k != "shape"})
    broken = json.loads(json.dumps(obj))
    del broken["objects"]["X"]
    with pytest.raises(FormatError):
        diagram_from_json(broken)
    broken = json.loads(json.dumps(obj))
    del broken["maps"]["c"]
    with pytest.raises(FormatError):
        diagram_from_json(broken)
    broken = json.loads(json.dumps(obj))
    broken["maps"]["c"] = [0, 0]
    with pytest.raises(FormatError):
        diagram_from_json(broken)
    with pytest.raises(FormatError):
        median_diagram_from_json(obj)   # no medians block
