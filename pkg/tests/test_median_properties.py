"""Seeded-perturbation properties: moving table entries to unit neighbours
shifts certificate components by controlled amounts, and every certificate
must replay its own witnesses and satisfy the interval bounds."""

from __future__ import annotations

import random
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cycle_space, grid_space, seeded_tree
from coarsemedians import (
    graph_median_op,
    interval_lemma_check,
    median_certificate,
    one_median_op,
    table_op,
)


def perturb_to_unit_neighbours(op, seed, prob=0.25):
    """Move each table entry to a random unit neighbour with the given
    probability; returns the new operator and the exact worst move."""
    space = op.space
    rng = random.Random(seed)
    neighbours = [[j for j in range(space.n) if space.d_at(i, j) == 1]
                  for i in range(space.n)]
    table = [int(v) for v in op.flat_table()]
    kappa = Fraction(0)
    for t in range(len(table)):
        if rng.random() < prob and neighbours[table[t]]:
            new = rng.choice(neighbours[table[t]])
            kappa = max(kappa, space.d_at(table[t], new))
            table[t] = new
    return table_op(space, table), kappa


def base_space(kind, size, seed):
    if kind == "tree":
        return seeded_tree(5 + size % 8, seed % 997)
    if kind == "grid":
        return grid_space(2 + size % 2, 3)
    return cycle_space(5 + size % 3)


def base_op(space):
    try:
        return graph_median_op(space)
    except Exception:
        return one_median_op(space)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(5, 12))
def test_perturbation_shifts_components_boundedly(seed, n):
    tree = seeded_tree(n, seed % 997)
    op = graph_median_op(tree)
    before = median_certificate(op)
    shaken, kappa = perturb_to_unit_neighbours(op, seed)
    after = median_certificate(shaken)
    rho_kappa = before.control.at(kappa)
    assert abs(after.symmetry - before.symmetry) <= 2 * kappa
    assert abs(after.localisation - before.localisation) <= 2 * kappa
    assert abs(after.fourpoint - before.fourpoint) <= 2 * kappa + 2 * rho_kappa


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       kind=st.sampled_from(["tree", "grid", "cycle"]),
       size=st.integers(0, 7))
def test_perturbed_certificates_replay_their_witnesses(seed, kind, size):
    space = base_space(kind, size, seed)
    shaken, _ = perturb_to_unit_neighbours(base_op(space), seed)
    cert = median_certificate(shaken)
    assert cert.constant == max(cert.symmetry, cert.localisation, cert.fourpoint)
    assert cert.verify_witnesses()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       kind=st.sampled_from(["tree", "grid", "cycle"]),
       size=st.integers(0, 7))
def test_interval_bounds_hold_for_perturbed_operators(seed, kind, size):
    space = base_space(kind, size, seed)
    shaken, _ = perturb_to_unit_neighbours(base_op(space), seed)
    cert = median_certificate(shaken)
    report = interval_lemma_check(shaken, certificate=cert)
    assert report.passed
    assert report.empirical_chained_level <= report.chained_level


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       kind=st.sampled_from(["tree", "grid", "cycle"]),
       size=st.integers(0, 7))
def test_displacement_curve_starts_at_zero_and_grows(seed, kind, size):
    space = base_space(kind, size, seed)
    shaken, _ = perturb_to_unit_neighbours(base_op(space), seed)
    cert = median_certificate(shaken)
    assert cert.control.at(0) == 0
    probes = [cert.control.at(t) for t in (0, 1, 2, space.diameter())]
    assert probes == sorted(probes)
