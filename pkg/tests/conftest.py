"""Shared fixtures: seeded trees, grids, hypercubes, cycles, collapse maps.

The median-graph suite (trees, grids, hypercubes) is built once per session
together with its exact medians and certificates; the heavier acceptance
checks reuse it.
"""

from __future__ import annotations

import itertools
import random
import time

import pytest

from coarsemedians import (
    ControlledMap,
    FiniteMetricSpace,
    graph_median_op,
    median_certificate,
)

TREE_CASES = ((12, 1), (24, 2), (37, 3), (50, 4), (64, 5))
GRID_CASES = ((2, 3), (3, 3), (4, 4), (5, 6), (6, 6))
CUBE_CASES = (2, 3, 4)


def seeded_tree_edges(n: int, seed: int) -> list:
    rng = random.Random(seed)
    return [(i, rng.randrange(i)) for i in range(1, n)]


def seeded_tree(n: int, seed: int, name: str = "") -> FiniteMetricSpace:
    edges = seeded_tree_edges(n, seed)
    return FiniteMetricSpace.from_edges([str(i) for i in range(n)], edges,
                                        name=name or f"tree-{n}-{seed}")


def grid_space(w: int, h: int) -> FiniteMetricSpace:
    points = [f"{i},{j}" for i in range(w) for j in range(h)]
    edges = []
    for i in range(w):
        for j in range(h):
            k = i * h + j
            if i + 1 < w:
                edges.append((k, k + h))
            if j + 1 < h:
                edges.append((k, k + 1))
    return FiniteMetricSpace.from_edges(points, edges, name=f"grid-{w}x{h}")


def hypercube(k: int) -> FiniteMetricSpace:
    points = ["".join(bits) for bits in itertools.product("01", repeat=k)]
    edges = [(a, b) for a, b in itertools.combinations(range(len(points)), 2)
             if bin(a ^ b).count("1") == 1]
    return FiniteMetricSpace.from_edges(points, edges, name=f"cube-Q{k}")


def cycle_space(n: int) -> FiniteMetricSpace:
    edges = [(i, (i + 1) % n) for i in range(n)]
    return FiniteMetricSpace.from_edges([str(i) for i in range(n)], edges,
                                        name=f"cycle-{n}")


def path_space(n: int) -> FiniteMetricSpace:
    edges = [(i, i + 1) for i in range(n - 1)]
    return FiniteMetricSpace.from_edges([str(i) for i in range(n)], edges,
                                        name=f"path-{n}")


def interior_collapse(space: FiniteMetricSpace):
    """Leaf contraction onto the unit-distance interior, as a controlled map.

    Survivors are the points with at least two unit neighbours; every other
    point maps to its lowest unit neighbour among the survivors (its unique
    neighbour, for a tree leaf).  Falls back to the first point alone when
    nothing survives.
    """
    n = space.n
    neighbours = [[j for j in range(n) if j != i and space.d_at(i, j) == 1]
                  for i in range(n)]
    survivors = [i for i in range(n) if len(neighbours[i]) >= 2]
    if len(survivors) == 0:
        survivors = [0]
    target = space.subspace([space.points[i] for i in survivors],
                            name=f"{space.name}-interior")
    position = {i: t for t, i in enumerate(survivors)}
    table = []
    for i in range(n):
        if i in position:
            table.append(position[i])
        else:
            inside = [j for j in neighbours[i] if j in position]
            table.append(position[min(inside)] if inside else 0)
    return target, ControlledMap(space, target, table, name="collapse")


def d_of(space):
    return space.d_at


def med_of(op):
    return op.apply_index


class MedianFixture:
    """A median graph with its exact median and certificate, built lazily.

    ``build_seconds`` records the construction cost so timed checks can count
    it without rebuilding the suite.
    """

    def __init__(self, space):
        start = time.perf_counter()
        self.space = space
        self.op = graph_median_op(space)
        self.certificate = median_certificate(self.op)
        self.build_seconds = time.perf_counter() - start

    @property
    def name(self):
        return self.space.name


@pytest.fixture(scope="session")
def tree_suite():
    return [MedianFixture(seeded_tree(n, seed)) for n, seed in TREE_CASES]


@pytest.fixture(scope="session")
def grid_suite():
    return [MedianFixture(grid_space(w, h)) for w, h in GRID_CASES]


@pytest.fixture(scope="session")
def cube_suite():
    return [MedianFixture(hypercube(k)) for k in CUBE_CASES]


@pytest.fixture(scope="session")
def median_suite(tree_suite, grid_suite, cube_suite):
    return tree_suite + grid_suite + cube_suite


@pytest.fixture(scope="session")
def six_cycle():
    return cycle_space(6)
