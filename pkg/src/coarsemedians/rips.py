"""Rips graphs at a scale, with their combinatorial metrics.

The Rips graph at scale sigma joins two distinct points whenever their base
distance is at most sigma; its metric is the unit-step path metric, infinite
across components.  The identity on points is then a controlled map back to
the base space with control bounded by sigma * t, and the family over a grid
of scales carries a distortion table used to pick a stable working scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import FormatError
from .metric import (
    INF,
    SENTINEL,
    ControlledMap,
    FiniteMetricSpace,
    is_infinite,
    _rows_from_scaled,
)


@dataclass(frozen=True)
class RipsGraph:
    """A base space, a scale, and the resulting unit-step metric on the same points."""

    base: FiniteMetricSpace
    scale: Fraction
    metric: FiniteMetricSpace

    @property
    def connected(self) -> bool:
        return not self.metric.has_infinite


def rips_graph(space: FiniteMetricSpace, scale) -> RipsGraph:
    """Rips graph of ``space`` at the given non-negative rational scale."""
    scale = Fraction(scale)
    if scale < 0:
        raise FormatError("scale: must be non-negative")
    sm = space.scaled()
    threshold = scale * sm.denominator
    if threshold.denominator != 1:
        # compare exactly: d <= scale iff scaled d <= scale * denominator
        adjacency = sm.matrix * threshold.denominator <= threshold.numerator
    else:
        adjacency = sm.matrix <= int(threshold)
    np.fill_diagonal(adjacency, False)
    dist = _unit_distances(adjacency)
    metric = FiniteMetricSpace(space.points, _rows_from_scaled(dist, 1),
                               name=f"rips({space.name or 'space'};{scale})",
                               validate=False)
    return RipsGraph(base=space, scale=scale, metric=metric)


def _unit_distances(adjacency: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.int64)
    graph = csr_matrix(adjacency.astype(np.int8))
    dist = shortest_path(graph, method="D", unweighted=True, directed=False)
    out = np.where(np.isinf(dist), SENTINEL, dist).astype(np.int64)
    return out


def rips_to_base(rips: RipsGraph) -> ControlledMap:
    """Identity on points from the Rips metric to the base metric.

    The empirical control is checked against the linear bound scale * t, which
    holds because each unit step moves at most ``scale`` in the base.
    """
    f = ControlledMap.identity(rips.metric, rips.base, name="rips-to-base")
    for t, bound in f.control.samples:
        if not is_infinite(bound) and bound > rips.scale * t:
            raise AssertionError(
                f"rips comparison map exceeds scale*t at t={t}: {bound} > {rips.scale * t}"
            )
        if is_infinite(bound):
            raise AssertionError("rips comparison map has infinite spread at finite distance")
    return f


def comparison_map(finer: RipsGraph, coarser: RipsGraph) -> ControlledMap:
    """Identity on points from a smaller-scale Rips metric to a larger-scale one.

    One-Lipschitz exactly, since every edge at the smaller scale is an edge at
    the larger one.
    """
    if finer.base.points != coarser.base.points:
        raise FormatError("comparison: Rips graphs over different spaces")
    if finer.scale > coarser.scale:
        raise FormatError("comparison: first scale must not exceed the second")
    f = ControlledMap.identity(finer.metric, coarser.metric, name="rips-comparison")
    for t, bound in f.control.samples:
        if is_infinite(bound) or bound > t:
            raise AssertionError(f"rips comparison map not 1-Lipschitz at t={t}")
    return f


@dataclass(frozen=True)
class DistortionTable:
    """Pairwise metric distortion across a grid of Rips scales.

    ``ratio[(s, t)]`` for s <= t is the max over point pairs finite at scale t
    of metric_s / metric_t, or None when some pair is finite at t but infinite
    at s (recorded in ``infinite_pairs``).
    """

    scales: tuple
    ratio: dict
    infinite_pairs: dict

    def suggested_scale(self):
        """Smallest scale with no infinite flag against the largest tested scale."""
        top = self.scales[-1]
        for s in self.scales:
            if not self.infinite_pairs[(s, top)]:
                return s
        return None

    def describe(self) -> list[dict]:
        from .metric import format_extended

        rows = []
        for (s, t), value in sorted(self.ratio.items()):
            rows.append({
                "finer": format_extended(s),
                "coarser": format_extended(t),
                "ratio": "undefined" if value is None else format_extended(value),
                "pairs_lost": self.infinite_pairs[(s, t)],
            })
        return rows


def filtration_distortion(space: FiniteMetricSpace, scales: Sequence) -> DistortionTable:
    """Distortion table of the Rips filtration of ``space`` over sorted ``scales``."""
    grid = sorted({Fraction(s) for s in scales})
    if not grid:
        raise FormatError("scales: empty grid")
    graphs = {s: rips_graph(space, s) for s in grid}
    mats = {s: graphs[s].metric.scaled().matrix for s in grid}
    n = space.n
    off_diag = ~np.eye(n, dtype=bool)
    ratio: dict = {}
    infinite_pairs: dict = {}
    for i, s in enumerate(grid):
        for t in grid[i:]:
            fine, coarse = mats[s], mats[t]
            finite_t = (coarse < SENTINEL) & off_diag
            lost = int((finite_t & (fine >= SENTINEL)).sum()) // 2
            infinite_pairs[(s, t)] = lost
            if lost or not finite_t.any():
                ratio[(s, t)] = None if lost else Fraction(1)
                continue
            num = fine[finite_t]
            den = coarse[finite_t]
            # exact max of num/den: compare fractions by cross-multiplication
            best = Fraction(0)
            for a, b in zip(num.tolist(), den.tolist()):
                cand = Fraction(a, b)
                if cand > best:
                    best = cand
            ratio[(s, t)] = best
    return DistortionTable(scales=tuple(grid), ratio=ratio, infinite_pairs=infinite_pairs)
