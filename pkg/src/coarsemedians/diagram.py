"""Uniformly controlled diagrams, consistent tuple spaces, and the apex pipeline.

A diagram places finite metric spaces on the vertices of a directed multigraph
and controlled maps on its arrows.  A tuple space collects the coordinate
tuples that every arrow moves by at most kappa; it carries the max metric and
a projection to each object.  The assembly pipeline equips the tuple space
with a median induced from the object medians, rescales it onto a Rips graph,
and certifies every projection leg with explicit constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .budget import Budget, DEFAULT_BUDGET
from .errors import BudgetError, FormatError, ToolkitError
from .metric import (SENTINEL, ControlFunction, ControlledMap, FiniteMetricSpace,
                     _lcm_all, _rows_from_scaled, closeness_defect, directed_excess,
                     format_extended, is_infinite, space_from_json, space_to_json)
from .median import (MedianCertificate, TernaryOp, _descale, _scale_level, cmp_defect,
                     median_certificate, median_from_json, median_to_json, rips_median)
from .rips import RipsGraph, rips_graph, rips_to_base

_CHUNK = 1 << 21
_ZERO_CONTROL = ControlFunction(((0, 0),))


def _as_kappa(value, what: str) -> Fraction:
    try:
        out = Fraction(value)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{what}: expected a rational, got {value!r}") from exc
    if out < 0:
        raise FormatError(f"{what}: must be non-negative")
    return out


def _rescale(values: np.ndarray, factor: int) -> np.ndarray:
    """Change of denominator preserving the infinite sentinel."""
    if factor == 1:
        return values
    return np.where(values >= SENTINEL, SENTINEL, values * factor)


def _ext_le(value, bound) -> bool:
    if is_infinite(bound):
        return True
    return not is_infinite(value) and value <= bound


def _max_metric_space(spaces, coords, name: str):
    """l-infinity space over selected coordinate tuples; returns (space, denominator).

    Re-checks that every factor distance stays below the combined metric, which
    is exactly the 1-Lipschitz property of the coordinate projections.
    """
    scaled = [s.scaled() for s in spaces]
    den = _lcm_all([s.denominator for s in scaled])
    m = int(coords[0].size)
    out = np.zeros((m, m), dtype=np.int64)
    for s, cj in zip(scaled, coords):
        part = _rescale(s.matrix[np.ix_(cj, cj)], den // s.denominator)
        np.maximum(out, part, out=out)
    for s, cj in zip(scaled, coords):
        part = _rescale(s.matrix[np.ix_(cj, cj)], den // s.denominator)
        if (part > out).any():
            raise AssertionError("max metric: factor distance exceeds the combined metric")
    points = [tuple(space.points[int(cj[t])] for space, cj in zip(spaces, coords))
              for t in range(m)]
    if den == 1 and (m == 0 or out.max() < SENTINEL):
        rows = out.tolist()
    else:
        rows = _rows_from_scaled(out, den)
    return FiniteMetricSpace(points, rows, name=name, validate=False), den


def _nearest_member_median(spaces, ops, coords, den, budget: Budget, what: str):
    """Coordinatewise median of member triples, rounded to the nearest member.

    Avoids materialising the ambient product: distinct median tuples are
    deduplicated by their product code before the distance-to-member pass.
    Ties go to the lowest member position, which is the lowest ambient index
    because members are stored in lexicographic coordinate order.  Returns
    (flat table, radius, witness triple or None).
    """
    m = int(coords[0].size)
    if m > budget.table_points:
        raise BudgetError(
            f"{what}: {m} points exceed the table budget {budget.table_points}")
    if m ** 3 > budget.exact_scan:
        raise BudgetError(
            f"{what}: {m}^3 member triples exceed the scan budget {budget.exact_scan}")
    scaled = [s.scaled() for s in spaces]
    tables = [op.flat_table(budget) for op in ops]
    coords64 = [c.astype(np.int64) for c in coords]
    sizes = [s.n for s in spaces]
    strides = []
    acc = 1
    for s in reversed(sizes):
        strides.append(acc)
        acc *= s
    strides = list(reversed(strides))

    def codes_for(lo: int, hi: int) -> np.ndarray:
        ts_idx = np.arange(lo, hi, dtype=np.int64)
        a, b, c = ts_idx // (m * m), (ts_idx // m) % m, ts_idx % m
        out = np.zeros(hi - lo, dtype=np.int64)
        for tab, cj, nj, stride in zip(tables, coords64, sizes, strides):
            out += tab[(cj[a] * nj + cj[b]) * nj + cj[c]] * stride
        return out

    unique = np.empty(0, dtype=np.int64)
    for t0 in range(0, m ** 3, _CHUNK):
        t1 = min(t0 + _CHUNK, m ** 3)
        unique = np.union1d(unique, codes_for(t0, t1))
    if unique.size * m > budget.exact_scan:
        raise BudgetError(
            f"{what}: {unique.size} distinct median tuples against {m} members "
            f"exceed the scan budget {budget.exact_scan}")
    gap = np.zeros((unique.size, m), dtype=np.int64)
    for s, cj, stride, nj in zip(scaled, coords64, strides, sizes):
        med_j = (unique // stride) % nj
        part = _rescale(s.matrix[np.ix_(med_j, cj)], den // s.denominator)
        np.maximum(gap, part, out=gap)
    nearest_pos = np.argmin(gap, axis=1)
    nearest_gap = gap[np.arange(unique.size), nearest_pos]
    table = np.empty(m ** 3, dtype=np.int64)
    radius = 0
    witness = None
    for t0 in range(0, m ** 3, _CHUNK):
        t1 = min(t0 + _CHUNK, m ** 3)
        pos = np.searchsorted(unique, codes_for(t0, t1))
        table[t0:t1] = nearest_pos[pos]
        gaps = nearest_gap[pos]
        local = int(gaps.max()) if gaps.size else 0
        if local > radius:
            radius = local
            at = t0 + int(np.argmax(gaps))
            witness = (at // (m * m), (at // m) % m, at % m)
    return table, _descale(radius, den), witness


# ---------------------------------------------------------------------------
# shapes and diagrams


@dataclass(frozen=True)
class Arrow:
    source: str
    target: str
    label: str


class Shape:
    """Directed multigraph: ordered vertices, ordered labelled arrows."""

    __slots__ = ("vertices", "arrows", "_vertex_pos")

    def __init__(self, vertices: Sequence, arrows: Sequence = ()):
        self.vertices = tuple(vertices)
        if not self.vertices:
            raise FormatError("shape.vertices: need at least one vertex")
        if len(set(self.vertices)) != len(self.vertices):
            raise FormatError("shape.vertices: labels must be unique")
        self.arrows = tuple(a if isinstance(a, Arrow) else Arrow(*a) for a in arrows)
        labels = [a.label for a in self.arrows]
        if len(set(labels)) != len(labels):
            raise FormatError("shape.arrows: labels must be unique")
        self._vertex_pos = {v: i for i, v in enumerate(self.vertices)}
        for a in self.arrows:
            if a.source not in self._vertex_pos:
                raise FormatError(f"shape.arrows[{a.label}].from: unknown vertex {a.source!r}")
            if a.target not in self._vertex_pos:
                raise FormatError(f"shape.arrows[{a.label}].to: unknown vertex {a.target!r}")

    def vertex_index(self, label) -> int:
        try:
            return self._vertex_pos[label]
        except KeyError:
            raise FormatError(f"shape: unknown vertex {label!r}") from None

    def __repr__(self):
        return f"Shape({len(self.vertices)} vertices, {len(self.arrows)} arrows)"


def _per_vertex(shape: Shape, values, what: str) -> tuple:
    if isinstance(values, Mapping):
        missing = [v for v in shape.vertices if v not in values]
        if missing:
            raise FormatError(f"{what}.{missing[0]}: missing")
        return tuple(values[v] for v in shape.vertices)
    out = tuple(values)
    if len(out) != len(shape.vertices):
        raise FormatError(f"{what}: expected one entry per vertex")
    return out


def _per_arrow(shape: Shape, values, what: str) -> tuple:
    if isinstance(values, Mapping):
        missing = [a.label for a in shape.arrows if a.label not in values]
        if missing:
            raise FormatError(f"{what}.{missing[0]}: missing")
        return tuple(values[a.label] for a in shape.arrows)
    out = tuple(values)
    if len(out) != len(shape.arrows):
        raise FormatError(f"{what}: expected one entry per arrow")
    return out


class UCDiagram:
    """Spaces on vertices, controlled maps on arrows, one shared upper control."""

    __slots__ = ("shape", "spaces", "maps", "common_control")

    def __init__(self, shape: Shape, spaces, maps=()):
        self.shape = shape
        self.spaces = _per_vertex(shape, spaces, "objects")
        self.maps = _per_arrow(shape, maps, "maps")
        for arrow, mp in zip(shape.arrows, self.maps):
            src = self.spaces[shape.vertex_index(arrow.source)]
            tgt = self.spaces[shape.vertex_index(arrow.target)]
            if mp.domain.points != src.points:
                raise FormatError(f"maps.{arrow.label}: domain differs from object {arrow.source!r}")
            if mp.codomain.points != tgt.points:
                raise FormatError(f"maps.{arrow.label}: codomain differs from object {arrow.target!r}")
        controls = [mp.control for mp in self.maps]
        self.common_control = (ControlFunction.pointwise_max(controls)
                               if controls else _ZERO_CONTROL)

    def space(self, vertex) -> FiniteMetricSpace:
        return self.spaces[self.shape.vertex_index(vertex)]

    def arrows_typed(self):
        """Yield (arrow, source index, target index, map) per arrow."""
        for arrow, mp in zip(self.shape.arrows, self.maps):
            yield (arrow, self.shape.vertex_index(arrow.source),
                   self.shape.vertex_index(arrow.target), mp)

    def describe(self) -> dict:
        return {
            "vertices": list(self.shape.vertices),
            "objects": {v: s.n for v, s in zip(self.shape.vertices, self.spaces)},
            "arrows": [{"from": a.source, "to": a.target, "label": a.label}
                       for a in self.shape.arrows],
            "common_control": self.common_control.describe(),
        }

    def __repr__(self):
        return f"UCDiagram({self.shape!r})"


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class Cone:
    """Per-vertex legs from one apex, with their worst commutation defect."""

    diagram: UCDiagram
    apex: FiniteMetricSpace
    legs: tuple
    defect: object

    def describe(self) -> dict:
        return {
            "apex_points": self.apex.n,
            "defect": format_extended(self.defect),
            "legs": {v: leg.control.describe()
                     for v, leg in zip(self.diagram.shape.vertices, self.legs)},
        }


def cone_defect(diagram: UCDiagram, legs):
    """Exact max over arrows of the closeness defect of leg_target vs map o leg_source."""
    legs = _per_vertex(diagram.shape, legs, "legs")
    apex = legs[0].domain
    for vertex, leg, space in zip(diagram.shape.vertices, legs, diagram.spaces):
        if leg.domain.points != apex.points:
            raise FormatError(f"legs.{vertex}: domain differs from the apex")
        if leg.codomain.points != space.points:
            raise FormatError(f"legs.{vertex}: codomain differs from object {vertex!r}")
    worst = Fraction(0)
    for arrow, i, j, mp in diagram.arrows_typed():
        value = closeness_defect(legs[j], mp.after(legs[i]))
        if is_infinite(value):
            return value
        if value > worst:
            worst = value
    return worst


def build_cone(diagram: UCDiagram, legs) -> Cone:
    legs = _per_vertex(diagram.shape, legs, "legs")
    return Cone(diagram=diagram, apex=legs[0].domain, legs=legs,
                defect=cone_defect(diagram, legs))


# ---------------------------------------------------------------------------
# consistent tuple spaces


class TupleSpace:
    """Tuples moved at most kappa by every arrow, under the max metric.

    ``members`` are per-vertex point-index tuples in lexicographic order; the
    metric space and the per-vertex projections exist only when the filter is
    nonempty (``empty`` flags the degenerate case instead of erroring).
    """

    __slots__ = ("diagram", "kappa", "members", "space", "projections",
                 "projection_defect", "_coords", "_denominator", "_member_pos")

    def __init__(self, diagram, kappa, members, space, projections,
                 projection_defect, coords, denominator):
        self.diagram = diagram
        self.kappa = kappa
        self.members = members
        self.space = space
        self.projections = projections
        self.projection_defect = projection_defect
        self._coords = coords
        self._denominator = denominator
        self._member_pos = {m: t for t, m in enumerate(members)}

    @property
    def empty(self) -> bool:
        return self.space is None

    @property
    def count(self) -> int:
        return len(self.members)

    def member_position(self, coords) -> int:
        try:
            return self._member_pos[tuple(int(c) for c in coords)]
        except KeyError:
            raise FormatError(f"tuple space: {coords!r} is not a member") from None

    def describe(self) -> dict:
        out = {"kappa": format_extended(self.kappa), "count": self.count,
               "empty": self.empty}
        if not self.empty:
            out["projection_defect"] = format_extended(self.projection_defect)
        return out

    def __repr__(self):
        return f"TupleSpace(kappa={self.kappa}, {self.count} tuples)"


def _candidate_coords(sizes: Sequence[int]):
    total = 1
    for s in sizes:
        total *= s
    idx = np.arange(total, dtype=np.int64)
    coords = []
    stride = total
    for s in sizes:
        stride //= s
        coords.append((idx // stride) % s)
    return total, coords


def tuple_space(diagram: UCDiagram, kappa, budget: Budget = DEFAULT_BUDGET) -> TupleSpace:
    """Exhaustive filter of the full product down to the kappa-consistent tuples."""
    kappa = _as_kappa(kappa, "kappa")
    sizes = [s.n for s in diagram.spaces]
    total = 1
    for s in sizes:
        total *= s
    if total > budget.tuple_candidates:
        raise BudgetError(
            f"tuple space: {total} candidate tuples exceed the candidate budget "
            f"{budget.tuple_candidates}; raise the budget cap")
    total, coords = _candidate_coords(sizes)
    scaled = [s.scaled() for s in diagram.spaces]
    mask = np.ones(total, dtype=bool)
    for arrow, i, j, mp in diagram.arrows_typed():
        gap = scaled[j].matrix[mp.image_indices()[coords[i]], coords[j]]
        mask &= gap <= _scale_level(kappa, scaled[j].denominator)
    keep = np.flatnonzero(mask)
    if keep.size == 0:
        return TupleSpace(diagram, kappa, members=(), space=None, projections=(),
                          projection_defect=None, coords=(), denominator=1)
    if keep.size > budget.tuple_points:
        raise BudgetError(
            f"tuple space: {keep.size} members exceed the metric budget "
            f"{budget.tuple_points}; raise the budget cap")
    m = int(keep.size)
    mcoords = tuple(c[keep] for c in coords)
    space, den = _max_metric_space(diagram.spaces, mcoords, name=f"tuples@{kappa}")
    projections = tuple(
        ControlledMap(space, obj, cj, name=f"proj_{vertex}")
        for vertex, obj, cj in zip(diagram.shape.vertices, diagram.spaces, mcoords))
    worst = Fraction(0)
    for arrow, i, j, mp in diagram.arrows_typed():
        gap = scaled[j].matrix[mp.image_indices()[mcoords[i]], mcoords[j]]
        value = _descale(int(gap.max()), scaled[j].denominator)
        worst = max(worst, value)
    if not worst <= kappa:
        raise AssertionError("tuple space: member violates its own consistency level")
    members = tuple(tuple(int(c[t]) for c in mcoords) for t in range(m))
    return TupleSpace(diagram, kappa, members=members, space=space,
                      projections=projections, projection_defect=worst,
                      coords=mcoords, denominator=den)


@dataclass(frozen=True)
class TupleFactorization:
    """A cone rewritten as (projections of the tuple space) o (pointwise tuple map)."""

    tuple_space: TupleSpace
    map: ControlledMap

    @property
    def kappa(self):
        return self.tuple_space.kappa


def factor_through_tuples(diagram: UCDiagram, cone: Cone,
                          budget: Budget = DEFAULT_BUDGET) -> TupleFactorization:
    """Send each apex point to the tuple of its leg images; projections recover the legs."""
    if is_infinite(cone.defect):
        raise ToolkitError("factor: cone defect is infinite")
    ts = tuple_space(diagram, cone.defect, budget)
    images = [leg.image_indices() for leg in cone.legs]
    table = []
    for z in range(cone.apex.n):
        coords = tuple(int(img[z]) for img in images)
        try:
            table.append(ts._member_pos[coords])
        except KeyError:
            raise AssertionError("factor: leg images fell outside the tuple space") from None
    f = ControlledMap(cone.apex, ts.space, table, name="tuple_factor")
    arr = np.asarray(table, dtype=np.int64)
    for proj, img in zip(ts.projections, images):
        if not np.array_equal(proj.image_indices()[arr], img):
            raise AssertionError("factor: projection of the factor map differs from the leg")
    return TupleFactorization(tuple_space=ts, map=f)


# ---------------------------------------------------------------------------
# filtration of tuple spaces


@dataclass(frozen=True)
class StabilizationRow:
    kappa: Fraction
    kappa_prime: Fraction
    excess: object          # Fraction, or None when the smaller space is empty
    defined: bool


@dataclass(frozen=True)
class StabilizationTable:
    """One-sided excess of each looser tuple space over each tighter one."""

    grid: tuple
    counts: tuple
    rows: tuple

    def describe(self) -> list:
        return [{"kappa": format_extended(r.kappa),
                 "kappa_prime": format_extended(r.kappa_prime),
                 "excess": format_extended(r.excess) if r.defined else "empty"}
                for r in self.rows]


def tuple_stabilization(diagram: UCDiagram, grid,
                        budget: Budget = DEFAULT_BUDGET) -> StabilizationTable:
    """Excess sup_{t loose} d(t, tight members) for every grid pair kappa <= kappa'.

    The tighter space embeds isometrically in the looser one, so the one-sided
    excess is the whole Hausdorff content; bounded rows across the grid tail
    are the finite-scale stand-in for a stabilising filtration.
    """
    grid = tuple(_as_kappa(g, "grid") for g in grid)
    if not grid:
        raise FormatError("grid: must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise FormatError("grid: must be strictly increasing")
    sizes = [s.n for s in diagram.spaces]
    total = 1
    for s in sizes:
        total *= s
    if total > budget.tuple_candidates:
        raise BudgetError(
            f"tuple space: {total} candidate tuples exceed the candidate budget "
            f"{budget.tuple_candidates}; raise the budget cap")
    total, coords = _candidate_coords(sizes)
    scaled = [s.scaled() for s in diagram.spaces]
    den = _lcm_all([s.denominator for s in scaled])
    worst = np.zeros(total, dtype=np.int64)
    for arrow, i, j, mp in diagram.arrows_typed():
        gap = scaled[j].matrix[mp.image_indices()[coords[i]], coords[j]]
        np.maximum(worst, _rescale(gap, den // scaled[j].denominator), out=worst)
    keeps = [np.flatnonzero(worst <= _scale_level(g, den)) for g in grid]
    counts = tuple(int(k.size) for k in keeps)

    def cross_max(rows_idx, cols_idx):
        out = np.zeros((rows_idx.size, cols_idx.size), dtype=np.int64)
        for s, c in zip(scaled, coords):
            part = _rescale(s.matrix[np.ix_(c[rows_idx], c[cols_idx])],
                            den // s.denominator)
            np.maximum(out, part, out=out)
        return out

    rows = []
    for a, ka in enumerate(grid):
        for b in range(a, len(grid)):
            kb = grid[b]
            tight, loose = keeps[a], keeps[b]
            if loose.size == 0 or tight.size == 0:
                rows.append(StabilizationRow(ka, kb, None, defined=False))
                continue
            extra = np.setdiff1d(loose, tight, assume_unique=True)
            if extra.size == 0:
                rows.append(StabilizationRow(ka, kb, Fraction(0), defined=True))
                continue
            if extra.size * tight.size > budget.exact_scan:
                raise BudgetError(
                    f"stabilization: {extra.size}x{tight.size} cross distances exceed "
                    f"the scan budget {budget.exact_scan}; raise the budget cap")
            gaps = cross_max(extra, tight).min(axis=1)
            rows.append(StabilizationRow(ka, kb, _descale(int(gaps.max()), den),
                                         defined=True))
    return StabilizationTable(grid=grid, counts=counts, rows=tuple(rows))


# ---------------------------------------------------------------------------
# the Rips apex of a tuple space


@dataclass(frozen=True)
class RipsTupleApex:
    """Rips rescaling of a tuple space, coning over the diagram by projections."""

    tuple_space: TupleSpace
    rips: RipsGraph
    cone: Cone


def rips_tuple_apex(diagram: UCDiagram, kappa, sigma,
                    budget: Budget = DEFAULT_BUDGET) -> RipsTupleApex:
    sigma = Fraction(sigma)
    if sigma <= 0:
        raise FormatError("sigma: must be positive")
    ts = tuple_space(diagram, kappa, budget)
    if ts.empty:
        raise ToolkitError(f"tuple space: empty at kappa={ts.kappa}; nothing to cone over")
    rg = rips_graph(ts.space, sigma)
    xi = rips_to_base(rg)
    legs = tuple(proj.after(xi) for proj in ts.projections)
    defect = cone_defect(diagram, legs)
    if not _ext_le(defect, ts.kappa):
        raise AssertionError("rips apex: cone defect exceeds the consistency level")
    return RipsTupleApex(tuple_space=ts, rips=rg,
                         cone=Cone(diagram=diagram, apex=rg.metric, legs=legs,
                                   defect=defect))


def compat_order_defect(ambient: FiniteMetricSpace, first, second):
    """Minimal r putting the first subset inside the closed r-neighborhood of the second."""
    first = list(first)
    if not first:
        return 0
    return directed_excess(ambient, first, second)


# ---------------------------------------------------------------------------
# median diagrams


class MedianDiagram:
    """Diagram whose objects carry certified ternary operators.

    ``cmp_defect`` is the worst failure, over arrows, of the map commuting
    with the two object operators; object certificates are computed eagerly.
    """

    __slots__ = ("underlying", "object_medians", "certificates", "common_C",
                 "common_rho", "rho_exact", "cmp_defect", "arrow_defects")

    def __init__(self, underlying: UCDiagram, medians, budget: Budget = DEFAULT_BUDGET):
        self.underlying = underlying
        self.object_medians = _per_vertex(underlying.shape, medians, "medians")
        for vertex, op, space in zip(underlying.shape.vertices, self.object_medians,
                                     underlying.spaces):
            if op.space.points != space.points:
                raise FormatError(f"medians.{vertex}: operator lives on different points")
        self.certificates = tuple(median_certificate(op, budget)
                                  for op in self.object_medians)
        self.common_C = max(cert.constant for cert in self.certificates)
        self.common_rho = ControlFunction.pointwise_max(
            [cert.rho for cert in self.certificates])
        self.rho_exact = all(cert.rho_exact for cert in self.certificates)
        defects = []
        for arrow, i, j, mp in underlying.arrows_typed():
            value, witness = cmp_defect(mp, self.object_medians[i],
                                        self.object_medians[j], budget)
            if is_infinite(value):
                raise ToolkitError(f"maps.{arrow.label}: infinite cmp defect")
            defects.append((value, witness))
        self.arrow_defects = tuple(defects)
        self.cmp_defect = (max(v for v, _ in defects) if defects else Fraction(0))

    def rho_probe(self, t, budget: Budget = DEFAULT_BUDGET):
        """Exact shared displacement control at one threshold (not the sampled curve)."""
        return max(cert.control.at(t, budget) for cert in self.certificates)

    def describe(self) -> dict:
        return {
            "diagram": self.underlying.describe(),
            "common_C": format_extended(self.common_C),
            "cmp_defect": format_extended(self.cmp_defect),
            "rho_exact": self.rho_exact,
            "common_rho": self.common_rho.describe(),
        }

    def __repr__(self):
        return (f"MedianDiagram({self.underlying!r}, C={self.common_C}, "
                f"cmp={self.cmp_defect})")


@dataclass(frozen=True)
class BoundCheck:
    """One certified inequality: value against its claimed bound."""

    name: str
    bound: object
    value: object
    passed: bool

    def describe(self) -> dict:
        return {"name": self.name, "bound": format_extended(self.bound),
                "value": format_extended(self.value), "passed": self.passed}


def _check(name: str, value, bound) -> BoundCheck:
    return BoundCheck(name=name, bound=bound, value=value,
                      passed=_ext_le(value, bound))


@dataclass(frozen=True)
class ClosureReport:
    """How far the coordinatewise median leaves the tuple space."""

    kappa: Fraction
    kappa_prime: object
    witness: tuple | None
    tuple_count: int
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def describe(self) -> dict:
        return {"kappa": format_extended(self.kappa),
                "kappa_prime": format_extended(self.kappa_prime),
                "tuples": self.tuple_count,
                "checks": [c.describe() for c in self.checks]}


def median_tuple_closure(M: MedianDiagram, kappa, budget: Budget = DEFAULT_BUDGET,
                         tuples: TupleSpace | None = None) -> ClosureReport:
    """Minimal consistency level containing all coordinatewise medians of members.

    Checked against the cmp-defect bound, and against the weaker variant that
    replaces the cmp defect by the larger of it and the object constant.
    """
    ts = tuples if tuples is not None else tuple_space(M.underlying, kappa, budget)
    if ts.empty:
        raise ToolkitError(f"tuple space: empty at kappa={ts.kappa}")
    m = ts.count
    if m ** 3 > budget.exact_scan:
        raise BudgetError(
            f"closure: {m}^3 member triples exceed the scan budget "
            f"{budget.exact_scan}; raise the budget cap")
    scaled = [s.scaled() for s in M.underlying.spaces]
    den = _lcm_all([s.denominator for s in scaled])
    tables = [op.flat_table(budget) for op in M.object_medians]
    coords = [c.astype(np.int64) for c in ts._coords]
    arrows = [(i, j, mp.image_indices(), scaled[j].matrix, den // scaled[j].denominator)
              for arrow, i, j, mp in M.underlying.arrows_typed()]
    sizes = [s.n for s in M.underlying.spaces]
    best = 0
    at = 0
    for t0 in range(0, m ** 3, _CHUNK):
        t1 = min(t0 + _CHUNK, m ** 3)
        ts_idx = np.arange(t0, t1, dtype=np.int64)
        a, b, c = ts_idx // (m * m), (ts_idx // m) % m, ts_idx % m
        meds = [tab[(cj[a] * nj + cj[b]) * nj + cj[c]]
                for tab, cj, nj in zip(tables, coords, sizes)]
        worst = np.zeros(t1 - t0, dtype=np.int64)
        for i, j, tbl, mat, factor in arrows:
            np.maximum(worst, _rescale(mat[tbl[meds[i]], meds[j]], factor), out=worst)
        local = int(worst.max()) if worst.size else 0
        if local > best:
            best = local
            at = t0 + int(np.argmax(worst))
    kappa_prime = _descale(best, den)
    witness = (at // (m * m), (at // m) % m, at % m) if best > 0 else None
    rho_k = M.rho_probe(ts.kappa, budget)
    strict = M.cmp_defect + rho_k
    weak = max(M.common_C, M.cmp_defect) + rho_k
    checks = (
        _check("closure <= cmp_defect + common_rho(kappa)", kappa_prime, strict),
        _check("closure <= max(common_C, cmp_defect) + common_rho(kappa)",
               kappa_prime, weak),
    )
    return ClosureReport(kappa=ts.kappa, kappa_prime=kappa_prime, witness=witness,
                         tuple_count=m, checks=checks)


# ---------------------------------------------------------------------------
# the assembly pipeline


@dataclass(frozen=True)
class AssembledCone:
    """Rips apex over a tuple space with an induced, certified median and legs."""

    tuple_space: TupleSpace
    induced: TernaryOp
    induced_radius: Fraction
    induced_witness: tuple | None
    closure: ClosureReport
    rips: RipsGraph
    scaled: object               # ScaledMedian of the induced operator
    legs: tuple
    leg_defects: tuple
    checks: tuple

    @property
    def nu(self) -> TernaryOp:
        return self.scaled.op

    @property
    def certificate(self) -> MedianCertificate:
        return self.scaled.certificate

    @property
    def passed(self) -> bool:
        return self.closure.passed and all(c.passed for c in self.checks)

    def describe(self) -> dict:
        vertices = self.tuple_space.diagram.shape.vertices
        return {
            "tuples": self.tuple_space.count,
            "induced_radius": format_extended(self.induced_radius),
            "closure": self.closure.describe(),
            "scale": format_extended(self.rips.scale),
            "certificate": self.certificate.describe(),
            "leg_defects": {v: format_extended(d)
                            for v, (d, _) in zip(vertices, self.leg_defects)},
            "checks": [c.describe() for c in self.checks],
        }


def _induce_on_tuples(M: MedianDiagram, ts: TupleSpace, budget: Budget):
    """Nearest-member rounding of the coordinatewise median, without the ambient product.

    Matches the generic subset induction: members sit in the product in
    lexicographic order, so the lowest member position is the lowest ambient
    index, and the radius is the exact max gap over member triples.
    """
    table, radius, witness = _nearest_member_median(
        M.underlying.spaces, M.object_medians, ts._coords, ts._denominator,
        budget, what="assemble")
    op = TernaryOp(ts.space, "induced", table=table)
    return op, radius, witness


def assemble_median_cone(M: MedianDiagram, kappa, sigma,
                         budget: Budget = DEFAULT_BUDGET) -> AssembledCone:
    """Tuple space -> induced median -> Rips rescaling -> certified legs.

    Every reported constant is exact; the bound checks tie the leg defects to
    the induction radius, the diagram cmp defect, and the shared displacement
    control at the consistency level.
    """
    sigma = Fraction(sigma)
    if sigma <= 0:
        raise FormatError("sigma: must be positive")
    ts = tuple_space(M.underlying, kappa, budget)
    if ts.empty:
        raise ToolkitError(f"tuple space: empty at kappa={ts.kappa}; nothing to assemble")
    closure = median_tuple_closure(M, kappa, budget, tuples=ts)
    induced, radius, ind_witness = _induce_on_tuples(M, ts, budget)
    rg = rips_graph(ts.space, sigma)
    scaled_median = rips_median(rg, induced, budget=budget)
    xi = rips_to_base(rg)
    legs = tuple(proj.after(xi) for proj in ts.projections)
    rho_k = M.rho_probe(ts.kappa, budget)
    leg_bound = radius + M.cmp_defect + rho_k
    defects = []
    checks = []
    for vertex, leg, op in zip(M.underlying.shape.vertices, legs, M.object_medians):
        value, witness = cmp_defect(leg, scaled_median.op, op, budget)
        defects.append((value, witness))
        checks.append(_check(
            f"leg {vertex}: cmp defect <= radius + cmp_defect + common_rho(kappa)",
            value, leg_bound))
    return AssembledCone(tuple_space=ts, induced=induced, induced_radius=radius,
                         induced_witness=ind_witness, closure=closure, rips=rg,
                         scaled=scaled_median, legs=legs, leg_defects=tuple(defects),
                         checks=tuple(checks))


# ---------------------------------------------------------------------------
# JSON wire format


def _resolve_ref(ref, base_dir, what: str):
    if isinstance(ref, Mapping):
        return ref
    if isinstance(ref, str):
        path = Path(base_dir) / ref if base_dir is not None else Path(ref)
        try:
            text = path.read_text()
        except OSError as exc:
            raise FormatError(f"{what}: cannot read {path}: {exc}") from exc
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{what}: invalid JSON in {path}: {exc}") from exc
    raise FormatError(f"{what}: expected an inline object or a file path")


def shape_from_json(obj) -> Shape:
    if not isinstance(obj, Mapping):
        raise FormatError("shape: expected an object")
    vertices = obj.get("vertices")
    if not isinstance(vertices, list) or not vertices:
        raise FormatError("shape.vertices: expected a non-empty list")
    arrows = []
    for pos, raw in enumerate(obj.get("arrows", [])):
        if not isinstance(raw, Mapping):
            raise FormatError(f"shape.arrows[{pos}]: expected an object")
        for key in ("from", "to", "label"):
            if key not in raw:
                raise FormatError(f"shape.arrows[{pos}].{key}: missing")
        arrows.append(Arrow(source=raw["from"], target=raw["to"], label=raw["label"]))
    return Shape(vertices, arrows)


def _load_parts(obj, base_dir):
    if not isinstance(obj, Mapping):
        raise FormatError("diagram: expected an object")
    if "shape" not in obj:
        raise FormatError("diagram.shape: missing")
    shape = shape_from_json(_resolve_ref(obj["shape"], base_dir, "diagram.shape"))
    raw_objects = obj.get("objects")
    if not isinstance(raw_objects, Mapping):
        raise FormatError("diagram.objects: expected an object keyed by vertex")
    spaces = {}
    for vertex in shape.vertices:
        if vertex not in raw_objects:
            raise FormatError(f"objects.{vertex}: missing")
        spaces[vertex] = space_from_json(
            _resolve_ref(raw_objects[vertex], base_dir, f"objects.{vertex}"),
            name=str(vertex))
    raw_maps = obj.get("maps", {})
    if not isinstance(raw_maps, Mapping):
        raise FormatError("diagram.maps: expected an object keyed by arrow label")
    maps = {}
    for arrow in shape.arrows:
        if arrow.label not in raw_maps:
            raise FormatError(f"maps.{arrow.label}: missing")
        table = raw_maps[arrow.label]
        if not isinstance(table, list):
            raise FormatError(f"maps.{arrow.label}: expected a list of point indices")
        try:
            maps[arrow.label] = ControlledMap(spaces[arrow.source], spaces[arrow.target],
                                              table, name=arrow.label)
        except FormatError as exc:
            raise FormatError(f"maps.{arrow.label}: {exc}") from exc
    return shape, spaces, maps


def diagram_from_json(obj, base_dir=None) -> UCDiagram:
    shape, spaces, maps = _load_parts(obj, base_dir)
    return UCDiagram(shape, spaces, maps)


def median_diagram_from_json(obj, budget: Budget = DEFAULT_BUDGET,
                             base_dir=None) -> MedianDiagram:
    shape, spaces, maps = _load_parts(obj, base_dir)
    diagram = UCDiagram(shape, spaces, maps)
    raw = obj.get("medians")
    if not isinstance(raw, Mapping):
        raise FormatError("diagram.medians: expected an object keyed by vertex")
    medians = {}
    for vertex in shape.vertices:
        if vertex not in raw:
            raise FormatError(f"medians.{vertex}: missing")
        try:
            medians[vertex] = median_from_json(
                spaces[vertex], _resolve_ref(raw[vertex], base_dir, f"medians.{vertex}"),
                budget)
        except FormatError as exc:
            raise FormatError(f"medians.{vertex}: {exc}") from exc
    return MedianDiagram(diagram, medians, budget)


def diagram_to_json(diagram: UCDiagram, medians=None,
                    budget: Budget = DEFAULT_BUDGET) -> dict:
    out = {
        "shape": {
            "vertices": list(diagram.shape.vertices),
            "arrows": [{"from": a.source, "to": a.target, "label": a.label}
                       for a in diagram.shape.arrows],
        },
        "objects": {v: space_to_json(s)
                    for v, s in zip(diagram.shape.vertices, diagram.spaces)},
        "maps": {a.label: [int(i) for i in mp.table]
                 for a, mp in zip(diagram.shape.arrows, diagram.maps)},
    }
    if medians is not None:
        ops = _per_vertex(diagram.shape, medians, "medians")
        out["medians"] = {v: median_to_json(op, budget)
                          for v, op in zip(diagram.shape.vertices, ops)}
    return out


def median_diagram_to_json(M: MedianDiagram, budget: Budget = DEFAULT_BUDGET) -> dict:
    return diagram_to_json(M.underlying, medians=M.object_medians, budget=budget)
