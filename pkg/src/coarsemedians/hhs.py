"""Orthogonality families and their constraint-pair diagrams.

A family is a finite collection of certified median operators together with a
symmetric irreflexive orthogonality relation; each non-orthogonal pair carries
a direction, a bonding table into the coarser space, a basepoint, and two
levels (B for the pair disjunction, K >= B for membership).  The pair space of
an orthogonal pair is the full product; otherwise it is the exhaustive filter
"close to the bonded image, or close to the basepoint".  ``build_hhs_diagram``
wires every space and every pair space into one diagram whose bonding maps are
the factorwise projections, with the induced pair medians and their rounding
radii certified along the way.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from . import _scan
from .budget import DEFAULT_BUDGET, Budget
from .errors import BudgetError, FormatError, ToolkitError
from .metric import (
    ControlledMap,
    FiniteMetricSpace,
    format_extended,
    is_infinite,
    parse_extended,
    space_from_json,
    space_to_json,
    _lcm_all,
    _rows_from_scaled,
)
from .median import (
    MedianCertificate,
    TernaryOp,
    _descale,
    _scale_level,
    graph_median_op,
    median_certificate,
    one_median_op,
    tripod_defect,
)
from .rips import _unit_distances
from .diagram import (
    Arrow,
    BoundCheck,
    MedianDiagram,
    Shape,
    UCDiagram,
    _candidate_coords,
    _check,
    _max_metric_space,
    _nearest_member_median,
    _rescale,
    _resolve_ref,
)

__all__ = [
    "ConstraintData",
    "ConstraintSpace",
    "EnlargementReport",
    "EnlargementRow",
    "Family",
    "HHSBuild",
    "PairwiseDefect",
    "bcii_defect",
    "build_hhs_diagram",
    "constraint_space",
    "delta_centre_median",
    "enlargement_stability",
    "family_from_json",
    "family_to_json",
    "hyperbolicity",
    "pairwise_subalgebra_defect",
    "toy_family",
]


# ---------------------------------------------------------------------------
# hyperbolicity and the delta-centre operator


def hyperbolicity(space: FiniteMetricSpace, budget: Budget = DEFAULT_BUDGET) -> Fraction:
    """Exhaustive four-point slimness constant, per component on disconnected input.

    Half the worst gap, over quadruples, between the largest and the middle of
    the three pairwise-sum pairings.
    """
    sm = space.scaled()
    if space.has_infinite:
        groups = [np.asarray(c, dtype=np.int64) for c in space.components()]
    else:
        groups = [np.arange(space.n, dtype=np.int64)]
    best = Fraction(0)
    for comp in groups:
        n = int(comp.size)
        if n < 4:
            continue
        if n ** 4 > budget.exact_scan:
            raise BudgetError(
                f"hyperbolicity: {n}^4 quadruples exceed the scan budget "
                f"{budget.exact_scan}; raise the budget cap")
        value, _ = _scan.scan_hyperbolicity(sm.matrix[np.ix_(comp, comp)])
        best = max(best, Fraction(int(value), 2 * sm.denominator))
    return best


def _is_unit_tree(space: FiniteMetricSpace) -> bool:
    if space.has_infinite:
        return False
    sm = space.scaled()
    if sm.denominator != 1:
        return False
    adjacency = sm.matrix == 1
    if int(adjacency.sum()) != 2 * (space.n - 1):
        return False
    return bool(np.array_equal(_unit_distances(adjacency), sm.matrix))


def delta_centre_median(space: FiniteMetricSpace,
                        budget: Budget = DEFAULT_BUDGET) -> TernaryOp:
    """Sum-of-distances minimiser used as the centre operator on graph metrics.

    On unit-edge trees the minimiser is provably the unique exact median, so
    the two tables are cross-checked there.
    """
    op = one_median_op(space, budget)
    if _is_unit_tree(space):
        exact = graph_median_op(space, budget)
        if not np.array_equal(op.flat_table(budget), exact.flat_table(budget)):
            raise AssertionError("delta-centre: disagrees with the exact median on a tree")
    return op


# ---------------------------------------------------------------------------
# constraint data and pair spaces


def _theta_table(theta, space_v: FiniteMetricSpace, space_u: FiniteMetricSpace,
                 what: str = "theta") -> np.ndarray:
    if isinstance(theta, ControlledMap):
        if theta.domain.points != space_v.points or theta.codomain.points != space_u.points:
            raise FormatError(f"{what}: map endpoints differ from the pair spaces")
        return theta.image_indices()
    table = np.asarray(list(theta), dtype=np.int64)
    if table.shape != (space_v.n,):
        raise FormatError(
            f"{what}: table length {table.size} differs from the {space_v.n}-point domain")
    if table.size and (table.min() < 0 or table.max() >= space_u.n):
        raise FormatError(f"{what}: entry out of range for the {space_u.n}-point codomain")
    return table


def bcii_defect(space_v: FiniteMetricSpace, op_v: TernaryOp,
                space_u: FiniteMetricSpace, theta, basepoint: int,
                budget: Budget = DEFAULT_BUDGET):
    """Worst pair failure of "basepoint near the centre, or bonded images close".

    Returns (value, witness pair (x, y)): the max over pairs of the min of
    d_V(median(x, y, O), O) and d_U(theta x, theta y).  Any level at or above
    the value makes one disjunct hold for every pair.
    """
    if op_v.space.points != space_v.points:
        raise FormatError("median: operator lives on different points")
    basepoint = int(basepoint)
    if not 0 <= basepoint < space_v.n:
        raise FormatError(f"basepoint: index {basepoint} out of range")
    table = _theta_table(theta, space_v, space_u)
    sv, su = space_v.scaled(), space_u.scaled()
    den = _lcm_all([sv.denominator, su.denominator])
    n = space_v.n
    idx = np.arange(n, dtype=np.int64)
    xs = np.repeat(idx, n)
    ys = np.tile(idx, n)
    meds = op_v.apply_indices(xs, ys, np.full(n * n, basepoint, dtype=np.int64))
    centre_gap = _rescale(sv.matrix[meds, basepoint], den // sv.denominator)
    image_gap = _rescale(su.matrix[table[xs], table[ys]], den // su.denominator)
    both = np.minimum(centre_gap, image_gap)
    at = int(np.argmax(both))
    return _descale(int(both[at]), den), (int(xs[at]), int(ys[at]))


@dataclass(frozen=True)
class ConstraintData:
    """Directed bonding data for one non-orthogonal pair.

    ``direction`` = (U, V) means theta maps the V space into the U space and
    the basepoint lives in the V space.  K is the membership level, B the
    disjunction level; K >= B >= 0 always.
    """

    direction: tuple
    theta: tuple
    basepoint: int
    B: Fraction
    K: Fraction

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(self.direction))
        if len(self.direction) != 2 or self.direction[0] == self.direction[1]:
            raise FormatError("direction: needs two distinct labels")
        object.__setattr__(self, "theta", tuple(int(t) for t in self.theta))
        object.__setattr__(self, "basepoint", int(self.basepoint))
        object.__setattr__(self, "B", Fraction(self.B))
        object.__setattr__(self, "K", Fraction(self.K))
        if self.B < 0:
            raise FormatError("B: must be non-negative")
        if self.K < self.B:
            raise FormatError(f"K: must be at least B = {format_extended(self.B)}")

    @property
    def pair(self) -> frozenset:
        return frozenset(self.direction)

    def describe(self) -> dict:
        return {
            "direction": list(self.direction),
            "theta": list(self.theta),
            "basepoint": self.basepoint,
            "B": format_extended(self.B),
            "K": format_extended(self.K),
        }


class ConstraintSpace:
    """Pair space over two factors: full product, or the K-level filter.

    Constrained membership keeps (x_U, x_V) when x_U is K-close to theta(x_V)
    or x_V is K-close to the basepoint; the metric is the max of the factor
    distances.  ``pair`` names the factors in coordinate order.
    """

    __slots__ = ("pair", "kind", "data", "factors", "members", "space",
                 "_coords", "_denominator")

    def __init__(self, pair, kind, data, factors, members, space, coords, denominator):
        self.pair = tuple(pair)
        self.kind = kind
        self.data = data
        self.factors = tuple(factors)
        self.members = members
        self.space = space
        self._coords = coords
        self._denominator = denominator

    @property
    def count(self) -> int:
        return len(self.members)

    def describe(self) -> dict:
        out = {
            "pair": list(self.pair),
            "kind": self.kind,
            "members": self.count,
            "factor_sizes": [s.n for s in self.factors],
        }
        if self.data is not None:
            out["data"] = self.data.describe()
        return out


def constraint_space(space_u: FiniteMetricSpace, space_v: FiniteMetricSpace,
                     data: ConstraintData | None = None, *, pair=None,
                     constants=None, budget: Budget = DEFAULT_BUDGET) -> ConstraintSpace:
    """Pair space for (space_u, space_v): full product without data, filter with it.

    ``constants`` = (C, rho_C) enables the level sanity check B >= C + rho(C);
    K >= B is already enforced by the data itself.
    """
    if pair is None:
        if data is not None:
            pair = data.direction
        else:
            pair = (space_u.name or "U", space_v.name or "V")
    if data is not None and constants is not None:
        c, rho_c = Fraction(constants[0]), Fraction(constants[1])
        if data.B < c + rho_c:
            raise FormatError(
                f"B: {format_extended(data.B)} is below C + rho(C) = "
                f"{format_extended(c + rho_c)}")
    total = space_u.n * space_v.n
    if total > budget.tuple_candidates:
        raise BudgetError(
            f"constraint space: {total} candidate pairs exceed the candidate budget "
            f"{budget.tuple_candidates}; raise the budget cap")
    total, (cu, cv) = _candidate_coords((space_u.n, space_v.n))
    if data is None:
        keep = np.arange(total, dtype=np.int64)
        kind = "full-product"
    else:
        table = _theta_table(data.theta, space_v, space_u)
        su, sv = space_u.scaled(), space_v.scaled()
        near_image = su.matrix[cu, table[cv]] <= _scale_level(data.K, su.denominator)
        near_base = sv.matrix[cv, data.basepoint] <= _scale_level(data.K, sv.denominator)
        keep = np.flatnonzero(near_image | near_base)
        kind = "constrained"
    if keep.size == 0:
        raise ToolkitError("constraint space: empty")
    if keep.size > budget.tuple_points:
        raise BudgetError(
            f"constraint space: {keep.size} members exceed the metric budget "
            f"{budget.tuple_points}; raise the budget cap")
    mcoords = (cu[keep], cv[keep])
    name = f"R({pair[0]}|{pair[1]})"
    space, den = _max_metric_space((space_u, space_v), mcoords, name=name)
    members = tuple((int(a), int(b)) for a, b in zip(mcoords[0], mcoords[1]))
    return ConstraintSpace(pair=pair, kind=kind, data=data,
                           factors=(space_u, space_v), members=members,
                           space=space, coords=mcoords, denominator=den)


# ---------------------------------------------------------------------------
# pairwise median rounding and its certified bounds


@dataclass(frozen=True)
class PairwiseDefect:
    """Rounding radius of the factorwise median back onto a pair space.

    The two certified upper bounds come from the tripod branch (basepoint in
    all three pairwise intervals at the chained level L) and the direct branch
    (bonded images of the inputs stay close, so the median barely moves).
    """

    value: Fraction
    witness: tuple | None
    induced: TernaryOp
    tripod_level: Fraction | None
    tripod_bound: Fraction | None
    direct_bound: Fraction | None
    check: BoundCheck

    def describe(self) -> dict:
        out = {
            "value": format_extended(self.value),
            "witness": self.witness,
            "check": self.check.describe(),
        }
        if self.tripod_bound is not None:
            out["tripod_level"] = format_extended(self.tripod_level)
            out["tripod_bound"] = format_extended(self.tripod_bound)
            out["direct_bound"] = format_extended(self.direct_bound)
        return out


def pairwise_subalgebra_defect(R: ConstraintSpace, op_u: TernaryOp, op_v: TernaryOp,
                               certificates=None,
                               budget: Budget = DEFAULT_BUDGET) -> PairwiseDefect:
    """Exact rounding radius of (median_u x median_v) onto the pair space.

    Full products are median-closed, so the radius is zero with no scan.  On
    constrained pairs the radius is checked against the worse of the two
    certified branch bounds: tripod(L) with L the chained interval level
    built from B, C and the shared displacement control, and
    rho(2K + B) + K + B.
    """
    if R.count == 0:
        raise ToolkitError("pairwise defect: empty pair space")
    for op, factor in zip((op_u, op_v), R.factors):
        if op.space.points != factor.points:
            raise FormatError("median: operator lives on different points")
    if R.kind == "full-product":
        induced = TernaryOp(R.space, "product", factors=(op_u, op_v))
        check = BoundCheck(name="pairwise defect: full product is median-closed",
                           bound=Fraction(0), value=Fraction(0), passed=True)
        return PairwiseDefect(value=Fraction(0), witness=None, induced=induced,
                              tripod_level=None, tripod_bound=None,
                              direct_bound=None, check=check)
    if certificates is None:
        certificates = (median_certificate(op_u, budget),
                        median_certificate(op_v, budget))
    cert_u, cert_v = certificates

    def rho(t):
        return max(cert_u.control.at(t, budget), cert_v.control.at(t, budget))

    data = R.data
    c = max(cert_u.constant, cert_v.constant)
    level = data.B + 3 * c + rho(data.B) + rho(c) + rho(c + data.B)
    tripod_bound = tripod_defect(op_v, level, budget).value
    direct_bound = rho(2 * data.K + data.B) + data.K + data.B
    table, radius, witness = _nearest_member_median(
        R.factors, (op_u, op_v), R._coords, R._denominator, budget,
        what="pairwise defect")
    induced = TernaryOp(R.space, "induced", table=table)
    check = _check("pairwise defect <= max(tripod branch, direct branch)",
                   radius, max(tripod_bound, direct_bound))
    return PairwiseDefect(value=radius, witness=witness, induced=induced,
                          tripod_level=level, tripod_bound=tripod_bound,
                          direct_bound=direct_bound, check=check)


# ---------------------------------------------------------------------------
# families


def _per_index(indices, values, what: str):
    if isinstance(values, Mapping):
        missing = [i for i in indices if i not in values]
        if missing:
            raise FormatError(f"{what}.{missing[0]}: missing")
        return tuple(values[i] for i in indices)
    values = tuple(values)
    if len(values) != len(indices):
        raise FormatError(f"{what}: expected {len(indices)} entries, got {len(values)}")
    return values


class Family:
    """Indexed certified median spaces with orthogonality and pair constraints.

    Every distinct pair is either orthogonal (symmetric, never reflexive) or
    carries exactly one directed ConstraintData; each constraint's B must
    dominate C + rho(C) for the family-wide constant C.
    """

    __slots__ = ("indices", "spaces", "medians", "certificates", "orth",
                 "constraints", "common_C")

    def __init__(self, indices, spaces, medians, orth=(), constraints=(),
                 budget: Budget = DEFAULT_BUDGET):
        self.indices = tuple(indices)
        if len(set(self.indices)) != len(self.indices):
            raise FormatError("indices: labels must be unique")
        self.spaces = _per_index(self.indices, spaces, "spaces")
        self.medians = _per_index(self.indices, medians, "medians")
        for label, op, space in zip(self.indices, self.medians, self.spaces):
            if op.space.points != space.points:
                raise FormatError(f"medians.{label}: operator lives on different points")
        known = set(self.indices)
        pairs = set()
        for entry in orth:
            a, b = tuple(entry)
            if a not in known or b not in known:
                raise FormatError(f"orth: unknown label in pair ({a}, {b})")
            if a == b:
                raise FormatError(f"orth: pair ({a}, {b}) is reflexive")
            pairs.add(frozenset((a, b)))
        self.orth = frozenset(pairs)
        self.certificates = tuple(median_certificate(op, budget) for op in self.medians)
        self.common_C = max((cert.constant for cert in self.certificates),
                            default=Fraction(0))
        by_pair = {}
        for data in constraints:
            for label in data.direction:
                if label not in known:
                    raise FormatError(f"constraints: unknown label {label!r}")
            if data.pair in self.orth:
                raise FormatError(
                    f"constraints: pair {sorted(data.direction)} is orthogonal")
            if data.pair in by_pair:
                raise FormatError(
                    f"constraints: pair {sorted(data.direction)} listed twice")
            space_v = self.space_for(data.direction[1])
            space_u = self.space_for(data.direction[0])
            _theta_table(data.theta, space_v, space_u,
                         what=f"constraints[{data.direction[0]},{data.direction[1]}].theta")
            if not 0 <= data.basepoint < space_v.n:
                raise FormatError(
                    f"constraints[{data.direction[0]},{data.direction[1]}].O: "
                    f"index {data.basepoint} out of range")
            by_pair[data.pair] = data
        self.constraints = tuple(by_pair.values())
        for a, b in combinations(self.indices, 2):
            key = frozenset((a, b))
            if key not in self.orth and key not in by_pair:
                raise FormatError(
                    f"constraints: pair ({a}, {b}) is neither orthogonal nor constrained")
        floor = self.common_C + self.rho_probe(self.common_C, budget)
        for data in self.constraints:
            if data.B < floor:
                raise FormatError(
                    f"constraints[{data.direction[0]},{data.direction[1]}].B: "
                    f"{format_extended(data.B)} is below C + rho(C) = "
                    f"{format_extended(floor)}")

    def position(self, label) -> int:
        try:
            return self.indices.index(label)
        except ValueError:
            raise FormatError(f"indices: unknown label {label!r}") from None

    def space_for(self, label) -> FiniteMetricSpace:
        return self.spaces[self.position(label)]

    def median_for(self, label) -> TernaryOp:
        return self.medians[self.position(label)]

    def certificate_for(self, label) -> MedianCertificate:
        return self.certificates[self.position(label)]

    def rho_probe(self, t, budget: Budget = DEFAULT_BUDGET) -> Fraction:
        """Family-wide exact displacement control at one threshold."""
        return max((cert.control.at(t, budget) for cert in self.certificates),
                   default=Fraction(0))

    def is_orthogonal(self, a, b) -> bool:
        return frozenset((a, b)) in self.orth

    def constraint_for(self, a, b) -> ConstraintData | None:
        key = frozenset((a, b))
        for data in self.constraints:
            if data.pair == key:
                return data
        return None

    @property
    def kappa_default(self) -> Fraction:
        """Largest membership level across the constraints (zero when none)."""
        return max((data.K for data in self.constraints), default=Fraction(0))

    def describe(self) -> dict:
        return {
            "indices": list(self.indices),
            "sizes": [s.n for s in self.spaces],
            "common_C": format_extended(self.common_C),
            "orth": sorted(sorted(map(str, pair)) for pair in self.orth),
            "constraints": [data.describe() for data in self.constraints],
        }


# ---------------------------------------------------------------------------
# the pair diagram


@dataclass(frozen=True)
class HHSBuild:
    """Family diagram: one vertex per space, one per pair, projections down.

    ``median`` is ready for tuple-space assembly; the checks tie every arrow's
    cmp defect to its pair's rounding radius and repeat each constrained
    pair's branch-bound check.
    """

    family: Family
    median: MedianDiagram
    pair_labels: tuple
    pair_spaces: tuple
    pair_defects: tuple
    uniform_bound: Fraction
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def describe(self) -> dict:
        return {
            "family": self.family.describe(),
            "vertices": list(self.median.underlying.shape.vertices),
            "uniform_bound": format_extended(self.uniform_bound),
            "cmp_defect": format_extended(self.median.cmp_defect),
            "pairs": {label: {"space": R.describe(), "defect": pd.describe()}
                      for label, R, pd in zip(self.pair_labels, self.pair_spaces,
                                              self.pair_defects)},
            "checks": [check.describe() for check in self.checks],
        }


def _lipschitz_excess(pair_space: FiniteMetricSpace, target: FiniteMetricSpace,
                      table: np.ndarray) -> Fraction:
    sd, st = pair_space.scaled(), target.scaled()
    den = _lcm_all([sd.denominator, st.denominator])
    dom = _rescale(sd.matrix, den // sd.denominator)
    cod = _rescale(st.matrix[np.ix_(table, table)], den // st.denominator)
    excess = int((cod - dom).max()) if dom.size else 0
    return _descale(max(excess, 0), den)


def build_hhs_diagram(family: Family, budget: Budget = DEFAULT_BUDGET) -> HHSBuild:
    """Assemble the family's diagram with certified pair medians and projections.

    Pair vertices are labelled "U|V" in index order; each sends one arrow to
    either factor carrying the coordinate projection.  Pair medians are the
    nearest-member roundings (exact product medians on orthogonal pairs), and
    their radii bound every arrow's cmp defect.
    """
    for label in family.indices:
        if "|" in str(label):
            raise FormatError(f"indices: label {label!r} must not contain '|'")
    vertices = list(family.indices)
    arrows = []
    spaces = {label: family.space_for(label) for label in family.indices}
    medians = {label: family.median_for(label) for label in family.indices}
    maps = {}
    pair_labels = []
    pair_spaces = []
    pair_defects = []
    checks = []
    for a, b in combinations(family.indices, 2):
        label = f"{a}|{b}"
        data = family.constraint_for(a, b)
        if data is None:
            first, second = a, b
        else:
            first, second = data.direction
        R = constraint_space(family.space_for(first), family.space_for(second),
                             data, pair=(first, second),
                             constants=None, budget=budget)
        defect = pairwise_subalgebra_defect(
            R, family.median_for(first), family.median_for(second),
            certificates=(family.certificate_for(first),
                          family.certificate_for(second)),
            budget=budget)
        vertices.append(label)
        spaces[label] = R.space
        medians[label] = defect.induced
        for target, coords in zip((first, second), R._coords):
            arrow_label = f"{label}:{target}"
            arrows.append(Arrow(label, target, arrow_label))
            maps[arrow_label] = ControlledMap(R.space, family.space_for(target),
                                              coords, name=arrow_label)
            checks.append(_check(
                f"projection {arrow_label}: 1-Lipschitz",
                _lipschitz_excess(R.space, family.space_for(target),
                                  coords.astype(np.int64)),
                Fraction(0)))
        pair_labels.append(label)
        pair_spaces.append(R)
        pair_defects.append(defect)
        checks.append(defect.check)
    shape = Shape(tuple(vertices), tuple(arrows))
    diagram = UCDiagram(shape, spaces, maps)
    median = MedianDiagram(diagram, medians, budget)
    for (arrow, _, _, _), (value, _) in zip(diagram.arrows_typed(),
                                            median.arrow_defects):
        pair_label = arrow.label.rsplit(":", 1)[0]
        bound = pair_defects[pair_labels.index(pair_label)].value
        checks.append(_check(
            f"arrow {arrow.label}: cmp defect <= pairwise rounding radius",
            value, bound))
    uniform = max((d.value for d in pair_defects), default=Fraction(0))
    checks.append(_check("diagram cmp defect <= uniform pairwise bound",
                         median.cmp_defect, uniform))
    return HHSBuild(family=family, median=median, pair_labels=tuple(pair_labels),
                    pair_spaces=tuple(pair_spaces), pair_defects=tuple(pair_defects),
                    uniform_bound=uniform, checks=tuple(checks))


# ---------------------------------------------------------------------------
# enlargement stability


@dataclass(frozen=True)
class EnlargementRow:
    radius: Fraction
    members: int
    defect: Fraction
    bound: Fraction
    check: BoundCheck

    def describe(self) -> dict:
        return {
            "radius": format_extended(self.radius),
            "members": self.members,
            "defect": format_extended(self.defect),
            "bound": format_extended(self.bound),
            "check": self.check.describe(),
        }


@dataclass(frozen=True)
class EnlargementReport:
    """Rounding defects of radius-enlarged pair spaces against old + r + rho(r)."""

    base_defect: Fraction
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(row.check.passed for row in self.rows)

    def describe(self) -> dict:
        return {
            "base_defect": format_extended(self.base_defect),
            "rows": [row.describe() for row in self.rows],
        }


def enlargement_stability(R: ConstraintSpace, op_u: TernaryOp, op_v: TernaryOp,
                          radii=(0, 1, 2), certificates=None,
                          budget: Budget = DEFAULT_BUDGET) -> EnlargementReport:
    """Replace the pair space by its r-neighborhood in the product, re-measure.

    Every enlarged defect is checked against (defect of the original) + r +
    rho(r) with rho the shared displacement control of the two operators.
    """
    if R.count == 0:
        raise ToolkitError("enlargement: empty pair space")
    if certificates is None:
        certificates = (median_certificate(op_u, budget),
                        median_certificate(op_v, budget))
    cert_u, cert_v = certificates
    space_u, space_v = R.factors
    su, sv = space_u.scaled(), space_v.scaled()
    den = R._denominator
    total, (cu, cv) = _candidate_coords((space_u.n, space_v.n))
    if total * R.count > budget.exact_scan:
        raise BudgetError(
            f"enlargement: {total} candidates against {R.count} members exceed "
            f"the scan budget {budget.exact_scan}; raise the budget cap")
    gap_u = _rescale(su.matrix[np.ix_(cu, R._coords[0])], den // su.denominator)
    gap_v = _rescale(sv.matrix[np.ix_(cv, R._coords[1])], den // sv.denominator)
    nearest = np.maximum(gap_u, gap_v).min(axis=1)
    _, base_defect, _ = _nearest_member_median(
        R.factors, (op_u, op_v), R._coords, den, budget, what="enlargement")
    rows = []
    for r in radii:
        r = Fraction(r)
        if r < 0:
            raise FormatError("radius: must be non-negative")
        keep = np.flatnonzero(nearest <= _scale_level(r, den))
        if keep.size > budget.tuple_points:
            raise BudgetError(
                f"enlargement: {keep.size} members at radius {format_extended(r)} "
                f"exceed the metric budget {budget.tuple_points}; raise the budget cap")
        coords = (cu[keep], cv[keep])
        _, defect, _ = _nearest_member_median(
            R.factors, (op_u, op_v), coords, den, budget, what="enlargement")
        rho_r = max(cert_u.control.at(r, budget), cert_v.control.at(r, budget))
        bound = base_defect + r + rho_r
        check = _check(f"enlarged defect at r={format_extended(r)} <= "
                       f"base + r + rho(r)", defect, bound)
        rows.append(EnlargementRow(radius=r, members=int(keep.size), defect=defect,
                                   bound=bound, check=check))
    return EnlargementReport(base_defect=base_defect, rows=tuple(rows))


# ---------------------------------------------------------------------------
# toy generators


def _seeded_tree_edges(points: int, rng: random.Random) -> list:
    return [(v, rng.randrange(v)) for v in range(1, points)]


def _tree_space(points: int, edges, name: str) -> FiniteMetricSpace:
    adjacency = np.zeros((points, points), dtype=bool)
    for a, b in edges:
        adjacency[a, b] = adjacency[b, a] = True
    dist = _unit_distances(adjacency)
    return FiniteMetricSpace([str(i) for i in range(points)],
                             _rows_from_scaled(dist, 1), name=name, validate=False)


def _collapse_tree(space: FiniteMetricSpace, edges, name: str):
    """Contract every leaf to its neighbor; split across one edge when too small.

    Returns (collapsed tree, theta table).  The table is 1-Lipschitz by
    construction: leaves land on their own neighbors, survivors stay put.
    """
    n = space.n
    degree = [0] * n
    neighbors = [[] for _ in range(n)]
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
        neighbors[a].append(b)
        neighbors[b].append(a)
    survivors = [v for v in range(n) if degree[v] >= 2]
    if len(survivors) >= 2:
        new_index = {v: i for i, v in enumerate(survivors)}
        theta = [new_index[v] if v in new_index else new_index[min(neighbors[v])]
                 for v in range(n)]
        kept = [(new_index[a], new_index[b]) for a, b in edges
                if a in new_index and b in new_index]
        return _tree_space(len(survivors), kept, name), theta
    a = survivors[0] if survivors else 0
    b = min(neighbors[a])
    sm = space.scaled()
    theta = [0 if sm.matrix[v, a] <= sm.matrix[v, b] else 1 for v in range(n)]
    return _tree_space(2, [(0, 1)], name), theta


def _branch_vertex(edges, points: int) -> int:
    degree = [0] * points
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
    return int(np.argmax(degree))


def toy_family(kind: str, *, count: int = 2, points: int = 5, seed: int = 7,
               edges=None, budget: Budget = DEFAULT_BUDGET) -> Family:
    """Seeded fixture families.

    "product-of-trees": ``count`` random trees, all pairs orthogonal, no
    constraints.  "tree-collapse-chain": first space a random tree (or the
    explicit ``edges``), second its leaf-collapse with theta the collapse
    table and basepoint a maximal-degree vertex; levels B = max(pair defect,
    C + rho(C)) and K = B; any further spaces are orthogonal spectator trees.
    """
    if points < 2:
        raise FormatError("points: need at least 2 per space")
    rng = random.Random(seed)
    if kind == "product-of-trees":
        if count < 1:
            raise FormatError("count: need at least 1 space")
        indices = [f"T{i + 1}" for i in range(count)]
        spaces = [_tree_space(points, _seeded_tree_edges(points, rng), name)
                  for name in indices]
        medians = [delta_centre_median(space, budget) for space in spaces]
        orth = [(a, b) for a, b in combinations(indices, 2)]
        return Family(indices, spaces, medians, orth=orth, constraints=(),
                      budget=budget)
    if kind == "tree-collapse-chain":
        if count < 2:
            raise FormatError("count: need at least 2 spaces for a collapse pair")
        base_edges = list(edges) if edges is not None else \
            _seeded_tree_edges(points, rng)
        indices = [f"X{i + 1}" for i in range(count)]
        fine = _tree_space(points, base_edges, indices[0])
        coarse, theta = _collapse_tree(fine, base_edges, indices[1])
        spaces = [fine, coarse]
        for name in indices[2:]:
            spaces.append(_tree_space(points, _seeded_tree_edges(points, rng), name))
        medians = [delta_centre_median(space, budget) for space in spaces]
        certificates = [median_certificate(op, budget) for op in medians]
        common_c = max(cert.constant for cert in certificates)
        rho_c = max(cert.control.at(common_c, budget) for cert in certificates)
        pair_defect, _ = bcii_defect(fine, medians[0], coarse, theta,
                                     _branch_vertex(base_edges, points), budget)
        level = max(pair_defect, common_c + rho_c)
        data = ConstraintData(direction=(indices[1], indices[0]), theta=theta,
                              basepoint=_branch_vertex(base_edges, points),
                              B=level, K=level)
        orth = [(a, b) for a, b in combinations(indices, 2)
                if frozenset((a, b)) != data.pair]
        return Family(indices, spaces, medians, orth=orth, constraints=(data,),
                      budget=budget)
    raise FormatError(f"kind: unknown toy family {kind!r}")


# ---------------------------------------------------------------------------
# JSON


def family_from_json(obj: Mapping, budget: Budget = DEFAULT_BUDGET,
                     base_dir=None) -> Family:
    """Family from {"indices", "orth", "spaces", "constraints"}.

    Spaces may be inline objects or file references; medians are implied (the
    delta-centre operator of each space).  Constraint entries carry "pair",
    "direction", "theta", "O", "B", "K"; B and K must be finite.
    """
    if not isinstance(obj, Mapping):
        raise FormatError("family: expected an object")
    for key in ("indices", "spaces"):
        if key not in obj:
            raise FormatError(f"family.{key}: missing")
    indices = [str(i) for i in obj["indices"]]
    raw_spaces = obj["spaces"]
    if not isinstance(raw_spaces, Mapping):
        raise FormatError("spaces: expected an object keyed by index")
    spaces = {}
    for label in indices:
        if label not in raw_spaces:
            raise FormatError(f"spaces.{label}: missing")
        ref = _resolve_ref(raw_spaces[label], base_dir, f"spaces.{label}")
        spaces[label] = space_from_json(ref, name=label)
    medians = {label: delta_centre_median(spaces[label], budget)
               for label in indices}
    orth = [(str(a), str(b)) for a, b in obj.get("orth", ())]
    constraints = []
    for pos, entry in enumerate(obj.get("constraints", ())):
        if not isinstance(entry, Mapping):
            raise FormatError(f"constraints[{pos}]: expected an object")
        for key in ("direction", "theta", "O", "B", "K"):
            if key not in entry:
                raise FormatError(f"constraints[{pos}].{key}: missing")
        direction = tuple(str(x) for x in entry["direction"])
        if "pair" in entry and set(map(str, entry["pair"])) != set(direction):
            raise FormatError(f"constraints[{pos}].pair: differs from direction")
        level_b = parse_extended(entry["B"])
        level_k = parse_extended(entry["K"])
        for key, value in (("B", level_b), ("K", level_k)):
            if is_infinite(value):
                raise FormatError(f"constraints[{pos}].{key}: must be finite")
        constraints.append(ConstraintData(direction=direction,
                                          theta=entry["theta"],
                                          basepoint=entry["O"],
                                          B=level_b, K=level_k))
    return Family(indices, spaces, medians, orth=orth, constraints=constraints,
                  budget=budget)


def family_to_json(family: Family) -> dict:
    return {
        "indices": list(family.indices),
        "orth": sorted(sorted(map(str, pair)) for pair in family.orth),
        "spaces": {label: space_to_json(space)
                   for label, space in zip(family.indices, family.spaces)},
        "constraints": [
            {
                "pair": sorted(data.direction),
                "direction": list(data.direction),
                "theta": list(data.theta),
                "O": data.basepoint,
                "B": format_extended(data.B),
                "K": format_extended(data.K),
            }
            for data in family.constraints
        ],
    }
