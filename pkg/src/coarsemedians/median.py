"""Coarse median operators: axiom defects, controls, intervals, transfer.

A ternary operator on a finite metric space is judged by exhaustive scans: the
three axiom defects (symmetry, localisation, nested four-point) make up its
certificate constant C, and its displacement control rho is measured on the
l-infinity triple space.  Everything downstream (interval lemmas, induced and
transferred operators, Rips-scale operators) consumes those exact numbers.

All values are exact rationals; scans run on integer-scaled matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import _scan
from .budget import Budget, DEFAULT_BUDGET, EXACT_QUINTIC_POINTS
from .errors import BudgetError, FormatError, ToolkitError
from .metric import (
    INF,
    SENTINEL,
    ControlFunction,
    ControlledMap,
    FiniteMetricSpace,
    certify_coarse_equivalence,
    format_extended,
    is_infinite,
)
from .rips import RipsGraph

_CHUNK = 1 << 21


def _descale(value: int, denominator: int):
    if value >= SENTINEL:
        return INF
    return Fraction(int(value), denominator)


def _scale_level(level, denominator: int) -> int:
    """Largest scaled integer d with d <= level (exact membership threshold)."""
    level = Fraction(level)
    if level < 0:
        raise FormatError("level: must be non-negative")
    return (level.numerator * denominator) // level.denominator


class TernaryOp:
    """A total ternary operator on the points of a finite metric space.

    Small operators hold an eager flat table ``table[(i*n + j)*n + k]``; a
    product operator evaluates factorwise and only materialises a table on
    demand (within budget).
    """

    def __init__(self, space: FiniteMetricSpace, kind: str,
                 table: np.ndarray | None = None,
                 factors: tuple["TernaryOp", ...] | None = None):
        if (table is None) == (factors is None):
            raise ToolkitError("ternary operator needs exactly one of table, factors")
        n = space.n
        if table is not None:
            table = np.asarray(table, dtype=np.int64).reshape(-1)
            if table.shape[0] != n ** 3:
                raise FormatError(f"median.values: expected {n ** 3} entries, got {table.shape[0]}")
            if table.size and (table.min() < 0 or table.max() >= n):
                raise FormatError("median.values: point index out of range")
        else:
            sizes = 1
            for f in factors:
                sizes *= f.space.n
            if sizes != n:
                raise ToolkitError("product operator: factor sizes do not multiply to the space size")
        self.space = space
        self.kind = kind
        self._table = table
        self.factors = tuple(factors) if factors is not None else None

    @property
    def n(self) -> int:
        return self.space.n

    def _strides(self):
        sizes = [f.space.n for f in self.factors]
        strides = []
        acc = 1
        for s in reversed(sizes):
            strides.append(acc)
            acc *= s
        return list(reversed(strides)), sizes

    def apply_indices(self, i, j, k):
        """Vectorised evaluation on arrays of point indices."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        if self._table is not None:
            n = self.n
            return self._table[(i * n + j) * n + k]
        strides, sizes = self._strides()
        out = np.zeros(np.broadcast(i, j, k).shape, dtype=np.int64)
        for op, stride, size in zip(self.factors, strides, sizes):
            fi = (i // stride) % size
            fj = (j // stride) % size
            fk = (k // stride) % size
            out += op.apply_indices(fi, fj, fk) * stride
        return out

    def apply_index(self, i: int, j: int, k: int) -> int:
        return int(self.apply_indices(np.array([i]), np.array([j]), np.array([k]))[0])

    def apply(self, x, y, z):
        idx = self.space.index
        return self.space.points[self.apply_index(idx(x), idx(y), idx(z))]

    def flat_table(self, budget: Budget = DEFAULT_BUDGET) -> np.ndarray:
        """Materialise the full table (cached); refuses above the point budget."""
        if self._table is None:
            n = self.n
            if n > budget.table_points:
                raise BudgetError(
                    f"median table: {n} points exceeds the table budget {budget.table_points}"
                )
            table = np.empty(n ** 3, dtype=np.int64)
            for t0 in range(0, n ** 3, _CHUNK):
                t1 = min(t0 + _CHUNK, n ** 3)
                ts = np.arange(t0, t1, dtype=np.int64)
                table[t0:t1] = self.apply_indices(ts // (n * n), (ts // n) % n, ts % n)
            self._table = table
        return self._table

    def describe(self) -> dict:
        out = {"kind": self.kind, "points": self.n}
        if self.factors is not None:
            out["factors"] = [f.describe() for f in self.factors]
        return out


def one_median_op(space: FiniteMetricSpace, budget: Budget = DEFAULT_BUDGET) -> TernaryOp:
    """Sum-of-distances minimiser with lowest-index tie-break."""
    if space.has_infinite:
        raise FormatError("median: one-median needs finite distances (connected space)")
    if space.n > budget.table_points:
        raise BudgetError(
            f"median table: {space.n} points exceeds the table budget {budget.table_points}"
        )
    return TernaryOp(space, "one-median", table=_scan.build_one_median_table(space.scaled().matrix))


def graph_median_op(space: FiniteMetricSpace, budget: Budget = DEFAULT_BUDGET) -> TernaryOp:
    """Exact median via geodesic-interval intersection; refuses non-median graphs."""
    if space.has_infinite:
        raise FormatError("median: graph median needs finite distances (connected space)")
    if space.n > budget.table_points:
        raise BudgetError(
            f"median table: {space.n} points exceeds the table budget {budget.table_points}"
        )
    try:
        table = _scan.build_graph_median_table(space.scaled().matrix)
    except ValueError as exc:
        raise FormatError(f"median: {exc}") from exc
    return TernaryOp(space, "graph-median", table=table)


def table_op(space: FiniteMetricSpace, values) -> TernaryOp:
    return TernaryOp(space, "table", table=np.asarray(values, dtype=np.int64))


# ---------------------------------------------------------------------------
# certificates


class OperatorControl:
    """Exact displacement control of an operator, probed threshold by threshold.

    ``at(t)`` returns the true maximum displacement over pairs of triples at
    coordinatewise distance <= t (a step-function lookup of the operator's
    control at exactly t).  Each probe costs roughly (pairs at distance <= t)
    cubed, so probes are budget-guarded; results are cached.
    """

    def __init__(self, op: TernaryOp):
        self.op = op
        self._cache: dict[int, tuple] = {}

    def at(self, t, budget: Budget = DEFAULT_BUDGET):
        t = Fraction(t)
        if t < 0:
            raise FormatError("control threshold: must be non-negative")
        scaled = self.op.space.scaled()
        radius = _scale_level(t, scaled.denominator)
        value, _ = self._probe(radius, budget)
        return _descale(value, scaled.denominator)

    def witness_at(self, t, budget: Budget = DEFAULT_BUDGET):
        scaled = self.op.space.scaled()
        radius = _scale_level(Fraction(t), scaled.denominator)
        return self._probe(radius, budget)[1]

    def _probe(self, radius: int, budget: Budget):
        if radius not in self._cache:
            dist = self.op.space.scaled().matrix
            pairs = _scan.displacement_pair_count(dist, radius)
            work = pairs ** 3 // 4
            if work > budget.exact_scan:
                raise BudgetError(
                    f"control probe: ~{work} triple pairs exceed the scan budget "
                    f"{budget.exact_scan}; raise the budget cap"
                )
            self._cache[radius] = _scan.scan_displacement_at(
                dist, self.op.flat_table(budget), radius)
        return self._cache[radius]


@dataclass(frozen=True)
class MedianCertificate:
    """Axiom defects of a ternary operator, with witnesses and control."""

    op: TernaryOp
    symmetry: Fraction
    symmetry_witness: tuple          # (permutation, x, y, z) as indices
    localisation: Fraction
    localisation_witness: tuple      # (x, y)
    fourpoint: Fraction
    fourpoint_witness: tuple         # (x1, w, x2, x3)
    rho: ControlFunction
    rho_exact: bool
    control: OperatorControl

    @property
    def constant(self) -> Fraction:
        return max(self.symmetry, self.localisation, self.fourpoint)

    def verify_witnesses(self) -> bool:
        """Re-evaluate each recorded witness to its recorded defect."""
        op = self.op
        d = op.space.d_at
        perm, x, y, z = self.symmetry_witness
        args = (x, y, z)
        sym = d(op.apply_index(*(args[p] for p in perm)), op.apply_index(x, y, z))
        if sym != self.symmetry:
            return False
        x, y = self.localisation_witness
        if d(op.apply_index(x, x, y), x) != self.localisation:
            return False
        x1, w, x2, x3 = self.fourpoint_witness
        lhs = op.apply_index(op.apply_index(x1, w, x2), w, x3)
        rhs = op.apply_index(x1, w, op.apply_index(x2, w, x3))
        return d(lhs, rhs) == self.fourpoint

    def describe(self) -> dict:
        return {
            "C_sym": format_extended(self.symmetry),
            "C_loc": format_extended(self.localisation),
            "C_4pt": format_extended(self.fourpoint),
            "C": format_extended(self.constant),
            "rho": self.rho.describe(),
            "rho_exact": self.rho_exact,
        }


def median_certificate(op: TernaryOp, budget: Budget = DEFAULT_BUDGET) -> MedianCertificate:
    """Exhaustive axiom-defect scan plus the empirical control of the operator.

    The control curve is exact when the space is small enough; above the cap it
    is a seeded lower bound, flagged, and bound checks should use exact probes
    via ``certificate.control`` instead.
    """
    scaled = op.space.scaled()
    dist = scaled.matrix
    den = scaled.denominator
    table = op.flat_table(budget)
    sym_v, sym_w = _scan.scan_symmetry(dist, table)
    loc_v, loc_w = _scan.scan_localisation(dist, table)
    fp_v, fp_w = _scan.scan_fourpoint(dist, table)
    perm_idx, sx, sy, sz = sym_w
    thresholds = np.unique(dist[dist < SENTINEL])
    exact = op.n <= budget.rho_exact_points
    if exact:
        rho_vals = _scan.scan_rho_exact(dist, table, thresholds)
    else:
        rho_vals = _scan.scan_rho_sub(dist, table, thresholds,
                                      budget.subsample, budget.seed)
    samples = [( _descale(int(t), den), _descale(int(v), den))
               for t, v in zip(thresholds, rho_vals)]
    rho = ControlFunction(tuple(samples))
    return MedianCertificate(
        op=op,
        symmetry=_descale(sym_v, den),
        symmetry_witness=(_scan.PERMUTATIONS[perm_idx], sx, sy, sz),
        localisation=_descale(loc_v, den),
        localisation_witness=tuple(loc_w),
        fourpoint=_descale(fp_v, den),
        fourpoint_witness=tuple(fp_w),
        rho=rho,
        rho_exact=exact,
        control=OperatorControl(op),
    )


def cmp_defect(f: ControlledMap, op_dom: TernaryOp, op_cod: TernaryOp,
               budget: Budget = DEFAULT_BUDGET):
    """Max over domain triples of d(f(m(x,y,z)), m(fx,fy,fz)), with witness."""
    if op_dom.space.points != f.domain.points:
        raise FormatError("cmp: domain operator lives on different points than the map")
    if op_cod.space.points != f.codomain.points:
        raise FormatError("cmp: codomain operator lives on different points than the map")
    scaled = op_cod.space.scaled()
    value, witness = _scan.scan_cmp(scaled.matrix, op_dom.flat_table(budget),
                                    op_cod.flat_table(budget), f.image_indices())
    return _descale(value, scaled.denominator), witness


def product_median(factors, product_space: FiniteMetricSpace | None = None,
                   budget: Budget = DEFAULT_BUDGET) -> TernaryOp:
    """Coordinatewise operator on the l-infinity product of the factor spaces.

    When the product is small enough to certify, asserts that its constant
    equals the maximum of the factor constants.
    """
    ops = [f[1] if isinstance(f, tuple) else f for f in factors]
    if not ops:
        raise FormatError("product median: empty factor list")
    if len(ops) == 1 and product_space is None:
        return ops[0]
    if product_space is None:
        product_space = FiniteMetricSpace.linf_product([op.space for op in ops])
    prod = TernaryOp(product_space, "product", factors=tuple(ops))
    n = product_space.n
    if n ** 4 <= budget.exact_scan * 4 and n <= budget.table_points:
        c_prod = median_certificate(prod, budget).constant
        c_max = max(median_certificate(op, budget).constant for op in ops)
        if c_prod != c_max:
            raise AssertionError(
                f"product median constant {c_prod} differs from factor maximum {c_max}"
            )
    return prod


# ---------------------------------------------------------------------------
# five-point and tripod defects


@dataclass(frozen=True)
class FivePointResult:
    value: Fraction
    witness: tuple | None
    exact: bool          # False: seeded subsample, lower bound only


def five_point_defect(op: TernaryOp, budget: Budget = DEFAULT_BUDGET) -> FivePointResult:
    """Max over quintuples of d(m(v,w,m(x,y,z)), m(m(v,w,x),m(v,w,y),z)).

    Exact whenever n is at most the mandatory-exact cap or n^5 fits the scan
    budget; otherwise a seeded subsample flagged as a lower bound.
    """
    scaled = op.space.scaled()
    n = op.n
    table = op.flat_table(budget)
    if n <= EXACT_QUINTIC_POINTS or n ** 5 <= budget.exact_scan:
        value, witness = _scan.scan_fivepoint_exact(scaled.matrix, table)
        exact = True
    else:
        value, witness = _scan.scan_fivepoint_sub(scaled.matrix, table,
                                                  budget.subsample, budget.seed)
        exact = False
    return FivePointResult(_descale(value, scaled.denominator),
                           tuple(witness) if witness is not None else None, exact)


@dataclass(frozen=True)
class TripodResult:
    value: Fraction
    witness: tuple | None    # (x, y, z, o)
    vacuous: bool


def tripod_defect(op: TernaryOp, level, budget: Budget = DEFAULT_BUDGET) -> TripodResult:
    """Minimal R with every point of all three pairwise L-intervals R-close to the median."""
    scaled = op.space.scaled()
    lvl = _scale_level(level, scaled.denominator)
    value, witness, vacuous = _scan.scan_tripod(scaled.matrix, op.flat_table(budget), lvl)
    return TripodResult(_descale(value, scaled.denominator),
                        tuple(witness) if witness is not None else None, vacuous)


# ---------------------------------------------------------------------------
# coarse intervals


@dataclass(frozen=True)
class CoarseInterval:
    x: object
    y: object
    level: Fraction
    members: tuple


def coarse_interval(op: TernaryOp, x, y, level) -> CoarseInterval:
    """Points z with d(m(x,y,z), z) <= level."""
    space = op.space
    scaled = space.scaled()
    lvl = _scale_level(level, scaled.denominator)
    i, j = space.index(x), space.index(y)
    zs = np.arange(space.n, dtype=np.int64)
    med = op.apply_indices(np.full(space.n, i, dtype=np.int64),
                           np.full(space.n, j, dtype=np.int64), zs)
    gaps = scaled.matrix[med, zs]
    members = tuple(space.points[int(z)] for z in np.flatnonzero(gaps <= lvl))
    return CoarseInterval(x=x, y=y, level=Fraction(level), members=members)


@dataclass(frozen=True)
class IntervalCheck:
    name: str
    bound: Fraction
    value: Fraction
    passed: bool
    witness: tuple | None


@dataclass(frozen=True)
class IntervalReport:
    checks: tuple
    chained_level: Fraction
    empirical_chained_level: Fraction

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def interval_lemma_check(op: TernaryOp, certificate: MedianCertificate | None = None,
                         radii=(0, 1, 2), levels=None,
                         budget: Budget = DEFAULT_BUDGET) -> IntervalReport:
    """Exhaustive check of the three coarse-interval containments.

    (1) endpoints lie in their own 2C-interval and medians in the (C + rho(C))-
    interval; (2) the r-neighborhood of an L-interval lies in the
    (L + r + rho(r))-interval over a grid of (L, r); (3) if z is in [x,y]_L
    then [x,z]_L is inside [x,y]_{L'} for the chained level
    L' = L + 3C + rho(L) + rho(C) + rho(C+L).  All rho values are exact probes.
    """
    if certificate is None:
        certificate = median_certificate(op, budget)
    space = op.space
    scaled = space.scaled()
    dist, den = scaled.matrix, scaled.denominator
    n = space.n
    table = op.flat_table(budget)
    cube = table.reshape(n, n, n)
    c = certificate.constant
    probe = certificate.control
    rho_c = probe.at(c, budget)
    checks = []

    # part 1a: endpoints against 2C
    xs = np.arange(n, dtype=np.int64)
    m_xyx = cube[xs[:, None], xs[None, :], xs[:, None]]
    m_xyy = cube[xs[:, None], xs[None, :], xs[None, :]]
    gaps = np.maximum(dist[m_xyx, xs[:, None]], dist[m_xyy, xs[None, :]])
    value = _descale(int(gaps.max()), den)
    witness = tuple(int(v) for v in np.unravel_index(int(np.argmax(gaps)), gaps.shape))
    checks.append(IntervalCheck("endpoints-in-2C", 2 * c, value, value <= 2 * c, witness))

    # gap cube g[x,y,z] = d(m(x,y,z), z), shared by the remaining parts
    gap_cube = np.empty((n, n, n), dtype=np.int64)
    for x in range(n):
        gap_cube[x] = dist[cube[x], xs[None, :]]

    # part 1b: medians against C + rho(C); d(m(x,y,m(x,y,z)), m(x,y,z)) is a
    # lookup of the gap cube at the median index
    bound_1b = INF if is_infinite(rho_c) else c + rho_c
    worst = 0
    worst_w = (0, 0, 0)
    for x in range(n):
        vals = np.take_along_axis(gap_cube[x], cube[x], axis=1)
        local = int(vals.max())
        if local > worst:
            worst = local
            y, z = np.unravel_index(int(np.argmax(vals)), vals.shape)
            worst_w = (x, int(y), int(z))
    value = _descale(worst, den)
    checks.append(IntervalCheck("median-in-C+rhoC", bound_1b, value,
                                is_infinite(bound_1b) or value <= bound_1b, worst_w))

    # parts 2 and 3 level grid
    if levels is None:
        levels = sorted({c, 2 * c, bound_1b if not is_infinite(bound_1b) else 2 * c})
    rho_r = {Fraction(r): probe.at(r, budget) for r in radii}

    for level in levels:
        lvl = _scale_level(level, den)
        member = gap_cube <= lvl
        for r in radii:
            r = Fraction(r)
            bound = level + r + rho_r[r]
            near = dist <= _scale_level(r, den)
            target = gap_cube <= _scale_level(bound, den)
            ok = True
            witness = None
            value = Fraction(0)
            for x in range(n):
                reach = member[x] @ near            # reach[y, z'] = some z in [x,y]_L near z'
                bad = reach & ~target[x]
                if bad.any():
                    ok = False
                    y, zp = np.unravel_index(int(np.argmax(bad)), bad.shape)
                    witness = (x, int(y), int(zp))
                    value = _descale(int(gap_cube[x, y, zp]), den)
                    break
            checks.append(IntervalCheck(
                f"neighborhood-L={format_extended(level)}-r={format_extended(r)}",
                bound, value if not ok else Fraction(0), ok, witness))

    # part 3: chained containment at each level
    empirical = Fraction(0)
    for level in levels:
        lvl = _scale_level(level, den)
        rho_l = probe.at(level, budget)
        rho_cl = probe.at(c + level, budget)
        if any(is_infinite(v) for v in (rho_l, rho_c, rho_cl)):
            chained = INF
        else:
            chained = level + 3 * c + rho_l + rho_c + rho_cl
        member = gap_cube <= lvl
        ok = True
        witness = None
        value = Fraction(0)
        worst = 0
        for x in range(n):
            # reach[y, w] = exists z in [x,y]_L with w in [x,z]_L
            reach = member[x] @ member[x]
            vals = np.where(reach, gap_cube[x], 0)
            local = int(vals.max())
            if local > worst:
                worst = local
            if not is_infinite(chained):
                bad = reach & (gap_cube[x] > _scale_level(chained, den))
                if bad.any() and ok:
                    ok = False
                    y, w = np.unravel_index(int(np.argmax(bad)), bad.shape)
                    witness = (x, int(y), int(w))
                    value = _descale(int(gap_cube[x, y, w]), den)
        empirical = max(empirical, _descale(worst, den))
        checks.append(IntervalCheck(
            f"chain-L={format_extended(level)}", chained,
            value if not ok else _descale(worst, den), ok, witness))

    chained_default = levels[0] + 3 * c + probe.at(levels[0], budget) + rho_c \
        + probe.at(c + levels[0], budget)
    return IntervalReport(checks=tuple(checks), chained_level=chained_default,
                          empirical_chained_level=empirical)


# ---------------------------------------------------------------------------
# induced, transferred, and Rips-scale operators


@dataclass(frozen=True)
class InducedMedian:
    op: TernaryOp                 # on the subspace
    radius: Fraction              # max gap from parent medians to the subset
    witness: tuple | None         # subset triple realising the radius
    subset_indices: tuple         # ambient indices, ascending


def induce_median(op: TernaryOp, subset, budget: Budget = DEFAULT_BUDGET) -> InducedMedian:
    """Nearest-subset-point operator induced by the ambient one.

    The radius is the exact max over subset triples of the ambient distance
    from the parent median to the subset; the induced table maps each triple to
    the nearest subset point (lowest ambient index on ties).
    """
    space = op.space
    idx = sorted(space.index(p) for p in subset)
    if not idx:
        raise FormatError("induce: empty subset")
    if len(set(idx)) != len(idx):
        raise FormatError("induce: repeated subset points")
    k = len(idx)
    if k ** 3 > budget.exact_scan:
        raise BudgetError(f"induce: {k}^3 subset triples exceed the scan budget")
    scaled = space.scaled()
    dist = scaled.matrix
    sub = np.array(idx, dtype=np.int64)
    to_sub = dist[:, sub]
    nearest_pos = np.argmin(to_sub, axis=1)
    nearest_gap = to_sub[np.arange(space.n), nearest_pos]
    table = np.empty(k ** 3, dtype=np.int64)
    radius = 0
    witness = (0, 0, 0)
    for t0 in range(0, k ** 3, _CHUNK):
        t1 = min(t0 + _CHUNK, k ** 3)
        ts = np.arange(t0, t1, dtype=np.int64)
        parent = op.apply_indices(sub[ts // (k * k)], sub[(ts // k) % k], sub[ts % k])
        table[t0:t1] = nearest_pos[parent]
        gaps = nearest_gap[parent]
        local = int(gaps.max()) if gaps.size else 0
        if local > radius:
            radius = local
            at = t0 + int(np.argmax(gaps))
            witness = (at // (k * k), (at // k) % k, at % k)
        # exactness of the recorded radius: nearest choice realises each gap
        check = dist[sub[table[t0:t1]], parent]
        if not np.array_equal(check, gaps):
            raise AssertionError("induced operator: nearest-point gaps disagree")
    points = [space.points[i] for i in idx]
    sub_space = space.subspace(points)
    sub_op = TernaryOp(sub_space, "induced", table=table)
    return InducedMedian(op=sub_op, radius=_descale(radius, scaled.denominator),
                         witness=witness if radius > 0 else None,
                         subset_indices=tuple(idx))


@dataclass(frozen=True)
class TransferredMedian:
    op: TernaryOp
    certificate: MedianCertificate
    cmp: Fraction                 # cmp defect of the forward map
    equivalence_kappa: tuple      # (kappa_gf, kappa_fg)


def transfer_median(f: ControlledMap, g: ControlledMap, op: TernaryOp,
                    budget: Budget = DEFAULT_BUDGET) -> TransferredMedian:
    """Pull the operator back along a coarse equivalence: m'(a,b,c) = g(m(fa,fb,fc))."""
    if op.space.points != f.codomain.points:
        raise FormatError("transfer: operator lives on different points than the map codomain")
    eq = certify_coarse_equivalence(f, g)
    if not eq.finite:
        raise ToolkitError("transfer: coarse equivalence has infinite closeness defect")
    table = _scan.build_transfer_table(op.flat_table(budget), op.n,
                                       f.image_indices(), g.image_indices())
    out = TernaryOp(f.domain, "transferred", table=table)
    cert = median_certificate(out, budget)
    value, _ = cmp_defect(f, out, op, budget)
    return TransferredMedian(op=out, certificate=cert, cmp=value,
                             equivalence_kappa=(eq.kappa_gf, eq.kappa_fg))


@dataclass(frozen=True)
class ScaledMedian:
    """The base operator reinterpreted on a Rips graph, with its own certificate."""

    rips: RipsGraph
    op: TernaryOp                 # same table, Rips metric
    certificate: MedianCertificate
    rho_sigma: Fraction           # base control at the scale
    lipschitz_check: tuple        # (value, bound) of the cross-checked one-step displacement


def rips_median(rips: RipsGraph, op: TernaryOp,
                certificate: MedianCertificate | None = None,
                budget: Budget = DEFAULT_BUDGET) -> ScaledMedian:
    """Reinterpret the operator on the scale-sigma Rips graph.

    The one-Lipschitz property into the Rips graph at scale rho(sigma) reduces
    to adjacent triples because l-infinity products of path metrics are path
    metrics: every unit step of a triple moves the operator value at most
    rho(sigma) in the base, i.e. one step at the coarser scale.  The exact
    one-step displacement is cross-checked against the base probe at sigma.
    """
    if op.space.points != rips.base.points:
        raise FormatError("rips median: operator lives on different points than the base")
    sigma = rips.scale
    base_scaled = rips.base.scaled()
    if sigma == 0 and (base_scaled.matrix[~np.eye(rips.base.n, dtype=bool)] > 0).any():
        raise FormatError("rips median: scale 0 on a space with distinct points")
    if certificate is None:
        certificate = median_certificate(op, budget)
    rho_sigma = certificate.control.at(sigma, budget)
    # cross-check: pairs selected by Rips adjacency, displacement in the base
    table = op.flat_table(budget)
    rips_scaled = rips.metric.scaled()
    value, _ = _scan.scan_displacement_at(
        rips_scaled.matrix, table, 1 * rips_scaled.denominator,
        value_dist=base_scaled.matrix)
    one_step = _descale(value, base_scaled.denominator)
    if one_step != rho_sigma:
        raise AssertionError(
            f"one-step displacement {one_step} differs from the base control "
            f"{rho_sigma} at scale {sigma}"
        )
    scaled_op = TernaryOp(rips.metric, op.kind, table=table)
    if (rips_scaled.denominator == base_scaled.denominator
            and np.array_equal(rips_scaled.matrix, base_scaled.matrix)):
        # same matrix, same table: every defect scan would reproduce the base
        # certificate, so carry it over instead of rescanning
        cert = replace(certificate, op=scaled_op, control=OperatorControl(scaled_op))
    else:
        cert = median_certificate(scaled_op, budget)
    return ScaledMedian(rips=rips, op=scaled_op, certificate=cert,
                        rho_sigma=rho_sigma, lipschitz_check=(one_step, rho_sigma))


# ---------------------------------------------------------------------------
# JSON wire format


def median_from_json(space: FiniteMetricSpace, obj,
                     budget: Budget = DEFAULT_BUDGET) -> TernaryOp:
    """Operator kinds: table | graph-median | one-median | product."""
    if not isinstance(obj, dict):
        raise FormatError("median: expected an object")
    kind = obj.get("kind")
    if kind == "table":
        if "values" not in obj:
            raise FormatError("median.values: missing")
        return table_op(space, obj["values"])
    if kind == "graph-median":
        return graph_median_op(space, budget)
    if kind == "one-median":
        return one_median_op(space, budget)
    if kind == "product":
        factors = obj.get("factors")
        if not isinstance(factors, list) or not factors:
            raise FormatError("median.factors: expected a non-empty list")
        from .metric import space_from_json
        ops = []
        for pos, f in enumerate(factors):
            if not isinstance(f, dict) or "space" not in f or "median" not in f:
                raise FormatError(f"median.factors[{pos}]: expected space and median")
            fspace = space_from_json(f["space"])
            ops.append(median_from_json(fspace, f["median"], budget))
        prod_space = FiniteMetricSpace.linf_product([o.space for o in ops])
        if prod_space.points != space.points:
            raise FormatError("median.factors: product points do not match the space")
        return TernaryOp(space, "product", factors=tuple(ops))
    raise FormatError(f"median.kind: unknown kind {kind!r}")


def median_to_json(op: TernaryOp, budget: Budget = DEFAULT_BUDGET) -> dict:
    if op.kind == "product" and op._table is None:
        from .metric import space_to_json
        return {"kind": "product", "factors": [
            {"space": space_to_json(f.space), "median": median_to_json(f, budget)}
            for f in op.factors]}
    return {"kind": "table", "values": [int(v) for v in op.flat_table(budget)]}
