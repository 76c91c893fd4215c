"""Finite metric spaces with exact rational distances and a first class infinity.

Distances are integers or ``fractions.Fraction``; the value ``math.inf`` stands
for pairs in different components.  No finite distance is ever represented as a
float, so every comparison and every reported constant is exact.

The module also provides empirical upper controls (non-decreasing step
functions sampled at the distances that actually occur), controlled maps, and
the closeness / Hausdorff / coarse-equivalence measurements built on them.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError

INF = math.inf

#: scaled integer standing for an infinite distance inside numpy kernels
SENTINEL = 1 << 61
#: largest scaled finite value the kernels accept (sums of two must not overflow)
_FINITE_LIMIT = 1 << 50

Extended = object  # int | Fraction | float('inf'); informal alias used in docs


def is_infinite(value) -> bool:
    return value == INF


def ext_add(*values):
    """Sum of extended values; any infinite term makes the sum infinite."""
    total = Fraction(0)
    for v in values:
        if is_infinite(v):
            return INF
        total += v
    return total


def parse_extended(text):
    """Parse ``"inf"`` or an exact rational literal like ``"3"`` or ``"5/2"``."""
    if isinstance(text, bool):
        raise FormatError(f"expected a rational or 'inf', got {text!r}")
    if isinstance(text, int):
        return text
    if isinstance(text, str):
        if text.strip() == "inf":
            return INF
        try:
            value = Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"bad rational literal {text!r}: {exc}") from None
        return int(value) if value.denominator == 1 else value
    raise FormatError(f"expected a rational or 'inf', got {text!r}")


def format_extended(value) -> str:
    """Inverse of :func:`parse_extended`; exact, no floats."""
    if is_infinite(value):
        return "inf"
    return str(Fraction(value))


def _as_fraction(value, what: str) -> Fraction:
    if isinstance(value, float):
        raise FormatError(f"{what} must be an exact rational, got float {value!r}")
    return Fraction(value)


@dataclass(frozen=True)
class ScaledMetric:
    """Integer rescaling of a distance table for the numpy kernels.

    ``matrix[i, j] == denominator * d(i, j)`` for finite entries and
    ``SENTINEL`` for infinite ones.
    """

    matrix: np.ndarray
    denominator: int
    has_infinite: bool

    def to_extended(self, scaled: int):
        if scaled >= SENTINEL:
            return INF
        value = Fraction(int(scaled), self.denominator)
        return int(value) if value.denominator == 1 else value


class FiniteMetricSpace:
    """A finite point set with an exact, possibly infinite, distance table.

    Zero distance between distinct points is allowed (the table only has to be
    a pseudometric); infinity marks pairs in different components and satisfies
    ``inf + x == inf`` and ``max(inf, x) == inf``.
    """

    __slots__ = ("name", "points", "_index", "_rows", "_scaled", "_values")

    def __init__(self, points: Sequence, rows: Sequence[Sequence], name: str = "",
                 validate: bool = True, validate_triangle: bool | None = None):
        self.name = name
        self.points = tuple(points)
        if len(set(self.points)) != len(self.points):
            raise FormatError("points: duplicate labels")
        self._index = {p: i for i, p in enumerate(self.points)}
        n = len(self.points)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise FormatError("metric.d: table is not square of size len(points)")
        self._rows = tuple(tuple(row) for row in rows)
        self._scaled = None
        self._values = None
        if validate:
            self._validate_basic()
            if validate_triangle is None:
                validate_triangle = n <= 600
            if validate_triangle:
                self.check_triangle()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_matrix(cls, points, rows, name: str = "") -> "FiniteMetricSpace":
        return cls(points, rows, name=name, validate=True, validate_triangle=True)

    @classmethod
    def from_edges(cls, points, edges: Iterable[tuple], name: str = "") -> "FiniteMetricSpace":
        """Shortest-path metric of an undirected graph with rational weights.

        ``edges`` holds ``(p, q, weight)`` triples with labels or indices;
        pairs in different components get distance ``inf``.
        """
        points = tuple(points)
        index = {p: i for i, p in enumerate(points)}
        n = len(points)
        adjacency: list[list[tuple[int, Fraction]]] = [[] for _ in range(n)]
        unit = True
        for edge in edges:
            if len(edge) == 2:
                p, q = edge
                w = 1
            else:
                p, q, w = edge
            i = p if isinstance(p, int) else index[p]
            j = q if isinstance(q, int) else index[q]
            if not (0 <= i < n and 0 <= j < n):
                raise FormatError(f"edges: endpoint out of range in {edge!r}")
            w = _as_fraction(w, "edge weight")
            if w < 0:
                raise FormatError(f"edges: negative weight in {edge!r}")
            if w != 1:
                unit = False
            adjacency[i].append((j, w))
            adjacency[j].append((i, w))
        if unit:
            rows = _unit_bfs_rows(adjacency, n)
        else:
            rows = [_dijkstra_row(adjacency, s, n) for s in range(n)]
        return cls(points, rows, name=name, validate=False)

    @classmethod
    def linf_product(cls, factors: Sequence["FiniteMetricSpace"], name: str = "") -> "FiniteMetricSpace":
        """Product space with the max metric; points are tuples of factor points."""
        if not factors:
            raise FormatError("linf_product: need at least one factor")
        import itertools

        points = list(itertools.product(*[f.points for f in factors]))
        mats = [f.scaled() for f in factors]
        denom = _lcm_all([m.denominator for m in mats])
        grids = np.meshgrid(*[np.arange(f.n) for f in factors], indexing="ij")
        coords = [g.reshape(-1) for g in grids]
        m = len(points)
        out = np.zeros((m, m), dtype=np.int64)
        for mat, col in zip(mats, coords):
            scale = denom // mat.denominator
            part = mat.matrix[np.ix_(col, col)]
            part = np.where(part >= SENTINEL, SENTINEL, part * scale)
            np.maximum(out, part, out=out)
        rows = _rows_from_scaled(out, denom)
        return cls(points, rows, name=name, validate=False)

    def subspace(self, subset: Sequence, name: str = "") -> "FiniteMetricSpace":
        """Restriction to ``subset`` (labels or indices), in ambient index order."""
        idx = sorted(self.index(p) for p in subset)
        if len(set(idx)) != len(idx):
            raise FormatError("subspace: repeated points")
        pts = [self.points[i] for i in idx]
        rows = [[self._rows[i][j] for j in idx] for i in idx]
        return FiniteMetricSpace(pts, rows, name=name, validate=False)

    # -- basic queries -----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.points)

    def index(self, p) -> int:
        if isinstance(p, int) and p not in self._index:
            if 0 <= p < self.n:
                return p
            raise FormatError(f"point index {p} out of range")
        try:
            return self._index[p]
        except KeyError:
            raise FormatError(f"unknown point {p!r}") from None

    def d(self, p, q):
        return self._rows[self.index(p)][self.index(q)]

    def d_at(self, i: int, j: int):
        return self._rows[i][j]

    def row(self, i: int):
        return self._rows[i]

    def distance_values(self) -> tuple:
        """Sorted distinct finite distance values, including 0."""
        if self._values is None:
            vals = {v for row in self._rows for v in row if not is_infinite(v)}
            vals.add(0)
            self._values = tuple(sorted(vals))
        return self._values

    @property
    def has_infinite(self) -> bool:
        return self.scaled().has_infinite

    def diameter(self):
        best = 0
        for i in range(self.n):
            for v in self._rows[i]:
                if is_infinite(v):
                    return INF
                if v > best:
                    best = v
        return best

    def components(self) -> list[list[int]]:
        """Connected components under finiteness of distance."""
        seen = [False] * self.n
        out = []
        for s in range(self.n):
            if seen[s]:
                continue
            comp = [j for j in range(self.n) if not is_infinite(self._rows[s][j])]
            for j in comp:
                seen[j] = True
            out.append(comp)
        return out

    def scaled(self) -> ScaledMetric:
        if self._scaled is None:
            denom = _lcm_all(
                [Fraction(v).denominator for row in self._rows for v in row if not is_infinite(v)] or [1]
            )
            mat = np.empty((self.n, self.n), dtype=np.int64)
            has_inf = False
            for i, row in enumerate(self._rows):
                for j, v in enumerate(row):
                    if is_infinite(v):
                        mat[i, j] = SENTINEL
                        has_inf = True
                    else:
                        mat[i, j] = int(Fraction(v) * denom)
            finite = mat[mat < SENTINEL]
            if finite.size and finite.max(initial=0) > _FINITE_LIMIT:
                raise FormatError("metric.d: scaled distances exceed the exact integer range")
            self._scaled = ScaledMetric(mat, denom, has_inf)
        return self._scaled

    # -- validation --------------------------------------------------------

    def _validate_basic(self):
        for i, row in enumerate(self._rows):
            if row[i] != 0:
                raise FormatError(f"metric.d: nonzero diagonal at point {self.points[i]!r}")
            for j, v in enumerate(row):
                if isinstance(v, float) and not is_infinite(v):
                    raise FormatError(f"metric.d: float distance at ({i}, {j}); use exact rationals")
                if not is_infinite(v) and v < 0:
                    raise FormatError(f"metric.d: negative distance at ({i}, {j})")
                if v != self._rows[j][i]:
                    raise FormatError(f"metric.d: asymmetry at ({i}, {j})")

    def check_triangle(self):
        """Raise FormatError on a triangle-inequality violation (exact, O(n^3))."""
        sm = self.scaled()
        d = sm.matrix
        n = self.n
        for i in range(n):
            via = d[i][:, None] + d  # via[j, k] = d(i,j) + d(j,k); SENTINEL stays dominant
            bad = d[i][None, :] > via
            if bad.any():
                j, k = np.argwhere(bad)[0]
                raise FormatError(
                    f"metric.d: triangle violation d({self.points[i]!r},{self.points[k]!r}) "
                    f"> d(.,{self.points[j]!r}) + d({self.points[j]!r},.)"
                )

    def __repr__(self):
        label = self.name or "space"
        return f"FiniteMetricSpace({label!r}, n={self.n})"


def _unit_bfs_rows(adjacency, n):
    rows = []
    for s in range(n):
        dist = [INF] * n
        dist[s] = 0
        frontier = [s]
        level = 0
        while frontier:
            level += 1
            nxt = []
            for u in frontier:
                for v, _w in adjacency[u]:
                    if is_infinite(dist[v]):
                        dist[v] = level
                        nxt.append(v)
            frontier = nxt
        rows.append(dist)
    return rows


def _dijkstra_row(adjacency, s, n):
    dist = [INF] * n
    dist[s] = Fraction(0)
    heap = [(Fraction(0), s)]
    while heap:
        du, u = heapq.heappop(heap)
        if du > dist[u]:
            continue
        for v, w in adjacency[u]:
            alt = du + w
            if is_infinite(dist[v]) or alt < dist[v]:
                dist[v] = alt
                heapq.heappush(heap, (alt, v))
    return [int(x) if isinstance(x, Fraction) and x.denominator == 1 else x for x in dist]


def _rows_from_scaled(mat: np.ndarray, denom: int):
    rows = []
    for i in range(mat.shape[0]):
        row = []
        for j in range(mat.shape[1]):
            v = int(mat[i, j])
            if v >= SENTINEL:
                row.append(INF)
            else:
                f = Fraction(v, denom)
                row.append(int(f) if f.denominator == 1 else f)
        rows.append(row)
    return rows


def _lcm_all(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


# ---------------------------------------------------------------------------
# controls


@dataclass(frozen=True)
class ControlFunction:
    """Non-decreasing step function used as an upper control.

    ``samples`` is a sorted tuple of ``(threshold, bound)`` pairs.  Evaluation
    at ``t`` returns the bound of the smallest threshold >= t, and the final
    bound beyond the last threshold.
    """

    samples: tuple

    def __post_init__(self):
        if not self.samples:
            raise FormatError("control: needs at least one sample")
        prev_t, prev_b = None, None
        for t, b in self.samples:
            if is_infinite(t) or (isinstance(t, float)):
                raise FormatError("control: thresholds must be finite rationals")
            if prev_t is not None:
                if t <= prev_t:
                    raise FormatError("control: thresholds must be strictly increasing")
                if _ext_lt(b, prev_b):
                    raise FormatError("control: bounds must be non-decreasing")
            prev_t, prev_b = t, b

    def __call__(self, t):
        if is_infinite(t):
            return self.samples[-1][1]
        for thr, bound in self.samples:
            if thr >= t:
                return bound
        return self.samples[-1][1]

    @property
    def final_bound(self):
        return self.samples[-1][1]

    def thresholds(self):
        return tuple(t for t, _ in self.samples)

    @staticmethod
    def pointwise_max(controls: Sequence["ControlFunction"]) -> "ControlFunction":
        """The pointwise maximum, sampled on the union of the thresholds."""
        if not controls:
            raise FormatError("pointwise_max: no controls given")
        thresholds = sorted({t for c in controls for t in c.thresholds()})
        samples = []
        for t in thresholds:
            bound = max((c(t) for c in controls), key=_ext_key)
            samples.append((t, bound))
        return ControlFunction(tuple(samples))

    def dominates_samples(self, other: "ControlFunction") -> bool:
        pts = sorted(set(self.thresholds()) | set(other.thresholds()))
        return all(not _ext_lt(self(t), other(t)) for t in pts)

    def describe(self) -> list[list[str]]:
        return [[format_extended(t), format_extended(b)] for t, b in self.samples]


def _ext_key(v):
    return (1, 0) if is_infinite(v) else (0, v)


def _ext_lt(a, b) -> bool:
    return _ext_key(a) < _ext_key(b)


def linear_control(slope, upto, step=1) -> ControlFunction:
    """Convenience control with bound slope*t sampled on a grid; used in tests."""
    samples = tuple((t, slope * t) for t in range(0, upto + 1, step))
    return ControlFunction(samples)


# ---------------------------------------------------------------------------
# controlled maps


class ControlledMap:
    """A map between finite metric spaces together with an upper control.

    The control dominates the map: ``d(fx, fx') <= control(d(x, x'))`` for all
    pairs at finite distance.  By default the minimal empirical control is
    computed; a user-supplied control is validated against the map.
    """

    __slots__ = ("domain", "codomain", "table", "control", "name")

    def __init__(self, domain: FiniteMetricSpace, codomain: FiniteMetricSpace,
                 table: Sequence[int], control: ControlFunction | None = None,
                 name: str = ""):
        self.domain = domain
        self.codomain = codomain
        self.table = tuple(int(i) for i in table)
        self.name = name
        if len(self.table) != domain.n:
            raise FormatError("map table: length differs from domain size")
        for i in self.table:
            if not 0 <= i < codomain.n:
                raise FormatError(f"map table: image index {i} out of range")
        empirical = upper_control_of(self)
        if control is None:
            self.control = empirical
        else:
            if not control.dominates_samples(empirical):
                raise FormatError("control: does not dominate the map it is attached to")
            self.control = control

    @classmethod
    def from_mapping(cls, domain, codomain, mapping, name: str = "") -> "ControlledMap":
        if callable(mapping):
            table = [codomain.index(mapping(p)) for p in domain.points]
        else:
            table = [codomain.index(mapping[p]) for p in domain.points]
        return cls(domain, codomain, table, name=name)

    @classmethod
    def identity(cls, space: FiniteMetricSpace, codomain: FiniteMetricSpace | None = None,
                 name: str = "") -> "ControlledMap":
        """Identity on points, optionally into a different metric on the same points."""
        codomain = codomain or space
        if codomain.points != space.points:
            raise FormatError("identity: spaces carry different point sets")
        return cls(space, codomain, range(space.n), name=name)

    def __call__(self, p):
        return self.codomain.points[self.table[self.domain.index(p)]]

    def apply_index(self, i: int) -> int:
        return self.table[i]

    def after(self, other: "ControlledMap") -> "ControlledMap":
        """Composite self o other."""
        if other.codomain.points != self.domain.points:
            raise FormatError("compose: inner codomain and outer domain differ")
        table = [self.table[i] for i in other.table]
        return ControlledMap(other.domain, self.codomain, table)

    def image_indices(self) -> np.ndarray:
        return np.asarray(self.table, dtype=np.int64)

    def __repr__(self):
        nm = f" {self.name!r}" if self.name else ""
        return f"ControlledMap({self.domain!r} -> {self.codomain!r}{nm})"


def upper_control_of(f: ControlledMap | tuple) -> ControlFunction:
    """Minimal empirical control of a map, sampled at occurring domain distances.

    Pairs at infinite domain distance impose no constraint; use
    :func:`infinite_fiber_spread` for that diagnostic.
    """
    if isinstance(f, ControlledMap):
        dom, cod, table = f.domain, f.codomain, f.table
    else:
        dom, cod, table = f
    sd = dom.scaled()
    sc = cod.scaled()
    img = np.asarray(table, dtype=np.int64)
    dmat = sd.matrix.reshape(-1)
    imat = sc.matrix[np.ix_(img, img)].reshape(-1)
    finite = dmat < SENTINEL
    dmat, imat = dmat[finite], imat[finite]
    thresholds = np.unique(dmat)
    buckets = np.searchsorted(thresholds, dmat)
    acc = np.zeros(len(thresholds), dtype=np.int64)
    np.maximum.at(acc, buckets, imat)
    np.maximum.accumulate(acc, out=acc)
    samples = []
    for t, b in zip(thresholds.tolist(), acc.tolist()):
        thr = Fraction(t, sd.denominator)
        thr = int(thr) if thr.denominator == 1 else thr
        samples.append((thr, sc.to_extended(b)))
    return ControlFunction(tuple(samples))


def infinite_fiber_spread(f: ControlledMap):
    """Max image distance over domain pairs at infinite distance; None if no such pair."""
    sd = f.domain.scaled()
    if not sd.has_infinite:
        return None
    sc = f.codomain.scaled()
    img = np.asarray(f.table, dtype=np.int64)
    mask = sd.matrix >= SENTINEL
    vals = sc.matrix[np.ix_(img, img)][mask]
    return sc.to_extended(int(vals.max()))


def closeness_defect(f: ControlledMap, g: ControlledMap):
    """Minimal kappa with f and g kappa-close; requires equal domains and codomains."""
    if f.domain.points != g.domain.points:
        raise FormatError("closeness: domains carry different point sets")
    if f.codomain.points != g.codomain.points:
        raise FormatError("closeness: codomains carry different point sets")
    sc = f.codomain.scaled()
    fa = np.asarray(f.table, dtype=np.int64)
    ga = np.asarray(g.table, dtype=np.int64)
    vals = sc.matrix[fa, ga]
    return sc.to_extended(int(vals.max()))


@dataclass(frozen=True)
class EquivalenceReport:
    """Closeness defects of the two composites of a coarse-equivalence pair."""

    kappa_gf: object
    kappa_fg: object

    @property
    def finite(self) -> bool:
        return not (is_infinite(self.kappa_gf) or is_infinite(self.kappa_fg))


def certify_coarse_equivalence(f: ControlledMap, g: ControlledMap) -> EquivalenceReport:
    """Closeness of g o f and f o g to the identities of their spaces."""
    if f.codomain.points != g.domain.points or g.codomain.points != f.domain.points:
        raise FormatError("coarse equivalence: maps do not compose both ways")
    back = g.after(f)
    forth = f.after(g)
    return EquivalenceReport(
        kappa_gf=closeness_defect(back, ControlledMap.identity(f.domain)),
        kappa_fg=closeness_defect(forth, ControlledMap.identity(g.domain)),
    )


# ---------------------------------------------------------------------------
# subsets


def _subset_indices(ambient: FiniteMetricSpace, subset) -> np.ndarray:
    idx = sorted({ambient.index(p) for p in subset})
    if not idx:
        raise FormatError("subset: empty point set")
    return np.asarray(idx, dtype=np.int64)


def set_distance(ambient: FiniteMetricSpace, p, subset):
    """Distance from a point to a finite subset."""
    idx = _subset_indices(ambient, subset)
    sm = ambient.scaled()
    return sm.to_extended(int(sm.matrix[ambient.index(p), idx].min()))


def directed_excess(ambient: FiniteMetricSpace, first, second):
    """sup over u in first of d(u, second); the one-sided Hausdorff term."""
    a = _subset_indices(ambient, first)
    b = _subset_indices(ambient, second)
    sm = ambient.scaled()
    vals = sm.matrix[np.ix_(a, b)].min(axis=1)
    return sm.to_extended(int(vals.max()))


def hausdorff_distance(ambient: FiniteMetricSpace, first, second):
    """Hausdorff distance of two non-empty finite subsets inside ``ambient``."""
    one = directed_excess(ambient, first, second)
    two = directed_excess(ambient, second, first)
    return max(one, two, key=_ext_key)


def neighborhood(ambient: FiniteMetricSpace, subset, radius) -> list:
    """Points of the ambient space within ``radius`` of the subset."""
    idx = _subset_indices(ambient, subset)
    sm = ambient.scaled()
    r = int(Fraction(radius) * sm.denominator)
    vals = sm.matrix[:, idx].min(axis=1)
    return [ambient.points[i] for i in np.nonzero(vals <= r)[0]]


# ---------------------------------------------------------------------------
# JSON space format


def space_from_json(obj: Mapping, name: str | None = None) -> FiniteMetricSpace:
    """Load a space from the documented JSON form.

    ``{"name": ..., "points": [...], "metric": {"kind": "matrix", "d": [[...]]}}``
    or ``{"kind": "graph", "edges": [[i, j, w], ...]}`` whose metric is the exact
    shortest-path metric (infinite across components).
    """
    if not isinstance(obj, Mapping):
        raise FormatError("space: expected a JSON object")
    try:
        points = list(obj["points"])
    except KeyError:
        raise FormatError("space.points: missing") from None
    metric = obj.get("metric")
    if not isinstance(metric, Mapping) or "kind" not in metric:
        raise FormatError("space.metric: missing or lacks 'kind'")
    label = name if name is not None else str(obj.get("name", ""))
    kind = metric["kind"]
    if kind == "matrix":
        rows_raw = metric.get("d")
        if rows_raw is None:
            raise FormatError("space.metric.d: missing")
        rows = [[parse_extended(v) for v in row] for row in rows_raw]
        return FiniteMetricSpace.from_matrix(points, rows, name=label)
    if kind == "graph":
        edges_raw = metric.get("edges")
        if edges_raw is None:
            raise FormatError("space.metric.edges: missing")
        edges = []
        for e in edges_raw:
            if len(e) == 2:
                i, j = e
                w = 1
            elif len(e) == 3:
                i, j, w = e
            else:
                raise FormatError(f"space.metric.edges: bad edge {e!r}")
            edges.append((int(i), int(j), parse_extended(w)))
        return FiniteMetricSpace.from_edges(points, edges, name=label)
    raise FormatError(f"space.metric.kind: unknown kind {kind!r}")


def space_to_json(space: FiniteMetricSpace) -> dict:
    rows = [[format_extended(v) for v in row] for row in space._rows]
    return {
        "name": space.name,
        "points": [p if isinstance(p, str) else str(p) for p in space.points],
        "metric": {"kind": "matrix", "d": rows},
    }


def graph_metric_to_json(space: FiniteMetricSpace) -> dict:
    """Emit a unit-distance adjacency presentation (used for Rips graphs)."""
    edges = []
    for i in range(space.n):
        for j in range(i + 1, space.n):
            if space.d_at(i, j) == 1:
                edges.append([i, j, "1"])
    return {
        "name": space.name,
        "points": [p if isinstance(p, str) else str(p) for p in space.points],
        "metric": {"kind": "graph", "edges": edges},
    }
