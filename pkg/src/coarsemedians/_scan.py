"""Exhaustive enumeration kernels.

Every scan works on integer-scaled distance matrices (``SENTINEL`` marking
infinity) and flat ternary tables ``table[(i*n + j)*n + k] = m(i, j, k)``, so
all arithmetic is exact int64.  Scans return the scaled maximum together with
the lexicographically least witness attaining it: chunks ascend in the leading
coordinate and ``argmax`` picks the first occurrence inside a chunk, which is
row-major, hence lexicographic, order.

Defect scans only ever gather single distances (no sums), so SENTINEL entries
propagate as "infinite" through ``max`` without overflow.
"""

from __future__ import annotations

import itertools

import numpy as np

from .metric import SENTINEL

_ELEMS = 4 << 20  # target elements per chunk

#: permutations of a triple, identity first; order fixed for witness encoding
PERMUTATIONS = tuple(itertools.permutations(range(3)))


def _blocks(total: int, size: int):
    size = max(1, size)
    for start in range(0, total, size):
        yield start, min(start + size, total)


def _decode(flat: int, dims) -> tuple:
    out = []
    for d in reversed(dims):
        out.append(flat % d)
        flat //= d
    return tuple(reversed(out))


class _Max:
    """Running maximum with first-witness tracking."""

    __slots__ = ("value", "witness")

    def __init__(self):
        self.value = -1
        self.witness = None

    def update(self, vals: np.ndarray, dims, offset: tuple):
        local = int(vals.max()) if vals.size else -1
        if local > self.value:
            self.value = local
            pos = _decode(int(np.argmax(vals)), dims)
            self.witness = tuple(o + p for o, p in zip(offset, pos))

    def result(self):
        return self.value, self.witness


# ---------------------------------------------------------------------------
# ternary table builders


def build_one_median_table(dist: np.ndarray) -> np.ndarray:
    """Table of the sum-of-distances minimiser, lowest index on ties."""
    n = dist.shape[0]
    out = np.empty(n * n * n, dtype=np.int64)
    yb = max(1, _ELEMS // (n * n))
    for x in range(n):
        col_x = dist[:, x][:, None, None]
        for y0, y1 in _blocks(n, yb):
            sums = col_x + dist[:, y0:y1][:, :, None] + dist[:, None, :]
            block = np.argmin(sums, axis=0)
            out[x * n * n + y0 * n: x * n * n + y1 * n] = block.reshape(-1)
    return out


def build_graph_median_table(dist: np.ndarray) -> np.ndarray:
    """Exact median via geodesic-interval intersection.

    Raises ValueError naming a witness triple when the intersection is not a
    single vertex, i.e. when the metric is not that of a median graph.
    """
    n = dist.shape[0]
    if (dist >= SENTINEL).any():
        raise ValueError("graph median: space must be connected")
    member = np.empty((n, n, n), dtype=bool)  # member[a, b, v]
    for a in range(n):
        member[a] = dist[a][None, :] + dist == dist[a][:, None]
    out = np.empty(n * n * n, dtype=np.int64)
    yb = max(1, _ELEMS // (n * n))
    for x in range(n):
        for y0, y1 in _blocks(n, yb):
            cand = member[x, y0:y1][:, None, :] & member[y0:y1] & member[:, x, :][None, :, :]
            counts = cand.sum(axis=-1)
            if (counts != 1).any():
                y_off, z = np.argwhere(counts != 1)[0]
                raise ValueError(
                    f"graph median: interval intersection has size {int(counts[y_off, z])} "
                    f"at triple ({x}, {int(y_off) + y0}, {int(z)}); not a median graph"
                )
            block = np.argmax(cand, axis=-1)
            out[x * n * n + y0 * n: x * n * n + y1 * n] = block.reshape(-1)
    return out


def build_transfer_table(med_flat: np.ndarray, n_mid: int, fwd: np.ndarray,
                         back: np.ndarray) -> np.ndarray:
    """Table of ``back(m(fwd a, fwd b, fwd c))`` on the domain of ``fwd``."""
    n = fwd.shape[0]
    out = np.empty(n * n * n, dtype=np.int64)
    yb = max(1, _ELEMS // n)
    fa = fwd.astype(np.int64)
    for x in range(n):
        for y0, y1 in _blocks(n, yb):
            idx = (fa[x] * n_mid + fa[y0:y1, None]) * n_mid + fa[None, :]
            out[x * n * n + y0 * n: x * n * n + y1 * n] = back[med_flat[idx]].reshape(-1)
    return out


def build_induced_table(dist: np.ndarray, med_flat: np.ndarray, subset: np.ndarray):
    """Induced operator on a subset: nearest subset point to the parent median.

    Returns ``(table over subset indices, scaled approximation radius, witness)``
    where the witness is the subset triple realising the radius.
    """
    n = dist.shape[0]
    sub = subset.astype(np.int64)
    k = sub.shape[0]
    to_sub = dist[:, sub]                      # (n, k)
    nearest_pos = np.argmin(to_sub, axis=1)    # first = lowest ambient index (sub sorted)
    nearest_gap = to_sub[np.arange(n), nearest_pos]
    out = np.empty(k * k * k, dtype=np.int64)
    best = _Max()
    yb = max(1, _ELEMS // (k * k))
    for a0, a1 in _blocks(k, yb):
        idx = (sub[a0:a1, None, None] * n + sub[None, :, None]) * n + sub[None, None, :]
        parent = med_flat[idx]
        out[a0 * k * k: a1 * k * k] = nearest_pos[parent].reshape(-1)
        best.update(nearest_gap[parent], (a1 - a0, k, k), (a0, 0, 0))
    radius, witness = best.result()
    return out, radius, witness


# ---------------------------------------------------------------------------
# axiom scans


def scan_localisation(dist: np.ndarray, med_flat: np.ndarray):
    n = dist.shape[0]
    xs = np.arange(n, dtype=np.int64)
    flat = ((xs * n + xs)[:, None]) * n + xs[None, :]
    m = med_flat[flat]
    vals = dist[m, xs[:, None]]
    best = _Max()
    best.update(vals, (n, n), (0, 0))
    return best.result()


def scan_symmetry(dist: np.ndarray, med_flat: np.ndarray):
    """Max over permutations and triples of d(m(perm), m(id)).

    Witness is ``(permutation index, x, y, z)``.
    """
    n = dist.shape[0]
    best = _Max()
    best.value = 0
    best.witness = (0, 0, 0, 0)
    xb = max(1, _ELEMS // (n * n))
    grids = np.meshgrid(np.arange(n, dtype=np.int64),
                        np.arange(n, dtype=np.int64), indexing="ij")
    for p_idx, perm in enumerate(PERMUTATIONS[1:], start=1):
        for x0, x1 in _blocks(n, xb):
            xs = np.arange(x0, x1, dtype=np.int64)[:, None, None]
            ys = grids[0][None, :, :]
            zs = grids[1][None, :, :]
            coords = (xs, ys, zs)
            ident = (coords[0] * n + coords[1]) * n + coords[2]
            permuted = (coords[perm[0]] * n + coords[perm[1]]) * n + coords[perm[2]]
            vals = dist[med_flat[permuted], med_flat[ident]]
            local = int(vals.max())
            if local > best.value:
                best.value = local
                pos = _decode(int(np.argmax(vals)), (x1 - x0, n, n))
                best.witness = (p_idx, pos[0] + x0, pos[1], pos[2])
    return best.result()


def scan_fourpoint(dist: np.ndarray, med_flat: np.ndarray):
    """Max over (x1, w, x2, x3) of d(m(m(x1,w,x2),w,x3), m(x1,w,m(x2,w,x3)))."""
    n = dist.shape[0]
    best = _Max()
    ws = np.arange(n, dtype=np.int64)
    # inner[w, x2, x3] = m(x2, w, x3), shared across x1
    inner_idx = (np.arange(n, dtype=np.int64)[None, :, None] * n + ws[:, None, None]) * n \
        + np.arange(n, dtype=np.int64)[None, None, :]
    inner = med_flat[inner_idx]
    xb = max(1, _ELEMS // (n * n * n))
    for x0, x1 in _blocks(n, xb):
        xs = np.arange(x0, x1, dtype=np.int64)[:, None, None, None]
        w4 = ws[None, :, None, None]
        x2 = np.arange(n, dtype=np.int64)[None, None, :, None]
        x3 = np.arange(n, dtype=np.int64)[None, None, None, :]
        first = med_flat[(xs * n + w4) * n + x2]          # m(x1, w, x2), (c, n, n, 1)
        lhs = med_flat[(first * n + w4) * n + x3]
        rhs = med_flat[(xs * n + w4) * n + inner[None, :, :, :]]
        vals = dist[lhs, rhs]
        best.update(vals, (x1 - x0, n, n, n), (x0, 0, 0, 0))
    return best.result()


def first_two_symmetric(med_flat: np.ndarray, n: int) -> bool:
    """Whether the table satisfies m(i, j, k) = m(j, i, k) everywhere."""
    cube = med_flat.reshape(n, n, n)
    return bool(np.array_equal(cube, np.swapaxes(cube, 0, 1)))


def last_two_symmetric(med_flat: np.ndarray, n: int) -> bool:
    """Whether the table satisfies m(i, j, k) = m(i, k, j) everywhere."""
    cube = med_flat.reshape(n, n, n)
    return bool(np.array_equal(cube, np.swapaxes(cube, 1, 2)))


def scan_fivepoint_exact(dist: np.ndarray, med_flat: np.ndarray):
    """Max over (v, w, x, y, z) of d(m(v,w,m(x,y,z)), m(m(v,w,x), m(v,w,y), z)).

    Per (v, w) the two sides are index arrays; equal indices contribute zero,
    so distances are gathered only at positions where they differ.  When the
    table is symmetric in its first two slots the scan may restrict to v <= w:
    both sides are then invariant under the swap, so the maximising (x, y, z)
    sets agree and the lexicographically least witness has v <= w.
    """
    n = dist.shape[0]
    if n == 0:
        return 0, None
    m32 = med_flat.astype(np.int32)
    cube = m32.reshape(n, n, n)
    rows = m32.reshape(n * n, n)
    sym = first_two_symmetric(med_flat, n)
    value = 0
    witness = (0, 0, 0, 0, 0)
    for v in range(n):
        for w in range(v if sym else 0, n):
            g = cube[v, w]
            lhs = g[m32]
            rhs = rows[g[:, None].astype(np.int64) * n + g[None, :]].reshape(-1)
            neq = lhs != rhs
            if not neq.any():
                continue
            pos = np.flatnonzero(neq)
            vals = dist[lhs[pos], rhs[pos]]
            local = int(vals.max())
            if local > value:
                value = local
                x, y, z = _decode(int(pos[np.argmax(vals)]), (n, n, n))
                witness = (v, w, x, y, z)
    return value, witness


def scan_fivepoint_sub(dist: np.ndarray, med_flat: np.ndarray, count: int, seed: int):
    """Seeded lower bound for the five-point scan."""
    n = dist.shape[0]
    rng = np.random.default_rng(seed)
    best = _Max()
    remaining = count
    while remaining > 0:
        block = min(remaining, _ELEMS)
        pts = rng.integers(0, n, size=(5, block), dtype=np.int64)
        v, w, x, y, z = pts
        mvw_x = med_flat[(v * n + w) * n + x]
        mvw_y = med_flat[(v * n + w) * n + y]
        m_xyz = med_flat[(x * n + y) * n + z]
        lhs = med_flat[(v * n + w) * n + m_xyz]
        rhs = med_flat[(mvw_x * n + mvw_y) * n + z]
        vals = dist[lhs, rhs]
        local = int(vals.max())
        if local > best.value:
            best.value = local
            at = int(np.argmax(vals))
            best.witness = (int(v[at]), int(w[at]), int(x[at]), int(y[at]), int(z[at]))
        remaining -= block
    return best.result()


# ---------------------------------------------------------------------------
# empirical control of a ternary operator


def _accumulate_rho(acc, thresholds, dinf, disp):
    buckets = np.searchsorted(thresholds, dinf)
    np.maximum.at(acc, buckets, disp)


def _finish_rho(acc):
    np.maximum.accumulate(acc[:-1], out=acc[:-1])
    return acc[:-1]


def scan_rho_exact(dist: np.ndarray, med_flat: np.ndarray, thresholds: np.ndarray):
    """Max displacement of the operator over all pairs of triples, per threshold.

    ``thresholds`` must be sorted and contain every distinct finite distance,
    so sampling there captures the whole step function.  Pairs of triples are
    split into a leading coordinate pair (ascending order by whole-pair swap
    symmetry) and a trailing double pair; trailing pairs are presorted by their
    coordinatewise distance, so each leading pair costs one value gather plus a
    per-bucket segment maximum.  The loop is memory-bound; buffers stay 32-bit
    and preallocated whenever distances and flat indices fit.
    """
    n = dist.shape[0]
    k = len(thresholds)
    if n == 0 or k == 0:
        return np.zeros(k, dtype=np.int64)
    trail = np.maximum(dist[:, None, :, None], dist[None, :, None, :]).reshape(-1)
    order = np.argsort(trail)
    boundary = np.searchsorted(trail[order], thresholds, side="right")
    # trailing pairs beyond the top threshold (e.g. infinite coordinates on a
    # disconnected space) can never enter any bucket; drop them up front
    nvalid = int(boundary[-1])
    order = order[:nvalid]
    # every threshold is a realised trailing distance (pair it with a diagonal
    # coordinate), so consecutive boundaries strictly increase and the reduceat
    # segments below are all non-empty
    starts = np.concatenate(([0], boundary[:-1]))
    narrow = int(dist.max()) < 2**31 and n * n * (n + 1) < 2**31
    work_t = np.int32 if narrow else np.int64
    ia = (order // (n * n)).astype(work_t)
    ib = (order % (n * n)).astype(work_t)
    flat = dist.reshape(-1).astype(work_t, copy=False)
    rows = med_flat.reshape(n, n * n).astype(work_t)
    rows_scaled = rows * n
    lead_bucket = np.searchsorted(thresholds, dist.ravel())
    acc = np.zeros(k, dtype=np.int64)
    g_lead = np.empty(nvalid, dtype=work_t)
    g_pair = np.empty(nvalid, dtype=work_t)
    vals = np.empty(nvalid, dtype=work_t)
    for p in range(n):
        # the leading-row gather depends on p alone; hoist it pre-multiplied
        np.take(rows_scaled[p], ia, out=g_lead)
        for q in range(p, n):
            b0 = int(lead_bucket[p * n + q])
            if b0 >= k:
                continue
            np.take(rows[q], ib, out=g_pair)
            np.add(g_lead, g_pair, out=g_pair)
            np.take(flat, g_pair, out=vals)
            seg = np.maximum.reduceat(vals, starts)
            np.maximum.accumulate(seg, out=seg)
            if int(seg[-1]) <= acc[b0]:
                continue
            np.maximum(acc[b0:], seg[b0:], out=acc[b0:])
    return acc


def scan_rho_sub(dist: np.ndarray, med_flat: np.ndarray, thresholds: np.ndarray,
                 count: int, seed: int):
    """Lower-bound control: all diagonal pairs plus seeded random pairs of triples."""
    n = dist.shape[0]
    total = n * n * n
    acc = np.zeros(len(thresholds) + 1, dtype=np.int64)
    xs = np.arange(n, dtype=np.int64)
    diag = (xs * n + xs) * n + xs
    dinf = dist.reshape(-1)
    disp = dist[med_flat[diag][:, None], med_flat[diag][None, :]].reshape(-1)
    _accumulate_rho(acc, thresholds, dinf, disp)
    rng = np.random.default_rng(seed)
    remaining = count
    while remaining > 0:
        block = min(remaining, _ELEMS)
        a = rng.integers(0, total, size=block, dtype=np.int64)
        b = rng.integers(0, total, size=block, dtype=np.int64)
        ax, ay, az = a // (n * n), (a // n) % n, a % n
        bx, by, bz = b // (n * n), (b // n) % n, b % n
        dd = dist[ax, bx]
        np.maximum(dd, dist[ay, by], out=dd)
        np.maximum(dd, dist[az, bz], out=dd)
        _accumulate_rho(acc, thresholds, dd, dist[med_flat[a], med_flat[b]])
        remaining -= block
    return _finish_rho(acc)


def displacement_pair_count(dist: np.ndarray, radius: int) -> int:
    """Number of ordered point pairs at distance <= radius (cost driver below)."""
    return int((dist <= radius).sum())


def scan_displacement_at(dist: np.ndarray, med_flat: np.ndarray, radius: int,
                         value_dist: np.ndarray | None = None):
    """Exact max displacement over pairs of triples at coordinatewise distance <= radius.

    Pairs are selected by ``dist``; the displacement between the two medians is
    measured in ``value_dist`` (default: ``dist`` itself).  Swapping a pair of
    triples leaves the displacement unchanged, so the leading coordinate pair
    is taken in ascending index order.  When the table is symmetric in its last
    two slots, jointly swapping those slots on both triples also preserves the
    displacement, so the two trailing pairs form an unordered set.  Returns
    ``(value, (triple_a, triple_b))``.
    """
    n = dist.shape[0]
    if value_dist is None:
        value_dist = dist
    m32 = med_flat.astype(np.int32)
    cube = m32.reshape(n, n, n)
    pairs = np.argwhere(dist <= radius).astype(np.int32)   # ordered, includes diagonal
    p, q = pairs[:, 0], pairs[:, 1]
    lead = pairs[p.astype(np.int64) <= q]
    e = p.shape[0]
    if e == 0:
        return 0, None
    if last_two_symmetric(med_flat, n):
        ju, ku = np.triu_indices(e)
        ia = p[ju].astype(np.int64) * n + p[ku]
        ib = q[ju].astype(np.int64) * n + q[ku]
    else:
        grid = np.arange(e, dtype=np.int64)
        ju, ku = np.repeat(grid, e), np.tile(grid, e)
        ia = p[ju].astype(np.int64) * n + p[ku]
        ib = q[ju].astype(np.int64) * n + q[ku]
    value = 0
    at = (0, 0, 0)
    for i in range(lead.shape[0]):
        lp, lq = int(lead[i, 0]), int(lead[i, 1])
        ma = cube[lp].reshape(-1)[ia]
        mb = cube[lq].reshape(-1)[ib]
        vals = value_dist[ma, mb]
        local = int(vals.max())
        if local > value:
            value = local
            at = (i, int(np.argmax(vals)))
    if value == 0:
        lp, lq = int(lead[0, 0]), int(lead[0, 1])
        return 0, ((lp, int(p[0]), int(p[0])), (lq, int(q[0]), int(q[0])))
    i, t = at
    lp, lq = int(lead[i, 0]), int(lead[i, 1])
    return value, ((lp, int(p[ju[t]]), int(p[ku[t]])), (lq, int(q[ju[t]]), int(q[ku[t]])))


# ---------------------------------------------------------------------------
# comparison scans


def scan_cmp(dist_cod: np.ndarray, med_dom: np.ndarray, med_cod: np.ndarray,
             table: np.ndarray):
    """Max over domain triples of d(f(m_dom(t)), m_cod(f t))."""
    n = table.shape[0]
    n_cod = dist_cod.shape[0]
    f = table.astype(np.int64)
    best = _Max()
    xb = max(1, _ELEMS // (n * n))
    for x0, x1 in _blocks(n, xb):
        fx = f[x0:x1][:, None, None]
        fy = f[None, :, None]
        fz = f[None, None, :]
        lhs = f[med_dom[x0 * n * n:x1 * n * n].reshape(x1 - x0, n, n)]
        rhs = med_cod[(fx * n_cod + fy) * n_cod + fz]
        vals = dist_cod[lhs, rhs]
        best.update(vals, (x1 - x0, n, n), (x0, 0, 0))
    return best.result()


def scan_closeness(dist_cod: np.ndarray, table_a: np.ndarray, table_b: np.ndarray):
    vals = dist_cod[table_a, table_b]
    best = _Max()
    best.update(vals, (table_a.shape[0],), (0,))
    return best.result()


# ---------------------------------------------------------------------------
# tripod scan


def scan_tripod(dist: np.ndarray, med_flat: np.ndarray, level: int):
    """Minimal R bounding d(o, m(x,y,z)) over all o in the three L-interval intersection.

    Returns ``(value, witness, vacuous)``; vacuous means no triple had a
    non-empty intersection, in which case value is 0.
    """
    n = dist.shape[0]
    member = np.empty((n, n, n), dtype=bool)   # member[a, b, o]
    for a in range(n):
        m_ab = med_flat[a * n * n:(a + 1) * n * n].reshape(n, n)
        member[a] = dist[m_ab, np.arange(n, dtype=np.int64)[None, :]] <= level
    best = _Max()
    nonempty = False
    for x in range(n):
        cand = member[x][:, None, :] & member & member[:, x, :][None, :, :]
        if not cand.any():
            continue
        nonempty = True
        m_xyz = med_flat[x * n * n:(x + 1) * n * n].reshape(n, n)
        gaps = dist[m_xyz[:, :, None], np.arange(n, dtype=np.int64)[None, None, :]]
        vals = np.where(cand, gaps, -1)
        local = int(vals.max())
        if local > best.value:
            best.value = local
            pos = _decode(int(np.argmax(vals)), (n, n, n))
            best.witness = (x, pos[0], pos[1], pos[2])
    if not nonempty:
        return 0, None, True
    return best.value, best.witness, False


# ---------------------------------------------------------------------------
# hyperbolicity


def scan_hyperbolicity(dist: np.ndarray):
    """Max over quadruples of (largest minus middle pairwise-sum); caller halves it."""
    n = dist.shape[0]
    best = _Max()
    best.value = 0
    best.witness = (0, 0, 0, 0)
    xb = max(1, _ELEMS // (n * n * n))
    for x0, x1 in _blocks(n, xb):
        dxy = dist[x0:x1, :, None, None]
        dxz = dist[x0:x1, None, :, None]
        dxw = dist[x0:x1, None, None, :]
        dzw = dist[None, None, :, :]
        dyw = dist[None, :, None, :]
        dyz = dist[None, :, :, None]
        s1 = dxy + dzw
        s2 = dxz + dyw
        s3 = dxw + dyz
        top = np.maximum(np.maximum(s1, s2), s3)
        bot = np.minimum(np.minimum(s1, s2), s3)
        mid = s1 + s2 + s3 - top - bot
        vals = top - mid
        local = int(vals.max())
        if local > best.value:
            best.value = local
            pos = _decode(int(np.argmax(vals)), (x1 - x0, n, n, n))
            best.witness = (pos[0] + x0, pos[1], pos[2], pos[3])
    return best.result()


# ---------------------------------------------------------------------------
# misc helpers


def nearest_positions(dist: np.ndarray, subset: np.ndarray):
    """For every ambient point: position into ``subset`` of its nearest member, and the gap."""
    to_sub = dist[:, subset]
    pos = np.argmin(to_sub, axis=1)
    gap = to_sub[np.arange(dist.shape[0]), pos]
    return pos, gap


def check_one_lipschitz(dist_dom: np.ndarray, dist_cod: np.ndarray, table: np.ndarray,
                        num: int = 1, den: int = 1):
    """First pair with d_cod(fx, fy) > (num/den) * d_dom(x, y), or None if none exists."""
    f = table.astype(np.int64)
    img = dist_cod[np.ix_(f, f)]
    dom_finite = dist_dom < SENTINEL
    img_finite = img < SENTINEL
    safe_dom = np.where(dom_finite, dist_dom, 0)
    safe_img = np.where(img_finite, img, 0)
    bad = dom_finite & ((~img_finite) | (safe_img * den > safe_dom * num))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return int(i), int(j)
    return None
