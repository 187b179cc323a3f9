"""Lattice approximations of simply connected domains with two marked points.

Two lattice kinds are supported:

``square``
    the grid ``eps * Z^2`` with nearest-neighbour adjacency (degree 4).
``hexagonal``
    hexagonal cells, i.e. the sites of the triangular lattice
    ``eps * (Z + Z e^{i pi/3})`` with adjacency between cells sharing an
    edge (degree 6).  This is the lattice of the harmonic explorer.

A domain consists of the *interior* vertices (lattice points strictly inside
the region) and the *boundary* vertices (non-interior points touching an
interior point).  The boundary vertices are listed as a closed walk in
counterclockwise order, interior on the left.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

SQUARE = "square"
HEXAGONAL = "hexagonal"

_SQRT3_2 = np.sqrt(3.0) / 2.0

# integer steps in lattice coordinates (i, j); position = i*e1 + j*e2
_STEPS = {
    SQUARE: [(1, 0), (0, 1), (-1, 0), (0, -1)],
    HEXAGONAL: [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)],
}
# extra offsets used only to decide which non-interior points are boundary
_DILATION = {
    SQUARE: _STEPS[SQUARE] + [(1, 1), (-1, 1), (-1, -1), (1, -1)],
    HEXAGONAL: _STEPS[HEXAGONAL],
}


class DomainError(ValueError):
    """Raised for invalid discretizations or invalid curve steps."""


def _basis(kind):
    if kind == SQUARE:
        return np.array([1.0, 0.0]), np.array([0.0, 1.0])
    if kind == HEXAGONAL:
        return np.array([1.0, 0.0]), np.array([0.5, _SQRT3_2])
    raise DomainError(f"unknown lattice kind {kind!r}")


def lattice_degree(kind):
    return len(_STEPS[kind])


def _points_in_polygon(pts, poly, tol):
    """Strict interior test (even-odd rule); points within ``tol`` of an edge
    count as outside."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    near = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        s = np.clip(((x - x1) * dx + (y - y1) * dy) / L2, 0.0, 1.0)
        d2 = (x - x1 - s * dx) ** 2 + (y - y1 - s * dy) ** 2
        near |= d2 < tol * tol
    return inside & ~near


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """Discrete simply connected domain with marked boundary points ``a``, ``b``.

    ``a`` and ``b`` are positions in :attr:`boundary`; use :attr:`a_vertex`
    and :attr:`b_vertex` for vertex indices.
    """

    kind: str
    eps: float
    ij: np.ndarray  # (n, 2) integer lattice coordinates
    interior: np.ndarray  # (n,) bool
    nbrs: np.ndarray  # (n, deg) neighbour index, -1 outside the vertex set
    boundary: np.ndarray  # closed walk of boundary vertices, ccw
    a: int
    b: int
    region: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.ij)

    @property
    def degree(self):
        return self.nbrs.shape[1]

    @property
    def xy(self):
        e1, e2 = _basis(self.kind)
        return self.eps * (np.outer(self.ij[:, 0], e1) + np.outer(self.ij[:, 1], e2))

    @property
    def z(self):
        p = self.xy
        return p[:, 0] + 1j * p[:, 1]

    @property
    def a_vertex(self):
        return int(self.boundary[self.a])

    @property
    def b_vertex(self):
        return int(self.boundary[self.b])

    @property
    def interior_indices(self):
        return np.flatnonzero(self.interior)

    def vertex_at(self, i, j):
        return self._index.get((int(i), int(j)), -1)

    @property
    def _index(self):
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {(int(i), int(j)): k for k, (i, j) in enumerate(self.ij)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def nearest_vertex(self, p, candidates=None):
        """Index of the vertex nearest to the complex point ``p`` (ties: lowest
        position in ``candidates``)."""
        cand = np.arange(self.n) if candidates is None else np.asarray(candidates)
        d = np.abs(self.z[cand] - p)
        return int(cand[int(np.argmin(d))])

    def arcs(self):
        """Boundary vertices of the two arcs, in cycle order.

        The first arc holds cycle positions ``a+1 .. b`` (ccw from ``a``), the
        second ``b+1 .. a``.  So ``b`` closes the first arc and ``a`` the second.
        """
        m = len(self.boundary)
        first = [self.boundary[(self.a + k) % m] for k in range(1, (self.b - self.a) % m + 1)]
        second = [self.boundary[(self.b + k) % m] for k in range(1, (self.a - self.b) % m + 1)]
        return np.array(first, dtype=int), np.array(second, dtype=int)

    def adjacency(self):
        """Sparse adjacency among all vertices (boundary included)."""
        rows, cols = np.nonzero(self.nbrs >= 0)
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, self.nbrs[rows, cols])), shape=(self.n, self.n))

    def as_slit(self):
        return SlitDomain(self)


def _build_from_mask(kind, eps, ij_interior):
    """Assemble vertices (interior + dilation boundary) from interior coords."""
    interior_set = set(map(tuple, ij_interior))
    boundary_set = set()
    for i, j in interior_set:
        for di, dj in _DILATION[kind]:
            q = (i + di, j + dj)
            if q not in interior_set:
                boundary_set.add(q)
    # deterministic ordering: interior first, each sorted by (j, i)
    interior_list = sorted(interior_set, key=lambda p: (p[1], p[0]))
    boundary_list = sorted(boundary_set, key=lambda p: (p[1], p[0]))
    all_ij = np.array(interior_list + boundary_list, dtype=np.int64).reshape(-1, 2)
    is_int = np.zeros(len(all_ij), dtype=bool)
    is_int[: len(interior_list)] = True
    index = {tuple(p): k for k, p in enumerate(map(tuple, all_ij))}
    steps = _STEPS[kind]
    nbrs = np.full((len(all_ij), len(steps)), -1, dtype=np.int64)
    for k, (i, j) in enumerate(all_ij):
        for s, (di, dj) in enumerate(steps):
            nbrs[k, s] = index.get((i + di, j + dj), -1)
    return all_ij, is_int, nbrs


def _step_index(kind, di, dj):
    return _STEPS[kind].index((di, dj))


def _turn_order(kind, incoming):
    """Step indices ordered from sharpest left turn to reversal."""
    d = len(_STEPS[kind])
    if kind == SQUARE:
        turns = [1, 0, -1, 2]
    else:
        turns = [2, 1, 0, -1, -2, 3]
    return [(incoming + t) % d for t in turns]


def trace_boundary(kind, nbrs, is_boundary, start, incoming):
    """Left-hand wall following over boundary vertices.

    Returns the closed walk (without repeating the start) or ``None`` when the
    walk fails to close within ``4 * count + 8`` steps.
    """
    limit = 4 * int(is_boundary.sum()) + 8
    walk = [start]
    v, d = start, incoming
    first_move = None
    for _ in range(limit):
        for s in _turn_order(kind, d):
            w = nbrs[v, s]
            if w >= 0 and is_boundary[w]:
                break
        else:
            return None
        if first_move is None:
            first_move = (v, s)
        elif (v, s) == first_move:
            walk.pop()
            return walk
        v, d = int(w), s
        walk.append(v)
    return None


def _signed_area(z):
    return 0.5 * np.sum((z * np.roll(z, -1).conj()).imag) * -1.0


def _cycle_from(kind, xy_z, nbrs, is_boundary, require_simple=True):
    """Find a ccw closed boundary walk starting at the lowest-leftmost vertex."""
    cand = np.flatnonzero(is_boundary)
    ordering = np.lexsort((xy_z[cand].real, xy_z[cand].imag))
    start = int(cand[ordering[0]])
    total = len(cand)
    for incoming in range(nbrs.shape[1]):
        walk = trace_boundary(kind, nbrs, is_boundary, start, incoming)
        if walk is None:
            continue
        if len(set(walk)) != total:
            continue
        if require_simple and len(walk) != total:
            continue
        if _signed_area(xy_z[walk]) <= 0:
            continue
        return np.array(walk, dtype=np.int64)
    return None


def build_domain(region, eps, kind=SQUARE, a=0j, b=1j):
    """Discretize ``region`` at mesh ``eps``.

    Parameters
    ----------
    region : array_like
        Either polygon vertices (``(k, 2)`` real or ``(k,)`` complex) or a 2D
        boolean mask of interior square-lattice vertices (``mask[j, i]`` is
        the point ``(i*eps, j*eps)``).
    eps : float
        Lattice mesh.
    kind : {'square', 'hexagonal'}
    a, b : complex
        Marked boundary points; each snaps to the nearest boundary vertex,
        ties broken by the smallest boundary-cycle position.

    Returns
    -------
    LatticeDomain
    """
    eps = float(eps)
    if eps <= 0:
        raise DomainError("mesh must be positive")
    e1, e2 = _basis(kind)
    region = np.asarray(region)
    poly = None
    if region.dtype == bool:
        if kind != SQUARE:
            raise DomainError("bitmask regions are square-lattice only")
        jj, ii = np.nonzero(region)
        ij_int = np.column_stack([ii, jj])
    else:
        poly = region.astype(complex) if region.ndim == 1 else region[:, 0] + 1j * region[:, 1]
        poly = np.column_stack([poly.real, poly.imag])
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        # bounding box in lattice coordinates
        jmax = int(np.ceil((hi[1] - lo[1]) / (eps * e2[1]))) + 2
        j0 = int(np.floor(lo[1] / (eps * e2[1]))) - 1
        js = np.arange(j0, j0 + jmax + 1)
        xshift = e2[0] / e1[0]
        i0 = int(np.floor(lo[0] / eps - xshift * js.max())) - 1
        i1 = int(np.ceil(hi[0] / eps - xshift * js.min())) + 1
        II, JJ = np.meshgrid(np.arange(i0, i1 + 1), js)
        cand = np.column_stack([II.ravel(), JJ.ravel()])
        pts = eps * (np.outer(cand[:, 0], e1) + np.outer(cand[:, 1], e2))
        ij_int = cand[_points_in_polygon(pts, poly, 1e-9 * eps)]
    if len(ij_int) == 0:
        raise DomainError("discretization has no interior vertices")
    ij, is_int, nbrs = _build_from_mask(kind, eps, [tuple(p) for p in ij_int])
    # interior connectivity
    int_idx = np.flatnonzero(is_int)
    sub = np.full(len(ij), -1)
    sub[int_idx] = np.arange(len(int_idx))
    rows, cols = [], []
    for k in int_idx:
        for w in nbrs[k]:
            if w >= 0 and is_int[w]:
                rows.append(sub[k])
                cols.append(sub[w])
    g = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(int_idx),) * 2)
    ncomp, _ = csgraph.connected_components(g, directed=False)
    if ncomp != 1:
        raise DomainError(f"discretization is disconnected ({ncomp} components)")
    zz = eps * ((ij[:, 0] * e1[0] + ij[:, 1] * e2[0]) + 1j * (ij[:, 1] * e2[1]))
    cycle = _cycle_from(kind, zz, nbrs, ~is_int)
    if cycle is None:
        raise DomainError("boundary is not a single simple cycle")
    a_pos = int(np.argmin(np.abs(zz[cycle] - complex(a))))
    b_pos = int(np.argmin(np.abs(zz[cycle] - complex(b))))
    if a_pos == b_pos:
        raise DomainError("marked points snap to the same boundary vertex")
    return LatticeDomain(kind, eps, ij, is_int, nbrs, cycle, a_pos, b_pos,
                         None if poly is None else poly)


def unit_square(eps, a=0.5, b=0.5 + 1j, kind=SQUARE):
    return build_domain(np.array([0, 1, 1 + 1j, 1j]), eps, kind, a, b)


def rectangle(width, height, eps, a, b, kind=SQUARE):
    return build_domain(np.array([0, width, width + 1j * height, 1j * height]), eps, kind, a, b)


class SlitDomain:
    """A base domain with a growing lattice curve removed.

    ``removed[0]`` is the base point ``a``; ``removed[-1]`` is the tip.  The
    retained region is the connected component of the remaining interior
    vertices that touches ``b``.
    """

    def __init__(self, base, removed=None):
        self.base = base
        self.removed = [base.a_vertex] if removed is None else [int(v) for v in removed]
        if self.removed[0] != base.a_vertex:
            raise DomainError("curve must start at a")
        self._removed_mask = np.zeros(base.n, dtype=bool)
        self._removed_mask[self.removed] = True
        self.complete = self.removed[-1] == base.b_vertex
        self._retained = None
        self._cycle = None
        self.cache = {}
        self._recompute_retained()
        if not self.complete:
            self._check_tip()

    @property
    def tip(self):
        return self.removed[-1]

    @property
    def retained(self):
        """Bool mask of retained interior vertices."""
        return self._retained

    @property
    def removed_mask(self):
        return self._removed_mask

    def copy(self):
        other = SlitDomain.__new__(SlitDomain)
        other.base = self.base
        other.removed = list(self.removed)
        other._removed_mask = self._removed_mask.copy()
        other.complete = self.complete
        other._retained = self._retained
        other._cycle = None if self._cycle is None else list(self._cycle)
        other.cache = {}
        return other

    def _recompute_retained(self):
        base = self.base
        free = base.interior & ~self._removed_mask
        idx = np.flatnonzero(free)
        sub = np.full(base.n, -1)
        sub[idx] = np.arange(len(idx))
        nb = base.nbrs[idx]
        ok = nb >= 0
        ok[ok] = free[nb[ok]]
        r, c = np.nonzero(ok)
        g = sparse.csr_matrix((np.ones(len(r)), (r, sub[nb[r, c]])), shape=(len(idx),) * 2)
        _, labels = csgraph.connected_components(g, directed=False)
        bv = base.b_vertex
        b_nbrs = [w for w in base.nbrs[bv] if w >= 0 and free[w]]
        keep = np.zeros(base.n, dtype=bool)
        if b_nbrs:
            comps = set(labels[sub[w]] for w in b_nbrs)
            keep[idx] = np.isin(labels, list(comps))
        self._retained = keep

    def _check_tip(self):
        t = self.tip
        if not self._retained.any():
            raise DomainError("b is enclosed: no retained region")
        if t != self.base.a_vertex:
            touches = any(w >= 0 and self._retained[w] for w in self.base.nbrs[t])
            if not touches:
                raise DomainError("curve step disconnects the tip from b")

    def boundary_mask(self):
        """Vertices on the boundary of the retained region (dilation rule)."""
        base = self.base
        ij_ret = base.ij[self._retained]
        mask = np.zeros(base.n, dtype=bool)
        for di, dj in _DILATION[base.kind]:
            for i, j in ij_ret:
                w = base.vertex_at(i + di, j + dj)
                if w >= 0 and not self._retained[w]:
                    mask[w] = True
        return mask

    def recompute_cycle(self):
        """Boundary walk of the retained region built from scratch."""
        base = self.base
        bmask = self.boundary_mask()
        cyc = _cycle_from(base.kind, base.z, base.nbrs, bmask, require_simple=False)
        if cyc is None:
            raise DomainError("could not trace the boundary of the retained region")
        return [int(v) for v in cyc]

    def boundary_cycle(self):
        if self._cycle is None:
            self._cycle = self.recompute_cycle()
        return list(self._cycle)

    def extend(self, v):
        """Append ``v`` to the curve in place (see :func:`slit_extend`)."""
        v = int(v)
        base = self.base
        if self.complete:
            raise DomainError("curve already complete")
        if v not in set(int(w) for w in base.nbrs[self.tip] if w >= 0):
            raise DomainError("step is not adjacent to the tip")
        if self._removed_mask[v]:
            raise DomainError("vertex already on the curve")
        if v == base.b_vertex:
            self.removed.append(v)
            self._removed_mask[v] = True
            self.complete = True
            self.cache.clear()
            self._cycle = None
            return self
        if not self._retained[v]:
            raise DomainError("step leaves the retained region")
        old_tip = self.tip
        old_bmask = None if self._cycle is None else self.boundary_mask()
        self.removed.append(v)
        self._removed_mask[v] = True
        self._recompute_retained()
        try:
            self._check_tip()
        except DomainError:
            self.removed.pop()
            self._removed_mask[v] = False
            self._recompute_retained()
            raise
        self.cache.clear()
        if self._cycle is not None:
            self._cycle = self._incremental_cycle(old_tip, v, old_bmask)
        return self

    def _incremental_cycle(self, old_tip, v, old_bmask):
        """Splice ``v`` into the cached cycle when the change is local.

        The splice ``.., tip, v, tip, ..`` is valid when the boundary set gains
        only ``v`` and ``v`` touches no boundary vertex other than the old tip.
        Otherwise fall back to a full rebuild.
        """
        base = self.base
        new_bmask = self.boundary_mask()
        gained = new_bmask & ~old_bmask
        lost = old_bmask & ~new_bmask
        touching = [w for w in base.nbrs[v] if w >= 0 and new_bmask[w] and w != old_tip]
        diag = []
        if base.kind == SQUARE:
            i, j = base.ij[v]
            for di, dj in _DILATION[SQUARE][4:]:
                w = base.vertex_at(i + di, j + dj)
                if w >= 0 and new_bmask[w]:
                    diag.append(w)
        cyc = self._cycle
        if (gained.sum() == 1 and gained[v] and not lost.any() and not touching
                and not diag and cyc.count(old_tip) == 1):
            k = cyc.index(old_tip)
            return cyc[: k + 1] + [v, old_tip] + cyc[k + 1:]
        return self.recompute_cycle()


def slit_extend(d, v):
    """Return a new :class:`SlitDomain` with ``v`` appended to the curve.

    Raises
    ------
    DomainError
        When ``v`` is not adjacent to the tip, already removed, or its removal
        separates the tip from ``b``.
    """
    new = d.copy()
    if d._cycle is None:
        new._cycle = d.boundary_cycle()
    return new.extend(v)


class BlockedDomain:
    """Base domain with an arbitrary set of interior vertices turned into
    boundary.  All remaining interior vertices are retained (no component
    selection), which is what the harmonic explorer needs."""

    def __init__(self, base, blocked):
        self.base = base
        mask = np.zeros(base.n, dtype=bool)
        blocked = np.asarray(blocked)
        if blocked.dtype == bool:
            mask[:] = blocked
        else:
            mask[blocked.astype(int)] = True
        self.removed = [int(v) for v in np.flatnonzero(mask)]
        self._retained = base.interior & ~mask
        self.cache = {}

    @property
    def retained(self):
        return self._retained
