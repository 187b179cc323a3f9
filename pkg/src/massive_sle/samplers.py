"""Random lattice curves: massive LERW, massive harmonic explorer and the
interface of alpha-weighted forests.

Every sampler takes an explicit seed (int or ``numpy.random.SeedSequence``)
and is deterministic given it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import HEXAGONAL, SQUARE, BlockedDomain, DomainError
from .potential import SchurGreen, massive_harmonic_measure, solve_massive_dirichlet

LERW = "massive-lerw"
EXPLORER = "massive-harmonic-explorer"
FOREST = "forest-peano"


@dataclass
class Curve:
    """A lattice curve from ``a``.

    ``vertices`` are base-domain vertex indices (for the explorer: the cells
    coloured along the way); ``points`` are the curve's planar positions.
    ``times`` holds half-plane capacity stamps once :func:`loewner.unzip`
    has run.
    """

    vertices: list
    points: np.ndarray
    sampler: str
    seed: object = None
    complete: bool = True
    times: np.ndarray | None = None
    log: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ForestConfig:
    """Weight ``alpha`` per connected component; the ccw boundary arc from
    ``a`` to ``b`` is wired into a single component."""

    alpha: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


def rng_from(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def task_seeds(master, n):
    """Independent per-task seed sequences; task ``k`` always gets the same
    stream regardless of how tasks are distributed over workers."""
    return np.random.SeedSequence(master).spawn(n)


# ---------------------------------------------------------------- LERW ----

class ConditionedWalk:
    """Doob transform of the killed walk conditioned to exit at ``b``.

    From interior ``x`` the walk steps to ``y`` with probability
    ``(1 - delta)/deg * h(y)/h(x)`` where ``h`` is the massive harmonic
    measure of ``{b}``; these sum to one because ``h`` is massive harmonic.
    """

    def __init__(self, d, p, start=None):
        self.d = d
        self.p = p
        base = d.base if hasattr(d, "base") else d
        self.base = base
        sd = d if hasattr(d, "retained") else base.as_slit()
        if start is None:
            start = sd.tip if hasattr(sd, "tip") else base.a_vertex
        self.start = int(start)
        self.h = massive_harmonic_measure(sd, p, [base.b_vertex]).values
        nb = base.nbrs
        hn = np.where(nb >= 0, self.h[np.maximum(nb, 0)], 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = (1.0 - p.delta) / base.degree * hn / self.h[:, None]
        start = self.start
        probs[~(base.interior & (self.h > 0))] = 0.0
        probs[start] = hn[start] / hn[start].sum() if hn[start].sum() > 0 else 0.0
        self.probs = probs
        probs = np.nan_to_num(probs)
        cum = np.cumsum(probs, axis=1)
        pos = probs > 0
        # zero-probability moves are never chosen; the last live move absorbs rounding
        last = pos.shape[1] - 1 - np.argmax(pos[:, ::-1], axis=1)
        cum[~pos] = -1.0
        live = pos.any(axis=1)
        cum[np.flatnonzero(live), last[live]] = 2.0
        self.cum = cum
        if hn[start].sum() <= 0:
            raise DomainError("b is unreachable from a")

    def step_sums(self):
        """Row sums of the transition probabilities at interior vertices with
        ``h > 0`` (should be 1 to rounding)."""
        rows = self.base.interior & (self.h > 0)
        return self.probs[rows].sum(axis=1)

    def sample(self, rng):
        base = self.base
        nb = base.nbrs.tolist()
        cum = self.cum.tolist()
        b = base.b_vertex
        x = self.start
        path = [x]
        interior = base.interior
        while True:
            u = rng.random(256).tolist()
            for r in u:
                row = cum[x]
                k = 0
                while r >= row[k]:
                    k += 1
                x = nb[x][k]
                path.append(x)
                if not interior[x]:
                    if x != b:
                        raise RuntimeError("conditioned walk exited away from b")
                    return path


def sample_killed_rw_conditioned(d, p, seed, walk=None):
    """Killed walk from ``a`` (the tip, on a slit domain) conditioned to leave
    the domain at ``b``."""
    walk = walk or ConditionedWalk(d, p)
    return walk.sample(rng_from(seed))


def loop_erase(path):
    """Chronological loop erasure."""
    out = []
    where = {}
    for v in path:
        k = where.get(v)
        if k is not None:
            for w in out[k + 1:]:
                del where[w]
            del out[k + 1:]
        else:
            where[v] = len(out)
            out.append(v)
    return out


def sample_massive_lerw(d, p, seed, walk=None):
    base = d.base if hasattr(d, "base") else d
    walk = walk or ConditionedWalk(d, p)
    path = loop_erase(walk.sample(rng_from(seed)))
    return Curve(path, base.z[path], LERW, seed)


# ---------------------------------------------------- harmonic explorer ----

class HarmonicExplorer:
    """Massive harmonic explorer on hexagonal cells.

    Boundary cells on the ccw arc ``a+1..b`` are black (+1), the others white
    (-1).  The explorer follows the edge between a black cell on its right
    and a white cell on its left.  The cell ahead, if uncoloured, is the
    growth point ``g``: with ``h1``, ``h2`` the massive harmonic measures of
    the black and white cells seen from ``g``, it is coloured black with
    probability ``h1``, white with ``h2``, and by a fair coin otherwise.
    """

    def __init__(self, d, p, green=None):
        if d.kind != HEXAGONAL:
            raise DomainError("the harmonic explorer needs a hexagonal lattice")
        self.d = d
        self.p = p
        self.green = green or SchurGreen(d, p)
        black, white = d.arcs()
        self.color0 = np.zeros(d.n)
        self.color0[black] = 1.0
        self.color0[white] = -1.0
        sd = d.as_slit()
        self.u_black = solve_massive_dirichlet(sd, p, (self.color0 > 0).astype(float)).values[self.green.idx]
        self.u_white = solve_massive_dirichlet(sd, p, (self.color0 < 0).astype(float)).values[self.green.idx]
        m = len(d.boundary)
        self.start = (int(d.boundary[(d.a + 1) % m]), int(d.boundary[d.a]))
        self._common = {}

    def ahead(self, B, W):
        """The cell in front of the edge (B, W)."""
        key = (B, W)
        got = self._common.get(key)
        if got is None:
            d = self.d
            nB = set(int(x) for x in d.nbrs[B] if x >= 0)
            common = [int(x) for x in d.nbrs[W] if x >= 0 and int(x) in nB]
            z = d.z
            got = -1
            for X in common:
                c = ((z[B] - z[W]).conjugate() * (z[X] - z[W])).imag
                if c > 0:
                    got = X
            self._common[key] = got
        return got

    def measures(self, g, colored, colors):
        """``(h1, h2)`` at the growth cell ``g`` given coloured cells."""
        gi = self.green.pos[g]
        S = list(colored)
        vb = [1.0 if c > 0 else 0.0 for c in colors]
        vw = [1.0 if c < 0 else 0.0 for c in colors]
        h1 = float(self.green.extend(self.u_black, S, vb, at=gi))
        h2 = float(self.green.extend(self.u_white, S, vw, at=gi))
        return h1, h2

    def run(self, seed, max_colorings=None):
        rng = rng_from(seed)
        d = self.d
        B, W = self.start
        color = {}
        colored, colors = [], []
        points = [0.5 * (d.z[B] + d.z[W])]
        log = []
        complete = False
        for _ in range(20 * d.n):
            X = self.ahead(B, W)
            if X < 0:
                raise DomainError("explorer left the lattice")
            if d.interior[X] and X not in color:
                if max_colorings is not None and len(colored) >= max_colorings:
                    break
                h1, h2 = self.measures(X, colored, colors)
                r = rng.random()
                coin = r >= h1 + h2
                if r < h1:
                    c = 1.0
                elif r < h1 + h2:
                    c = -1.0
                else:
                    c = 1.0 if rng.random() < 0.5 else -1.0
                color[X] = c
                colored.append(X)
                colors.append(c)
                log.append({"cell": X, "h1": h1, "h2": h2, "coin": bool(coin), "color": c})
            c = color.get(X, self.color0[X])
            if c > 0:
                B = X
            else:
                W = X
            points.append(0.5 * (d.z[B] + d.z[W]))
            if not d.interior[B] and not d.interior[W]:
                complete = True
                break
        return Curve(colored, np.array(points), EXPLORER, seed, complete, log=log), colors

    def observable(self, colored, colors, at=None):
        """Massive extension of the +-pi/2 colouring (the difference of the arc
        harmonic measures, scaled by pi/2)."""
        u = (np.pi / 2) * (self.u_black - self.u_white)
        vals = (np.pi / 2) * np.asarray(colors, dtype=float)
        return self.green.extend(u, list(colored), vals, at=at)


def sample_massive_harmonic_explorer(d, p, seed, explorer=None, max_colorings=None):
    explorer = explorer or HarmonicExplorer(d, p)
    curve, _ = explorer.run(seed, max_colorings)
    return curve


def replay_measures(d, p, curve, colors):
    """Recompute the logged ``(h1, h2)`` with fresh sparse solves."""
    black, white = d.arcs()
    out = []
    for k, rec in enumerate(curve.log):
        S = curve.vertices[:k]
        bd = BlockedDomain(d, np.array(S, dtype=int))
        bmask = np.zeros(d.n, dtype=bool)
        wmask = np.zeros(d.n, dtype=bool)
        bmask[black] = True
        wmask[white] = True
        for v, c in zip(S, colors[:k]):
            (bmask if c > 0 else wmask)[v] = True
        g = rec["cell"]
        h1 = massive_harmonic_measure(bd, p, bmask)[g]
        h2 = massive_harmonic_measure(bd, p, wmask)[g]
        out.append((h1, h2))
    return out


# -------------------------------------------------------------- forests ----

def forest_graph(d):
    """Graph for the forest model: interior vertices ``0..N-1`` plus the wired
    arc as vertex ``N``.  Edges to the free arc are dropped (reflecting
    boundary).  Returns ``(adj, edges, interior_ids)`` where ``adj[v]`` lists
    ``(neighbour, edge_id)`` and ``edges[e] = (v, w, lattice_w)``."""
    if d.kind != SQUARE:
        raise DomainError("forest interface is implemented on the square lattice")
    wired = set(_wired_arc(d))
    ids = d.interior_indices
    loc = {int(v): k for k, v in enumerate(ids)}
    N = len(ids)
    adj = [[] for _ in range(N + 1)]
    edges = []
    for v in ids:
        for w in d.nbrs[v]:
            w = int(w)
            if w in loc and loc[w] > loc[int(v)]:
                e = len(edges)
                edges.append((loc[int(v)], loc[w], w))
                adj[loc[int(v)]].append((loc[w], e))
                adj[loc[w]].append((loc[int(v)], e))
            elif w in wired:
                e = len(edges)
                edges.append((loc[int(v)], N, w))
                adj[loc[int(v)]].append((N, e))
                adj[N].append((loc[int(v)], e))
    return adj, edges, ids


def _wired_arc(d):
    m = len(d.boundary)
    return [int(d.boundary[(d.a + k) % m]) for k in range((d.b - d.a) % m + 1)]


def killed_wilson(adj, rho, rng):
    """Wilson's algorithm on ``adj`` with root ``len(adj)-1`` and killing
    probability ``rho`` per step.  Returns the parent edge of every non-root
    vertex (``-1`` marks a kill root)."""
    N = len(adj) - 1
    in_tree = [False] * N + [True]
    parent = [-2] * N
    nxt = [-1] * N
    nxt_edge = [-1] * N
    for s in range(N):
        if in_tree[s]:
            continue
        v = s
        while not in_tree[v]:
            if rho > 0 and rng.random() < rho:
                nxt[v] = -1
                break
            w, e = adj[v][int(rng.random() * len(adj[v]))]
            nxt[v] = w
            nxt_edge[v] = e
            v = w
        v = s
        while not in_tree[v]:
            in_tree[v] = True
            if nxt[v] == -1:
                parent[v] = -1
                break
            parent[v] = nxt_edge[v]
            v = nxt[v]
    return parent


def _components(parent, edges, N):
    """Component label per non-root vertex following parent edges."""
    label = [-1] * N

    def root_of(v):
        chain = []
        while label[v] < 0:
            e = parent[v]
            if e == -1:
                label[v] = v
                break
            chain.append(v)
            a, b, _ = edges[e]
            w = b if a == v else a
            if w == N:
                label[v] = N
                break
            v = w
        r = label[v]
        for u in chain:
            label[u] = r
        return r

    for v in range(N):
        root_of(v)
    return label


EXACT_FOREST_MAX = 16


def sample_forest(adj, edges, alpha, rng, method="auto", max_tries=100000):
    """Forest with law proportional to ``alpha ** (number of components)``.

    Killed Wilson with ``rho/(1-rho) = alpha/D`` (``D`` the minimum degree)
    produces unrooted forests with weight ``(alpha/D)^k prod_T deg(T)`` over
    the ``k`` unwired trees.  ``method="exact"`` accepts with probability
    ``prod_T D/deg(T)``, leaving exactly ``alpha^k``; the acceptance rate
    collapses on all but tiny graphs.  ``method="wilson"`` skips the
    rejection step, so each unwired tree carries weight ``alpha deg(T)/D``
    instead of ``alpha``.  ``"auto"`` is exact up to ``EXACT_FOREST_MAX``
    vertices.
    """
    N = len(adj) - 1
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return killed_wilson(adj, 0.0, rng)
    if method == "auto":
        method = "exact" if N <= EXACT_FOREST_MAX else "wilson"
    if method not in ("exact", "wilson"):
        raise ValueError(f"unknown forest method {method!r}")
    D = min(len(adj[v]) for v in range(N))
    c = alpha / D
    rho = c / (1.0 + c)
    for _ in range(max_tries):
        parent = killed_wilson(adj, rho, rng)
        if method == "wilson":
            return parent
        label = _components(parent, edges, N)
        tree_deg = {}
        for v in range(N):
            if label[v] != N:
                tree_deg[label[v]] = tree_deg.get(label[v], 0) + len(adj[v])
        acc = 1.0
        for s in tree_deg.values():
            acc *= D / s
        if rng.random() < acc:
            return parent
    raise RuntimeError("exact forest rejection did not accept; use method='wilson'")


def forest_edge_set(parent):
    return frozenset(e for e in parent if e >= 0)


def _peano_contour(d, cells, start, end, heading):
    """Trace the contour of a union of cells (doubled coordinates) with the
    set on the right, from corner ``start`` until corner ``end``."""
    rot = lambda h: (-h[1], h[0])  # noqa: E731
    c = start
    h = heading
    pts = [c]
    for _ in range(16 * d.n + 16):
        l = rot(h)
        ahead = (c[0] + h[0] / 2, c[1] + h[1] / 2)
        right_cell = (round(ahead[0] - l[0] / 2), round(ahead[1] - l[1] / 2))
        left_cell = (round(ahead[0] + l[0] / 2), round(ahead[1] + l[1] / 2))
        if right_cell not in cells:
            h = (h[1], -h[0])
        elif left_cell in cells:
            h = l
        c = (c[0] + h[0], c[1] + h[1])
        pts.append(c)
        if c == end:
            return pts
    raise RuntimeError("contour did not reach b")


def sample_forest_peano(d, cfg, seed, method="auto"):
    """Interface around the component wired on the arc ``(a, b)``.

    EXPERIMENTAL: the curve is the contour of the wired component of a forest
    drawn with weight ``alpha ** n(components)``.
    """
    rng = rng_from(seed)
    adj, edges, ids = forest_graph(d)
    parent = sample_forest(adj, edges, cfg.alpha, rng, method)
    curve = peano_curve(d, parent, edges, ids)
    curve.seed = seed
    return curve


def peano_curve(d, parent, edges, ids):
    N = len(ids)
    label = _components(parent, edges, N)
    cells = set()
    wired = _wired_arc(d)
    for v in wired:
        i, j = d.ij[v]
        cells.add((2 * i, 2 * j))
    for u, v in zip(wired[:-1], wired[1:]):
        (i1, j1), (i2, j2) = d.ij[u], d.ij[v]
        cells.add((i1 + i2, j1 + j2))
    for k in range(N):
        if label[k] == N:
            i, j = d.ij[ids[k]]
            cells.add((2 * i, 2 * j))
    for e in parent:
        if e < 0:
            continue
        a, b, lw = edges[e]
        if label[a] != N:
            continue
        i1, j1 = d.ij[ids[a]]
        i2, j2 = d.ij[lw] if b == N else d.ij[ids[b]]
        cells.add((i1 + i2, j1 + j2))
    m = len(d.boundary)

    def junction(p_out, p_in):
        # corner at the outer end of the side between free-edge cell and wired cell
        (i0, j0), (i1, j1) = d.ij[p_out], d.ij[p_in]
        dv = (i1 - i0, j1 - j0)
        n = (-dv[1], dv[0])
        return (2 * i1 - dv[0] / 2 - n[0] / 2, 2 * j1 - dv[1] / 2 - n[1] / 2), n

    start, n_a = junction(d.boundary[(d.a - 1) % m], d.boundary[d.a])
    end, _ = junction(d.boundary[(d.b + 1) % m], d.boundary[d.b])
    pts = _peano_contour(d, cells, start, end, n_a)
    xy = np.array(pts) * d.eps / 2
    ids_label = [int(ids[k]) for k in range(N) if label[k] == N]
    return Curve(ids_label, xy[:, 0] + 1j * xy[:, 1], FOREST)
