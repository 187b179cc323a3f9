"""Discrete potential theory for the random walk with killing.

The killed walk dies with probability ``delta`` at each step and otherwise
jumps to a uniform lattice neighbour.  On the retained vertices ``R`` of a
slit domain the walk operator is ``A = I - (1 - delta) Adj_RR / deg``; its
inverse is the Green's function ``G[x, y]`` = expected number of visits to
``y`` (time 0 included) before exit or death.

Sign convention: with ``G`` positive the resolvent identities read
``u_massive = u_massless - delta * G u_massless``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .lattice import LatticeDomain, SlitDomain  # noqa: F401

GREEN = "green-source"
HARMONIC = "harmonic-measure"
DIRICHLET = "dirichlet-data"
OBSERVABLE = "observable"


@dataclass(frozen=True)
class MassParams:
    """Mass ``m`` and mesh ``eps``; the killing rate is ``delta = m**2 eps**2``.

    ``local_delta`` optionally overrides the killing rate per vertex (indexed
    like the base domain's vertices).
    """

    m: float
    eps: float
    local_delta: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("mass must be nonnegative")
        if self.eps <= 0:
            raise ValueError("mesh must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"killing rate {self.delta} outside [0, 1)")

    @property
    def delta(self):
        return self.m * self.m * self.eps * self.eps

    @property
    def mu2(self):
        """Continuum mass squared of the scaling limit, ``Delta - mu2``.

        A nearest-neighbour step has variance ``eps**2`` so ``I - P`` scales
        like ``-(eps**2 / 4) Delta``; killing ``delta`` per step therefore
        gives ``mu2 = 4 delta / eps**2 = 4 m**2``.
        """
        return 4.0 * self.m * self.m

    @classmethod
    def from_delta(cls, delta, eps):
        return cls(float(np.sqrt(delta)) / eps, eps)

    def delta_at(self, idx):
        if self.local_delta is None:
            return np.full(len(idx), self.delta)
        return np.asarray(self.local_delta)[idx]


@dataclass
class ScalarField:
    """Real values on the vertices of a domain.

    ``values`` is indexed by base-domain vertex; entries outside the retained
    set hold boundary data (or zero).
    """

    domain: SlitDomain
    values: np.ndarray
    tag: str = OBSERVABLE

    def __getitem__(self, v):
        return self.values[v]

    @property
    def retained_values(self):
        return self.values[self.domain.retained]


@dataclass(frozen=True)
class KernelSample:
    source: int
    target: int
    value: float
    chart: str = "lattice-normal"


def as_slit(d):
    return d.as_slit() if isinstance(d, LatticeDomain) else d


def domain_hash(d):
    d = as_slit(d)
    base = d.base
    h = hashlib.sha256()
    h.update(base.kind.encode())
    h.update(np.float64(base.eps).tobytes())
    h.update(np.ascontiguousarray(base.ij).tobytes())
    h.update(np.asarray([base.a, base.b], dtype=np.int64).tobytes())
    h.update(np.asarray(d.removed, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


class _System:
    """Factorized killed-walk operator on the retained vertices."""

    def __init__(self, d, p):
        base = d.base
        self.d = d
        self.idx = np.flatnonzero(d.retained)
        self.pos = np.full(base.n, -1)
        self.pos[self.idx] = np.arange(len(self.idx))
        self.deg = base.degree
        self.delta = p.delta_at(self.idx)
        self.keep = 1.0 - self.delta
        nb = base.nbrs[self.idx]
        inside = nb >= 0
        inside[inside] = d.retained[nb[inside]]
        r, c = np.nonzero(inside)
        vals = self.keep[r] / self.deg
        n = len(self.idx)
        Q = sparse.csr_matrix((vals, (r, self.pos[nb[r, c]])), shape=(n, n))
        self.A = (sparse.identity(n, format="csc") - Q).tocsc()
        self.lu = splu(self.A)
        # exits: retained vertex -> non-retained neighbour
        out = (nb >= 0) & ~inside
        er, ec = np.nonzero(out)
        self.exit_from = er
        self.exit_to = nb[er, ec]

    def solve(self, rhs):
        return self.lu.solve(np.asarray(rhs, dtype=float))

    def solve_T(self, rhs):
        return self.lu.solve(np.asarray(rhs, dtype=float), trans="T")

    def boundary_rhs(self, data):
        """``(1 - delta)/deg * sum of data over non-retained neighbours``."""
        rhs = np.zeros(len(self.idx))
        np.add.at(rhs, self.exit_from, np.asarray(data, dtype=float)[self.exit_to])
        return rhs * self.keep / self.deg

    def full(self, sol, fill=None):
        out = np.zeros(self.d.base.n) if fill is None else np.array(fill, dtype=float)
        out[self.idx] = sol
        return out


def system(d, p):
    d = as_slit(d)
    key = ("system", p.delta if p.local_delta is None else id(p.local_delta))
    sysm = d.cache.get(key)
    if sysm is None:
        sysm = _System(d, p)
        d.cache[key] = sysm
    return sysm


def green_matrix(d, p):
    """Dense Green's matrix on the retained vertices (small domains only)."""
    s = system(d, p)
    return s.lu.solve(np.eye(len(s.idx))), s.idx


def massive_green(d, p, source):
    """``G^(delta)(source, .)``: expected visits of the killed walk from ``source``."""
    d = as_slit(d)
    if not d.retained[source]:
        raise ValueError("source must be a retained interior vertex")
    s = system(d, p)
    e = np.zeros(len(s.idx))
    e[s.pos[source]] = 1.0
    return ScalarField(d, s.full(s.solve_T(e)), GREEN)


def _as_target_mask(d, target):
    mask = np.zeros(d.base.n, dtype=bool)
    target = np.atleast_1d(np.asarray(target))
    if target.dtype == bool:
        mask[:] = target
    else:
        mask[target.astype(int)] = True
    mask &= ~d.retained
    return mask


def massive_harmonic_measure(d, p, target):
    """Probability that the killed walk exits through ``target`` before dying.

    ``target`` is a collection of non-retained vertices (boundary, curve) or a
    boolean mask.
    """
    d = as_slit(d)
    mask = _as_target_mask(d, target)
    if not mask.any():
        raise ValueError("empty target set")
    return solve_massive_dirichlet(d, p, mask.astype(float), tag=HARMONIC)


def solve_massive_dirichlet(d, p, boundary_data, tag=DIRICHLET):
    """Solve ``u = (1 - delta) * avg_neighbours(u)`` with given boundary values.

    ``boundary_data`` is indexed by base vertex; only entries on vertices
    adjacent to the retained region matter.
    """
    d = as_slit(d)
    data = np.asarray(boundary_data, dtype=float)
    if not np.all(np.isfinite(data)):
        raise ValueError("boundary data must be finite")
    s = system(d, p)
    u = s.solve(s.boundary_rhs(data))
    out = np.where(d.retained, 0.0, data)
    out[s.idx] = u
    return ScalarField(d, out, tag)


def _interior_nbrs(d, u):
    nb = d.base.nbrs[u]
    return [int(w) for w in nb if w >= 0 and d.retained[w]]


def poisson_kernel(d, p, u):
    """Exit density through boundary vertex ``u``: ``P(u, z) = H_u(z) / eps``.

    ``H_u(z) = sum_{w ~ u} G(z, w) (1 - delta_w)/deg`` is the probability that
    the killed walk from ``z`` leaves the domain by a step onto ``u``, so
    ``sum_u P(u, z) eps`` is the survival probability.
    """
    d = as_slit(d)
    ws = _interior_nbrs(d, u)
    if not ws:
        raise ValueError("boundary vertex has no interior neighbour")
    s = system(d, p)
    rhs = np.zeros(len(s.idx))
    for w in ws:
        rhs[s.pos[w]] += s.keep[s.pos[w]] / s.deg
    return ScalarField(d, s.full(s.solve(rhs)) / d.base.eps, HARMONIC)


def boundary_poisson_kernel(d, p, u, b):
    """``K(u, b)``: inward difference of ``P(u, .)`` at ``b``, divided by eps."""
    d = as_slit(d)
    if u == b:
        raise ValueError("u and b coincide")
    P = poisson_kernel(d, p, u)
    ws = _interior_nbrs(d, b)
    if not ws:
        raise ValueError("boundary vertex has no interior neighbour")
    keep = 1.0 - p.delta_at(np.array(ws))
    return float(np.sum(keep * P.values[ws]) / d.base.degree / d.base.eps)


def resolvent_correct(base, d, p):
    """Massive solution from the massless one: ``u - G (delta * u)``.

    ``base`` must be the massless solution of a Dirichlet problem on ``d``;
    the result equals the massive solution with the same boundary data.
    """
    d = as_slit(d)
    if base.domain is not d and not (base.domain.base is d.base
                                     and base.domain.removed == d.removed):
        raise ValueError("field lives on a different domain")
    s = system(d, p)
    u0 = base.values[s.idx]
    corr = s.solve(s.delta * u0)
    out = base.values.copy()
    out[s.idx] = u0 - corr
    return ScalarField(d, out, base.tag)


def area_sum(d, values):
    """``sum_w values(w) eps^2`` over retained vertices (area quadrature)."""
    d = as_slit(d)
    return float(np.sum(np.asarray(values)[d.retained]) * d.base.eps ** 2)


class SchurGreen:
    """Dense Green's matrix of an unslit domain with cheap updates when a
    small vertex set ``S`` is made absorbing.

    For ``x, y`` outside ``S``::

        G_{D-S}(x, y) = G(x, y) - G[x, S] G[S, S]^-1 G[S, y]

    and the solution with boundary data extended by values ``c_S`` on ``S`` is
    ``u(x) + G[x, S] G[S, S]^-1 (c_S - u(S))``.  Used by the ensemble tests,
    where each sample only ever blocks a few dozen vertices.
    """

    def __init__(self, d, p):
        d = as_slit(d)
        self.d = d
        self.p = p
        self.G, self.idx = green_matrix(d, p)
        self.pos = np.full(d.base.n, -1)
        self.pos[self.idx] = np.arange(len(self.idx))

    def _loc(self, vs):
        loc = self.pos[np.asarray(vs, dtype=int)]
        if np.any(loc < 0):
            raise ValueError("vertex outside the retained set")
        return loc

    def row(self, x, S):
        """``G_{D-S}(x, .)`` over the retained vertices of the unslit domain."""
        xi = self._loc([x])[0]
        g = self.G[xi].copy()
        if len(S):
            s = self._loc(S)
            coef = np.linalg.solve(self.G[np.ix_(s, s)], self.G[s, xi])
            g -= coef @ self.G[s]
            g[s] = 0.0
        return g

    def extend(self, u, S, values, at=None):
        """Massive solution after adding ``S`` (with ``values``) to the boundary.

        ``u`` is the solution on the unslit domain (indexed like ``idx``).
        Returns values at ``at`` (positions into ``idx``) or everywhere.
        """
        u = np.asarray(u, dtype=float)
        if not len(S):
            return u.copy() if at is None else u[at].copy() if np.ndim(at) else u[at]
        s = self._loc(S)
        w = np.linalg.solve(self.G[np.ix_(s, s)], np.asarray(values, dtype=float) - u[s])
        if at is None:
            out = u + self.G[:, s] @ w
            out[s] = values
            return out
        out = u[np.atleast_1d(at)] + self.G[np.ix_(np.atleast_1d(at), s)] @ w
        return out[0] if np.ndim(at) == 0 else out


def exit_edges(d, p):
    """Directed edges ``(retained u, non-retained v)`` through which the walk
    leaves the retained set, in the order used by
    :func:`solve_massive_dirichlet_edges`."""
    d = as_slit(d)
    s = system(d, p)
    return s.idx[s.exit_from], s.exit_to


def solve_massive_dirichlet_edges(d, p, edge_data, tag=DIRICHLET):
    """Massive Dirichlet problem with data attached to exit edges.

    Needed on slit domains, where a curve vertex borders the domain from
    both sides and the two sides carry different values.  Entries of the
    result outside the retained set are zero.
    """
    d = as_slit(d)
    s = system(d, p)
    data = np.asarray(edge_data, dtype=float)
    if data.shape != s.exit_from.shape:
        raise ValueError("need one value per exit edge")
    if not np.all(np.isfinite(data)):
        raise ValueError("boundary data must be finite")
    rhs = np.zeros(len(s.idx))
    np.add.at(rhs, s.exit_from, data)
    u = s.solve(rhs * s.keep / s.deg)
    return ScalarField(d, s.full(u), tag)
