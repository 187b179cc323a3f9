"""Massive SLE driving diffusions ``d xi = sqrt(kappa) dB + lambda dt``.

The SDE runs in the half-plane chart ``Z_t`` while every massive kernel is
solved on the lattice in the physical domain, where the mass is constant.
The lattice curve follows the continuum trace.

Normalizations
--------------
``Z_t = g_t - xi_t`` with ``dg_t = 2/g_t dt``.  ``P_t = Im(-1/Z_t)`` is the
Poisson kernel at the tip in the chart.  A killing rate ``delta = m^2 eps^2``
per step gives the continuum operator ``Delta - mu^2`` with ``mu^2 = 4 m^2``
(see :attr:`MassParams.mu2`).  With the Green's function ``G`` of
``-Delta + mu^2`` the Hadamard formula reads
``dG_t(z, w) = -(2/pi) P_t(z) P_t(w) dt``, and the bosonic drift becomes

    lambda_t = -(2/pi) mu^2 integral of M_t P_t^(mu)

where ``P^(mu) = P - mu^2 G * P`` is the massive Poisson kernel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import HEXAGONAL, DomainError
from .loewner import DrivingFunction, LoewnerChart, base_chart, slit_map
from .observables import boundary_points
from .potential import (
    MassParams,
    as_slit,
    exit_edges,
    massive_harmonic_measure,
    system,
)

LERW = "lerw"
BOSONIC = "bosonic"
UST = "ust"
HADAMARD = 2.0 / np.pi


class ResolutionError(RuntimeError):
    """The lattice can no longer resolve the continuum trace."""


def vertex_area(kind):
    """Area per lattice vertex in units of ``eps**2``."""
    return np.sqrt(3.0) / 2.0 if kind == HEXAGONAL else 1.0


@dataclass(frozen=True)
class DriftFunctional:
    """Drift ``lambda_t`` of one model.

    ``fd_cells`` is the boundary finite-difference offset (in boundary
    spacings, chart units) of the LERW log-derivative.  ``shift`` is the
    additive constant of the bosonic observable; ``-pi/2`` centres the
    ``kappa = 4`` boundary values at ``-+pi/2`` as for the harmonic explorer.
    The UST drift requires ``experimental=True``.
    """

    kind: str
    kappa: float
    m: float
    fd_cells: int = 3
    shift: float = -np.pi / 2
    experimental: bool = False

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("mass must be nonnegative")
        if self.kind == LERW and self.kappa != 2:
            raise ValueError("the LERW drift belongs to kappa = 2")
        if self.kind == UST:
            if self.kappa != 8:
                raise ValueError("the UST drift belongs to kappa = 8")
            if not self.experimental:
                raise ValueError("the UST drift is experimental; pass experimental=True")
        if self.kind not in (LERW, BOSONIC, UST):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.fd_cells < 1:
            raise ValueError("fd_cells must be at least 1")

    def __call__(self, state):
        p = state.p
        if p.m != self.m:
            raise ValueError("state and drift carry different masses")
        if self.kind == LERW:
            return drift_lerw(state, p, self.fd_cells)
        if self.kind == BOSONIC:
            return drift_bosonic(state, self.kappa, p, self.shift)
        return drift_ust(state, p).value


@dataclass
class MsleState:
    """One evolving path: lattice slit domain, chart and bookkeeping.

    ``images`` holds ``Z_t`` on the retained vertices (NaN elsewhere) and
    ``arg_dz`` the continuously tracked ``arg Z_t'``.  Both are computed on
    first use and then updated one slit map per step.  ``lam2`` accumulates
    ``integral lambda^2 dt``.
    """

    domain: object
    chart: LoewnerChart
    p: MassParams
    lam2: float = 0.0
    lag: float = 0.0
    trace: list = field(default_factory=list)
    _images: np.ndarray | None = field(default=None, repr=False)
    _arg_dz: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def start(cls, d, p, chart=None):
        d = as_slit(d).copy()
        if chart is None:
            chart = base_chart(d.base)
        chart = chart.copy()
        tip = chart.tip() if chart.xs else d.base.z[d.tip]
        return cls(d, chart, p, trace=[complex(tip)])

    def _track(self):
        d, chart = self.domain, self.chart
        z = d.base.z
        images = np.full(d.base.n, np.nan + 0j)
        arg_dz = np.full(d.base.n, np.nan)
        inside = d.retained
        w = chart.base(z[inside])
        arg_dz[inside] = np.angle(chart.base.derivative(z[inside]))
        for x, y in zip(chart.xs, chart.ys):
            f = slit_map(w, x, y)
            arg_dz[inside] += np.angle((w - x) / f)
            w = f
        images[inside] = w
        self._images, self._arg_dz = images, arg_dz

    @property
    def images(self):
        if self._images is None:
            self._track()
        return self._images

    @property
    def arg_dz(self):
        if self._arg_dz is None:
            self._track()
        return self._arg_dz

    @classmethod
    def from_curve(cls, d, p, base, vertices, points, refine=2):
        """State of a lattice curve prefix: the slit domain of ``vertices`` and
        the chart unzipped along ``points`` (which start at ``a``)."""
        from .loewner import chart_from_curve

        slit = as_slit(d).copy()
        for v in vertices[1:]:
            slit.extend(v)
        if len(points) > 1:
            chart, _ = chart_from_curve(base, points, refine=refine)
        else:
            chart = base.copy()
        return cls.start(slit, p, chart)

    @property
    def t(self):
        return self.chart.t

    @property
    def xi(self):
        return self.chart.xi

    @property
    def tip(self):
        """Physical tip of the continuum trace."""
        return self.trace[-1]

    def mismatch(self):
        """Distance between the continuum tip and the lattice tip, in cells."""
        d = self.domain
        return abs(self.tip - d.base.z[d.tip]) / d.base.eps

    def check(self, max_cells=3.0):
        if self.mismatch() > max_cells:
            raise ResolutionError(
                f"chart and lattice tips are {self.mismatch():.1f} cells apart")


# ------------------------------------------------------------- drifts ----

def _tip_edges(state, radius):
    """Exit edges near the lattice tip with their chart abscissae."""
    d = state.domain
    z = d.base.z
    u, v = exit_edges(d, state.p)
    near = (np.abs(z[v] - z[d.tip]) <= radius) & (v != d.base.b_vertex)
    bp = boundary_points(d, state.p, state.chart)[near]
    return u[near], v[near], state.chart(bp).real


def _richardson_slope(x, f, cells):
    """``f'(0)`` from centred differences at ``h`` and ``2h``, where ``h`` is
    ``cells`` boundary spacings on the sparser side of 0."""
    order = np.argsort(x)
    x, f = x[order], f[order]
    left, right = -x[x < 0][::-1], x[x > 0]
    if len(left) < 2 * cells or len(right) < 2 * cells:
        raise ResolutionError("too few boundary samples around the tip")
    h = max(left[cells - 1], right[cells - 1])
    if 2 * h > min(left[-1], right[-1]):
        raise ResolutionError("boundary samples do not reach the difference offset")
    g = lambda s: np.interp(s, x, f)
    d1 = (g(h) - g(-h)) / (2 * h)
    d2 = (g(2 * h) - g(-2 * h)) / (4 * h)
    return (4 * d1 - d2) / 3


def drift_lerw(state, p, fd_cells=3, radius_cells=12):
    """``lambda = 2 d/dx log K^(m)(x, b)`` at the tip image ``x = 0``.

    In the chart the massless boundary kernel ``K^(0)(x, b)`` does not depend
    on ``x`` (``b`` sits at infinity), so the derivative equals that of
    ``log K^(m) / K^(0)``; the conformal factors cancel in the ratio.  Per
    boundary edge ``w -> u`` the ratio is ``(1 - delta) h^(m)(w) / h^(0)(w)``
    with ``h`` the (massive) harmonic measure of ``b``.
    """
    if p.m == 0:
        return 0.0
    d = state.domain
    hm = massive_harmonic_measure(d, p, [d.base.b_vertex]).values
    h0 = massive_harmonic_measure(d, MassParams(0.0, p.eps), [d.base.b_vertex]).values
    radius = radius_cells * d.base.eps
    while True:
        u, _, x = _tip_edges(state, radius)
        if np.any(hm[u] <= 1e-300) or np.any(h0[u] <= 1e-300):
            raise FloatingPointError("harmonic measure of b underflows near the tip")
        f = np.log(hm[u]) - np.log(h0[u])
        try:
            return float(2.0 * _richardson_slope(x, f, fd_cells))
        except ResolutionError:
            if radius > 4.0:
                raise
            radius *= 2.0


def _retained_fields(state):
    d = state.domain
    idx = np.flatnonzero(d.retained)
    w = state.images[idx]
    if np.any(~np.isfinite(w)):
        raise ResolutionError("chart image missing on a retained vertex")
    return d, idx, w


def bosonic_fields(state, kappa, p, shift=-np.pi / 2):
    """``(idx, M, P, M^(mu), P^(mu))`` on the retained vertices."""
    d, idx, w = _retained_fields(state)
    M = np.angle(w) + shift
    coef = 1.0 - float(kappa) / 4.0
    if coef != 0.0:
        M = M + coef * state.arg_dz[idx]
    P = (-1.0 / w).imag
    s = system(d, p)
    dlt = s.delta
    Mm = M - s.solve(dlt * M)
    Pm = P - s.solve(dlt * P)
    return idx, M, P, Mm, Pm


def _bosonic_weight(d, p):
    """``(2/pi) mu^2 dA`` per vertex, i.e. ``(8/pi) delta`` times the area factor."""
    return HADAMARD * p.mu2 * p.eps ** 2 * vertex_area(d.base.kind)


def drift_bosonic(state, kappa, p, shift=-np.pi / 2, both=False):
    """``lambda = -(2/pi) mu^2 integral M_t P_t^(mu)`` over the retained region.

    With ``both=True`` returns the pair (this form, the alternative form
    ``-(2/pi) mu^2 integral M_t^(mu) P_t``).
    """
    if p.m == 0:
        return (0.0, 0.0) if both else 0.0
    d = state.domain
    _, M, P, Mm, Pm = bosonic_fields(state, kappa, p, shift)
    c = _bosonic_weight(d, p)
    lam = -c * float(M @ Pm)
    if both:
        return lam, -c * float(Mm @ P)
    return lam


def bosonic_bound(state, p, sup_m):
    """``(2/pi) mu^2 sup|M| integral P_t``: bound on ``|lambda_t|``."""
    d, _, w = _retained_fields(state)
    return _bosonic_weight(d, p) * sup_m * float(np.sum((-1.0 / w).imag))


@dataclass
class UstDrift:
    """Value of the formal UST drift plus its tip-cutoff diagnostic."""

    value: float
    cutoffs: np.ndarray
    partial: np.ndarray
    converged: bool


def _ust_system(state, p):
    """Killed walk absorbed on the wired side (``Re Z > 0``) and reflected on
    the free side."""
    from scipy import sparse
    from scipy.sparse.linalg import splu

    d = state.domain
    base = d.base
    s = system(d, p)
    u, _ = exit_edges(d, p)
    x = state.chart(boundary_points(d, p, state.chart)).real
    free = np.zeros(len(s.idx))
    np.add.at(free, s.pos[u[x < 0]], 1.0)
    deg = base.degree - free
    if np.any(deg <= 0):
        raise DomainError("mixed boundary problem: a vertex only touches the free side")
    nb = base.nbrs[s.idx]
    inside = nb >= 0
    inside[inside] = d.retained[nb[inside]]
    r, c = np.nonzero(inside)
    vals = s.keep[r] / deg[r]
    n = len(s.idx)
    Q = sparse.csr_matrix((vals, (r, s.pos[nb[r, c]])), shape=(n, n))
    A = (sparse.identity(n, format="csc") - Q).tocsc()
    try:
        return splu(A), s
    except RuntimeError as exc:
        raise DomainError(f"mixed boundary problem failed: {exc}") from exc


def ust_kernels(state, p):
    """``(idx, P~, P~^(mu))``: Dirichlet on the wired side, Neumann on the
    free side, ``P~ = Im(-Z^(-1/2))`` in the chart."""
    d, idx, w = _retained_fields(state)
    Pt = (-(w ** -0.5)).imag
    lu, s = _ust_system(state, p)
    Pm = Pt - lu.solve(s.delta * Pt)
    return idx, Pt, Pm


def drift_ust(state, p, cutoffs=None, rtol=0.05):
    """Formal UST drift ``16 integral P~ P~^(mu)`` (experimental).

    The integral is also reported with discs of radius ``r`` around the tip
    removed; ``converged`` records whether the last two cutoffs agree to
    ``rtol``.  No limit is asserted.
    """
    d = state.domain
    eps = d.base.eps
    idx, Pt, Pm = ust_kernels(state, p)
    dens = 16.0 * Pt * Pm * eps ** 2 * vertex_area(d.base.kind)
    dist = np.abs(d.base.z[idx] - state.tip)
    if cutoffs is None:
        cutoffs = eps * np.array([8.0, 4.0, 2.0, 1.0])
    cutoffs = np.asarray(cutoffs, dtype=float)
    partial = np.array([dens[dist > r].sum() for r in cutoffs])
    total = float(dens.sum())
    scale = max(abs(partial[-1]), 1e-300)
    conv = bool(len(partial) >= 2 and abs(partial[-1] - partial[-2]) <= rtol * scale)
    return UstDrift(total, cutoffs, partial, conv)


# -------------------------------------------------------------- steps ----

def dt_floor(state, cells=1.0):
    """Smallest capacity step whose slit spans ``cells`` lattice cells at the
    tip, measured in chart units by the nearest retained neighbour."""
    d = state.domain
    nb = [int(w) for w in d.base.nbrs[d.tip] if w >= 0 and d.retained[w]]
    if not nb:
        raise ResolutionError("tip has no retained neighbour")
    h = float(np.min(np.abs(state.chart(d.base.z[nb]))))
    return (cells * h) ** 2 / 4.0


def _detour(d, target, radius):
    """Shortest retained path from the tip to the retained vertex nearest
    ``target`` (within ``radius`` of the tip), or ``[]``."""
    base = d.base
    z = base.z
    goal_set = np.flatnonzero(d.retained & (np.abs(z - z[d.tip]) <= radius))
    if not len(goal_set):
        return []
    goal = int(goal_set[np.argmin(np.abs(z[goal_set] - target))])
    prev = {int(w): -1 for w in base.nbrs[d.tip] if w >= 0 and d.retained[w]}
    queue = deque(prev)
    while queue:
        v = queue.popleft()
        if v == goal:
            path = [v]
            while prev[path[-1]] >= 0:
                path.append(prev[path[-1]])
            return path[::-1]
        for w in base.nbrs[v]:
            w = int(w)
            if w >= 0 and d.retained[w] and w not in prev and abs(z[w] - z[d.tip]) <= radius:
                prev[w] = v
                queue.append(w)
    return []


def _follow(d, target, max_steps=10_000):
    """Extend the lattice curve towards the point ``target``: greedily while
    some neighbour gets closer, then along the shortest retained path to the
    vertex nearest the target."""
    base = d.base
    z = base.z
    for _ in range(max_steps):
        here = abs(z[d.tip] - target)
        if here <= 0.5 * base.eps * 1.0000001:
            return
        cand = [int(w) for w in base.nbrs[d.tip]
                if w >= 0 and (d.retained[w] or w == base.b_vertex)]
        cand.sort(key=lambda w: abs(z[w] - target))
        moved = False
        for w in cand:
            if abs(z[w] - target) >= here:
                break
            if w == base.b_vertex:
                raise DomainError("trace reached b")
            try:
                d.extend(w)
            except DomainError:
                continue
            moved = True
            break
        if moved:
            continue
        path = _detour(d, target, 2.0 * here + 2.0 * base.eps)
        if not path or abs(z[path[-1]] - target) >= here:
            return
        for w in path:
            try:
                d.extend(w)
            except DomainError:
                return


def step_msle(state, drift, dt, noise, apply_drift=True, samples=8, max_lag=3.0):
    """One Euler-Maruyama step; updates ``state`` in place and returns it.

    ``xi <- xi + sqrt(kappa) noise + lambda dt`` (the drift term is dropped
    when ``apply_drift`` is false, so ``lambda`` is only recorded).  The new
    slit is mapped back to the physical domain and the lattice curve is
    extended along it; the run halts with :class:`ResolutionError` when the
    lattice tip lags more than ``max_lag`` cells behind the trace.

    Returns ``(state, lambda)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.domain.complete:
        raise DomainError("curve already reached b")
    lam = float(drift(state)) if drift is not None else 0.0
    kappa = drift.kappa if drift is not None else None
    if kappa is None:
        raise ValueError("a drift functional is required")
    dxi = np.sqrt(kappa) * noise + (lam * dt if apply_drift else 0.0)
    y = 2.0 * np.sqrt(dt)
    # the lattice follows the chord from the tip to the new tip image; the
    # vertical slit of the chart grows from the boundary point dxi instead,
    # which for |dxi| ~ y would restart the trace further down the curve
    pts = state.chart.inverse((dxi + 1j * y) * np.linspace(1.0 / samples, 1.0, samples))
    if np.any(~np.isfinite(pts)):
        raise DomainError("trace left the domain")
    state.chart.push(dxi, dt)
    d = state.domain
    for q in pts:
        _follow(d, q)
    if state._images is not None:
        live = np.flatnonzero(d.retained)
        w = state._images[live]
        f = slit_map(w, dxi, y)
        state._images[live] = f
        state._arg_dz[live] += np.angle((w - dxi) / f)
        state._images[~d.retained] = np.nan
        state._arg_dz[~d.retained] = np.nan
    state.lam2 += lam * lam * dt
    state.trace.append(complex(pts[-1]))
    state.lag = state.mismatch()
    if state.lag > max_lag:
        raise ResolutionError(
            f"lattice tip lags {state.lag:.1f} cells behind the trace at t = {state.t:.4g}")
    return state, lam


@dataclass
class MsleRun:
    """Output of :func:`evolve`."""

    drive: DrivingFunction
    trace: np.ndarray
    lam: np.ndarray
    lam2: float
    state: MsleState


def evolve(d, p, drift, T, dt, seed=None, apply_drift=True, chart=None, min_cells=4.0,
           max_lag=3.0):
    """Run :func:`step_msle` on a uniform grid up to capacity ``T``.

    The first step must span at least ``min_cells`` lattice cells at the
    starting point (:func:`dt_floor`), otherwise :class:`ResolutionError`.
    """
    rng = np.random.default_rng(seed)
    state = MsleState.start(d, p, chart)
    floor = dt_floor(state, min_cells)
    if dt < floor:
        raise ResolutionError(
            f"dt = {dt:.3g} below the lattice floor {floor:.3g} ({min_cells} cells)")
    n = int(round(T / dt))
    noise = np.sqrt(dt) * rng.standard_normal(n)
    lam = np.zeros(n)
    for k in range(n):
        _, lam[k] = step_msle(state, drift, dt, noise[k], apply_drift, max_lag=max_lag)
    t = dt * np.arange(n + 1)
    sk = np.sqrt(drift.kappa) * noise
    dr = lam * dt if apply_drift else np.zeros(n)
    xi = np.concatenate([[0.0], np.cumsum(sk + dr)])
    drive = DrivingFunction(t, xi, sk, dr)
    return MsleRun(drive, np.array(state.trace), lam, state.lam2, state)


def girsanov_weight(xi, kappa, lam=None):
    """``exp(sum lam_i dB_i / sqrt(kappa) - 1/2 sum lam_i^2 dt_i / kappa)``.

    ``dB_i`` comes from the noise part of ``xi`` (``noise = sqrt(kappa) dB``).
    ``lam`` defaults to ``drift / dt``; pass it explicitly to weight a
    driftless path by the drift functional evaluated along it.
    """
    if xi.noise is None:
        raise ValueError("driving function carries no noise/drift decomposition")
    dt, _ = xi.increments()
    if lam is None:
        if xi.drift is None:
            raise ValueError("driving function carries no drift decomposition")
        lam = xi.drift / dt
    lam = np.asarray(lam, dtype=float)
    if lam.shape != dt.shape:
        raise ValueError("lam needs one entry per step")
    dB = xi.noise / np.sqrt(kappa)
    return float(np.exp(np.sum(lam * dB) / np.sqrt(kappa) - 0.5 * np.sum(lam * lam * dt) / kappa))


__all__ = [
    "DriftFunctional", "MsleState", "MsleRun", "ResolutionError", "UstDrift",
    "drift_lerw", "drift_bosonic", "drift_ust", "bosonic_bound", "bosonic_fields",
    "ust_kernels", "step_msle", "evolve", "girsanov_weight", "dt_floor", "vertex_area",
    "LERW", "BOSONIC", "UST", "HADAMARD",
]
