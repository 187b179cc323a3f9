"""Loewner evolution numerics in the chart ``Z_t = g_t - xi_t``.

The elementary step is the vertical slit map

    f(z) = sqrt((z - x)**2 + y**2)

which removes the segment ``[x, x + iy]`` from the upper half-plane, sends
its tip to 0 and is hydrodynamically normalized at infinity.  It solves
``dZ = 2/Z dt - dxi`` exactly for a driving function that jumps by ``x``
and then stays constant for capacity ``y**2 / 4``.

A domain with marked points ``a, b`` is first uniformized by a geodesic
zipper (:func:`zipper_chart`), sending ``a`` to 0 and ``b`` to infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import DomainError


def _upper(s, ref):
    """Choose the square-root branch of a slit map.

    The vertical slit map commutes with ``z -> -conj(z)``, so the image has
    the sign of ``Re ref``; only on the imaginary axis do we fall back to
    ``Im >= 0``.  This stays stable for inputs on or near the real line,
    where the sign of a rounding-level imaginary part is meaningless.
    """
    s = np.asarray(s, dtype=complex)
    ref = np.asarray(ref, dtype=complex)
    flip = np.where(ref.real != 0, s.real * ref.real < 0, s.imag < 0)
    return np.where(flip, -s, s)


def slit_map(z, x, y):
    """``sqrt((z - x)^2 + y^2)``, the map removing ``[x, x + iy]``."""
    u = np.asarray(z, dtype=complex) - x
    return _upper(np.sqrt(u * u + y * y), u)


def slit_map_inverse(w, x, y):
    w = np.asarray(w, dtype=complex)
    return x + _upper(np.sqrt(w * w - y * y), w)


def slit_map_derivative(z, x, y):
    u = np.asarray(z, dtype=complex) - x
    return u / slit_map(z, x, y)


# ----------------------------------------------------------- driving ----

@dataclass
class DrivingFunction:
    """``xi`` sampled on the capacity grid ``t`` (``t[0] = 0``, ``xi[0] = 0``).

    ``noise`` and ``drift`` optionally split each increment
    ``xi[k+1] - xi[k]`` into its Brownian and drift parts.
    """

    t: np.ndarray
    xi: np.ndarray
    noise: np.ndarray | None = None
    drift: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if self.t.ndim != 1 or self.t.shape != self.xi.shape:
            raise ValueError("t and xi must be 1-d arrays of equal length")
        if len(self.t) == 0 or self.t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if abs(self.xi[0]) > 1e-12:
            raise ValueError("driving function must start at 0")
        for name in ("noise", "drift"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (len(self.t) - 1,):
                    raise ValueError(f"{name} needs one entry per step")
                setattr(self, name, arr)

    @property
    def T(self):
        return float(self.t[-1])

    def increments(self):
        return np.diff(self.t), np.diff(self.xi)

    @classmethod
    def brownian(cls, kappa, T, dt, seed=None, drift=0.0):
        """``xi = sqrt(kappa) B + drift * t`` on a uniform grid."""
        rng = np.random.default_rng(seed)
        n = int(round(T / dt))
        t = np.linspace(0.0, n * dt, n + 1)
        noise = np.sqrt(kappa * dt) * rng.standard_normal(n)
        dr = np.full(n, drift * dt)
        return cls(t, np.concatenate([[0.0], np.cumsum(noise + dr)]), noise, dr)


# ------------------------------------------------------ base charts ----

class ZipperChart:
    """Conformal map of a polygonal domain onto the upper half-plane with
    ``a -> 0`` and ``b -> infinity``, built by the geodesic zipper.

    The boundary points ``p_0, p_1, ..., p_n`` (counterclockwise) are
    zipped one at a time: ``i sqrt((z - p_1)/(z - p_0))`` opens the first
    edge, then each later image ``c`` is removed by the Moebius map
    ``z/(1 - z/Re-part)`` followed by ``sqrt(z^2 + d^2)``.  A last
    Moebius/squaring step closes the boundary and a real Moebius map moves
    ``a, b`` to ``0, infinity``.  The scale is fixed by
    ``|Z(z)| |z - b| -> 1`` at ``b``.
    """

    def __init__(self, polygon, a, b, test_point=None):
        poly = np.asarray(polygon, dtype=complex)
        if len(poly) < 3:
            raise DomainError("polygon needs at least three points")
        self.poly = poly
        self.a = complex(a)
        self.b = complex(b)
        self.z0, self.z1 = poly[0], poly[1]
        self._vertex_pre = {}
        cs, ds = [], []
        w = self._first(poly[2:])
        # images of the vertices zipped so far (p_0 at infinity, p_1 at 0);
        # they stay on the real axis, where evaluating the maps directly
        # would lose the side of the slit they belong to
        done = np.array([np.inf + 0j, 0j])
        for k in range(len(w)):
            zeta = w[k]
            c = abs(zeta) ** 2 / zeta.real if zeta.real != 0 else np.inf
            d = abs(zeta) ** 2 / zeta.imag if zeta.imag > 0 else 0.0
            cs.append(c)
            ds.append(d)
            w[k + 1:] = self._zip(w[k + 1:], c, d)
            done = np.append(self._zip(done, c, d).real + 0j, 0j)
        self.cs = np.array(cs)
        self.ds = np.array(ds)
        # image of p_0 (sent to infinity by the first map)
        zinf = done[0]
        self.close = zinf.real if np.isfinite(zinf) else np.inf
        self._vertex_pre = {}
        for p, v in zip(poly, done):
            if not np.isfinite(self.close):
                m = v
            elif v == self.close:
                m = np.inf + 0j
            elif np.isinf(v):
                m = -self.close + 0j
            else:
                m = v / (1.0 - v / self.close)
            self._vertex_pre[complex(p)] = m
        if test_point is None:
            test_point = poly.mean()
        m = self._pre_square(np.array([complex(test_point)]))[0]
        self.sign = 1.0 if (m * m).imag > 0 else -1.0
        A, B = self._raw(np.array([self.a, self.b]))
        if not (np.isfinite(A) and np.isfinite(B)):
            raise DomainError("marked point coincides with the zipper pole")
        self.A, self.B = A.real, B.real
        self.orient = 1.0 if self.B > self.A else -1.0
        self.scale = 1.0
        h = 1e-6 * np.max(np.abs(poly - poly.mean()))
        nrm = 1j * self._inward_normal(self.b)
        zb = self.b + h * nrm
        self.scale = 1.0 / (abs(self(zb)) * h)

    # -- pieces -------------------------------------------------------
    def _first(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = (z - self.z1) / (z - self.z0)
        out = 1j * np.sqrt(q)
        return np.where(np.isfinite(q), out, np.inf + 0j)

    @staticmethod
    def _zip(z, c, d):
        z = np.asarray(z, dtype=complex)
        at_inf = np.isinf(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            if np.isfinite(c):
                z = np.where(at_inf, -c + 0j, z / (1.0 - z / c))
                at_inf = np.isinf(z)
            out = slit_map(np.where(at_inf, 0j, z), 0.0, d)
        # a vertex zipped at the previous step sits exactly at 0; the opened
        # boundary lies on the negative axis, so it goes to -d
        out = np.where(z == 0, -d + 0j, out)
        return np.where(at_inf, np.inf + 0j, out)

    @staticmethod
    def _unzip(w, c, d):
        z = slit_map_inverse(w, 0.0, d)
        if np.isfinite(c):
            z = z / (1.0 + z / c)
        return z

    def _pre_square(self, z):
        z = np.asarray(z, dtype=complex)
        out = self._pre_square_generic(z)
        if self._vertex_pre:
            flat = out.reshape(-1)
            for k, zk in enumerate(z.reshape(-1)):
                m = self._vertex_pre.get(complex(zk))
                if m is not None:
                    flat[k] = m
        return out

    def _pre_square_generic(self, z):
        w = self._first(z)
        for c, d in zip(self.cs, self.ds):
            w = self._zip(w, c, d)
        if not np.isfinite(self.close):
            return w
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(np.isinf(w), -self.close + 0j, w / (1.0 - w / self.close))
        return np.where(w == self.close, np.inf + 0j, m)

    def _raw(self, z):
        m = self._pre_square(z)
        with np.errstate(invalid="ignore", over="ignore"):
            r = self.sign * m * m
        return np.where(np.isinf(m), np.inf + 0j, r)

    def _inward_normal(self, p):
        k = int(np.argmin(np.abs(self.poly - p)))
        n = len(self.poly)
        tangent = self.poly[(k + 1) % n] - self.poly[(k - 1) % n]
        return tangent / abs(tangent)

    # -- public -------------------------------------------------------
    def __call__(self, z):
        r = self._raw(np.asarray(z, dtype=complex))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.orient > 0:
                out = (r - self.A) / (self.B - r)
            else:
                out = (r - self.A) / (r - self.B)
            out = np.where(np.isinf(r), -self.orient + 0j, out)
            return self.scale * out

    def inverse(self, w):
        v = np.asarray(w, dtype=complex) / self.scale
        if self.orient > 0:
            r = (self.A + self.B * v) / (1.0 + v)
        else:
            r = (self.A - self.B * v) / (1.0 - v)
        m = np.sqrt(self.sign * r)
        # M lies in the quadrant that squares onto the half-plane
        want = self._quadrant
        m = np.where((np.sign(m.real) == want[0]) | (m.real == 0), m, -m)
        if np.isfinite(self.close):
            m = m / (1.0 + m / self.close)
        for c, d in zip(self.cs[::-1], self.ds[::-1]):
            m = self._unzip(m, c, d)
        q = -(m * m)
        return (self.z1 - q * self.z0) / (1.0 - q)

    @property
    def _quadrant(self):
        m = self._pre_square(np.array([self.poly.mean()]))[0]
        return (np.sign(m.real), np.sign(m.imag))

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        q = (z - self.z1) / (z - self.z0)
        s = np.sqrt(q)
        w = 1j * s
        dq = (self.z1 - self.z0) / (z - self.z0) ** 2
        dw = 1j * dq / (2 * s)
        for c, d in zip(self.cs, self.ds):
            if np.isfinite(c):
                dw = dw / (1.0 - w / c) ** 2
                w = w / (1.0 - w / c)
            f = slit_map(w, 0.0, d)
            dw = dw * w / f
            w = f
        if np.isfinite(self.close):
            dm = dw / (1.0 - w / self.close) ** 2
            m = w / (1.0 - w / self.close)
        else:
            dm, m = dw, w
        r = self.sign * m * m
        dr = self.sign * 2 * m * dm
        if self.orient > 0:
            dout = (self.B - self.A) / (self.B - r) ** 2 * dr
        else:
            dout = (self.A - self.B) / (r - self.B) ** 2 * dr
        return self.scale * dout

    def boundary_table(self):
        """Polygon vertices and their images on the real line."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.poly.copy(), self(self.poly)


class IdentityChart:
    """The half-plane itself with ``a = 0`` and ``b = infinity``."""

    def __call__(self, z):
        return np.asarray(z, dtype=complex)

    def inverse(self, w):
        return np.asarray(w, dtype=complex)

    def derivative(self, z):
        return np.ones_like(np.asarray(z, dtype=complex))


def zipper_chart(polygon, a, b, density=1, test_point=None):
    """Zipper chart of a closed polygon (counterclockwise vertex list).

    ``density > 1`` inserts extra equally spaced points on every edge.
    ``a`` and ``b`` must be polygon vertices; the polygon is rotated to
    start next to ``b`` so neither marked point is the zipper pole.
    """
    poly = np.asarray(polygon, dtype=complex)
    if density > 1:
        nxt = np.roll(poly, -1)
        frac = np.arange(density) / density
        poly = (poly[:, None] + (nxt - poly)[:, None] * frac[None, :]).ravel()
    kb = int(np.argmin(np.abs(poly - b)))
    if abs(poly[kb] - b) > 1e-9 or np.min(np.abs(poly - a)) > 1e-9:
        raise DomainError("marked points must be polygon vertices")
    poly = np.roll(poly, -(kb + 1))
    return ZipperChart(poly, a, b, test_point)


def base_chart(d, density=1, tol=0.05):
    """Uniformize a lattice domain: the boundary cycle is the polygon.

    Raises :class:`DomainError` when interior vertices do not all land in
    the upper half-plane or edge midpoints miss the real line by more than
    ``tol`` (relative to their distance from 0), i.e. when the boundary
    resolution is too coarse.
    """
    poly = d.z[d.boundary]
    chart = zipper_chart(poly, d.z[d.a_vertex], d.z[d.b_vertex], density,
                         test_point=d.z[d.interior_indices[len(d.interior_indices) // 2]])
    zi = chart(d.z[d.interior_indices])
    if np.any(zi.imag <= 0):
        raise DomainError("zipper chart failed to map the interior into the half-plane")
    refined = chart.poly
    mid = 0.5 * (refined + np.roll(refined, -1))
    keep = (np.abs(mid - d.z[d.b_vertex]) > 2 * d.eps)
    wm = chart(mid[keep])
    resid = np.abs(wm.imag) / np.maximum(np.abs(wm), 1.0)
    if np.max(resid) > tol:
        raise DomainError(f"boundary resolution too coarse (residual {np.max(resid):.2e})")
    return LoewnerChart(chart)


# ------------------------------------------------------ Loewner chart ----

@dataclass
class LoewnerChart:
    """``Z_t``: base chart followed by vertical slit maps ``(x_k, y_k)``."""

    base: object = field(default_factory=IdentityChart)
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)

    @property
    def t(self):
        return float(np.sum(np.square(self.ys)) / 4.0)

    @property
    def xi(self):
        return float(np.sum(self.xs))

    def push(self, dxi, dt):
        if dt <= 0:
            raise ValueError("capacity increment must be positive")
        self.xs.append(float(dxi))
        self.ys.append(2.0 * np.sqrt(dt))

    def copy(self):
        return LoewnerChart(self.base, list(self.xs), list(self.ys))

    def __call__(self, z):
        w = self.base(z)
        for x, y in zip(self.xs, self.ys):
            w = slit_map(w, x, y)
        return w

    def inverse(self, w):
        z = np.asarray(w, dtype=complex)
        for x, y in zip(self.xs[::-1], self.ys[::-1]):
            z = slit_map_inverse(z, x, y)
        return self.base.inverse(z)

    def tip(self):
        return self.inverse(np.array([0j]))[0]


def chart_derivative(chart, z):
    """``Z_t'(z)`` by the chain rule through the composition."""
    z = np.asarray(z, dtype=complex)
    w = chart.base(z)
    dw = chart.base.derivative(z)
    for x, y in zip(chart.xs, chart.ys):
        f = slit_map(w, x, y)
        if np.any(f == 0):
            raise ValueError("derivative is singular on the trace")
        dw = dw * (w - x) / f
        w = f
    return dw


# ------------------------------------------------- forward / inverse ----

def forward_trace(drive, dt_max=None, chart=None):
    """Tip positions ``gamma(t_k)`` for every grid time (``gamma(0) = 0``).

    Each step uses the vertical slit solution for constant driving over the
    step.  With ``chart`` the trace is pulled back into its domain.
    """
    dt, dxi = drive.increments()
    if dt_max is not None and np.max(dt, initial=0.0) > dt_max * (1 + 1e-9):
        raise ValueError("time step exceeds dt_max")
    y = 2.0 * np.sqrt(dt)
    n = len(dt)
    W = dxi + 1j * y
    for j in range(n - 2, -1, -1):
        W[j + 1:] = slit_map_inverse(W[j + 1:], dxi[j], y[j])
    pts = np.concatenate([[0j], W])
    if chart is not None:
        pts = chart.base.inverse(pts) if isinstance(chart, LoewnerChart) else chart.inverse(pts)
    return pts


def unzip(points, chart=None, refine=1, curve=None, tol=1e-9):
    """Driving function of a curve starting at 0 in the half-plane.

    ``chart`` (a base chart or :class:`LoewnerChart`) first maps curve points
    from a lattice domain; points mapped to infinity (the endpoint ``b``)
    are dropped.  ``refine`` splits every segment into that many pieces
    (in the chart plane) before unzipping.  When ``curve`` is given its
    ``times`` are filled with the capacity at each original point.
    """
    pts = np.asarray(points, dtype=complex)
    if chart is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            pts = chart(pts)
    finite = np.isfinite(pts)
    n_orig = int(np.argmin(finite)) if not finite.all() else len(pts)
    pts = pts[:n_orig]
    scale = max(np.max(np.abs(pts), initial=0.0), 1e-300)
    if abs(pts[0]) > 1e-6 * scale:
        raise ValueError("curve must start at the origin")
    if np.any(pts.imag < -tol * scale):
        raise ValueError("curve leaves the upper half-plane")
    if refine > 1:
        frac = np.arange(1, refine + 1) / refine
        seg = pts[:-1, None] + (pts[1:] - pts[:-1])[:, None] * frac[None, :]
        work = seg.ravel()
    else:
        work = pts[1:].copy()
    n = len(work)
    dts = np.empty(n)
    dxs = np.empty(n)
    for k in range(n):
        wk = work[k]
        if not np.isfinite(wk):
            raise ValueError("map evaluation diverged")
        if wk.imag < -tol * scale:
            raise ValueError("curve leaves the upper half-plane")
        x, y = wk.real, max(wk.imag, 0.0)
        if y == 0.0:
            y = 1e-300
        dxs[k] = x
        dts[k] = y * y / 4.0
        if k + 1 < n:
            work[k + 1:] = slit_map(work[k + 1:], x, y)
    t = np.concatenate([[0.0], np.cumsum(dts)])
    xi = np.concatenate([[0.0], np.cumsum(dxs)])
    keep = np.concatenate([[True], dts > 0])
    drive = DrivingFunction(t[keep], xi[keep])
    if curve is not None:
        times = t[::refine]
        full = np.full(len(curve.points), np.nan)
        full[:len(times)] = times
        curve.times = full
    return drive


# ---------------------------------------------------------- kappa ----

@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    lo: float
    hi: float
    n_paths: int


def estimate_kappa(drives, n_boot=2000, level=0.95, seed=0, max_rel_width=None):
    """Realized quadratic variation per unit capacity.

    With several driving functions the pooled estimate
    ``sum QV / sum T`` gets a bootstrap interval over paths; a single path
    is bootstrapped over its increments.
    """
    if isinstance(drives, DrivingFunction):
        dt, dxi = drives.increments()
        qv, tt = dxi ** 2, dt
    else:
        qv = np.array([np.sum(np.diff(d.xi) ** 2) for d in drives])
        tt = np.array([d.T for d in drives])
    if len(qv) == 0 or np.sum(tt) <= 0:
        raise ValueError("no increments to estimate from")
    est = float(qv.sum() / tt.sum())
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(qv), size=(n_boot, len(qv)))
    boots = qv[idx].sum(axis=1) / tt[idx].sum(axis=1)
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
    if max_rel_width is not None and (hi - lo) > max_rel_width * max(est, 1e-300):
        raise ValueError("confidence interval wider than requested; refine the grid")
    return KappaEstimate(est, float(lo), float(hi), len(qv) if not isinstance(drives, DrivingFunction) else 1)


def chart_from_curve(base, points, refine=1):
    """Chart ``Z_t`` of the domain slit along ``points`` (curve from ``a``).

    ``base`` is the domain's base chart (a :class:`LoewnerChart` without
    steps); returns a new chart and the extracted driving function.
    """
    drive = unzip(points, chart=base, refine=refine)
    chart = LoewnerChart(base.base if isinstance(base, LoewnerChart) else base)
    for dxi, dt in zip(np.diff(drive.xi), np.diff(drive.t)):
        chart.push(dxi, dt)
    return chart, drive
