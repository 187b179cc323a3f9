"""Martingale observables: the (kappa, beta, sigma) family, bosonic
observables and their massive counterparts, and the discrete massive LERW
observable.

Exact bookkeeping uses :class:`fractions.Fraction` whenever the inputs are
rational (ints, Fractions or decimal strings).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .lattice import SlitDomain
from .loewner import chart_derivative, slit_map
from .potential import (
    OBSERVABLE,
    ScalarField,
    as_slit,
    exit_edges,
    massive_green,
    massive_harmonic_measure,
    solve_massive_dirichlet_edges,
)

POWER = "power-law"
BOSONIC = "bosonic"
DIRICHLET = "dirichlet"
RIEMANN_HILBERT = "riemann-hilbert"


def _exact(x):
    if isinstance(x, (Rational, str)):
        return Fraction(x)
    return x


def check_spec(kappa, beta):
    """``sigma = beta + beta (beta - 1) kappa / 4``, exact for rational input."""
    kappa, beta = _exact(kappa), _exact(beta)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return beta + beta * (beta - 1) * kappa / 4


@dataclass(frozen=True)
class ObservableSpec:
    """One member of the observable family.

    Power-law specs must satisfy the exponent relation of
    :func:`check_spec`; ``bvp`` records whether the observable solves a
    Dirichlet or a Riemann-Hilbert problem (the latter has no evaluator).
    """

    kappa: object
    beta: object = 0
    sigma: object = 0
    kind: str = POWER
    bvp: str = DIRICHLET
    massive: bool = False

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.kind not in (POWER, BOSONIC):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.bvp not in (DIRICHLET, RIEMANN_HILBERT):
            raise ValueError(f"unknown boundary problem {self.bvp!r}")
        if self.kind == POWER:
            want = check_spec(self.kappa, self.beta)
            exact = all(isinstance(_exact(v), Fraction) for v in (self.kappa, self.beta, self.sigma))
            ok = (_exact(self.sigma) == want) if exact else np.isclose(float(self.sigma), float(want))
            if not ok:
                raise ValueError(f"sigma must be {want} for kappa={self.kappa}, beta={self.beta}")

    @classmethod
    def power(cls, kappa, beta, bvp=DIRICHLET):
        return cls(kappa, beta, check_spec(kappa, beta), POWER, bvp)


#: The five (kappa, beta, sigma) instances: LERW, UST Peano curve, FK-Ising,
#: spin-Ising and percolation.  The two with spin 1/2 are fermionic.
KNOWN_INSTANCES = (
    ("lerw", Fraction(2), Fraction(-1), Fraction(0), DIRICHLET),
    ("ust-peano", Fraction(8), Fraction(1, 2), Fraction(0), DIRICHLET),
    ("fk-ising", Fraction(16, 3), Fraction(-1, 2), Fraction(1, 2), RIEMANN_HILBERT),
    ("spin-ising", Fraction(3), Fraction(-1), Fraction(1, 2), RIEMANN_HILBERT),
    ("percolation", Fraction(6), Fraction(1, 3), Fraction(0), DIRICHLET),
)


def spec_table():
    """Rows ``(name, kappa, beta, sigma_expected, sigma_computed, ok)``."""
    rows = []
    for name, k, b, s, bvp in KNOWN_INSTANCES:
        got = check_spec(k, b)
        rows.append((name, k, b, s, got, got == s))
    return rows


def _require_dirichlet(spec):
    if spec.bvp == RIEMANN_HILBERT:
        raise NotImplementedError("Riemann-Hilbert observables have no evaluator")


def complex_poisson_kernel(chart, z):
    """``P_t(z) = -1 / Z_t(z)``."""
    return -1.0 / chart(np.asarray(z, dtype=complex))


def _off_trace(w):
    if np.any(np.abs(w) == 0) or np.any(~np.isfinite(w)):
        raise ValueError("point lies on the trace or at a marked point")


def eval_power_observable(spec, chart, z):
    """``Z_t(z)^beta Z_t'(z)^sigma`` (principal branches, cut along the
    negative real axis of ``Z``)."""
    _require_dirichlet(spec)
    if spec.kind != POWER or spec.massive:
        raise ValueError("needs a massless power-law spec")
    z = np.asarray(z, dtype=complex)
    w = chart(z)
    _off_trace(w)
    dw = chart_derivative(chart, z)
    return w ** complex(float(spec.beta)) * dw ** complex(float(spec.sigma))


def arg_derivative(chart, z, max_step=np.pi / 2):
    """``arg Z_t'(z)`` tracked continuously along the evolution.

    The base chart contributes its principal argument; every slit step adds
    the argument of its own derivative factor, which starts at 0 for an
    infinitesimal step.  A factor with ``|arg| >= max_step`` means the
    tracking cannot be trusted and raises.
    """
    z = np.asarray(z, dtype=complex)
    w = chart.base(z)
    total = np.angle(chart.base.derivative(z))
    for x, y in zip(chart.xs, chart.ys):
        f = slit_map(w, x, y)
        step = np.angle((w - x) / f)
        if np.any(np.abs(step) >= max_step):
            raise ValueError("branch tracking lost: evolution step too large")
        total = total + step
        w = f
    return total


def eval_bosonic_observable(kappa, chart, z, shift=0.0):
    """``arg Z_t(z) + (1 - kappa/4) arg Z_t'(z) + shift``.

    At ``kappa = 4`` this is ``arg Z_t`` with boundary values 0 and pi on the
    two sides of the curve; ``shift = -pi/2`` centres them at -+pi/2.
    """
    z = np.asarray(z, dtype=complex)
    w = chart(z)
    _off_trace(w)
    out = np.angle(w)
    coef = 1.0 - float(kappa) / 4.0
    if coef != 0.0:
        out = out + coef * arg_derivative(chart, z)
    return out + shift


INSETS = 10.0 ** -np.arange(2, 13, 2)


def boundary_points(d, p, chart=None, insets=INSETS):
    """Points just inside the domain along each exit edge, so the chart sees
    the correct side of the curve.

    Each point sits a fraction ``inset`` of the edge away from the boundary
    vertex.  Without ``chart`` the smallest inset is used.  With ``chart``
    the insets are walked down per edge and the walk stops before the image
    jumps: a numerically computed chart places its cut slightly off the
    lattice edges, and a point closer than that offset lands on the wrong
    side of the curve.  Zipper vertices are square-root branch points, so
    values there are off by roughly ``sqrt(inset)``.
    """
    d = as_slit(d)
    u, v = exit_edges(d, p)
    z = d.base.z
    insets = np.asarray(insets, dtype=float)
    if chart is None:
        return z[v] + insets[-1] * (z[u] - z[v])
    pts = z[v][None, :] + insets[:, None] * (z[u] - z[v])[None, :]
    w = chart(pts.ravel()).reshape(pts.shape)
    step = np.abs(np.diff(w, axis=0))
    ok = np.ones(len(u), dtype=bool)
    pick = np.zeros(len(u), dtype=int)
    for k in range(1, len(insets)):
        bound = 2.0 * step[k - 2] if k >= 2 else np.full(len(u), np.inf)
        ok &= np.isfinite(w[k]) & (step[k - 1] <= bound + 1e-12)
        pick[ok] = k
    return pts[pick, np.arange(len(u))]


def eval_massive_bosonic(kappa, d, p, chart, shift=0.0):
    """Massive harmonic function with the bosonic boundary values of
    ``chart`` (the chart of the same slit domain ``d``)."""
    d = as_slit(d)
    data = eval_bosonic_observable(kappa, chart, boundary_points(d, p, chart), shift)
    return solve_massive_dirichlet_edges(d, p, data, tag=OBSERVABLE)


def _mmo_domain(d):
    """The domain with the tip put back (the walk lives on it)."""
    if len(d.removed) <= 1:
        return d, None
    return SlitDomain(d.base, d.removed[:-1]), d.tip


def eval_lerw_mmo(d, p, z=None, floor=1e-300):
    """Discrete massive LERW observable ``G(tip, z) / h(tip, b)``.

    ``d`` is the slit domain after ``t`` steps (``removed = [a, g_1, .., g_t]``);
    the walk runs on the domain with ``g_1 .. g_{t-1}`` removed.  At
    ``t = 0`` the tip ``a`` is on the boundary and the first-step form
    ``sum_y G(y, z) / sum_y h(y)`` over interior neighbours ``y`` of ``a``
    is used.
    """
    d = as_slit(d)
    walk_dom, tip = _mmo_domain(d)
    base = d.base
    hb = massive_harmonic_measure(walk_dom, p, [base.b_vertex]).values
    if tip is None:
        a = base.a_vertex
        ys = [int(y) for y in base.nbrs[a] if y >= 0 and walk_dom.retained[y]]
        num = sum(massive_green(walk_dom, p, y).values for y in ys)
        den = float(sum(hb[y] for y in ys))
    else:
        num = massive_green(walk_dom, p, tip).values
        den = float(hb[tip])
    if not den > floor:
        raise FloatingPointError("harmonic measure of b underflows at the tip")
    vals = np.where(walk_dom.retained, num / den, 0.0)
    field = ScalarField(walk_dom, vals, OBSERVABLE)
    if z is None:
        return field
    if not np.all(walk_dom.retained[np.atleast_1d(z)]):
        raise ValueError("z must be the tip or a retained vertex")
    return vals[z]


def dual_kappa(kappa):
    """``1/kappa + 1/kappa_dual = 1/2`` for ``kappa`` in ``[8/3, 4]``."""
    k = _exact(kappa)
    if not Fraction(8, 3) <= k <= 4:
        raise ValueError("kappa must lie in [8/3, 4]")
    return 1 / (Fraction(1, 2) - 1 / k) if isinstance(k, Fraction) else 1.0 / (0.5 - 1.0 / k)


__all__ = [
    "ObservableSpec", "check_spec", "spec_table", "KNOWN_INSTANCES",
    "complex_poisson_kernel", "eval_power_observable", "eval_bosonic_observable",
    "eval_massive_bosonic", "eval_lerw_mmo", "dual_kappa", "arg_derivative",
    "boundary_points",
]
