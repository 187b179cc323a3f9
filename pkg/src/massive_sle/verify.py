"""Statistical verification harness: martingale tests, drift recovery,
Novikov audits, absolute-continuity and Hadamard checks.

Every test draws its randomness from :func:`samplers.task_seeds`, so a
report is reproduced bit for bit from its seed manifest.  Tolerances are
fixed before sampling (``k`` standard errors, 3 by default).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .lattice import HEXAGONAL
from .loewner import DrivingFunction, base_chart, chart_from_curve, estimate_kappa, unzip
from .msle import HADAMARD, MsleState, drift_lerw, girsanov_weight, vertex_area
from .potential import MassParams, SchurGreen, as_slit, massive_green, system
from .samplers import ConditionedWalk, HarmonicExplorer, sample_massive_lerw, task_seeds


@dataclass
class EnsembleReport:
    """Outcome of one statistical test."""

    name: str
    n: int
    estimate: float
    se: float
    passed: bool
    tolerance: str
    seeds: dict
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return _plain(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}  {self.name:<32} n={self.n:<7} estimate={self.estimate:+.4g}  "
                f"se={self.se:.3g}  [{self.tolerance}]")


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(np.mean(x)) if len(x) else 0.0, float("inf")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


# ----------------------------------------------------- martingale tests ----

class LerwHistory:
    """Massive LERW curves with their step-``t`` prefixes."""

    name = "lerw"

    def __init__(self, d, p):
        self.d, self.p = d, p
        self.walk = ConditionedWalk(d, p)

    def __call__(self, seed):
        return sample_massive_lerw(self.d, self.p, seed, walk=self.walk)

    @staticmethod
    def alive(path, t):
        """Steps ``t`` and ``t + 1`` both end strictly before ``b``."""
        return len(path.vertices) > t + 2

    @staticmethod
    def excluded(path, t, z):
        return z in path.vertices[: t + 1]


class LerwObservable:
    """``M_t(z) = G(tip, z) / h(tip, b)`` via Schur-complement updates of the
    Green's matrix of the unslit domain (mass from ``p``)."""

    def __init__(self, d, p):
        self.d, self.p = d, p
        self.green = SchurGreen(d, p)
        base = as_slit(d).base
        keep = 1.0 - p.delta
        pos = self.green.pos
        self._b = [pos[y] for y in base.nbrs[base.b_vertex] if y >= 0 and pos[y] >= 0]
        self._a = [int(y) for y in base.nbrs[base.a_vertex] if y >= 0 and pos[y] >= 0]
        self._w = keep / base.degree

    def __call__(self, path, t, zs):
        pos = self.green.pos[np.asarray(zs, dtype=int)]
        if t == 0:
            rows = [self.green.row(y, []) for y in self._a]
            num = sum(r[pos] for r in rows)
            den = sum(r[self._b].sum() for r in rows) * self._w
            return num / den
        verts = path.vertices
        row = self.green.row(verts[t], verts[1:t])
        return row[pos] / (row[self._b].sum() * self._w)


class ExplorerHistory:
    """Massive harmonic explorer runs truncated after ``max_colorings``."""

    name = "explorer"

    def __init__(self, d, p, max_colorings):
        self.explorer = HarmonicExplorer(d, p)
        self.max_colorings = max_colorings

    def __call__(self, seed):
        return self.explorer.run(seed, self.max_colorings)

    @staticmethod
    def alive(path, t):
        return len(path[1]) >= t + 1

    @staticmethod
    def excluded(path, t, z):
        return False


class ExplorerObservable:
    """``(pi/2)(u_black - u_white)`` with the colouring after ``t`` steps,
    extended with mass from ``p``."""

    def __init__(self, d, p):
        self.explorer = HarmonicExplorer(d, p)

    def __call__(self, path, t, zs):
        curve, colors = path
        at = self.explorer.green.pos[np.asarray(zs, dtype=int)]
        return self.explorer.observable(curve.vertices[:t], colors[:t], at=at)


def martingale_test(sampler, observable, points, steps, N, seed, k=3.0, min_alive=30,
                    name=None):
    """Mean one-step increment of ``M_t(z)`` over paths alive at ``t``.

    PASS iff ``|mean| < k SE`` for every test point and stopping step.
    """
    seeds = task_seeds(seed, N)
    points = [int(z) for z in points]
    steps = [int(t) for t in steps]
    incs = {(z, t): [] for z in points for t in steps}
    for s in seeds:
        path = sampler(s)
        for t in steps:
            if not sampler.alive(path, t):
                continue
            use = [z for z in points if not sampler.excluded(path, t, z)]
            if not use:
                continue
            m0 = observable(path, t, use)
            m1 = observable(path, t + 1, use)
            for z, a, b in zip(use, m0, m1):
                incs[(z, t)].append(b - a)
    table = []
    passed = True
    worst = 0.0
    worst_se = 0.0
    for (z, t), xs in incs.items():
        if len(xs) < min_alive:
            raise ValueError(f"only {len(xs)} paths alive at step {t}")
        mean, se = _mean_se(xs)
        score = abs(mean) / se if se > 0 else (0.0 if mean == 0 else np.inf)
        ok = bool(score < k)
        passed &= ok
        if score >= worst:
            worst, worst_se = score, se
        table.append({"z": z, "t": t, "n": len(xs), "mean": mean, "se": se, "score": score,
                      "pass": ok})
    return EnsembleReport(
        name or f"martingale-{getattr(sampler, 'name', 'custom')}", N, worst, 1.0, passed,
        f"|mean| < {k} SE at every (z, t)", {"master": seed, "N": N}, {"cells": table})


def lerw_power(d, p, p_obs, points, steps, n_paths, N, seed, k=3.0):
    """Expected ``|mean| / SE`` of :func:`martingale_test` with ``N`` curves.

    The next LERW step is drawn proportionally to the massive harmonic
    measure of ``b`` seen from each free neighbour of the tip, so the
    conditional mean and variance of ``M_{t+1}(z) - M_t(z)`` are exact for
    every sampled prefix.  A control whose expected score stays below ``k``
    cannot be expected to FAIL; the report PASSes when some cell exceeds it.
    """
    hist = LerwHistory(d, p)
    obs = LerwObservable(d, p_obs)
    gm = SchurGreen(d, p)
    base = as_slit(d).base
    bpos = [gm.pos[y] for y in base.nbrs[base.b_vertex] if y >= 0 and gm.pos[y] >= 0]
    acc = {}
    for s in task_seeds(seed, n_paths):
        c = hist(s)
        for t in steps:
            if not hist.alive(c, t):
                continue
            prefix = c.vertices[: t + 1]
            use = [z for z in points if z not in prefix]
            tip, S = prefix[-1], list(prefix[1:])
            ys = [int(y) for y in base.nbrs[tip]
                  if y >= 0 and gm.pos[y] >= 0 and int(y) not in prefix]
            hm = np.array([gm.row(y, S)[bpos].sum() for y in ys])
            pr = hm / hm.sum()
            m0 = obs(c, t, use)
            nxt = np.array([obs(_Extended(prefix, y), t + 1, use) for y in ys])
            inc = nxt - m0
            mean = pr @ inc
            var = pr @ inc ** 2 - mean ** 2
            for z, a, v in zip(use, mean, var):
                acc.setdefault((z, t), []).append((a, v))
    cells = []
    for (z, t), rows in acc.items():
        a = np.array(rows)
        sd = np.sqrt(a[:, 1].mean() + a[:, 0].var())
        cells.append({"z": z, "t": t, "expected_score": float(abs(a[:, 0].mean()) / sd * np.sqrt(N))})
    best = max(c["expected_score"] for c in cells)
    return EnsembleReport("power-lerw", n_paths, best, 0.0, bool(best > k),
                          f"some cell expects > {k} SE at N={N}", {"master": seed, "N": n_paths},
                          {"cells": cells})


class _Extended:
    """A LERW prefix extended by one candidate step (for :func:`lerw_power`)."""

    def __init__(self, prefix, y):
        self.vertices = list(prefix) + [y]


def default_test_points(d, count=5):
    """Interior vertices near fixed relative positions of the bounding box."""
    z = d.z
    lo = complex(z.real.min(), z.imag.min())
    hi = complex(z.real.max(), z.imag.max())
    rel = [0.5 + 0.5j, 0.3 + 0.5j, 0.7 + 0.5j, 0.5 + 0.3j, 0.5 + 0.7j, 0.3 + 0.3j, 0.7 + 0.7j]
    pts = []
    for r in rel[:count]:
        target = lo + complex(r.real * (hi - lo).real, r.imag * (hi - lo).imag)
        pts.append(d.nearest_vertex(target, d.interior_indices))
    return pts


# ------------------------------------------------------- drift recovery ----

def _bin_values(drive, ts):
    return np.interp(ts, drive.t, drive.xi)


def compare_increments(dxi, pred, dts, k=3.0, name="drift-recovery", seeds=None,
                       extra=None):
    """Per-bin comparison of observed and predicted driving increments.

    ``dxi`` and ``pred`` have one row per path and one column per bin.  A bin
    passes when the mean residual is below ``k`` standard errors.  The pooled
    observed and predicted totals must also share their sign (vacuous for an
    identically zero prediction); ``prediction_z`` records how many standard
    errors of the observed total the prediction spans, i.e. the power of the
    sign check.
    """
    dxi, pred = np.asarray(dxi, dtype=float), np.asarray(pred, dtype=float)
    resid = dxi - pred
    bins = []
    passed = True
    for j, dt in enumerate(dts):
        rm, rs = _mean_se(resid[:, j])
        om, os_ = _mean_se(dxi[:, j])
        pm, _ = _mean_se(pred[:, j])
        ok = bool(abs(rm) < k * rs)
        passed &= ok
        bins.append({"dt": dt, "lambda_hat": om / dt, "lambda_hat_se": os_ / dt,
                     "lambda_pred": pm / dt, "resid": rm, "resid_se": rs, "pass": ok})
    tot_o, tot_os = _mean_se(dxi.sum(axis=1))
    tot_p, tot_ps = _mean_se(pred.sum(axis=1))
    checked = tot_p != 0.0
    sign_ok = bool(np.sign(tot_o) == np.sign(tot_p)) if checked else None
    if sign_ok is False:
        passed = False
    tr, trs = _mean_se(resid.sum(axis=1))
    details = {"bins": bins, "total_observed": tot_o, "total_observed_se": tot_os,
               "total_predicted": tot_p, "total_predicted_se": tot_ps,
               "sign_checked": bool(checked), "sign_agrees": sign_ok,
               "prediction_z": tot_p / tot_os if tot_os > 0 else np.inf}
    if extra:
        details.update(extra)
    return EnsembleReport(name, len(dxi), tr, trs, bool(passed),
                          f"|mean residual| < {k} SE per bin; sign of pooled drift",
                          seeds or {}, details)


def coarse_drive(drive, h, T):
    """``drive`` sampled on the capacity grid ``0, h, .., T`` (linear
    interpolation).  Lattice curves carry no quadratic variation below the
    lattice scale, so ``kappa`` is estimated on a grid well above it."""
    g = np.arange(0.0, T + 0.5 * h, h)
    return DrivingFunction(g, np.interp(g, drive.t, drive.xi))


def lerw_drift_recovery(d, p, N, seed, bins, k=3.0, refine=2, fd_cells=3,
                        kappa_grid=0.01, kappa_T=0.1):
    """Drift recovery for massive LERW: unzip ``N`` curves, bin the driving
    increments by capacity and compare with :func:`msle.drift_lerw` on each
    curve's own geometry at the bin edges (trapezoidal prediction).

    ``kappa_hat`` pools the quadratic variation on ``[0, kappa_T]`` sampled
    every ``kappa_grid`` (see :func:`coarse_drive`).
    """
    bins = np.asarray(bins, dtype=float)
    if bins[0] != 0 or np.any(np.diff(bins) <= 0):
        raise ValueError("bins must start at 0 and increase")
    horizon = max(bins[-1], kappa_T)
    base = base_chart(d)
    walk = ConditionedWalk(d, p)
    dts = np.diff(bins)
    dxi, pred, drives = [], [], []
    failures = 0
    for s in task_seeds(seed, N):
        c = sample_massive_lerw(d, p, s, walk=walk)
        drive = None
        n = min(len(c.points), 40)
        while True:
            try:
                drive = unzip(c.points[:n], chart=base, refine=refine, curve=c)
            except ValueError:
                drive = None
                break
            if drive.T > horizon or n >= len(c.points) - 1:
                break
            n = min(2 * n, len(c.points) - 1)
        if drive is None or drive.T <= horizon:
            failures += 1
            continue
        times = c.times
        lam = []
        for t in bins:
            j = int(np.searchsorted(times[:n], t, side="right")) - 1
            st = MsleState.from_curve(d, p, base, c.vertices[: j + 1], c.points[: j + 1], refine)
            lam.append(drift_lerw(st, p, fd_cells))
        lam = np.array(lam)
        dxi.append(np.diff(_bin_values(drive, bins)))
        pred.append(0.5 * (lam[:-1] + lam[1:]) * dts)
        drives.append(coarse_drive(drive, kappa_grid, kappa_T))
    if failures > 0.05 * N:
        raise RuntimeError(f"unzip failed on {failures} of {N} curves")
    kap = estimate_kappa(drives)
    extra = {"kappa_hat": kap.kappa, "kappa_ci": [kap.lo, kap.hi], "unzip_failures": failures,
             "bin_edges": bins.tolist(), "kappa_grid": kappa_grid, "kappa_T": kappa_T}
    return compare_increments(np.array(dxi), np.array(pred), dts, k,
                              f"drift-recovery-lerw-m{p.m:g}",
                              {"master": seed, "N": N}, extra)


@dataclass(frozen=True)
class ConstantDrift:
    """Drift stub returning a fixed ``lambda`` (closed-loop tests)."""

    kappa: float
    value: float

    def __call__(self, state):
        return self.value


def synthetic_drift_recovery(d, kappa, value, N, seed, T, dt, bins, k=3.0):
    """Closed loop: evolve with a known constant drift, unzip the physical
    traces and recover the drift from the binned increments."""
    from .msle import evolve

    p = MassParams(0.0, as_slit(d).base.eps)
    chart = base_chart(as_slit(d).base)
    bins = np.asarray(bins, dtype=float)
    dts = np.diff(bins)
    dxi = []
    for s in task_seeds(seed, N):
        run = evolve(d, p, ConstantDrift(kappa, value), T, dt, seed=s, chart=chart,
                     max_lag=np.inf)
        back = unzip(run.trace, chart=chart)
        dxi.append(np.diff(_bin_values(back, bins)))
    pred = np.tile(value * dts, (len(dxi), 1))
    return compare_increments(np.array(dxi), pred, dts, k, "drift-recovery-synthetic",
                              {"master": seed, "N": N})


# -------------------------------------------------------------- Novikov ----

def double_green_integral(d):
    """``integral integral G_0(z, w)`` over the domain for the continuum
    Green's function of ``-Delta`` (``(1/2pi) log`` normalization), by exact
    lattice quadrature: ``G_0 = G_lattice / (4 a)`` with ``a`` the area per
    vertex in units of ``eps^2``."""
    d = as_slit(d)
    eps = d.base.eps
    a = vertex_area(d.base.kind)
    s = system(d, MassParams(0.0, eps))
    ones = np.ones(len(s.idx))
    total = float(ones @ s.solve(ones))
    return a * eps ** 4 * total / 4.0


def novikov_bound(d, p, sup_m=np.pi / 2):
    """``(2/pi) mu^4 sup|M|^2 integral integral G_0``: pathwise bound on
    ``integral lambda^2 dt`` for the bosonic drift."""
    return HADAMARD * p.mu2 ** 2 * sup_m ** 2 * double_green_integral(d)


def stated_novikov_bound(d, p):
    """``m^4 pi^2 integral integral G_0``: the smaller of the two Novikov
    bounds, asserted by the acceptance check."""
    return p.m ** 4 * np.pi ** 2 * double_green_integral(d)


def novikov_audit(lam2, bound, name="novikov", seeds=None, tol=0.0):
    """PASS iff every accumulator ``integral lambda^2 dt`` is below the bound."""
    lam2 = np.asarray(lam2, dtype=float)
    if lam2.size == 0 or np.any(~np.isfinite(lam2)):
        raise ValueError("missing integral(lambda^2) accumulators")
    worst = float(lam2.max())
    return EnsembleReport(name, len(lam2), worst, 0.0, bool(worst <= bound + tol),
                          "max integral(lambda^2 dt) <= bound", seeds or {},
                          {"bound": bound, "ratio": worst / bound if bound > 0 else np.inf,
                           "mean": float(lam2.mean())})


# ------------------------------------------------ absolute continuity ----

def abs_continuity_check(critical, massive, f, kappa, k=3.0, min_ess=0.05,
                         name="abs-continuity", seeds=None):
    """``E_msle[f]`` against ``E_sle[w f]`` with Girsanov weights ``w``.

    ``critical`` is a list of runs whose drift was recorded but not applied
    (``lam`` along the driftless path); ``massive`` are the drifted runs.
    """
    w = np.array([girsanov_weight(r.drive, kappa, lam=r.lam) for r in critical])
    ess = w.sum() ** 2 / np.sum(w * w) / len(w)
    if ess < min_ess:
        raise ValueError(f"Girsanov weights too uneven (relative ESS {ess:.3f})")
    fc = np.array([f(r) for r in critical], dtype=float)
    fm = np.array([f(r) for r in massive], dtype=float)
    m1, s1 = _mean_se(fm)
    m2, s2 = _mean_se(w * fc)
    se = float(np.hypot(s1, s2))
    diff = m1 - m2
    return EnsembleReport(name, len(critical) + len(massive), diff, se, bool(abs(diff) < k * se),
                          f"|E_msle f - E_sle w f| < {k} combined SE", seeds or {},
                          {"massive_mean": m1, "weighted_mean": m2, "weight_mean": float(w.mean()),
                           "relative_ess": float(ess)})


def weight_mean_check(weights, k=3.0, name="girsanov-mean", seeds=None):
    m, se = _mean_se(weights)
    return EnsembleReport(name, len(weights), m, se, bool(abs(m - 1) < k * se),
                          f"|mean weight - 1| < {k} SE", seeds or {})


# -------------------------------------------------------------- Hadamard ----

def hadamard_check(d, pairs, lengths, refine=2, rtol=0.1):
    """Finite-difference ``dG_t(z, w)/dt`` along a vertical lattice slit from
    ``a`` against ``-(2/pi) P_t(z) P_t(w)``.

    ``lengths = (k0, k1, k2)`` are slit lengths in cells; the derivative is
    the central difference between ``k0`` and ``k2`` and the kernels are taken
    at ``k1``.  Lattice Green's functions are converted to the continuum
    normalization ``G = G_lattice / (4 a)``.
    """
    d0 = as_slit(d)
    base = d0.base
    if base.kind == HEXAGONAL:
        raise ValueError("the slit check uses the square lattice")
    eps = base.eps
    p = MassParams(0.0, eps)
    chart0 = base_chart(base)
    i0, j0 = base.ij[base.a_vertex]
    k0, k1, k2 = lengths

    def slit(k):
        s = d0.copy()
        verts = [base.a_vertex]
        for j in range(1, k + 1):
            v = base.vertex_at(i0, j0 + j)
            s.extend(v)
            verts.append(v)
        return s, base.z[verts]

    conv = 1.0 / (4 * vertex_area(base.kind))
    rows = []
    ok = True
    (s0, pts0), (s1, pts1), (s2, pts2) = slit(k0), slit(k1), slit(k2)
    t0 = unzip(pts0, chart=chart0, refine=refine).T
    t2 = unzip(pts2, chart=chart0, refine=refine).T
    chart1, _ = chart_from_curve(chart0, pts1, refine=refine)
    for z, w in pairs:
        vz, vw = base.nearest_vertex(z), base.nearest_vertex(w)
        g0 = massive_green(s0, p, vz).values[vw] * conv
        g2 = massive_green(s2, p, vz).values[vw] * conv
        fd = (g2 - g0) / (t2 - t0)
        P = (-1.0 / chart1(base.z[[vz, vw]])).imag
        want = -HADAMARD * P[0] * P[1]
        err = abs(fd - want) / abs(want)
        ok &= bool(err < rtol)
        rows.append({"z": complex(base.z[vz]), "w": complex(base.z[vw]), "fd": fd,
                     "formula": want, "rel_err": err})
    worst = max(r["rel_err"] for r in rows)
    return EnsembleReport("hadamard", len(rows), worst, 0.0, bool(ok),
                          f"relative error < {rtol}", {}, {"pairs": rows, "t": [t0, t2]})


__all__ = [
    "EnsembleReport", "martingale_test", "LerwHistory", "LerwObservable", "ExplorerHistory",
    "ExplorerObservable", "default_test_points", "compare_increments", "lerw_drift_recovery",
    "synthetic_drift_recovery", "ConstantDrift", "double_green_integral", "novikov_bound",
    "stated_novikov_bound",
    "novikov_audit", "abs_continuity_check", "weight_mean_check", "hadamard_check",
]
