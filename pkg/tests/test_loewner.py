import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massive_sle import loewner as L
from massive_sle import samplers as S
from massive_sle.lattice import DomainError, unit_square
from massive_sle.potential import MassParams, massive_harmonic_measure


def test_slit_map_sends_tip_to_zero_and_inverts():
    x, y = 0.3, 0.7
    assert abs(L.slit_map(np.array([x + 1j * y]), x, y)[0]) < 1e-15
    z = np.array([1 + 1j, -2 + 0.1j, 0.3 + 2j, 5j])
    np.testing.assert_allclose(L.slit_map_inverse(L.slit_map(z, x, y), x, y), z, atol=1e-13)
    h = 1e-6
    num = (L.slit_map(z + h, x, y) - L.slit_map(z - h, x, y)) / (2 * h)
    np.testing.assert_allclose(L.slit_map_derivative(z, x, y), num, rtol=1e-8)


def test_slit_map_keeps_half_plane():
    rng = np.random.default_rng(0)
    z = rng.normal(size=500) + 1j * rng.exponential(size=500)
    w = L.slit_map(z, 0.2, 0.9)
    assert np.all(w.imag >= 0)


def test_zero_drive_traces_vertical_segment():
    t = np.linspace(0, 1, 101)
    tr = L.forward_trace(L.DrivingFunction(t, np.zeros_like(t)))
    np.testing.assert_allclose(tr, 2j * np.sqrt(t), atol=1e-12)


def test_constant_drive_shifts_segment():
    t = np.linspace(0, 1, 51)
    xi = np.full_like(t, 0.4)
    xi[0] = 0.0
    tr = L.forward_trace(L.DrivingFunction(t, xi))
    np.testing.assert_allclose(tr[1:], 0.4 + 2j * np.sqrt(t[1:]), atol=1e-12)


def test_round_trip_brownian():
    drive = L.DrivingFunction.brownian(2.0, 1.0, 1e-4, seed=5)
    back = L.unzip(L.forward_trace(drive))
    assert np.max(np.abs(back.xi - drive.xi)) < 1e-3
    np.testing.assert_allclose(back.t, drive.t, atol=1e-9)


def test_forward_trace_rejects_large_steps():
    drive = L.DrivingFunction.brownian(2.0, 1.0, 1e-2, seed=1)
    with pytest.raises(ValueError):
        L.forward_trace(drive, dt_max=1e-3)


def test_unzip_vertical_segment():
    s = 0.8
    pts = 1j * np.linspace(0, s, 41)
    drive = L.unzip(pts)
    assert np.max(np.abs(drive.xi)) < 1e-12
    assert abs(drive.T - s * s / 4) < 1e-12


def test_unzip_circular_arc_round_trip():
    theta = np.linspace(0, np.pi / 2, 2001)
    arc = 1 - np.exp(-1j * theta)
    drive = L.unzip(arc)
    tips = L.forward_trace(drive)
    dense = 1 - np.exp(-1j * np.linspace(0, np.pi / 2, 20001))
    d1 = np.min(np.abs(tips[:, None] - dense[None, ::10]), axis=1).max()
    d2 = np.min(np.abs(dense[::10, None] - tips[None, :]), axis=1).max()
    assert max(d1, d2) < 1e-3


def test_unzip_rejects_bad_curves():
    with pytest.raises(ValueError):
        L.unzip(np.array([0.1 + 0j, 0.1 + 1j]))
    with pytest.raises(ValueError):
        L.unzip(np.array([0j, 0.5j, 0.5 - 0.2j]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(0, 10_000))
def test_scaling_equivariance(r, seed):
    rng = np.random.default_rng(seed)
    steps = rng.normal(scale=0.05, size=60) + 1j * np.abs(rng.normal(scale=0.05, size=60)) + 0.02j
    curve = np.concatenate([[0j], np.cumsum(steps)])
    a = L.unzip(curve)
    b = L.unzip(r * curve)
    np.testing.assert_allclose(b.xi, r * a.xi, atol=1e-6 * r)
    np.testing.assert_allclose(b.t, r * r * a.t, rtol=1e-6, atol=1e-12)


def test_capacity_additivity_and_hydrodynamic_expansion():
    chart = L.LoewnerChart()
    rng = np.random.default_rng(2)
    for _ in range(200):
        chart.push(rng.normal(scale=0.01), 1e-3)
    assert abs(chart.t - 0.2) < 1e-12
    z = np.array([2e3j, 3e3 + 3e3j])
    w = chart(z)
    est = (w - (z - chart.xi)) * z / 2
    np.testing.assert_allclose(est.real, chart.t, rtol=1e-4)
    # the square-root branch point turns rounding in the tip into ~sqrt(1e-16)
    assert abs(chart(np.array([chart.tip()]))[0]) < 1e-6


def test_chart_derivative_closed_forms():
    chart = L.LoewnerChart()
    z = np.array([1j, 2 + 3j])
    np.testing.assert_allclose(L.chart_derivative(chart, z), 1.0)
    chart.push(0.0, 1.0)
    z = np.array([3j])
    np.testing.assert_allclose(L.chart_derivative(chart, z), 3 / np.sqrt(5), rtol=1e-12)
    with pytest.raises(ValueError):
        L.chart_derivative(chart, np.array([2j]))


def test_chart_derivative_matches_integrated_flow():
    drive = L.DrivingFunction.brownian(3.0, 0.1, 1e-4, seed=9)
    z0 = np.array([0.4 + 0.9j, -0.7 + 0.5j, 1.5j])
    chart = L.LoewnerChart()
    dt, dxi = drive.increments()
    for a, b in zip(dxi, dt):
        chart.push(a, b)
    chain = L.chart_derivative(chart, z0)

    def rhs(state):
        Z, D = state
        return np.array([2 / Z, -2 * D / Z ** 2])

    state = np.array([z0, np.ones_like(z0)])
    sub = 20
    for a, b in zip(dxi, dt):
        state[0] = state[0] - a
        h = b / sub
        for _ in range(sub):
            k1 = rhs(state)
            k2 = rhs(state + h / 2 * k1)
            k3 = rhs(state + h / 2 * k2)
            k4 = rhs(state + h * k3)
            state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    np.testing.assert_allclose(state[0], chart(z0), rtol=1e-6)
    np.testing.assert_allclose(state[1], chain, rtol=1e-4)


def test_identity_base_chart():
    chart = L.LoewnerChart()
    z = np.array([0.3 + 0.2j, -1 + 4j])
    np.testing.assert_allclose(chart(z), z)


def half_disk_polygon(n=400):
    diam = np.linspace(-1, 1, 2 * (n // 4) + 1)
    arc = np.exp(1j * np.linspace(0, np.pi, n + 1))[1:-1]
    return np.concatenate([diam, arc]).astype(complex)


def test_half_disk_boundary_lands_on_real_line():
    poly = half_disk_polygon()
    chart = L.zipper_chart(poly, 0.0, 1.0, test_point=0.3j)
    pts, img = chart.boundary_table()
    far = np.abs(pts - 1.0) > 1e-9
    assert np.max(np.abs(img[far].imag) / np.maximum(np.abs(img[far]), 1.0)) < 1e-6
    assert abs(chart(np.array([0j]))[0]) < 1e-9
    inside = 0.8 * np.exp(1j * np.linspace(0.1, 3.0, 30)) * np.linspace(0.1, 1, 30)
    assert np.all(chart(inside).imag > 0)
    np.testing.assert_allclose(chart.inverse(chart(inside)), inside, atol=1e-10)


@pytest.mark.parametrize("eps", [1 / 32, 1 / 64])
def test_conformal_invariance_of_harmonic_measure(eps):
    d = unit_square(eps)
    chart = L.base_chart(d)
    bz = d.z[d.boundary]
    arc = np.flatnonzero((np.abs(bz.real - 1) < 1e-9) & (bz.imag > 0.25 - 1e-9)
                         & (bz.imag < 0.75 + 1e-9))
    hm = massive_harmonic_measure(d.as_slit(), MassParams(0.0, eps), d.boundary[arc]).values
    # the arc's vertices own half a lattice step beyond each end
    x1, x2 = np.sort(chart(np.array([1 + (0.25 - eps / 2) * 1j, 1 + (0.75 + eps / 2) * 1j])).real)
    for zt in (0.5 + 0.5j, 0.3 + 0.4j, 0.7 + 0.6j):
        v = d.nearest_vertex(zt)
        w = chart(np.array([d.z[v]]))[0]
        pushed = (np.angle(w - x2) - np.angle(w - x1)) / np.pi
        assert abs(hm[v] - pushed) < 1e-3


def test_base_chart_normalization():
    d = unit_square(1 / 32)
    chart = L.base_chart(d)
    assert abs(chart(np.array([d.z[d.a_vertex]]))[0]) < 1e-9
    zi = d.z[d.interior_indices]
    assert np.all(chart(zi).imag > 0)
    np.testing.assert_allclose(chart.inverse(chart(zi)), zi, atol=1e-10)
    r = 1e-5
    near_b = d.z[d.b_vertex] - 1j * r
    assert abs(abs(chart(np.array([near_b]))[0]) * r - 1) < 1e-3


def test_base_chart_rejects_coarse_boundary():
    with pytest.raises(DomainError):
        L.base_chart(unit_square(1 / 8), tol=1e-3)


def test_unzip_lattice_lerw_curve():
    d = unit_square(1 / 32)
    p = MassParams(2.0, 1 / 32)
    chart = L.base_chart(d)
    curve = S.sample_massive_lerw(d, p, 4)
    drive = L.unzip(curve.points, chart=chart, refine=2, curve=curve)
    assert np.all(np.diff(drive.t) > 0)
    dt, dxi = drive.increments()
    assert np.all(np.abs(dxi) < 5 * np.sqrt(8 * dt) + 1e-12)
    times = curve.times[:-1]
    assert np.all(np.diff(times) > 0)


def test_driving_function_validation():
    with pytest.raises(ValueError):
        L.DrivingFunction(np.array([0.0, 0.0]), np.zeros(2))
    with pytest.raises(ValueError):
        L.DrivingFunction(np.array([0.1, 0.2]), np.zeros(2))
    with pytest.raises(ValueError):
        L.DrivingFunction(np.array([0.0, 0.2]), np.array([0.1, 0.0]))


def test_estimate_kappa_brownian():
    drives = [L.DrivingFunction.brownian(2.0, 1.0, 1e-4, seed=s) for s in range(500)]
    est = L.estimate_kappa(drives)
    assert 1.9 <= est.kappa <= 2.1
    assert est.lo < est.kappa < est.hi


def test_estimate_kappa_smooth_path_vanishes():
    vals = []
    for n in (10, 100, 1000):
        t = np.linspace(0, 1, n + 1)
        vals.append(L.estimate_kappa(L.DrivingFunction(t, t)).kappa)
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-2


def test_estimate_kappa_ignores_drift():
    plain = [L.DrivingFunction.brownian(2.0, 1.0, 1e-4, seed=s) for s in range(200)]
    drifted = [L.DrivingFunction.brownian(2.0, 1.0, 1e-4, seed=s, drift=5.0) for s in range(200)]
    a, b = L.estimate_kappa(plain), L.estimate_kappa(drifted)
    assert abs(b.kappa - a.kappa) < (a.hi - a.lo) / 2
    assert b.lo <= 2.0 <= b.hi


def test_estimate_kappa_width_check():
    drive = L.DrivingFunction.brownian(2.0, 1.0, 0.1, seed=0)
    with pytest.raises(ValueError):
        L.estimate_kappa(drive, max_rel_width=0.05)
