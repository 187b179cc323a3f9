import numpy as np
import pytest

from massive_sle.lattice import unit_square


def chain_oracle(k, delta):
    """Absorbing killed-walk chain on a k x k interior grid built from
    coordinates alone.  Returns (points, Q, N) with N = (I - Q)^-1."""
    pts = [(i, j) for j in range(1, k + 1) for i in range(1, k + 1)]
    index = {p: n for n, p in enumerate(pts)}
    Q = np.zeros((len(pts), len(pts)))
    for (i, j), n in index.items():
        for q in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]:
            if q in index:
                Q[n, index[q]] = (1 - delta) / 4
    N = np.linalg.inv(np.eye(len(pts)) - Q)
    return pts, Q, N


def exit_matrix(k, delta, pts):
    """R[n, u]: one-step probability from interior state n onto boundary point u."""
    bnd = sorted({q for (i, j) in pts for q in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]}
                 - set(pts))
    bidx = {q: n for n, q in enumerate(bnd)}
    R = np.zeros((len(pts), len(bnd)))
    for n, (i, j) in enumerate(pts):
        for q in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]:
            if q in bidx:
                R[n, bidx[q]] += (1 - delta) / 4
    return bnd, R


@pytest.fixture
def small_square():
    def make(k, **kw):
        return unit_square(1.0 / (k + 1), **kw)
    return make


def vertex(d, i, j):
    return d.vertex_at(i, j)


ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, msg in sorted(ACCEPTANCE_LOG, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {msg}")
