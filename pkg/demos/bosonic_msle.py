"""Grow kappa = 4 massive SLE with the bosonic drift for several masses and
compare the drift budget integral(lambda^2 dt) with the Novikov bound.

    python demos/bosonic_msle.py [n_runs]
"""

import sys

import numpy as np

from massive_sle import loewner as L
from massive_sle import msle as E
from massive_sle import samplers as S
from massive_sle import verify as V
from massive_sle.lattice import unit_square
from massive_sle.potential import MassParams


def main(n=20, eps=1 / 32, T=0.1, dt=0.0125, seed=2):
    d = unit_square(eps)
    chart = L.base_chart(d)
    for m in (0.0, 1.0, 2.0, 4.0):
        p = MassParams(m, eps)
        drift = E.DriftFunctional(E.BOSONIC, 4.0, m)
        runs = [E.evolve(d, p, drift, T, dt, seed=s, chart=chart) for s in S.task_seeds(seed, n)]
        lam2 = np.array([r.lam2 for r in runs])
        xi_T = np.array([r.drive.xi[-1] for r in runs])
        bound = V.stated_novikov_bound(d, p)
        print(f"m={m:<4g} E[xi_T] {xi_T.mean():+.4f}  max lam^2 integral {lam2.max():.3e}  "
              f"bound {bound:.3e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
