"""Sample massless and massive LERW on the unit square, unzip the curves and
estimate kappa from the driving functions.

    python demos/lerw_kappa.py [n_curves]
"""

import sys

import numpy as np

from massive_sle import loewner as L
from massive_sle import samplers as S
from massive_sle.lattice import unit_square
from massive_sle.potential import MassParams
from massive_sle.verify import coarse_drive


def main(n=100, eps=1 / 32, seed=1):
    d = unit_square(eps)
    chart = L.base_chart(d)
    for m in (0.0, 2.0, 4.0):
        p = MassParams(m, eps)
        walk = S.ConditionedWalk(d, p)
        curves = [S.sample_massive_lerw(d, p, s, walk=walk) for s in S.task_seeds(seed, n)]
        drives = [L.unzip(c.points, chart=chart, refine=2) for c in curves]
        coarse = [coarse_drive(dr, 0.01, 0.1) for dr in drives if dr.T > 0.1]
        est = L.estimate_kappa(coarse)
        mean_len = np.mean([len(c) for c in curves])
        print(f"m={m:<4g} mean length {mean_len:6.1f}  kappa_hat {est.kappa:.3f} "
              f"[{est.lo:.3f}, {est.hi:.3f}] from {len(coarse)} curves")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100)
