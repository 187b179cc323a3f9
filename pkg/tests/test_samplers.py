import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from massive_sle import samplers as S
from massive_sle.lattice import HEXAGONAL, DomainError, rectangle, unit_square
from massive_sle.potential import MassParams

from oracles import forest_law, lerw_law, spanning_trees


def tv_distance(counts, law, n):
    keys = set(counts) | set(law)
    return 0.5 * sum(abs(counts.get(k, 0) / n - law.get(k, 0.0)) for k in keys)


def ij_path(d, path):
    return tuple(map(tuple, d.ij[path].tolist()))


@pytest.mark.parametrize("m", [0.0, 2.0, 3.5])
@pytest.mark.parametrize("eps", [1 / 4, 1 / 16])
def test_transition_probabilities_sum_to_one(m, eps):
    d = unit_square(eps)
    w = S.ConditionedWalk(d, MassParams(m, eps))
    np.testing.assert_allclose(w.step_sums(), 1.0, atol=1e-12)
    assert abs(w.probs[d.a_vertex].sum() - 1.0) < 1e-12


def test_oracle_law_is_normalized():
    for delta in (0.0, 0.25):
        law = lerw_law(3, delta, (2, 0), (2, 4))
        assert abs(sum(law.values()) - 1.0) < 1e-12


@pytest.mark.parametrize("m", [0.0, 2.0])
def test_lerw_law_matches_enumeration(m):
    d = unit_square(1 / 4)
    p = MassParams(m, 1 / 4)
    law = lerw_law(3, p.delta, tuple(d.ij[d.a_vertex]), tuple(d.ij[d.b_vertex]))
    w = S.ConditionedWalk(d, p)
    rng = np.random.default_rng(11)
    n = 200_000
    counts = collections.Counter(ij_path(d, S.loop_erase(w.sample(rng))) for _ in range(n))
    assert tv_distance(counts, law, n) < 0.01


def test_lerw_curve_invariants():
    d = unit_square(1 / 16)
    p = MassParams(3.0, 1 / 16)
    w = S.ConditionedWalk(d, p)
    for seed in range(20):
        c = S.sample_massive_lerw(d, p, seed, walk=w)
        assert c.vertices[0] == d.a_vertex and c.vertices[-1] == d.b_vertex
        assert len(set(c.vertices)) == len(c.vertices)
        steps = np.abs(np.diff(c.points))
        np.testing.assert_allclose(steps, d.eps)


def test_lerw_determinism():
    d = unit_square(1 / 16)
    p = MassParams(2.0, 1 / 16)
    seeds = S.task_seeds(42, 5)
    first = [S.sample_massive_lerw(d, p, s).vertices for s in seeds]
    again = [S.sample_massive_lerw(d, p, s).vertices for s in S.task_seeds(42, 5)[::-1]][::-1]
    assert first == again


def test_loop_erase_examples():
    assert S.loop_erase([1, 2, 3, 2, 4]) == [1, 2, 4]
    assert S.loop_erase([1, 2, 1, 3]) == [1, 3]
    assert S.loop_erase([1, 2, 3, 4, 2, 5, 1, 6]) == [1, 6]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60))
def test_loop_erase_properties(path):
    out = S.loop_erase(path)
    assert out[0] == path[0] and out[-1] == path[-1]
    assert len(set(out)) == len(out)
    # the erasure is a subsequence of the walk
    it = iter(path)
    assert all(v in it for v in out)


def test_markov_property_of_lerw():
    d = unit_square(1 / 5)
    p = MassParams(2.0, 1 / 5)
    w = S.ConditionedWalk(d, p)
    rng = np.random.default_rng(3)
    prefix_len = 3
    cont = collections.Counter()
    prefix = None
    n_cond = 0
    while n_cond < 20_000:
        c = S.loop_erase(w.sample(rng))
        if len(c) < prefix_len + 3:
            continue
        if prefix is None:
            prefix = tuple(c[:prefix_len])
        if tuple(c[:prefix_len]) == prefix:
            cont[tuple(c[prefix_len:prefix_len + 3])] += 1
            n_cond += 1
    slit = d.as_slit()
    for v in prefix[1:]:
        slit.extend(v)
    fresh_walk = S.ConditionedWalk(slit, p)
    fresh = collections.Counter()
    got = 0
    while got < 20_000:
        c = S.loop_erase(fresh_walk.sample(rng))
        if len(c) < 4:
            continue
        fresh[tuple(c[1:4])] += 1
        got += 1
    keys = sorted(set(cont) | set(fresh))
    table = np.array([[cont[k] for k in keys], [fresh[k] for k in keys]])
    table = table[:, table.sum(axis=0) >= 10]
    _, pval, _, _ = stats.chi2_contingency(table)
    assert pval > 1e-3


def test_conditioned_walk_from_slit_tip_avoids_curve():
    d = unit_square(1 / 8)
    slit = d.as_slit()
    for v in (d.vertex_at(4, 1), d.vertex_at(4, 2), d.vertex_at(3, 2)):
        slit.extend(v)
    w = S.ConditionedWalk(slit, MassParams(1.0, 1 / 8))
    rng = np.random.default_rng(0)
    for _ in range(50):
        path = w.sample(rng)
        assert path[0] == slit.tip and path[-1] == d.b_vertex
        assert not set(path[1:]) & set(slit.removed)


# ------------------------------------------------------------ explorer ----

@pytest.fixture(scope="module")
def hexdom():
    return unit_square(1 / 12, kind=HEXAGONAL)


def test_explorer_rejects_square_lattice():
    with pytest.raises(DomainError):
        S.HarmonicExplorer(unit_square(1 / 8), MassParams(1.0, 1 / 8))


def test_explorer_runs_from_a_to_b(hexdom):
    ex = S.HarmonicExplorer(hexdom, MassParams(2.0, 1 / 12))
    for seed in range(10):
        c, colors = ex.run(seed)
        assert c.complete
        assert abs(c.points[0] - hexdom.z[hexdom.a_vertex]) < hexdom.eps
        assert abs(c.points[-1] - hexdom.z[hexdom.b_vertex]) < hexdom.eps
        steps = np.abs(np.diff(c.points))
        assert np.all(steps < hexdom.eps)
        assert len(set(c.vertices)) == len(c.vertices)


def test_explorer_massless_never_uses_the_coin(hexdom):
    ex = S.HarmonicExplorer(hexdom, MassParams(0.0, 1 / 12))
    c, _ = ex.run(7)
    for rec in c.log:
        assert abs(rec["h1"] + rec["h2"] - 1.0) < 1e-12
        assert not rec["coin"]


def test_explorer_logged_measures_replay(hexdom):
    p = MassParams(3.0, 1 / 12)
    ex = S.HarmonicExplorer(hexdom, p)
    c, colors = ex.run(5)
    replay = S.replay_measures(hexdom, p, c, colors)
    for (h1, h2), rec in zip(replay, c.log):
        assert abs(h1 - rec["h1"]) < 1e-12
        assert abs(h2 - rec["h2"]) < 1e-12


def test_explorer_coin_frequency(hexdom):
    ex = S.HarmonicExplorer(hexdom, MassParams(4.0, 1 / 12))
    coins, expect, var = 0, 0.0, 0.0
    for seed in range(150):
        c, _ = ex.run(seed)
        for rec in c.log:
            q = 1.0 - rec["h1"] - rec["h2"]
            coins += rec["coin"]
            expect += q
            var += q * (1 - q)
    assert expect > 20
    assert abs(coins - expect) < 3 * np.sqrt(var)


# -------------------------------------------------------------- forests ----

def test_forest_graph_matches_coordinates():
    d = unit_square(1 / 3, a=1 / 3, b=1 / 3 + 1j)
    adj, edges, ids = S.forest_graph(d)
    pts = [tuple(d.ij[v]) for v in ids]
    # interior is {1,2}^2; the wired arc runs ccw from (1,0) to (1,3)
    assert sorted(pts) == [(1, 1), (1, 2), (2, 1), (2, 2)]
    to_root = collections.Counter(pts[e[0]] for e in edges if e[1] == len(ids))
    assert to_root == {(1, 1): 1, (2, 1): 2, (2, 2): 2, (1, 2): 1}
    assert sum(1 for e in edges if e[1] != len(ids)) == 4


def test_ust_interface_matches_enumeration():
    d = unit_square(1 / 3, a=1 / 3, b=1 / 3 + 1j)
    adj, edges, ids = S.forest_graph(d)
    nodes = list(range(len(ids) + 1))
    trees = spanning_trees(nodes, edges)
    law = collections.Counter()
    for t in trees:
        parent = _parents_from_tree(t, edges, len(ids))
        law[_curve_key(S.peano_curve(d, parent, edges, ids))] += 1 / len(trees)
    rng = np.random.default_rng(8)
    n = 100_000
    counts = collections.Counter()
    memo = {}
    for _ in range(n):
        parent = S.sample_forest(adj, edges, 0.0, rng)
        f = S.forest_edge_set(parent)
        if f not in memo:
            memo[f] = _curve_key(S.peano_curve(d, parent, edges, ids))
        counts[memo[f]] += 1
    assert set(counts) <= set(law)
    keys = sorted(law)
    obs = np.array([counts[k] for k in keys])
    exp = np.array([law[k] * n for k in keys])
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    df = len(keys) - 1
    assert (chi2 - df) / np.sqrt(2 * df) < 3


def _parents_from_tree(tree, edges, root):
    nbr = collections.defaultdict(list)
    for e in tree:
        u, v = edges[e][:2]
        nbr[u].append((v, e))
        nbr[v].append((u, e))
    parent = [-2] * root
    stack = [root]
    seen = {root}
    while stack:
        u = stack.pop()
        for v, e in nbr[u]:
            if v not in seen:
                seen.add(v)
                parent[v] = e
                stack.append(v)
    return parent


def _curve_key(curve):
    return tuple((round(z.real, 9), round(z.imag, 9)) for z in curve.points)


def test_tiny_forest_law():
    t = rectangle(1.0, 0.5, 0.25, a=0.25, b=0.75 + 0.5j)
    adj, edges, ids = S.forest_graph(t)
    assert len(ids) == 3
    law = forest_law(range(len(ids) + 1), edges, len(ids), 0.5)
    rng = np.random.default_rng(21)
    n = 1_000_000
    counts = collections.Counter(
        S.forest_edge_set(S.sample_forest(adj, edges, 0.5, rng, method="exact")) for _ in range(n))
    assert tv_distance(counts, law, n) < 0.02


def test_uncorrected_wilson_differs_from_alpha_law():
    t = rectangle(1.0, 0.5, 0.25, a=0.25, b=0.75 + 0.5j)
    adj, edges, ids = S.forest_graph(t)
    law = forest_law(range(len(ids) + 1), edges, len(ids), 0.5)
    rng = np.random.default_rng(2)
    n = 200_000
    counts = collections.Counter(
        S.forest_edge_set(S.sample_forest(adj, edges, 0.5, rng, method="wilson")) for _ in range(n))
    assert tv_distance(counts, law, n) > 0.02


def test_forest_interface_is_space_filling_for_ust():
    d = unit_square(1 / 8)
    c = S.sample_forest_peano(d, S.ForestConfig(0.0), 5)
    pts = {(round(z.real * 16, 6), round(z.imag * 16, 6)) for z in c.points}
    for v in d.interior_indices:
        i, j = d.ij[v]
        for sx in (-0.5, 0.5):
            for sy in (-0.5, 0.5):
                assert (2 * i + sx, 2 * j + sy) in pts
    assert len(pts) == len(c.points)


def test_forest_config_validation():
    with pytest.raises(ValueError):
        S.ForestConfig(-1.0)
    with pytest.raises(DomainError):
        S.sample_forest_peano(unit_square(1 / 8, kind=HEXAGONAL), S.ForestConfig(0.0), 1)
