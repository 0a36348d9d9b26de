import math
import warnings

import numpy as np
import pytest

from tnsketch import apps
from tnsketch.apps import (CpEmbedding, CpState, TensorTrain, cp_als, cp_full,
                           cp_residual, cp_sketch_size, cp_subproblem_trees,
                           khatri_rao_rest, random_tt, sketch_dense, sketch_lhs,
                           sketch_lhs_scratch, sketched_cp_als, solve_sketched,
                           subproblem_matrix, tt_full, tt_round_sketch,
                           tt_round_svd, unfold)
from tnsketch.embed import build_tt_embedding, materialize_dense
from tnsketch.plan import SketchSpec
from tnsketch.tn import RandomSource


def _factors(N, s, R, seed=0):
    g = np.random.default_rng(seed)
    return [g.standard_normal((s, R)) for _ in range(N)]


# CP-ALS ---------------------------------------------------------------------------

@pytest.mark.parametrize("N,s,m", [(3, 5, 7), (4, 4, 10), (5, 3, 6), (4, 6, 3)])
def test_subproblem_sketch_matches_dense_embedding(N, s, m):
    emb = CpEmbedding([s] * N, m, RandomSource(1))
    F = _factors(N, s, 3)
    X = cp_full(F) + 0.1 * np.random.default_rng(1).standard_normal([s] * N)
    for i in range(N):
        S = subproblem_matrix(emb, i)
        assert S.shape == (m, s ** (N - 1))
        a = sketch_lhs_scratch(emb, F, i)
        b = S @ khatri_rao_rest(F, i)
        assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()
        c, _ = sketch_dense(emb, X, i)
        d = S @ unfold(X, i).T
        assert np.abs(c - d).max() <= 1e-12 * np.abs(d).max()


def test_khatri_rao_and_unfold_agree_with_cp_full():
    F = _factors(3, 4, 2)
    X = cp_full(F)
    for i in range(3):
        np.testing.assert_allclose(unfold(X, i), F[i] @ khatri_rao_rest(F, i).T, rtol=1e-12)


def test_reuse_is_bit_identical_to_scratch():
    N, s, R, m = 5, 6, 3, 9
    emb = CpEmbedding([s] * N, m, RandomSource(4))
    st = CpState(_factors(N, s, R, 2), emb)
    g = np.random.default_rng(5)
    st.ledger.start_sweep()
    for sweep in range(3):
        for i in range(N):
            a = sketch_lhs(st, i)
            b = sketch_lhs_scratch(emb, st.factors, i)
            assert np.array_equal(a, b)
            st.update(i, g.standard_normal((s, R)))


def test_ledger_conservation_and_reuse_bound():
    N, s, R, m = 5, 30, 3, 16
    X = np.random.default_rng(0).random([s] * N)
    _, led, _ = sketched_cp_als(X, R, m, 3, RandomSource(1))
    d = led.to_dict()
    assert d["total"] == led.prep + sum(led.sweep_total(t) for t in range(3))
    for t in range(3):
        assert sum(led.sweeps[t]["subproblems"]) == led.sweep_total(t)
        assert len(led.sweeps[t]["subproblems"]) == N
    # cost of L_1 from scratch and of one Kronecker product plus two merges
    emb = CpEmbedding([s] * N, m, RandomSource(1).child(1))
    fresh = CpState(_factors(N, s, R), emb)
    fresh.ledger.start_sweep()
    sketch_lhs(fresh, 0)
    first = fresh.ledger.sweep_total(0)
    kron = 2 * m * s * R
    merge = 0
    Y = np.ones((m, R))
    for kind, ks in (("R", range(1, N - 1)), ("L", range(1, N - 1)), ("LR", range(1, N - 1))):
        for k in ks:
            merge = max(merge, apps._merge_factors(*emb.merge(kind, k), Y, Y)[1])
    for t in range(1, 3):
        sk = led.sweeps[t]["kron"] + led.sweeps[t]["merge"]
        assert sk <= first + (N - 1) * (kron + 2 * merge)
        assert led.sweeps[t]["kron"] == N * kron


def test_per_sweep_flops_against_formula():
    for N, s, R, m in [(3, 64, 4, 16), (4, 32, 2, 16), (4, 32, 8, 64)]:
        X = np.random.default_rng(0).random([s] * N)
        _, led, _ = sketched_cp_als(X, R, m, 2, RandomSource(0))
        ratio = led.sweep_total(1) / 2 / apps.cp_formula_madds(N, s, R, m)
        assert 0.25 <= ratio <= 4


def test_rank_one_recovery():
    g = np.random.default_rng(3)
    vs = [v / np.linalg.norm(v) for v in (g.standard_normal(8) for _ in range(3))]
    X = np.einsum("i,j,k->ijk", *vs)
    _, _, res = sketched_cp_als(X, 1, 12, 5, RandomSource(2))
    assert res[-1] <= 1e-10


def test_sketched_als_converges_on_exact_rank_data():
    # stated target: residual <= 0.05 after 20 sweeps at m = 60 for >= 80% of seeds
    seeds = range(40)
    ok = ref_ok = 0
    for seed in seeds:
        X = cp_full(_factors(3, 20, 4, 100 + seed))
        _, _, res = sketched_cp_als(X, 4, 60, 20, RandomSource(seed))
        _, ref = cp_als(X, 4, 20, RandomSource(seed))
        ok += res[-1] <= 0.05
        ref_ok += ref[-1] <= 0.05
    print(f"sketched {ok}/{len(seeds)}, unsketched {ref_ok}/{len(seeds)}")
    assert ok >= 0.8 * len(seeds)


def test_sketched_als_converges_near_solution():
    # exact-rank data solves every sketched subproblem, so it is a fixed point
    for seed in range(10):
        F = _factors(3, 20, 4, 100 + seed)
        X = cp_full(F)
        g = np.random.default_rng(seed)
        init = [A + 0.1 * g.standard_normal(A.shape) for A in F]
        _, _, res = sketched_cp_als(X, 4, 60, 20, RandomSource(seed), init=init)
        assert res[-1] <= 1e-4


def test_unsketched_als_is_monotone():
    g = np.random.default_rng(0)
    X = cp_full(_factors(3, 10, 3)) + 0.05 * g.standard_normal((10, 10, 10))
    _, res = cp_als(X, 3, 15, RandomSource(1))
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))


def test_solve_sketched():
    g = np.random.default_rng(0)
    L, B = g.standard_normal((30, 4)), g.standard_normal((30, 6))
    A, flops, bad = solve_sketched(L, B)
    np.testing.assert_allclose(A.T, np.linalg.lstsq(L, B, rcond=None)[0], rtol=1e-10)
    assert not bad and flops > 0
    L[:, 3] = L[:, 2]
    A, _, bad = solve_sketched(L, B)
    assert bad
    np.testing.assert_allclose(A.T, np.linalg.lstsq(L, B, rcond=None)[0], atol=1e-10)


def test_cp_errors():
    with pytest.raises(ValueError, match="sketch exceeds subspace"):
        CpEmbedding([3, 3, 3], 10, RandomSource(0))
    with pytest.raises(ValueError, match="order at least 3"):
        CpEmbedding([5, 5], 2, RandomSource(0))


def test_cp_sketch_size_scaling():
    m = cp_sketch_size(3, 4, 0.2, 0.1, 0.04)
    assert m == math.ceil(0.04 * 3 * 4 * math.log(10) / 0.04)
    assert cp_sketch_size(3, 8, 0.5, 0.1, 1.0) == 2 * cp_sketch_size(3, 4, 0.5, 0.1, 1.0) or \
        abs(cp_sketch_size(3, 8, 0.5, 0.1, 1.0) - 2 * cp_sketch_size(3, 4, 0.5, 0.1, 1.0)) <= 1
    base = 0.3 * math.log(10) / 0.01
    for N in (3, 6, 12):
        for R in (1, 5, 10):
            assert abs(cp_sketch_size(N, R, 0.1, 0.1, 0.3) - N * R * base) <= 1


def test_subproblem_trees():
    trees = cp_subproblem_trees(3)
    assert [sorted(t.vertices) for t in trees] == [["A1", "A2"], ["A0", "A2"], ["A0", "A1"]]
    assert all(len(t.path) == 1 for t in trees)
    t5 = [t.to_nested() for t in cp_subproblem_trees(5)]
    assert t5[0] == [[["A4", "A3"], "A2"], "A1"]
    assert t5[1] == ["A0", [["A4", "A3"], "A2"]]
    assert t5[2] == [["A0", "A1"], ["A4", "A3"]]
    assert t5[3] == [[["A0", "A1"], "A2"], "A4"]
    assert t5[4] == [[["A0", "A1"], "A2"], "A3"]
    with pytest.raises(ValueError):
        cp_subproblem_trees(2)


def test_calibration_runs_and_is_monotone_in_table():
    C, table = apps.calibrate_sketch_constant([0.04, 0.5], trials=20, seed=3)
    assert table and table[0][1] == cp_sketch_size(3, 4, 0.2, 0.1, 0.04)
    assert C in (0.04, 0.5, None)


# tensor-train rounding ------------------------------------------------------------------

def test_tt_validation():
    with pytest.raises(ValueError, match="boundary"):
        TensorTrain([np.ones((2, 3, 1))])
    with pytest.raises(ValueError, match="ranks differ"):
        TensorTrain([np.ones((1, 3, 2)), np.ones((3, 3, 1))])
    tt = random_tt(4, 5, 3)
    assert tt.ranks == [3, 3, 3] and tt.sizes == [5] * 4


def test_tt_round_sketch_flops():
    N, s, R, m = 8, 40, 10, 6
    _, led = tt_round_sketch(random_tt(N, s, R), m, RandomSource(0))
    ref = 2 * N * s * R * R * m
    assert 1 <= led["total"] / ref <= 3
    assert led["total"] == led["core"] + led["embed"] + led["ends"]
    _, led16 = tt_round_sketch(random_tt(2 * N, s, R), m, RandomSource(0))
    per8 = led["total"] / (N * s * R * R * m)
    per16 = led16["total"] / (2 * N * s * R * R * m)
    assert abs(per16 / per8 - 1) <= 0.2


def test_tt_round_sketch_matches_dense():
    N, s, R, m = 4, 5, 4, 3
    tt = random_tt(N, s, R, seed=2)
    rng = RandomSource(6)
    sk, _ = tt_round_sketch(tt, m, rng)
    net, edges = tt.network()
    emb = build_tt_embedding(SketchSpec(net, edges[:-1], m)).bind(rng)
    S = materialize_dense(emb).values
    X = tt_full(tt).reshape(s ** (N - 1), s)
    np.testing.assert_allclose(sk[-1].values, S @ X, rtol=1e-10, atol=1e-14)
    assert [t.modes[1] for t in sk] == ["r0", "r1", "r2", "e3"]


def test_tt_round_sketch_two_cores():
    tt = random_tt(2, 6, 6, seed=1)
    rng = RandomSource(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sk, led = tt_round_sketch(tt, 2, rng)
    net, edges = tt.network()
    emb = build_tt_embedding(SketchSpec(net, edges[:-1], 2)).bind(rng)
    S = materialize_dense(emb).values
    assert S.shape == (2, 6)
    np.testing.assert_allclose(sk[-1].values, S @ tt_full(tt), rtol=1e-12)
    assert led["core"] == 0 and led["embed"] == 0


def test_tt_round_sketch_warns_when_m_not_below_rank():
    with pytest.warns(RuntimeWarning, match="not below the rank"):
        tt_round_sketch(random_tt(3, 8, 4), 4, RandomSource(0))


def test_tt_sketched_norms():
    N, s, R, m = 3, 40, 40, 32
    tt = random_tt(N, s, R, seed=4)
    X = tt_full(tt).reshape(-1, s)
    good = 0
    for seed in range(50):
        g = np.random.default_rng(seed)
        v = g.standard_normal(s)
        v /= np.linalg.norm(v)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sk, _ = tt_round_sketch(tt, m, RandomSource(seed))
        good += abs(np.linalg.norm(sk[-1].values @ v) / np.linalg.norm(X @ v) - 1) <= 0.3
    assert good > 25


def test_tt_round_svd_reference():
    tt = random_tt(5, 4, 3, seed=1)
    full = tt_full(tt)
    same = tt_round_svd(tt, 3)
    assert np.linalg.norm(tt_full(same) - full) <= 1e-12 * np.linalg.norm(full)
    low = tt_round_svd(tt, 1)
    assert max(low.ranks) == 1
    assert cp_residual(full, [np.ones((4, 1))] * 5) > 0
