"""Sketched CP-ALS with chain reuse, and the sketch step of tensor-train rounding.

CP-ALS
------
Subproblem ``i`` solves ``min_A || S_i L_i A^T - S_i X_(i)^T ||_F`` where
``L_i`` is the Khatri-Rao product of every factor but ``A_i``. All ``S_i``
share their tensors:

* one Kronecker-stage matrix ``K_j`` (``m x s_j``) per mode, or the
  identity when ``s_j <= m``;
* ``ZR(k)`` merging the sketched right chain ``V_R(k+1)`` with ``K_k A_k``;
* ``ZL(k)`` merging the sketched left chain ``V_L(k-1)`` with ``K_k A_k``;
* ``LR(i)`` merging ``V_L(i-1)`` with ``V_R(i+1)``.

Each merge is a two-tensor small network. The far operand's sketch mode is
split into ``alpha x beta`` (zero padded when ``alpha * beta`` exceeds it);
the head reads the near mode and ``alpha`` and emits an ``m`` mode, the
tail reads that and ``beta``. Chain products are cached with the factor
versions they were built from, so a sweep sketches each ``L_i`` with one
new ``K_j`` product and at most two merges, except ``L_1`` which rebuilds
the right chain.

Flops follow the two-per-multiply-add convention used by the plans.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import khatri_rao, qr, solve_triangular

from .embed import build_tt_embedding
from .generators import chain_tree, tt_cores_network
from .plan import ContractionTree, SketchSpec
from .tn import DenseTensor, RandomSource

__all__ = [
    "FlopLedger", "CpEmbedding", "CpState", "TensorTrain", "sketched_cp_als",
    "cp_als", "cp_full", "cp_residual", "cp_subproblem_trees",
    "cp_sketch_size", "sketch_lhs", "sketch_lhs_scratch", "sketch_dense",
    "subproblem_matrix", "solve_sketched", "subproblem_trial",
    "calibrate_sketch_constant", "cp_formula_madds", "tt_round_sketch",
    "tt_full", "tt_round_svd", "random_tt",
]


# ledger ----------------------------------------------------------------------------

@dataclass
class FlopLedger:
    """Flops per phase, with a separate record per sweep.

    ``prep`` holds the right-hand-side sketches; each entry of ``sweeps``
    maps a phase (``kron``, ``merge``, ``solve``) to its flops and keeps
    the per-subproblem totals under ``subproblems``.
    """

    prep: int = 0
    sweeps: list = field(default_factory=list)
    rank_deficient: int = 0

    def start_sweep(self):
        self.sweeps.append({"kron": 0, "merge": 0, "solve": 0, "subproblems": []})

    def add(self, phase, flops):
        if phase == "prep":
            self.prep += int(flops)
        else:
            self.sweeps[-1][phase] += int(flops)

    def sweep_total(self, t) -> int:
        s = self.sweeps[t]
        return s["kron"] + s["merge"] + s["solve"]

    @property
    def total(self) -> int:
        return self.prep + sum(self.sweep_total(t) for t in range(len(self.sweeps)))

    def to_dict(self):
        return {"prep": self.prep, "sweeps": self.sweeps, "total": self.total,
                "rank_deficient": self.rank_deficient}


# shared embedding -----------------------------------------------------------------

def _split(q, m, strict):
    alpha = q if strict else max(1, min(q, int(round(math.sqrt(m)))))
    return alpha, -(-q // alpha)


class CpEmbedding:
    """Tensors shared by the subproblem embeddings of an order-``N`` CP model.

    Tensors are drawn lazily from ``rng`` children keyed by their role, so
    the same ``(seed, stream)`` always gives the same embedding.
    """

    def __init__(self, sizes, m, rng: RandomSource, strict_accuracy=False):
        self.sizes = tuple(int(s) for s in sizes)
        self.N = len(self.sizes)
        self.m = int(m)
        self.rng = rng
        self.strict = bool(strict_accuracy)
        self._cache = {}
        if self.N < 3:
            raise ValueError("CP-ALS needs order at least 3")
        for i in range(self.N):
            if self.m > math.prod(s for j, s in enumerate(self.sizes) if j != i):
                raise ValueError("sketch exceeds subspace")

    def kron_size(self, j):
        return min(self.m, self.sizes[j])

    def kron(self, j):
        """``m x s_j`` Gaussian matrix, or None for the identity."""
        if self.sizes[j] <= self.m:
            return None
        key = ("K", j)
        if key not in self._cache:
            g = self.rng.child(0, j).generator()
            self._cache[key] = g.standard_normal((self.m, self.sizes[j])) / math.sqrt(self.m)
        return self._cache[key]

    def chain_size(self, side, k):
        """Sketch size of ``V_R(k)`` or ``V_L(k)`` (0-based mode index)."""
        if (side == "R" and k == self.N - 1) or (side == "L" and k == 0):
            return self.kron_size(k)
        return self.m

    def merge_shapes(self, kind, k):
        if kind == "R":
            p, q = self.chain_size("R", k + 1), self.kron_size(k)
        elif kind == "L":
            p, q = self.chain_size("L", k - 1), self.kron_size(k)
        else:
            p, q = self.chain_size("L", k - 1), self.chain_size("R", k + 1)
        alpha, beta = _split(q, self.m, self.strict)
        return p, q, alpha, beta

    def merge(self, kind, k):
        """``(head, tail, q)`` of merge ``kind`` in ``{"R", "L", "LR"}`` at mode ``k``."""
        key = (kind, k)
        if key not in self._cache:
            p, q, alpha, beta = self.merge_shapes(kind, k)
            tag = {"R": 1, "L": 2, "LR": 3}[kind]
            sd = 1.0 / math.sqrt(self.m)
            head = self.rng.child(tag, k, 0).generator().standard_normal((p, alpha, self.m)) * sd
            tail = self.rng.child(tag, k, 1).generator().standard_normal((self.m, beta, self.m)) * sd
            self._cache[key] = (head, tail, q)
        return self._cache[key]


def _merge_factors(head, tail, q, P, Q):
    """Merge sketched Khatri-Rao operands ``P`` (near) and ``Q`` (far).

    Returns the ``m x R`` result and its flops.
    """
    p, alpha, m = head.shape
    beta = tail.shape[1]
    R = P.shape[1]
    Qp = np.zeros((alpha * beta, R))
    Qp[:q] = Q
    Q3 = Qp.reshape(alpha, beta, R)
    W1 = np.einsum("pam,pr->amr", head, P)
    W2 = np.einsum("amr,abr->mbr", W1, Q3)
    out = np.einsum("mbo,mbr->or", tail, W2)
    flops = 2 * R * (p * alpha * m + alpha * m * beta + m * beta * m)
    return out, flops


def _merge_dense(head, tail, q, T, near, far):
    """Merge axes ``near`` and ``far`` of a dense tensor; the result comes first."""
    p, alpha, m = head.shape
    beta = tail.shape[1]
    T = np.moveaxis(T, (near, far), (0, 1))
    rest = T.shape[2:]
    if alpha * beta > q:
        pad = [(0, 0), (0, alpha * beta - q)] + [(0, 0)] * len(rest)
        T = np.pad(T, pad)
    T = T.reshape((p, alpha, beta) + rest)
    W = np.tensordot(head, T, axes=([0, 1], [0, 1]))
    out = np.tensordot(tail, W, axes=([0, 1], [0, 1]))
    n = math.prod(rest)
    flops = 2 * n * (p * alpha * m * beta + m * beta * m)
    return out, flops


def _kron_dense(K, T, axis):
    if K is None:
        return T, 0
    out = np.moveaxis(np.tensordot(K, T, axes=(1, axis)), 0, axis)
    return out, 2 * K.shape[0] * T.size


# CP state and sketching -------------------------------------------------------------

@dataclass
class CpState:
    """Factors, their versions, and cached sketches of chain products.

    A cached ``V_R(k)`` stores the versions of factors ``k..N-1`` it was
    built from and is recomputed once any of them changes; ``V_L(k)``
    likewise for factors ``0..k``.
    """

    factors: list
    emb: CpEmbedding
    ledger: FlopLedger = field(default_factory=FlopLedger)
    versions: list = field(default_factory=list)
    kron_cache: dict = field(default_factory=dict)
    right: dict = field(default_factory=dict)
    left: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.versions:
            self.versions = [0] * len(self.factors)

    def update(self, i, A):
        self.factors[i] = A
        self.versions[i] += 1


def _kron_factor(st: CpState, j, charge=True):
    ver = st.versions[j]
    hit = st.kron_cache.get(j)
    if hit is not None and hit[0] == ver:
        return hit[1]
    K = st.emb.kron(j)
    A = st.factors[j]
    if K is None:
        Y, f = A, 0
    else:
        Y, f = K @ A, 2 * K.shape[0] * A.shape[0] * A.shape[1]
    if charge:
        st.ledger.add("kron", f)
    st.kron_cache[j] = (ver, Y)
    return Y


def _right(st: CpState, k):
    N = st.emb.N
    if k == N - 1:
        return _kron_factor(st, k)
    ver = tuple(st.versions[k:])
    hit = st.right.get(k)
    if hit is not None and hit[0] == ver:
        return hit[1]
    P = _right(st, k + 1)
    Q = _kron_factor(st, k)
    out, f = _merge_factors(*st.emb.merge("R", k), P, Q)
    st.ledger.add("merge", f)
    st.right[k] = (ver, out)
    return out


def _left(st: CpState, k):
    if k == 0:
        return _kron_factor(st, 0)
    ver = tuple(st.versions[:k + 1])
    hit = st.left.get(k)
    if hit is not None and hit[0] == ver:
        return hit[1]
    P = _left(st, k - 1)
    Q = _kron_factor(st, k)
    out, f = _merge_factors(*st.emb.merge("L", k), P, Q)
    st.ledger.add("merge", f)
    st.left[k] = (ver, out)
    return out


def sketch_lhs(st: CpState, i):
    """``S_i L_i`` (``m x R``) using and refreshing the chain caches."""
    N = st.emb.N
    if i == 0:
        return _right(st, 1)
    if i == N - 1:
        return _left(st, N - 2)
    P, Q = _left(st, i - 1), _right(st, i + 1)
    # the final merge depends on both sides, so it is never cached
    out, f = _merge_factors(*st.emb.merge("LR", i), P, Q)
    st.ledger.add("merge", f)
    return out


def sketch_lhs_scratch(emb: CpEmbedding, factors, i):
    """``S_i L_i`` with no caching; same operations as :func:`sketch_lhs`."""
    N = emb.N

    def Y(j):
        K = emb.kron(j)
        return factors[j] if K is None else K @ factors[j]

    def right(k):
        if k == N - 1:
            return Y(k)
        return _merge_factors(*emb.merge("R", k), right(k + 1), Y(k))[0]

    def left(k):
        if k == 0:
            return Y(0)
        return _merge_factors(*emb.merge("L", k), left(k - 1), Y(k))[0]

    if i == 0:
        return right(1)
    if i == N - 1:
        return left(N - 2)
    return _merge_factors(*emb.merge("LR", i), left(i - 1), right(i + 1))[0]


def sketch_dense(emb: CpEmbedding, X, i):
    """``S_i X_(i)^T`` for a dense tensor, without reuse (``m x s_i``)."""
    N = emb.N
    T = np.asarray(X, dtype=np.float64)
    labels = list(range(N))
    flops = 0
    for j in range(N):
        if j != i:
            T, f = _kron_dense(emb.kron(j), T, labels.index(j))
            flops += f
    T, flops = _right_dense(emb, T, labels, i, flops)
    return _finish_dense(emb, T, labels, i, flops)


def _right_dense(emb, T, labels, i, flops):
    # fold modes N-1 .. i+1 into one sketched mode labelled "R"
    N = emb.N
    if i == N - 1:
        return T, flops
    labels[labels.index(N - 1)] = "R"
    for k in range(N - 2, i, -1):
        T, f = _merge_dense(*emb.merge("R", k), T, labels.index("R"), labels.index(k))
        labels.remove("R")
        labels.remove(k)
        labels.insert(0, "R")
        flops += f
    return T, flops


def _finish_dense(emb, T, labels, i, flops):
    N = emb.N
    if i > 0:
        labels[labels.index(0)] = "L"
        for k in range(1, i):
            T, f = _merge_dense(*emb.merge("L", k), T, labels.index("L"), labels.index(k))
            labels.remove("L")
            labels.remove(k)
            labels.insert(0, "L")
            flops += f
    if 0 < i < N - 1:
        T, f = _merge_dense(*emb.merge("LR", i), T, labels.index("L"), labels.index("R"))
        labels.remove("L")
        labels.remove("R")
        labels.insert(0, "S")
        flops += f
    else:
        labels[labels.index("L" if i == N - 1 else "R")] = "S"
    T = np.moveaxis(T, [labels.index("S"), labels.index(i)], [0, 1])
    return np.ascontiguousarray(T), flops


def _prepare_rhs(st: CpState, X):
    """All ``S_i X_(i)^T``; right-chain prefixes are computed once and shared."""
    emb, N = st.emb, st.emb.N
    T = np.asarray(X, dtype=np.float64)
    # prefixes[k]: modes k..N-1 sketched into "R" (prefixes[N] is X itself)
    prefixes = {N: (T, list(range(N)))}
    cur, labels = T, list(range(N))
    cur, f = _kron_dense(emb.kron(N - 1), cur, N - 1)
    st.ledger.add("prep", f)
    labels[N - 1] = "R"
    prefixes[N - 1] = (cur, list(labels))
    for k in range(N - 2, 0, -1):
        ax = labels.index(k)
        cur, f = _kron_dense(emb.kron(k), cur, ax)
        st.ledger.add("prep", f)
        cur, f = _merge_dense(*emb.merge("R", k), cur, labels.index("R"), ax)
        st.ledger.add("prep", f)
        labels.remove("R")
        labels.remove(k)
        labels.insert(0, "R")
        prefixes[k] = (cur, list(labels))
    for i in range(N):
        T, labels = prefixes[i + 1]
        labels = list(labels)
        flops = 0
        for j in range(i):
            T, f = _kron_dense(emb.kron(j), T, labels.index(j))
            flops += f
        out, flops = _finish_dense(emb, T, labels, i, flops)
        st.ledger.add("prep", flops)
        st.rhs[i] = out


def solve_sketched(Lh, Rh, rcond=1e-12):
    """Least-squares ``argmin_A || Lh A^T - Rh ||`` via Householder QR.

    Returns ``(A, flops, deficient)``; a numerically rank-deficient ``Lh``
    falls back to the minimum-norm solution.
    """
    m, R = Lh.shape
    s = Rh.shape[1]
    Q, T = qr(Lh, mode="economic")
    d = np.abs(np.diag(T))
    flops = 2 * m * R * R - (2 * R ** 3) // 3 + 2 * m * R * s + R * R * s
    if d.size == 0 or d.min() <= rcond * max(d.max(), 1e-300) or m < R:
        At = np.linalg.lstsq(Lh, Rh, rcond=None)[0]
        return At.T, flops, True
    At = solve_triangular(T, Q.T @ Rh)
    return At.T, flops, False


def cp_full(factors):
    """Dense tensor ``[[A_1, ..., A_N]]``."""
    shape = tuple(A.shape[0] for A in factors)
    return (factors[0] @ khatri_rao_rest(factors, 0).T).reshape(shape)


def khatri_rao_rest(factors, i):
    """``L_i``: Khatri-Rao product of all factors but ``i``, in mode order."""
    rest = [A for j, A in enumerate(factors) if j != i]
    out = rest[0]
    for A in rest[1:]:
        out = khatri_rao(out, A)
    return out


def unfold(X, i):
    return np.moveaxis(X, i, 0).reshape(X.shape[i], -1)


def cp_residual(X, factors):
    """``||X - [[A]]||_F / ||X||_F``."""
    return float(np.linalg.norm(X - cp_full(factors)) / np.linalg.norm(X))


def _init_factors(shape, R, rng: RandomSource):
    g = rng.child(99).generator()
    return [g.standard_normal((s, R)) for s in shape]


def sketched_cp_als(X, R, m, iters, rng: RandomSource, strict_accuracy=False,
                    init=None):
    """Sketched CP-ALS with fixed shared embeddings and chain reuse.

    Parameters
    ----------
    X : ndarray or DenseTensor
        Dense data of order at least 3.
    R : int
        CP rank.
    m : int
        Sketch size; at most the product of any ``N - 1`` mode sizes.
    iters : int
        Number of sweeps.
    rng : RandomSource
        Seeds the embedding and, unless ``init`` is given, the factors.
    strict_accuracy : bool
        Feed each far operand whole into the head tensor of every merge.

    Returns
    -------
    factors : list of ndarray
    ledger : FlopLedger
    residuals : list of float
        Relative residual after each sweep.
    """
    if isinstance(X, DenseTensor):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    emb = CpEmbedding(X.shape, m, rng.child(1), strict_accuracy)
    factors = [np.array(A, dtype=np.float64) for A in init] if init is not None \
        else _init_factors(X.shape, R, rng)
    st = CpState(factors, emb)
    _prepare_rhs(st, X)
    residuals = []
    for _ in range(iters):
        st.ledger.start_sweep()
        for i in range(emb.N):
            before = st.ledger.sweep_total(-1)
            Lh = sketch_lhs(st, i)
            A, f, bad = solve_sketched(Lh, st.rhs[i])
            st.ledger.add("solve", f)
            st.ledger.rank_deficient += int(bad)
            st.update(i, A)
            st.ledger.sweeps[-1]["subproblems"].append(st.ledger.sweep_total(-1) - before)
        residuals.append(cp_residual(X, st.factors))
    return st.factors, st.ledger, residuals


def cp_als(X, R, iters, rng: RandomSource = None, init=None):
    """Unsketched ALS reference with exact least-squares updates."""
    X = np.asarray(X, dtype=np.float64)
    factors = [np.array(A, dtype=np.float64) for A in init] if init is not None \
        else _init_factors(X.shape, R, rng)
    residuals = []
    for _ in range(iters):
        for i in range(X.ndim):
            L = khatri_rao_rest(factors, i)
            factors[i] = np.linalg.lstsq(L, unfold(X, i).T, rcond=None)[0].T
        residuals.append(cp_residual(X, factors))
    return factors, residuals


def cp_formula_madds(N, s, R, m):
    """``N (s m R + m^2.5 R)``, the modeled per-sweep sketching cost."""
    return N * (s * m * R + m ** 2.5 * R)


def cp_subproblem_trees(N):
    """Data contraction trees ``T_1 .. T_N`` of the subproblem Khatri-Rao networks.

    Vertices are ``A0 .. A{N-1}``. The left part ``A0 .. A{i-1}`` is
    contracted left to right, the right part ``A{N-1} .. A{i+1}`` right to
    left, and the two results last.
    """
    if N < 3:
        raise ValueError("need N >= 3")
    trees = []
    for i in range(N):
        left = right = None
        for j in range(i):
            left = f"A{j}" if left is None else [left, f"A{j}"]
        for j in range(N - 1, i, -1):
            right = f"A{j}" if right is None else [right, f"A{j}"]
        if left is None:
            node = right
        elif right is None:
            node = left
        else:
            node = [left, right]
        trees.append(ContractionTree.from_nested(node))
    return trees


def cp_sketch_size(N, R, epsilon, delta, C) -> int:
    """``ceil(C N R ln(1/delta) / epsilon^2)``."""
    return int(math.ceil(C * N * R * math.log(1.0 / delta) / epsilon ** 2))


def subproblem_matrix(emb: CpEmbedding, i):
    """Dense ``S_i`` (``m x prod_{j != i} s_j``), for oracle checks."""
    sizes = list(emb.sizes)
    P = math.prod(s for j, s in enumerate(sizes) if j != i)
    shape = sizes[:i] + [P] + sizes[i + 1:]
    # mode i indexes the flattened remaining modes, giving an identity map
    E = np.eye(P).reshape([s for j, s in enumerate(sizes) if j != i] + [P])
    E = np.moveaxis(E, -1, i).reshape(shape)
    S, _ = sketch_dense(emb, E, i)
    return S


def subproblem_trial(seed, N=3, s=20, R=4, m=60, noise=0.5, strict_accuracy=False):
    """One sketched least-squares subproblem on exact-rank data.

    Current factors are the true ones perturbed by relative Gaussian
    ``noise``. Returns ``(sketched residual, optimal residual)`` of the
    unsketched objective.
    """
    g = np.random.default_rng(seed)
    true = [g.standard_normal((s, R)) for _ in range(N)]
    X = cp_full(true)
    cur = [A + noise * g.standard_normal(A.shape) for A in true]
    i = int(g.integers(N))
    emb = CpEmbedding([s] * N, m, RandomSource(seed, 7), strict_accuracy)
    L = khatri_rao_rest(cur, i)
    B = unfold(X, i).T
    A_opt = np.linalg.lstsq(L, B, rcond=None)[0]
    Lh = sketch_lhs_scratch(emb, cur, i)
    Rh, _ = sketch_dense(emb, X, i)
    A_sk, _, _ = solve_sketched(Lh, Rh)
    return (float(np.linalg.norm(L @ A_sk.T - B)), float(np.linalg.norm(L @ A_opt - B)))


def calibrate_sketch_constant(grid, epsilon=0.2, delta=0.1, trials=200, N=3, s=20,
                              R=4, seed=0, strict_accuracy=False):
    """Smallest ``C`` in ``grid`` whose sketch size meets the success target.

    Success means the sketched residual is at most ``(1 + epsilon)`` times
    the optimum; the target is a ``1 - delta`` success fraction. Sizes
    above ``s ** (N - 1)`` are skipped.

    Returns
    -------
    C : float or None
    table : list of (C, m, fraction)
    """
    table = []
    for C in sorted(grid):
        m = cp_sketch_size(N, R, epsilon, delta, C)
        if m > s ** (N - 1):
            continue
        ok = 0
        for t in range(trials):
            sk, opt = subproblem_trial(seed * 100003 + t, N, s, R, m,
                                       strict_accuracy=strict_accuracy)
            ok += sk <= (1 + epsilon) * opt
        frac = ok / trials
        table.append((C, m, frac))
        if frac >= 1 - delta:
            return C, table
    return None, table


# tensor-train rounding sketch -------------------------------------------------------

@dataclass
class TensorTrain:
    """Cores ``(R_{k-1}, s_k, R_k)`` with unit boundary ranks."""

    cores: list

    def __post_init__(self):
        self.cores = [np.asarray(G, dtype=np.float64) for G in self.cores]
        if not self.cores:
            raise ValueError("empty tensor train")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("adjacent core ranks differ")

    @property
    def order(self):
        return len(self.cores)

    @property
    def sizes(self):
        return [G.shape[1] for G in self.cores]

    @property
    def ranks(self):
        return [G.shape[2] for G in self.cores[:-1]]

    def network(self):
        return tt_cores_network(self.cores)


def random_tt(N, s, R, seed=0):
    """Gaussian tensor train with interior ranks ``min(R, ...)`` capped by the mode sizes."""
    g = np.random.default_rng(seed)
    ranks = [1]
    for k in range(1, N):
        ranks.append(min(R, s ** k, s ** (N - k)))
    ranks.append(1)
    return TensorTrain([g.standard_normal((ranks[k], s, ranks[k + 1])) / math.sqrt(s * ranks[k])
                        for k in range(N)])


def tt_full(tt: TensorTrain):
    out = tt.cores[0]
    for G in tt.cores[1:]:
        out = np.tensordot(out, G, axes=(-1, 0))
    return out.reshape(tt.sizes)


def tt_round_svd(tt: TensorTrain, rank):
    """Deterministic TT-SVD rounding to ranks at most ``rank``."""
    cores = [G.copy() for G in tt.cores]
    N = len(cores)
    # right-to-left orthogonalization
    for k in range(N - 1, 0, -1):
        r0, s, r1 = cores[k].shape
        Q, T = np.linalg.qr(cores[k].reshape(r0, s * r1).T)
        cores[k] = Q.T.reshape(-1, s, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], T.T, axes=(2, 0))
    for k in range(N - 1):
        r0, s, r1 = cores[k].shape
        U, sv, Vt = np.linalg.svd(cores[k].reshape(r0 * s, r1), full_matrices=False)
        r = min(rank, sv.size)
        cores[k] = U[:, :r].reshape(r0, s, r)
        cores[k + 1] = np.tensordot(sv[:r, None] * Vt[:r], cores[k + 1], axes=(1, 0))
    return TensorTrain(cores)


def tt_round_sketch(tt: TensorTrain, m, rng: RandomSource):
    """Sketch of the matricization rows ``s_1 ... s_{N-1}``, columns ``s_N``.

    A tensor-train embedding on the first ``N - 1`` physical modes is
    contracted with the data from left to right.

    Returns
    -------
    sketches : list of DenseTensor
        ``W_k`` with modes ``("sketch", "r{k}")`` for each interior
        boundary ``k``, followed by ``S X`` with modes ``("sketch", "e{N-1}")``.
    ledger : dict
        Flops of the data-core steps (``core``), embedding-core steps
        (``embed``), the two end steps (``ends``) and the ``total``.
    """
    N = tt.order
    if N < 2:
        raise ValueError("need order at least 2")
    R = max(tt.ranks)
    if m >= R:
        warnings.warn("sketch size is not below the rank; cost model assumes m < R",
                      RuntimeWarning, stacklevel=2)
    net, sk = tt.network()
    spec = SketchSpec(net, sk[:-1], m)
    emb = build_tt_embedding(spec).bind(rng)
    E = emb.network
    cores = tt.cores
    led = {"core": 0, "embed": 0, "ends": 0}

    def emb_core(j):
        t = E.tensor(f"TT{j}")
        modes = [f"e{j}"]
        modes.append(f"tt:{j - 1}-{j}" if j > 0 else None)
        modes.append("tt:out" if j == N - 2 else f"tt:{j}-{j + 1}")
        modes = [x for x in modes if x is not None]
        return t.transpose_to(modes).values

    K0 = emb_core(0)                       # (s, [in], out) with no input at j = 0
    W = np.einsum("sa,sr->ar", K0, cores[0][0])
    led["ends"] += 2 * K0.shape[0] * K0.shape[1] * cores[0].shape[2]
    out = [DenseTensor(("sketch", "r0"), W)]
    for k in range(1, N - 1):
        G = cores[k]
        U = np.tensordot(W, G, axes=(1, 0))              # (a, s, q)
        led["core"] += 2 * W.shape[0] * G.size
        Ek = emb_core(k)                                  # (s, a, b)
        W = np.einsum("asq,sab->bq", U, Ek)
        led["embed"] += 2 * U.size * Ek.shape[2]
        out.append(DenseTensor(("sketch", f"r{k}"), W))
    G = cores[-1][:, :, 0]
    SX = W @ G
    led["ends"] += 2 * W.shape[0] * G.size
    out.append(DenseTensor(("sketch", f"e{N - 1}"), SX))
    led["total"] = led["core"] + led["embed"] + led["ends"]
    return out, led


def tt_sketch_tree(N) -> ContractionTree:
    """Left-to-right chain over ``v0 .. v{N-1}``."""
    return chain_tree([f"v{j}" for j in range(N)])
