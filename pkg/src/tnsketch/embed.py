"""Gaussian tensor-network embeddings, sketch plans and their execution.

Builders return an :class:`Embedding` (topology plus per-tensor variances)
and, for tree-shaped schedules, a :class:`SketchPlan`: the ordered list of
pairwise contractions over data and embedding vertices. Tensors are drawn
only when an embedding is bound to a :class:`RandomSource`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _accel
from .bounds import CostReport, all_labels, cost_report, stt_cost
from .plan import (ContractionTree, Linearization, SketchSpec,
                   classify_contractions, validate_constrained)
from .tn import (DenseTensor, Hyperedge, RandomSource, TensorNetwork,
                 contract_greedy, contract_pair, gaussian_tensor)

__all__ = [
    "Embedding", "SketchPlan", "SketchSpec", "Step", "ConditionResult",
    "zi_internal_edge", "build_alg1_embedding", "build_tree_embedding",
    "build_tt_embedding", "build_khatri_rao_embedding",
    "build_gaussian_embedding", "plan_embedding", "build", "combine",
    "check_sufficient_condition", "row_sizes", "execute_plan",
    "materialize_dense", "sample_sketch", "embedding_to_dict", "embedding_from_dict",
    "BUILDERS",
]

ORACLE_LIMIT = 10 ** 7


@dataclass
class Embedding:
    """Embedding network with its attachment and output edges.

    Attachment edges carry the data edge ids they sketch; in ``network``
    they appear as free edges of the embedding vertex they attach to.
    """

    network: TensorNetwork
    attach_edges: list
    output_edges: list
    linearization: Linearization
    variances: dict
    kind: str = "custom"
    meta: dict = field(default_factory=dict)

    @property
    def vertices(self):
        return self.network.vertices

    @property
    def m(self):
        return math.prod(self.network.edge(e).size for e in self.output_edges)

    def is_bound(self):
        return self.network.is_bound()

    def bind(self, rng: RandomSource) -> "Embedding":
        """Copy with Gaussian tensors drawn from independent child streams."""
        net = self.network.copy()
        for i, v in enumerate(self.network.vertices):
            modes = net.incident(v)
            shape = [net.edge(e).size for e in modes]
            net.bind(v, gaussian_tensor(shape, self.variances[v], rng.child(i), modes))
        return Embedding(net, list(self.attach_edges), list(self.output_edges),
                         self.linearization, dict(self.variances), self.kind,
                         dict(self.meta))


class Step(NamedTuple):
    kind: str          # "kron", "z", "tree", "contract", "absorb"
    A: frozenset
    B: frozenset


@dataclass
class SketchPlan:
    """Ordered pairwise contractions with their flop counts.

    ``per_step_flops`` follow the two-flops-per-multiply-add convention;
    ``modeled_cost`` is the multiply-add total.
    """

    steps: list
    per_step_flops: list
    T0: ContractionTree
    data_vertices: frozenset
    signature: tuple
    meta: dict = field(default_factory=dict)

    @property
    def total_flops(self) -> int:
        return sum(self.per_step_flops)

    @property
    def modeled_cost(self) -> int:
        return self.total_flops // 2

    def flops_by_kind(self) -> dict:
        out = {}
        for st, f in zip(self.steps, self.per_step_flops):
            out[st.kind] = out.get(st.kind, 0) + f
        return out

    @property
    def resulting_tree(self) -> ContractionTree:
        return ContractionTree.from_pairs([(s.A, s.B) for s in self.steps])

    def is_constrained(self) -> bool:
        return validate_constrained(self.resulting_tree, self.T0)


def _signature(data: TensorNetwork):
    return tuple((e.id, e.size, tuple(sorted(map(repr, e.endpoints))), e.dangling)
                 for e in data.edges)


def combine(data: TensorNetwork, emb: Embedding, tensors=True) -> TensorNetwork:
    """Join data and embedding networks along the attachment edges."""
    clash = set(data.vertices) & set(emb.network.vertices)
    if clash:
        raise ValueError(f"vertex ids used by both data and embedding: {clash}")
    attach = set(emb.attach_edges)
    extra = {}
    for e in emb.network.edges:
        if e.id in attach:
            extra[e.id] = e.endpoints
    edges = []
    for e in data.edges:
        if e.id in attach:
            if emb.network.edge(e.id).size != e.size:
                raise ValueError("plan/data inconsistency")
            edges.append(Hyperedge(e.id, e.endpoints + extra[e.id], False, e.size))
        else:
            edges.append(e)
    missing = attach - {e.id for e in data.edges}
    if missing:
        raise ValueError(f"attachment edges missing from data: {missing}")
    edges += [e for e in emb.network.edges if e.id not in attach]
    net = TensorNetwork(list(data.vertices) + list(emb.network.vertices), edges)
    if tensors:
        for src in (data, emb.network):
            for v in src.vertices:
                t = src.tensor(v)
                if t is not None:
                    net.bind(v, t)
    return net


# Z_i internal edge ---------------------------------------------------------------

def zi_internal_edge(a, b=None, c=None, d=None, m=None, strict_accuracy=False) -> int:
    """Size ``alpha`` of the far operand's sketch output read by the first tensor.

    The far operand's ``m``-sized output is split as ``alpha x ceil(m/alpha)``;
    the first tensor reads the near output and the ``alpha`` piece, the second
    reads the rest. ``alpha`` balances the first step (``abd m^2 alpha``)
    against the last (``acd m^3 / alpha``): ``round(sqrt(c m / b))`` when
    ``a <= c`` and ``round(sqrt(a m / b))`` otherwise, clamped to ``[1, m]``.
    With ``strict_accuracy`` it is ``m`` and the far output goes whole into
    the first tensor.

    ``a`` may also be a :class:`~tnsketch.bounds.ContractionLabels`, in
    which case the second positional argument is ``m``.
    """
    if hasattr(a, "abcd"):
        lb, m = a, b
        a, b, c = lb.a, lb.b, lb.c
    if strict_accuracy:
        return int(m)
    num = (c if a <= c else a) * m
    alpha = int(round(math.sqrt(num / b)))
    return max(1, min(int(m), alpha))


# plan recording -------------------------------------------------------------------

class _Recorder:
    """Simulates fusions on the combined topology and logs flop counts."""

    def __init__(self, spec, emb, T0):
        self.net = combine(spec.data, emb, tensors=False)
        self.steps, self.flops = [], []
        self.spec, self.T0 = spec, T0

    def step(self, kind, A, B):
        A, B = frozenset(A), frozenset(B)
        _, f = self.net.fuse(A, B)
        self.steps.append(Step(kind, A, B))
        self.flops.append(f)
        return A | B

    def size_after(self, A, B):
        va, vb = self.net.resolve(A), self.net.resolve(B)
        _, keep, _, _ = self.net._plan_fuse(va, vb)
        return math.prod(self.net.edge(e).size for e in keep)

    def size(self, A):
        return self.net.vertex_size(self.net.resolve(A))

    def finish(self, meta=None):
        return SketchPlan(self.steps, self.flops, self.T0,
                          frozenset(self.spec.data.vertices),
                          _signature(self.spec.data), meta or {})


class _EmbBuilder:
    def __init__(self, spec):
        self.spec = spec
        self.vertices = []
        self.modes = {}
        self.sizes = {}
        self.ends = {}
        self.var = {}
        self.used = set(spec.data.vertices)

    def vertex(self, v, modes, variance):
        if v in self.used:
            raise ValueError(f"embedding vertex id {v!r} collides with data")
        self.used.add(v)
        self.vertices.append(v)
        self.modes[v] = list(modes)
        self.var[v] = variance
        for e in modes:
            self.ends.setdefault(e, []).append(v)

    def edge_size(self, e, size):
        self.sizes[e] = int(size)

    def finish(self, kind, ordering=None, meta=None):
        attach = list(self.spec.sketch_edges)
        for e in attach:
            self.sizes[e] = self.spec.data.edge(e).size
        edges, outputs = [], []
        seen = []
        for v in self.vertices:
            for e in self.modes[v]:
                if e not in seen:
                    seen.append(e)
        for e in seen:
            eps = tuple(self.ends[e])
            if e in attach:
                edges.append(Hyperedge(e, eps, True, self.sizes[e]))
            elif len(eps) == 1 or e in (meta or {}).get("free_edges", ()):
                edges.append(Hyperedge(e, eps, True, self.sizes[e]))
                outputs.append(e)
            else:
                edges.append(Hyperedge(e, eps, False, self.sizes[e]))
        net = TensorNetwork(self.vertices, edges)
        lin = Linearization(list(ordering or self.vertices), list(self.spec.data.vertices))
        return Embedding(net, attach, outputs, lin, dict(self.var), kind, dict(meta or {}))


def _kron_ids(e):
    return f"K:{e}", f"k:{e}"


def _split_sizes(alpha, m):
    """Sizes of the two pieces of a far-side output: ``alpha`` and ``ceil(m / alpha)``."""
    return alpha, -(-m // alpha)


def _tree_schedule(spec, T0, strict_accuracy, single):
    """Shared Kronecker stage plus S-step construction for alg1/tree.

    In the small-network variant the far operand's sketch output is split
    into an ``alpha``-sized edge read by the first tensor and a
    ``ceil(m / alpha)``-sized edge read by the second, so every tensor
    keeps row size at least ``m``.
    """
    spec.validate()
    m = spec.m
    cls = classify_contractions(spec, T0)
    lbls = all_labels(spec, T0)
    own = spec.sketch_vertex()
    kopt = {e: stt_cost(spec, T0, j, m, cls)[1] for j, e in enumerate(spec.sketch_edges)}

    # who produces each group's sketch output, and which S step reads it
    producer = {frozenset([v]): None for v in spec.data.vertices}
    for e, v in own.items():
        producer[frozenset([v])] = ("kron", e)
    zinfo, far_split = {}, {}
    for i, (U, V) in enumerate(cls.path):
        pu, pv = producer.pop(U), producer.pop(V)
        if i in cls.S:
            lb = lbls[i]
            u_first = lb.a <= lb.c
            info = {"u_first": u_first, "near": pu if u_first else pv,
                    "far": pv if u_first else pu}
            if not single:
                alpha = zi_internal_edge(lb, m, strict_accuracy=strict_accuracy)
                info["alpha"] = alpha
                far_split[info["far"]] = alpha
            zinfo[i] = info
            producer[U | V] = ("z", i)
        else:
            producer[U | V] = pu if pu is not None else pv

    eb = _EmbBuilder(spec)
    outputs = {}

    def out_modes(prod, base):
        # sketch output edges of one producer: one m edge, or the split pair
        if single or prod not in far_split:
            eb.edge_size(base, m)
            outputs[prod] = ([base], [])
            return [base]
        al, rest = _split_sizes(far_split[prod], m)
        pieces = []
        if al > 1:
            eb.edge_size(base + ":a", al)
            pieces.append(base + ":a")
        if rest > 1:
            eb.edge_size(base + ":b", rest)
        outputs[prod] = (pieces, [base + ":b"] if rest > 1 else [])
        return pieces + outputs[prod][1]

    for e in spec.sketch_edges:
        kv, ke = _kron_ids(e)
        eb.vertex(kv, out_modes(("kron", e), ke) + [e], 1.0 / m)
    for i in cls.S:
        z = zinfo[i]
        near = outputs[z["near"]][0] + outputs[z["near"]][1]
        if single:
            far = outputs[z["far"]][0]
            tv = f"T{i}"
            mu, mv = (near, far) if z["u_first"] else (far, near)
            eb.vertex(tv, mu + mv + out_modes(("z", i), f"z{i}:out"), 1.0 / m)
            lb = lbls[i]
            costs = {"uv": lb.a * lb.c * lb.d, "u": lb.a * lb.b * lb.d,
                     "v": lb.b * lb.c * lb.d}
            z["tensor"] = tv
            z["order"] = min(("uv", "u", "v"), key=lambda k: costs[k])
        else:
            far_a, far_b = outputs[z["far"]]
            mid = f"z{i}:mid"
            eb.edge_size(mid, m)
            head, tail = f"Z{i}:head", f"Z{i}:tail"
            eb.vertex(head, near + far_a + [mid], 1.0 / m)
            eb.vertex(tail, [mid] + far_b + out_modes(("z", i), f"z{i}:out"), 1.0 / m)
            z["head"], z["tail"] = head, tail
    kind = "tree" if single else "alg1"
    meta = {"k_opt": {str(e): k for e, k in kopt.items()},
            "strict_accuracy": bool(strict_accuracy)}
    if not single:
        meta["alpha"] = {i: z["alpha"] for i, z in zinfo.items()}
    emb = eb.finish(kind, meta=meta)

    rec = _Recorder(spec, emb, T0)
    tb = {frozenset([v]): frozenset([v]) for v in spec.data.vertices}
    for e, v in own.items():
        if kopt[e] is None:
            g = frozenset([v])
            tb[g] = rec.step("kron", tb[g], [_kron_ids(e)[0]])
    for i, (U, V) in enumerate(cls.path):
        for e, k in kopt.items():
            if k == i:
                side = U if own[e] in U else V
                tb[side] = rec.step("kron", tb[side], [_kron_ids(e)[0]])
        Ug, Vg = tb.pop(U), tb.pop(V)
        if i in cls.S and single:
            z = zinfo[i]
            T = [z["tensor"]]
            if z["order"] == "uv":
                g = rec.step("tree", Ug, Vg)
                g = rec.step("tree", g, T)
            elif z["order"] == "u":
                g = rec.step("tree", rec.step("tree", Ug, T), Vg)
            else:
                g = rec.step("tree", rec.step("tree", Vg, T), Ug)
        elif i in cls.S:
            z = zinfo[i]
            near, far = (Ug, Vg) if z["u_first"] else (Vg, Ug)
            g = rec.step("z", near, [z["head"]])
            g = rec.step("z", g, far)
            g = rec.step("z", g, [z["tail"]])
        else:
            g = rec.step("contract", Ug, Vg)
        tb[U | V] = g
    emb = _set_variances(emb)
    return emb, rec.finish({"builder": kind})


def _set_variances(emb):
    rows = row_sizes(emb.network, emb.linearization.ordering, emb.attach_edges)
    emb.variances = {v: 1.0 / rows[v] for v in emb.network.vertices}
    return emb


def build_alg1_embedding(spec: SketchSpec, T0: ContractionTree, strict_accuracy=False):
    """Kronecker stage plus one two-tensor small network per S contraction.

    Returns
    -------
    emb : Embedding
    plan : SketchPlan
    """
    return _tree_schedule(spec, T0, strict_accuracy, single=False)


def build_tree_embedding(spec: SketchSpec, T0: ContractionTree):
    """Kronecker stage plus one order-3 Gaussian tensor per S contraction."""
    return _tree_schedule(spec, T0, False, single=True)


def build_tt_embedding(spec: SketchSpec, output="last") -> Embedding:
    """Chain of Gaussian tensors with ranks ``m`` and the output at one end."""
    spec.validate()
    m, N = spec.m, spec.N
    eb = _EmbBuilder(spec)
    verts = [f"TT{j}" for j in range(N)]
    out_at = N - 1 if output == "last" else 0
    for j, e in enumerate(spec.sketch_edges):
        modes = [e]
        if j > 0:
            modes.append(f"tt:{j - 1}-{j}")
        if j < N - 1:
            modes.append(f"tt:{j}-{j + 1}")
            eb.edge_size(f"tt:{j}-{j + 1}", m)
        if j == out_at:
            modes.insert(0, "tt:out")
            eb.edge_size("tt:out", m)
        eb.vertex(verts[j], modes, 1.0 / m)
    order = verts if output == "last" else verts[::-1]
    emb = eb.finish("tt", ordering=order)
    return _set_variances(emb)


def build_khatri_rao_embedding(spec: SketchSpec) -> Embedding:
    """Gaussian matrices joined by one free hyperedge (row-wise Kronecker).

    The sketch is the entrywise product of the per-mode sketches. Each
    factor has variance ``m ** (-1/N)`` so the squared norm is unbiased.
    """
    spec.validate()
    m, N = spec.m, spec.N
    eb = _EmbBuilder(spec)
    eb.edge_size("kr:out", m)
    for j, e in enumerate(spec.sketch_edges):
        eb.vertex(f"KR{j}", ["kr:out", e], m ** (-1.0 / N))
    return eb.finish("khatri-rao", meta={"free_edges": ["kr:out"]})


def build_gaussian_embedding(spec: SketchSpec) -> Embedding:
    """A single dense Gaussian map on all sketch edges."""
    spec.validate()
    eb = _EmbBuilder(spec)
    eb.edge_size("g:out", spec.m)
    eb.vertex("G", ["g:out"] + list(spec.sketch_edges), 1.0 / spec.m)
    return eb.finish("gaussian")


def plan_embedding(spec: SketchSpec, T0: ContractionTree, emb: Embedding) -> SketchPlan:
    """Greedy schedule of any embedding that respects ``T0``.

    After each data contraction (and at the leaves), an embedding vertex is
    absorbed into a group once all of its attachment edges lie inside the
    group and the absorption either shrinks the intermediate or connects to
    an embedding vertex already absorbed. Leftover vertices are absorbed at
    the end.
    """
    rec = _Recorder(spec, emb, T0)
    dv = set(spec.data.vertices)
    order = [v for v in emb.linearization.ordering if v in set(emb.vertices)]
    order += [v for v in emb.vertices if v not in set(order)]
    attach_of = {v: set() for v in emb.vertices}
    nbrs = {v: set() for v in emb.vertices}
    for e in rec.net.edges:
        ev = [u for u in e.endpoints if u not in dv]
        dd = [u for u in e.endpoints if u in dv]
        for u in ev:
            attach_of[u] |= set(dd)
            nbrs[u] |= set(ev) - {u}
    pending = list(order)

    def absorb(G, final=False):
        changed = True
        while changed:
            changed = False
            for x in list(pending):
                if not attach_of[x] <= G:
                    continue
                if final and not (nbrs[x] & G or attach_of[x]):
                    continue
                shrink = rec.size_after(G, [x]) <= rec.size(G)
                if final or shrink or (nbrs[x] & G):
                    G = rec.step("absorb", G, [x])
                    pending.remove(x)
                    changed = True
        return G

    tb = {}
    for v in spec.data.vertices:
        tb[frozenset([v])] = absorb(frozenset([v]))
    for U, V in T0.path:
        tb[U | V] = absorb(rec.step("contract", tb.pop(U), tb.pop(V)))
    (G,) = tb.values()
    while pending:
        before = len(pending)
        G = absorb(G, final=True)
        if len(pending) == before:
            G = rec.step("absorb", G, [pending.pop(0)])
    return rec.finish({"builder": emb.kind})


BUILDERS = ("tn", "tree", "tt", "khatri-rao", "gaussian")


def build(kind, spec, T0, strict_accuracy=False):
    """Embedding and plan for a named builder."""
    if kind in ("tn", "alg1"):
        return build_alg1_embedding(spec, T0, strict_accuracy)
    if kind == "tree":
        return build_tree_embedding(spec, T0)
    if kind == "tt":
        emb = build_tt_embedding(spec)
    elif kind in ("khatri-rao", "kr"):
        emb = build_khatri_rao_embedding(spec)
    elif kind == "gaussian":
        emb = build_gaussian_embedding(spec)
    else:
        raise ValueError(f"unknown embedding kind {kind!r}")
    return emb, plan_embedding(spec, T0, emb)


# accuracy condition -------------------------------------------------------------------

class ConditionResult(NamedTuple):
    satisfied: bool
    ordering: list
    failing: list


def _graph_parts(net, attach):
    attach = set(attach)
    verts = net.vertices
    idx = {v: i for i, v in enumerate(verts)}
    eu, ev, lw = [], [], []
    out = np.zeros(len(verts))
    for e in net.edges:
        eps = e.endpoints
        if len(eps) > 2 or (len(eps) == 2 and e.dangling):
            raise ValueError("not a graph embedding")
        if e.id in attach:
            continue
        if len(eps) == 1:
            out[idx[eps[0]]] += e.log_weight
        else:
            eu.append(idx[eps[0]])
            ev.append(idx[eps[1]])
            lw.append(e.log_weight)
    return verts, idx, np.array(eu, dtype=np.int64), np.array(ev, dtype=np.int64), \
        np.array(lw), out


def row_sizes(net: TensorNetwork, ordering, attach_edges) -> dict:
    """Effective row size of every embedding vertex under an ordering.

    A vertex's rows are its output edges and its edges to later vertices.
    Attachment edges always come from data and never count. Hyperedges with
    a free end (Khatri-Rao) count as outputs of each endpoint.
    """
    pos = {v: i for i, v in enumerate(ordering)}
    attach = set(attach_edges)
    rows = {v: 1 for v in net.vertices}
    for e in net.edges:
        if e.id in attach:
            continue
        eps = e.endpoints
        if e.dangling:
            for u in eps:
                rows[u] *= e.size
        else:
            first = min(eps, key=pos.__getitem__)
            rows[first] *= e.size
    return rows


def _reverse_bfs(net, attach):
    attach = set(attach)
    outs = [e for e in net.edges if e.dangling and e.id not in attach]
    start = [u for e in outs for u in e.endpoints]
    seen, queue = [], []
    for u in start:
        if u not in seen:
            seen.append(u)
            queue.append(u)
    adj = {v: [] for v in net.vertices}
    for e in net.edges:
        if not e.dangling:
            for u in e.endpoints:
                adj[u] += [w for w in e.endpoints if w != u]
    while queue:
        u = queue.pop(0)
        for w in adj[u]:
            if w not in seen:
                seen.append(w)
                queue.append(w)
    seen += [v for v in net.vertices if v not in seen]
    return seen[::-1]


def check_sufficient_condition(emb: Embedding, m: int) -> ConditionResult:
    """Search for a linearization in which every tensor has row size >= m.

    Tries the reversed breadth-first order from the output, then the
    builder's own ordering, then all orderings when there are at most eight
    embedding vertices.

    Returns
    -------
    ConditionResult
        ``(satisfied, ordering, failing)``; ``failing`` lists vertices
        below ``m`` in the best ordering found.
    """
    net = emb.network
    verts, idx, eu, ev, lw, out = _graph_parts(net, emb.attach_edges)
    best_order, best_rows = None, None
    own = [v for v in emb.linearization.ordering if v in idx]
    cands = [_reverse_bfs(net, emb.attach_edges)]
    if sorted(map(repr, own)) == sorted(map(repr, verts)):
        cands.append(own)
    for order in cands:
        rows = row_sizes(net, order, emb.attach_edges)
        if min(rows.values()) >= m:
            return ConditionResult(True, order, [])
        if best_rows is None or min(rows.values()) > min(best_rows.values()):
            best_order, best_rows = order, rows
    n = len(verts)
    if n <= 8:
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        vals = _accel.perm_min_row_log(perms, eu, ev, lw, out)
        k = int(np.argmax(vals))
        cand = [verts[i] for i in perms[k]]
        crow = row_sizes(net, cand, emb.attach_edges)
        if min(crow.values()) > min(best_rows.values()):
            best_order, best_rows = cand, crow
        if min(crow.values()) >= m:
            return ConditionResult(True, cand, [])
    failing = [v for v in best_order if best_rows[v] < m]
    return ConditionResult(False, best_order, failing)


# execution -------------------------------------------------------------------------------

def _dangling_data_modes(spec):
    sk = set(spec.sketch_edges)
    return [e.id for e in spec.data.edges if e.dangling and e.id not in sk]


def execute_plan(plan: SketchPlan, spec: SketchSpec, emb: Embedding, rng=None):
    """Run a plan on bound data.

    Parameters
    ----------
    plan : SketchPlan
    spec : SketchSpec
        Its data network must have all tensors bound.
    emb : Embedding
        Bound, or drawn here from ``rng``.
    rng : RandomSource, optional

    Returns
    -------
    result : DenseTensor
        Output sketch mode first, then the unsketched free data modes in
        data declaration order.
    report : CostReport
        ``achieved_flops`` is the executed flop count.
    """
    if _signature(spec.data) != plan.signature:
        raise ValueError("plan/data inconsistency")
    if not spec.data.is_bound():
        raise ValueError("missing operand")
    if not emb.is_bound():
        if rng is None:
            raise ValueError("missing operand")
        emb = emb.bind(rng)
    net = combine(spec.data, emb)
    total = 0
    per_step = []
    for st, want in zip(plan.steps, plan.per_step_flops):
        try:
            va, vb = net.resolve(st.A), net.resolve(st.B)
        except ValueError:
            raise ValueError("plan/data inconsistency") from None
        ta, tb = net.tensor(va), net.tensor(vb)
        dims = dict(zip(ta.modes, ta.shape))
        dims.update(zip(tb.modes, tb.shape))
        recount = 2 * math.prod(dims.values())
        _, f = contract_pair(net, va, vb)
        if recount != f or f != want:
            raise ValueError("plan/data inconsistency")
        per_step.append(f)
        total += f
    if len(net.vertices) != 1:
        raise ValueError("plan/data inconsistency")
    res = net.tensor(net.vertices[0])
    res = res.transpose_to(list(emb.output_edges) + _dangling_data_modes(spec))
    try:
        rep = cost_report(spec, plan.T0, spec.m, embedding="tree"
                          if emb.kind == "tree" else "tn")
        rep = rep.in_flops(total)
    except ValueError:
        rep = CostReport(total, 0, 0, 0, None, 0, float("nan"), False)
    rep.extra["per_step_flops"] = per_step
    rep.extra["by_kind"] = plan.flops_by_kind()
    return res, rep


def _fresh_product(y, g_modes, g_shape, variance, keep, gen, memo=None):
    """Draw ``G x Y`` for an iid Gaussian ``G`` independent of ``Y``.

    Returns None when a shared mode survives as a batch mode. ``memo``, a
    dict, keeps the triangular factor of ``Y`` between calls.
    """
    ym = list(y.modes)
    shared = [e for e in g_modes if e in ym]
    if any(e in keep for e in shared):
        return None
    dims = dict(zip(g_modes, g_shape))
    K = [e for e in g_modes if e not in shared]
    B = [e for e in ym if e not in shared]
    nK = math.prod(dims[e] for e in K)
    nC = math.prod(dims[e] for e in shared)
    Y = y.transpose_to(shared + B).values.reshape(nC, -1)
    nB = Y.shape[1]
    sd = math.sqrt(variance)
    if nB < nC:
        # rows of G Y are iid N(0, variance * Y^T Y)
        R = memo.get("r") if memo is not None else None
        if R is None:
            R = np.linalg.qr(Y, mode="r")
            if memo is not None:
                memo["r"] = R
        vals = sd * (gen.standard_normal((nK, R.shape[0])) @ R)
    else:
        vals = sd * (gen.standard_normal((nK, nC)) @ Y)
    ydim = dict(zip(ym, y.shape))
    out = DenseTensor(K + B, vals.reshape([dims[e] for e in K] + [ydim[e] for e in B]))
    return out.transpose_to(keep)


def sample_sketch(plan: SketchPlan, spec: SketchSpec, emb: Embedding, rng: RandomSource,
                  cache=None):
    """Draw a tensor with the same distribution as the sketch a plan computes.

    Every embedding tensor enters the plan once, as a fresh operand. When
    that step sums out all modes it shares with the other operand, the
    product is drawn from its Gaussian law instead of drawing the tensor,
    so memory and time scale with the product rather than the tensor.
    Other steps draw the tensor explicitly. The flop count returned is the
    plan's, not the work done here.

    Passing the same dict as ``cache`` to repeated calls on one plan and
    data reuses every step that involves no embedding tensor.

    Returns
    -------
    sample : DenseTensor
        Output mode first, then the unsketched free data modes.
    flops : int
    """
    if _signature(spec.data) != plan.signature:
        raise ValueError("plan/data inconsistency")
    if not spec.data.is_bound():
        raise ValueError("missing operand")
    net = combine(spec.data, emb)
    index = {v: i for i, v in enumerate(emb.network.vertices)}
    dv = frozenset(spec.data.vertices)
    for k, st in enumerate(plan.steps):
        va, vb = net.resolve(st.A), net.resolve(st.B)
        if cache is not None and (st.A | st.B) <= dv:
            if k not in cache:
                cache[k] = contract_pair(net, va, vb)[0]
            else:
                _, keep, gone, _ = net._plan_fuse(va, vb)
                new = net._apply_fuse(va, vb, keep, gone)
                net._tensors[new] = cache[k]
            continue
        fresh = [v for v in (va, vb) if v in index and net.tensor(v) is None]
        if len(fresh) == 1:
            g = fresh[0]
            other = vb if g == va else va
            _, keep, gone, _ = net._plan_fuse(va, vb)
            modes = net.incident(g)
            shape = [net.edge(e).size for e in modes]
            gen = rng.child(index[g]).generator()
            memo = None
            if cache is not None and net.members(other) <= dv:
                memo = cache.setdefault(("fresh", k), {})
            t = _fresh_product(net.tensor(other), list(modes), shape,
                               emb.variances[g], keep, gen, memo)
            if t is not None:
                new = net._apply_fuse(va, vb, keep, gone)
                net._tensors[new] = t
                continue
        for v in fresh:
            modes = net.incident(v)
            shape = [net.edge(e).size for e in modes]
            net.bind(v, gaussian_tensor(shape, emb.variances[v], rng.child(index[v]), modes))
        contract_pair(net, va, vb)
    res = net.tensor(net.vertices[0])
    res = res.transpose_to(list(emb.output_edges) + _dangling_data_modes(spec))
    return res, plan.total_flops


def materialize_dense(obj, order=None, limit=ORACLE_LIMIT) -> DenseTensor:
    """Dense form of a bound embedding or data network.

    For an embedding the result is the ``m x prod(s_j)`` matrix with the
    attachment edges in declared order. For a network it is the full
    tensor with modes ``order`` (default: all free edges in declared order).
    """
    if isinstance(obj, Embedding):
        net = obj.network
        rows = obj.m
        cols = math.prod(net.edge(e).size for e in obj.attach_edges)
        if rows * cols > limit:
            raise ValueError("oracle too large")
        if not net.is_bound():
            raise ValueError("missing operand")
        t, _ = contract_greedy(net.copy(), list(obj.output_edges) + list(obj.attach_edges))
        return DenseTensor(("rows", "cols"), t.values.reshape(rows, cols))
    net = obj
    if order is None:
        order = net.dangling_edges()
    size = math.prod(net.edge(e).size for e in order)
    if size > limit:
        raise ValueError("oracle too large")
    if not net.is_bound():
        raise ValueError("missing operand")
    t, _ = contract_greedy(net.copy(), list(order))
    return t


# dump format -------------------------------------------------------------------------------

def embedding_to_dict(emb: Embedding) -> dict:
    """Network format plus ``attach``, ``output`` and ``variances``."""
    from .tn import network_to_dict
    d = network_to_dict(emb.network, [], tensors=True)
    d.pop("sketch_edges", None)
    d["attach"] = list(emb.attach_edges)
    d["output"] = list(emb.output_edges)
    d["ordering"] = list(emb.linearization.ordering)
    d["variances"] = {str(v): x for v, x in emb.variances.items()}
    d["kind"] = emb.kind
    return d


def embedding_from_dict(d: dict) -> Embedding:
    from .tn import network_from_dict
    net, _ = network_from_dict(d)
    var = {v: float(d["variances"][str(v)]) for v in net.vertices}
    return Embedding(net, list(d["attach"]), list(d["output"]),
                     Linearization(list(d.get("ordering", net.vertices))), var,
                     d.get("kind", "custom"))
