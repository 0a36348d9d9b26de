"""Contraction trees, cut/cost calculus and contraction classification.

Weights live in two forms: exact integer size products (``*_size``
functions) used for every comparison, and natural-log reals (``cut``,
``cost_pair``) that mirror the additive calculus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .tn import NetworkFormatError, TensorNetwork

__all__ = [
    "ContractionTree", "DirectedGraph", "SketchSpec", "Classification",
    "DimensionTree", "Linearization", "cut", "cut_size", "cost_pair",
    "cost_size", "without_edges", "linearize", "sketching_linearization",
    "classify_contractions", "validate_constrained", "dimension_tree",
    "subset_cut_table",
]


# contraction trees ------------------------------------------------------------

class _Node:
    __slots__ = ("left", "right", "members")

    def __init__(self, left, right):
        self.left, self.right = left, right
        self.members = _members(left) | _members(right)


def _members(x):
    return x.members if isinstance(x, _Node) else frozenset([x])


class ContractionTree:
    """Rooted binary tree whose leaves are vertices.

    Build with :meth:`from_nested` (lists of two children, leaves are plain
    ids) or :meth:`from_pairs` (a sequence of merges).
    """

    def __init__(self, root):
        self.root = root
        seen = set()
        stack = [root]
        while stack:
            x = stack.pop()
            if isinstance(x, _Node):
                if x.left is None or x.right is None:
                    raise NetworkFormatError("tree node needs two children")
                if _members(x.left) & _members(x.right):
                    raise NetworkFormatError("tree children overlap")
                stack += [x.left, x.right]
            else:
                if x in seen:
                    raise NetworkFormatError(f"vertex {x!r} appears twice in tree")
                seen.add(x)
        self.vertices = frozenset(seen)

    @classmethod
    def from_nested(cls, obj, where="$"):
        """Parse ``[[["v1","v2"],"v3"],"v4"]``-style nesting."""
        def build(o, w):
            if isinstance(o, (list, tuple)) and not isinstance(o, str):
                if len(o) == 1:
                    return build(o[0], w + "[0]")
                if len(o) != 2:
                    raise NetworkFormatError(f"{w}: expected two children, got {len(o)}")
                return _Node(build(o[0], w + "[0]"), build(o[1], w + "[1]"))
            if isinstance(o, dict):
                raise NetworkFormatError(f"{w}: expected vertex id or list")
            return o
        return cls(build(obj, where))

    @classmethod
    def from_pairs(cls, pairs, vertices=None):
        """Rebuild a tree from merges ``(A, B)`` given as vertex sets."""
        nodes = {}
        for v in vertices or ():
            nodes[frozenset([v])] = v
        for A, B in pairs:
            A, B = frozenset(A), frozenset(B)
            for X in (A, B):
                if X not in nodes:
                    if len(X) == 1:
                        nodes[X] = next(iter(X))
                    else:
                        raise ValueError(f"merge uses unknown group {set(X)}")
            nd = _Node(nodes.pop(A), nodes.pop(B))
            nodes[nd.members] = nd
        if len(nodes) != 1:
            raise ValueError("merges do not form a single tree")
        return cls(next(iter(nodes.values())))

    def to_nested(self):
        def rec(x):
            return [rec(x.left), rec(x.right)] if isinstance(x, _Node) else x
        return rec(self.root)

    @property
    def path(self) -> list:
        """Post-order, left-to-right list of contractions ``(U_i, V_i)``."""
        out = []
        stack = [(self.root, False)]
        while stack:
            x, done = stack.pop()
            if not isinstance(x, _Node):
                continue
            if done:
                out.append((_members(x.left), _members(x.right)))
            else:
                stack += [(x, True), (x.right, False), (x.left, False)]
        return out

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"ContractionTree({self.to_nested()!r})"


def validate_constrained(TB: ContractionTree, T0: ContractionTree) -> bool:
    """True when every contraction of ``T0`` appears in ``TB`` restricted to data."""
    VD = T0.vertices
    have = set()
    for A, B in TB.path:
        a, b = A & VD, B & VD
        have.add((a, b))
        have.add((b, a))
    return all((U, V) in have for U, V in T0.path)


# graph views ------------------------------------------------------------------

@dataclass
class DirectedGraph:
    """Directed graph with weighted edges and outward free edges.

    ``edges`` holds ``(tail, head, size)``; ``head`` is None for a free
    (uncontracted) edge.
    """

    vertices: list
    edges: list = field(default_factory=list)


def _check_sets(vertices, A, B=None):
    A = frozenset(A)
    if not A <= vertices:
        raise ValueError("invalid cut query")
    if B is None:
        return A, None
    B = frozenset(B)
    if not B <= vertices or A & B:
        raise ValueError("invalid cut query")
    return A, B


def _cut_edges(g, A, B=None):
    """Yield sizes of edges in the cut."""
    if isinstance(g, DirectedGraph):
        A, B = _check_sets(frozenset(g.vertices), A, B)
        for u, v, s in g.edges:
            if u not in A:
                continue
            if B is None:
                if v is None or v not in A:
                    yield s
            elif v is not None and v in B:
                yield s
        return
    A, B = _check_sets(frozenset(g.vertices), A, B)
    for e in g.edges:
        eps = e.endpoints
        if not any(u in A for u in eps):
            continue
        if B is None:
            if e.dangling or any(u not in A for u in eps):
                yield e.size
        elif any(u in B for u in eps):
            yield e.size


def cut_size(g, A, B=None) -> int:
    """Exact ``exp(cut)``: product of sizes of the cut edges."""
    return math.prod(_cut_edges(g, A, B))


def cut(g, A, B=None) -> float:
    """Weighted cut in log units.

    ``cut(g, A)`` sums edges touching ``A`` that leave it or have a free
    end. ``cut(g, A, B)`` sums edges touching both. On a
    :class:`DirectedGraph` only edges pointing out of ``A`` (into ``B``)
    count.
    """
    return float(sum(math.log(s) for s in _cut_edges(g, A, B)))


def cost_size(g, A, B) -> int:
    """Exact ``exp(cost)`` = size product of all edges touching A or B."""
    num = cut_size(g, A) * cut_size(g, B)
    den = cut_size(g, A, B)
    q, r = divmod(num, den)
    assert r == 0
    return q


def cost_pair(g, A, B) -> float:
    """``cut(A) + cut(B) - cut(A, B)`` in log units."""
    return cut(g, A) + cut(g, B) - cut(g, A, B)


def without_edges(net: TensorNetwork, drop) -> TensorNetwork:
    """Topology of ``net`` with the edges in ``drop`` removed."""
    drop = set(drop)
    return TensorNetwork(net.vertices, [e for e in net.edges if e.id not in drop])


def only_edges(net: TensorNetwork, keep) -> TensorNetwork:
    keep = set(keep)
    return TensorNetwork(net.vertices, [e for e in net.edges if e.id in keep])


@dataclass
class Linearization:
    """Vertex ordering of an embedding, data vertices implicitly first."""

    ordering: list
    data_vertices: list = field(default_factory=list)

    @property
    def full_order(self):
        return list(self.data_vertices) + list(self.ordering)


def linearize(net: TensorNetwork, order) -> DirectedGraph:
    """Direct a graph along a vertex order.

    Edges joining two vertices point toward the later one; free edges point
    outward. Hyperedges with more than two endpoints are rejected.
    """
    pos = {v: i for i, v in enumerate(order)}
    if set(pos) != set(net.vertices):
        raise ValueError("ordering must list every vertex once")
    g = DirectedGraph(list(order))
    for e in net.edges:
        eps = e.endpoints
        if len(eps) > 2 or (len(eps) == 2 and e.dangling):
            raise ValueError("not a graph embedding")
        if len(eps) == 1:
            g.edges.append((eps[0], None, e.size))
        else:
            u, v = sorted(eps, key=pos.__getitem__)
            g.edges.append((u, v, e.size))
    return g


def sketching_linearization(combined: TensorNetwork, data_vertices, emb_order,
                            data_edges=None) -> DirectedGraph:
    """The directed graph G_S on the embedding part of a combined network.

    Only edges touching an embedding vertex (attachment, internal and
    output edges) are kept; data vertices come first in the order.
    """
    dv = set(data_vertices)
    keep = [e for e in combined.edges if any(u not in dv for u in e.endpoints)]
    L = TensorNetwork(combined.vertices, keep)
    return linearize(L, list(data_vertices) + list(emb_order))


def subset_cut_table(g, vertices, subsets):
    """Cuts of many subsets at once via bitmask kernels.

    Parameters
    ----------
    g : TensorNetwork or DirectedGraph
    vertices : list
        Vertex order defining bit positions (at most 62).
    subsets : iterable of int bitmasks

    Returns
    -------
    ndarray of float
    """
    bit = {v: 1 << i for i, v in enumerate(vertices)}
    tails, heads, dang, logw = [], [], [], []
    if isinstance(g, DirectedGraph):
        for u, v, s in g.edges:
            tails.append(bit[u])
            heads.append(0 if v is None else bit[v])
            dang.append(v is None)
            logw.append(math.log(s))
    else:
        for e in g.edges:
            mk = 0
            for u in e.endpoints:
                mk |= bit[u]
            tails.append(mk)
            heads.append(mk)
            dang.append(e.dangling)
            logw.append(e.log_weight)
    return _accel.subset_cuts(np.array(tails, dtype=np.int64),
                              np.array(heads, dtype=np.int64),
                              np.array(dang, dtype=bool), np.array(logw),
                              np.asarray(list(subsets), dtype=np.int64))


# sketch inputs and classification ----------------------------------------

@dataclass
class SketchSpec:
    """Data network, ordered sketch edges and the target sketch size.

    ``epsilon`` and ``delta`` are advisory only.
    """

    data: TensorNetwork
    sketch_edges: list
    m: int
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        self.sketch_edges = list(self.sketch_edges)
        self.m = int(self.m)

    @property
    def N(self) -> int:
        return len(self.sketch_edges)

    def sizes(self) -> list:
        return [self.data.edge(e).size for e in self.sketch_edges]

    def validate(self):
        if self.m < 1:
            raise ValueError("sketch size must be positive")
        if not self.sketch_edges:
            raise ValueError("nothing to sketch")
        owner = {}
        for eid in self.sketch_edges:
            if not self.data.has_edge(eid):
                raise ValueError(f"unknown sketch edge {eid!r}")
            e = self.data.edge(eid)
            if len(e.endpoints) != 1 or not e.dangling:
                raise ValueError("unsupported sketch dimension")
            v = e.endpoints[0]
            if v in owner:
                # two sketched modes on one tensor are never merged by S steps
                raise ValueError("unsupported sketch dimension")
            owner[v] = eid
            if e.size < self.m:
                raise ValueError("sketch dimension smaller than sketch size")
        return self

    def sketch_vertex(self) -> dict:
        return {e: self.data.edge(e).endpoints[0] for e in self.sketch_edges}

    def residual_view(self) -> TensorNetwork:
        """Data hypergraph without the sketch edges (graph R)."""
        return without_edges(self.data, self.sketch_edges)


@dataclass
class Classification:
    """Partition of the data contractions into D(e_j), S and I."""

    path: list
    D: dict
    S: list
    I: list
    X: dict

    def kind(self, i):
        if i in self.S:
            return "S"
        if i in self.I:
            return "I"
        for e, idx in self.D.items():
            if i in idx:
                return ("D", e)
        raise KeyError(i)


def classify_contractions(spec: SketchSpec, T0: ContractionTree) -> Classification:
    """Split the contractions of ``T0`` into per-edge D sets, S and I.

    S holds contractions whose two inputs both touch a sketch edge; D(e_j)
    those whose output touches only ``e_j`` among sketch edges; I the rest.
    Indices refer to ``T0.path``.
    """
    spec.validate()
    if T0.vertices != frozenset(spec.data.vertices):
        raise ValueError("contraction tree does not cover the data vertices")
    owner = {v: e for e, v in spec.sketch_vertex().items()}
    path = T0.path
    D = {e: [] for e in spec.sketch_edges}
    S, I = [], []
    for i, (U, V) in enumerate(path):
        eu = [owner[v] for v in U if v in owner]
        ev = [owner[v] for v in V if v in owner]
        if eu and ev:
            S.append(i)
        elif len(eu) + len(ev) == 1:
            D[(eu + ev)[0]].append(i)
        else:
            I.append(i)
    X = {}
    for e in spec.sketch_edges:
        if D[e]:
            U, V = path[D[e][-1]]
            X[e] = U | V
        else:
            X[e] = frozenset([spec.sketch_vertex()[e]])
    return Classification(path, D, S, I, X)


class _DNode:
    __slots__ = ("edges", "left", "right")

    def __init__(self, edges, left=None, right=None):
        self.edges, self.left, self.right = frozenset(edges), left, right


@dataclass
class DimensionTree:
    """How sketch edges are merged onto common tensors along ``T0``."""

    root: _DNode
    merges: list

    def to_nested(self):
        def rec(n):
            if n.left is None:
                return next(iter(n.edges))
            return [rec(n.left), rec(n.right)]
        return rec(self.root)

    @property
    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            if n.left is None:
                out.append(next(iter(n.edges)))
            else:
                stack += [n.right, n.left]
        return out


def dimension_tree(T0: ContractionTree, sketch_edges, owner=None) -> DimensionTree:
    """Dimension tree of ``T0`` for the given sketch edges.

    Parameters
    ----------
    T0 : ContractionTree
    sketch_edges : list or SketchSpec
        Either a spec, or edge ids together with ``owner`` (edge -> vertex).
    """
    if isinstance(sketch_edges, SketchSpec):
        owner = sketch_edges.sketch_vertex()
        sketch_edges = sketch_edges.sketch_edges
    inv = {v: e for e, v in owner.items()}
    node_of = {}
    for v, e in inv.items():
        node_of[frozenset([v])] = _DNode([e])
    merges = []
    for U, V in T0.path:
        a, b = node_of.pop(U, None), node_of.pop(V, None)
        if a is not None and b is not None:
            n = _DNode(a.edges | b.edges, a, b)
            merges.append((a.edges, b.edges))
        else:
            n = a if a is not None else b
        if n is not None:
            node_of[U | V] = n
    roots = list(node_of.values())
    if len(roots) != 1:
        raise ValueError("sketch edges are not all reached by the tree")
    return DimensionTree(roots[0], merges)
