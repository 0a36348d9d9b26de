"""Hypergraph tensor networks, dense storage and pairwise contraction.

A network is a set of vertices joined by hyperedges. An edge with a free
end (``dangling``) contributes an output mode of the represented tensor,
even when it also touches several vertices (a CP rank index shared by all
factors is one such edge). Contracting two vertex groups sums out every
edge that has no endpoint left outside the pair and no free end; any other
shared edge survives as a batch mode.

Flop counts follow the dense matrix-multiplication convention of two flops
per multiply-add and are exact Python integers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np

__all__ = [
    "Hyperedge", "DenseTensor", "RandomSource", "TensorNetwork",
    "NetworkFormatError", "contract_pair", "contract_greedy",
    "gaussian_tensor", "tn_norm", "fill_uniform", "network_from_dict",
    "network_to_dict", "load_network", "save_network",
]


@dataclass(frozen=True)
class Hyperedge:
    """One index of a tensor network.

    Parameters
    ----------
    id : hashable
        Edge identifier, unique inside a network.
    endpoints : tuple
        Vertices the edge touches (at least one).
    dangling : bool
        True when the edge also has a free end, i.e. it is an output mode.
    size : int
        Dimension of the index.
    """

    id: Hashable
    endpoints: tuple
    dangling: bool
    size: int

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        if len(self.endpoints) < 1:
            raise ValueError(f"edge {self.id!r} has no endpoints")
        if len(set(self.endpoints)) != len(self.endpoints):
            raise ValueError(f"edge {self.id!r} repeats an endpoint")
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"edge {self.id!r} has invalid size {self.size!r}")
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "dangling", bool(self.dangling))

    @property
    def log_weight(self) -> float:
        return math.log(self.size)


class DenseTensor:
    """Row-major double precision array with one label per mode."""

    __slots__ = ("modes", "values")

    def __init__(self, modes, values):
        values = np.asarray(values, dtype=np.float64, order="C")
        modes = tuple(modes)
        if values.ndim != len(modes):
            raise ValueError(
                f"{len(modes)} mode labels for an order-{values.ndim} array")
        if len(set(modes)) != len(modes):
            raise ValueError("repeated mode label")
        self.modes = modes
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    def transpose_to(self, modes) -> "DenseTensor":
        modes = tuple(modes)
        perm = [self.modes.index(e) for e in modes]
        return DenseTensor(modes, self.values.transpose(perm))

    def __repr__(self):
        return f"DenseTensor(modes={self.modes}, shape={self.shape})"


@dataclass(frozen=True)
class RandomSource:
    """Seeded, stream-addressable source of random variates.

    Each ``(seed, stream_id, key)`` triple maps to its own counter-based
    Philox stream, so embedding tensors drawn from different children are
    independent and reproducible.
    """

    seed: int
    stream_id: int = 0
    key: tuple = field(default=())

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            int(self.seed) % 2 ** 64,
            spawn_key=(int(self.stream_id) % 2 ** 64,)
            + tuple(int(k) % 2 ** 64 for k in self.key))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *key) -> "RandomSource":
        return RandomSource(self.seed, self.stream_id, self.key + tuple(key))


def gaussian_tensor(shape, variance, rng: RandomSource, modes=None) -> DenseTensor:
    """I.i.d. normal tensor with the given variance.

    Parameters
    ----------
    shape : sequence of int
    variance : float
        Must be positive.
    rng : RandomSource
    modes : sequence, optional
        Mode labels; defaults to ``0..ndim-1``.
    """
    if not variance > 0:
        raise ValueError("invalid distribution")
    shape = tuple(int(s) for s in shape)
    vals = rng.generator().standard_normal(shape) * math.sqrt(variance)
    if modes is None:
        modes = tuple(range(len(shape)))
    return DenseTensor(modes, vals)


class NetworkFormatError(ValueError):
    """Malformed network or tree description."""


class TensorNetwork:
    """Weighted hypergraph with optional tensor bindings.

    Vertex mode order is the order in which edges were declared, unless a
    bound tensor fixes it. Contraction fuses two vertices into one whose id
    is the frozenset of the original vertices it contains.
    """

    def __init__(self, vertices: Iterable = (), edges: Iterable[Hyperedge] = (),
                 tensors: dict | None = None):
        self._edges: dict = {}
        self._modes: dict = {}
        self._tensors: dict = {}
        self._members: dict = {}
        self._by_members: dict = {}
        for v in vertices:
            self.add_vertex(v)
        for e in edges:
            self.add_edge(e)
        for v, t in (tensors or {}).items():
            self.bind(v, t)

    # construction -----------------------------------------------------
    def add_vertex(self, v, members=None):
        if v in self._modes:
            raise ValueError(f"duplicate vertex {v!r}")
        mem = frozenset([v]) if members is None else frozenset(members)
        self._modes[v] = []
        self._members[v] = mem
        self._by_members[mem] = v

    def add_edge(self, e: Hyperedge):
        if e.id in self._edges:
            raise ValueError(f"duplicate edge {e.id!r}")
        for v in e.endpoints:
            if v not in self._modes:
                raise ValueError(f"edge {e.id!r} touches unknown vertex {v!r}")
        if not e.dangling and len(e.endpoints) < 2:
            raise ValueError(f"edge {e.id!r} is a closed loop on one vertex")
        self._edges[e.id] = e
        for v in e.endpoints:
            self._modes[v].append(e.id)

    def bind(self, v, tensor):
        """Attach a tensor to vertex ``v``.

        ``tensor`` is a DenseTensor (any mode order, labels must be the
        incident edges) or an array in the vertex's declared mode order.
        """
        modes = tuple(self._modes[v])
        if not isinstance(tensor, DenseTensor):
            tensor = DenseTensor(modes, tensor)
        if set(tensor.modes) != set(modes):
            raise ValueError(f"tensor modes {tensor.modes} do not match "
                             f"edges {modes} of vertex {v!r}")
        tensor = tensor.transpose_to(modes)
        want = tuple(self._edges[e].size for e in modes)
        if tensor.shape != want:
            raise ValueError(f"vertex {v!r}: shape {tensor.shape} != {want}")
        self._tensors[v] = tensor

    def copy(self) -> "TensorNetwork":
        new = TensorNetwork.__new__(TensorNetwork)
        new._edges = dict(self._edges)
        new._modes = {v: list(m) for v, m in self._modes.items()}
        new._tensors = dict(self._tensors)
        new._members = dict(self._members)
        new._by_members = dict(self._by_members)
        return new

    # queries ------------------------------------------------------------
    @property
    def vertices(self) -> list:
        return list(self._modes)

    @property
    def edges(self) -> list:
        return list(self._edges.values())

    def edge(self, eid) -> Hyperedge:
        return self._edges[eid]

    def has_edge(self, eid) -> bool:
        return eid in self._edges

    def incident(self, v) -> tuple:
        return tuple(self._modes[v])

    def tensor(self, v):
        return self._tensors.get(v)

    def members(self, v) -> frozenset:
        return self._members[v]

    def is_bound(self) -> bool:
        return all(v in self._tensors for v in self._modes)

    def dangling_edges(self) -> list:
        return [e.id for e in self._edges.values() if e.dangling]

    def resolve(self, group):
        """Current vertex id holding exactly the original vertices ``group``."""
        if not isinstance(group, (set, frozenset, list)) and group in self._modes:
            return group
        key = frozenset(group) if isinstance(group, (set, frozenset, list, tuple)) \
            else frozenset([group])
        try:
            return self._by_members[key]
        except KeyError:
            raise ValueError("invalid contraction") from None

    def vertex_size(self, v) -> int:
        return math.prod(self._edges[e].size for e in self._modes[v])

    def __repr__(self):
        return f"TensorNetwork({len(self._modes)} vertices, {len(self._edges)} edges)"

    # bookkeeping for contraction ---------------------------------------------
    def _plan_fuse(self, va, vb):
        ma, mb = self._modes[va], self._modes[vb]
        sa = set(ma)
        union = list(ma) + [e for e in mb if e not in sa]
        flops = 2 * math.prod(self._edges[e].size for e in union)
        keep, gone = [], []
        for eid in union:
            e = self._edges[eid]
            rest = [u for u in e.endpoints if u != va and u != vb]
            if not rest and not e.dangling:
                gone.append(eid)
            else:
                keep.append(eid)
        return union, keep, gone, flops

    def fuse(self, A, B):
        """Merge two vertex groups without touching tensors.

        Returns
        -------
        new_vertex, flops : hashable, int
        """
        va, vb = self.resolve(A), self.resolve(B)
        if va == vb or self._members[va] & self._members[vb]:
            raise ValueError("invalid contraction")
        _, keep, gone, flops = self._plan_fuse(va, vb)
        return self._apply_fuse(va, vb, keep, gone), flops

    def _apply_fuse(self, va, vb, keep, gone):
        mem = self._members[va] | self._members[vb]
        new = mem
        for eid in gone:
            del self._edges[eid]
        for eid in keep:
            e = self._edges[eid]
            eps = []
            for u in e.endpoints:
                u = new if u in (va, vb) else u
                if u not in eps:
                    eps.append(u)
            self._edges[eid] = Hyperedge(e.id, tuple(eps), e.dangling, e.size)
        for v in (va, vb):
            del self._modes[v]
            self._tensors.pop(v, None)
            del self._by_members[self._members[v]]
            del self._members[v]
        self._modes[new] = list(keep)
        self._members[new] = mem
        self._by_members[mem] = new
        return new


def _pairwise(a, ma, b, mb, out_modes):
    """Contract two arrays over shared labels not in ``out_modes``.

    Shared labels listed in ``out_modes`` are batch modes. The product is
    cast as one batched matrix multiplication.
    """
    sb, sa, keep = set(mb), set(ma), set(out_modes)
    batch = [e for e in ma if e in sb and e in keep]
    con = [e for e in ma if e in sb and e not in keep]
    left = [e for e in ma if e not in sb]
    right = [e for e in mb if e not in sa]
    dim = {e: n for e, n in zip(ma, a.shape)}
    dim.update({e: n for e, n in zip(mb, b.shape)})
    nb = math.prod(dim[e] for e in batch)
    nl = math.prod(dim[e] for e in left)
    nc = math.prod(dim[e] for e in con)
    nr = math.prod(dim[e] for e in right)
    A = a.transpose([ma.index(e) for e in batch + left + con]).reshape(nb, nl, nc)
    B = b.transpose([mb.index(e) for e in batch + con + right]).reshape(nb, nc, nr)
    C = np.matmul(A, B).reshape([dim[e] for e in batch + left + right])
    cur = batch + left + right
    return C.transpose([cur.index(e) for e in out_modes])


def contract_pair(net: TensorNetwork, A, B):
    """Contract two vertex groups of ``net`` in place.

    Parameters
    ----------
    net : TensorNetwork
        Updated so that ``A`` and ``B`` become one vertex.
    A, B : vertex id or set of original vertex ids

    Returns
    -------
    tensor : DenseTensor
        Modes are the surviving edges, ``A``'s first.
    flops : int
        ``2 * prod(sizes of all edges touching A or B)``.
    """
    try:
        va, vb = net.resolve(A), net.resolve(B)
    except ValueError:
        raise ValueError("invalid contraction") from None
    if va == vb or net.members(va) & net.members(vb):
        raise ValueError("invalid contraction")
    ta, tb = net.tensor(va), net.tensor(vb)
    if ta is None or tb is None:
        raise ValueError("missing operand")
    _, keep, gone, flops = net._plan_fuse(va, vb)
    vals = _pairwise(ta.values, list(ta.modes), tb.values, list(tb.modes), keep)
    new = net._apply_fuse(va, vb, keep, gone)
    out = DenseTensor(keep, vals)
    net._tensors[new] = out
    return out, flops


def _greedy_pick(net: TensorNetwork):
    verts = net.vertices
    best = None
    seen = set()
    for e in net.edges:
        eps = e.endpoints
        for i in range(len(eps)):
            for j in range(i + 1, len(eps)):
                key = (eps[i], eps[j])
                if key in seen:
                    continue
                seen.add(key)
                _, keep, _, flops = net._plan_fuse(eps[i], eps[j])
                size = math.prod(net.edge(k).size for k in keep)
                cand = (size, flops)
                if best is None or cand < best[0]:
                    best = (cand, eps[i], eps[j])
    if best is None:
        # disconnected pieces: take the two smallest as an outer product
        order = sorted(verts, key=net.vertex_size)
        return order[0], order[1]
    return best[1], best[2]


def contract_greedy(net: TensorNetwork, out_modes=None):
    """Contract a whole network with a greedy smallest-intermediate order.

    The network is consumed. Returns ``(DenseTensor, flops)``.
    """
    flops = 0
    if len(net.vertices) == 0:
        raise ValueError("empty network")
    while len(net.vertices) > 1:
        va, vb = _greedy_pick(net)
        _, f = contract_pair(net, va, vb)
        flops += f
    (v,) = net.vertices
    t = net.tensor(v)
    if t is None:
        raise ValueError("missing operand")
    if out_modes is not None:
        t = t.transpose_to(out_modes)
    return t, flops


def tn_norm(net: TensorNetwork) -> float:
    """Euclidean norm of the tensor a network represents.

    The network is contracted against a copy of itself over every free
    index, so the full tensor is never formed unless the greedy order
    decides that is cheapest.
    """
    if not net.is_bound():
        raise ValueError("missing operand")
    if not net.dangling_edges():
        raise ValueError("network has no free index")
    tag = "†"
    verts, edges = [], []
    for v in net.vertices:
        verts += [v, (v, tag)]
    for e in net.edges:
        if e.dangling:
            eps = e.endpoints + tuple((u, tag) for u in e.endpoints)
            edges.append(Hyperedge(e.id, eps, False, e.size))
        else:
            edges.append(e)
            edges.append(Hyperedge((e.id, tag), tuple((u, tag) for u in e.endpoints),
                                   False, e.size))
    dbl = TensorNetwork(verts, edges)
    for v in net.vertices:
        t = net.tensor(v)
        dbl.bind(v, t)
        conj = [m if net.edge(m).dangling else (m, tag) for m in t.modes]
        dbl.bind((v, tag), DenseTensor(conj, t.values))
    val, _ = contract_greedy(dbl)
    sq = float(val.values)
    return math.sqrt(max(sq, 0.0))


def fill_uniform(net: TensorNetwork, seed: int):
    """Bind every vertex to i.i.d. uniform [0, 1) entries."""
    src = RandomSource(seed)
    for i, v in enumerate(net.vertices):
        shape = [net.edge(e).size for e in net.incident(v)]
        net.bind(v, src.child(i).generator().random(shape))
    return net


# JSON ------------------------------------------------------------------------

def _need(d, key, where):
    if key not in d:
        raise NetworkFormatError(f"{where}: missing key {key!r}")
    return d[key]


def network_from_dict(d: dict):
    """Build a network from the JSON description.

    Returns
    -------
    net : TensorNetwork
    sketch_edges : list
        Edge ids listed under ``"sketch_edges"`` (possibly empty).
    """
    if not isinstance(d, dict):
        raise NetworkFormatError("$: expected an object")
    verts = _need(d, "vertices", "$")
    if not isinstance(verts, list):
        raise NetworkFormatError("$.vertices: expected a list")
    edges = []
    for i, ed in enumerate(_need(d, "edges", "$")):
        where = f"$.edges[{i}]"
        if not isinstance(ed, dict):
            raise NetworkFormatError(f"{where}: expected an object")
        try:
            edges.append(Hyperedge(_need(ed, "id", where),
                                   tuple(_need(ed, "endpoints", where)),
                                   bool(ed.get("dangling", False)),
                                   _need(ed, "size", where)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, NetworkFormatError):
                raise
            raise NetworkFormatError(f"{where}: {exc}") from None
    try:
        net = TensorNetwork(verts, edges)
    except ValueError as exc:
        raise NetworkFormatError(f"$: {exc}") from None
    sk = list(d.get("sketch_edges", []))
    for j, e in enumerate(sk):
        if not net.has_edge(e):
            raise NetworkFormatError(f"$.sketch_edges[{j}]: unknown edge {e!r}")
    ts = d.get("tensors")
    if ts is None:
        pass
    elif ts == "random_uniform01":
        fill_uniform(net, int(d.get("seed", 0)))
    elif isinstance(ts, dict) and "random_uniform01" in ts:
        fill_uniform(net, int(ts["random_uniform01"].get("seed", 0)))
    elif isinstance(ts, dict):
        for v, spec in ts.items():
            where = f"$.tensors.{v}"
            if v not in net._modes:
                raise NetworkFormatError(f"{where}: unknown vertex")
            try:
                if isinstance(spec, dict):
                    net.bind(v, DenseTensor(_need(spec, "modes", where),
                                            np.asarray(_need(spec, "data", where))))
                else:
                    net.bind(v, np.asarray(spec, dtype=np.float64))
            except ValueError as exc:
                if isinstance(exc, NetworkFormatError):
                    raise
                raise NetworkFormatError(f"{where}: {exc}") from None
    else:
        raise NetworkFormatError("$.tensors: unsupported value")
    return net, sk


def network_to_dict(net: TensorNetwork, sketch_edges=(), tensors=True) -> dict:
    """Inverse of :func:`network_from_dict` (tensors inline)."""
    d = {
        "vertices": net.vertices,
        "edges": [{"id": e.id, "endpoints": list(e.endpoints),
                   "dangling": e.dangling, "size": e.size} for e in net.edges],
        "sketch_edges": list(sketch_edges),
    }
    if tensors and net.is_bound() and net.vertices:
        d["tensors"] = {v: {"modes": list(net.tensor(v).modes),
                            "data": net.tensor(v).values.tolist()}
                        for v in net.vertices}
    return d


def load_network(path):
    """Read a network file; parse errors carry line and column."""
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return network_from_dict(d)
    except NetworkFormatError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from None


def save_network(path, net, sketch_edges=()):
    with open(path, "w") as fh:
        json.dump(network_to_dict(net, sketch_edges), fh)
