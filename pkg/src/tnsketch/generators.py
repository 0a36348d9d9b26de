"""Data networks used by tests, benchmarks and the command line."""
from __future__ import annotations

import numpy as np

from .plan import ContractionTree, SketchSpec
from .tn import Hyperedge, RandomSource, TensorNetwork, fill_uniform

__all__ = [
    "kronecker_network", "tt_network", "cp_network", "chain_tree",
    "random_tree", "random_instance", "tt_cores_network",
]


def kronecker_network(sizes, seed=None):
    """Outer product of vectors ``v0 ... v{N-1}``.

    Returns the network and its sketch edges ``e0 ... e{N-1}``. Entries are
    uniform on [0, 1) when ``seed`` is given.
    """
    verts = [f"v{j}" for j in range(len(sizes))]
    edges = [Hyperedge(f"e{j}", (verts[j],), True, s) for j, s in enumerate(sizes)]
    net = TensorNetwork(verts, edges)
    if seed is not None:
        fill_uniform(net, seed)
    return net, [e.id for e in edges]


def tt_network(N, s, R, seed=None):
    """Tensor train with uniform physical size ``s`` and bond size ``R``.

    Vertex ``v{j}`` carries physical edge ``e{j}``; bonds are ``r{j}``
    between ``v{j}`` and ``v{j+1}``.
    """
    verts = [f"v{j}" for j in range(N)]
    edges = []
    for j in range(N):
        edges.append(Hyperedge(f"e{j}", (verts[j],), True, s))
        if j < N - 1:
            edges.append(Hyperedge(f"r{j}", (verts[j], verts[j + 1]), False, R))
    net = TensorNetwork(verts, edges)
    if seed is not None:
        fill_uniform(net, seed)
    return net, [f"e{j}" for j in range(N)]


def tt_cores_network(cores):
    """Network of explicit TT cores ``(R_{k-1}, s_k, R_k)`` with unit end ranks."""
    N = len(cores)
    verts = [f"v{j}" for j in range(N)]
    edges = []
    for j, G in enumerate(cores):
        edges.append(Hyperedge(f"e{j}", (verts[j],), True, G.shape[1]))
        if j < N - 1:
            edges.append(Hyperedge(f"r{j}", (verts[j], verts[j + 1]), False, G.shape[2]))
    net = TensorNetwork(verts, edges)
    for j, G in enumerate(cores):
        arr = G
        if j == 0:
            arr = arr[0]
        if j == N - 1:
            arr = arr[..., 0]
        net.bind(f"v{j}", arr)
    return net, [f"e{j}" for j in range(N)]


def cp_network(factors, skip=None):
    """Khatri-Rao network of factor matrices sharing a free rank hyperedge.

    ``skip`` drops one factor, giving the left-hand side ``L_i`` of the
    CP least-squares subproblem.
    """
    idx = [j for j in range(len(factors)) if j != skip]
    verts = [f"A{j}" for j in idx]
    R = factors[idx[0]].shape[1]
    edges = [Hyperedge(f"s{j}", (f"A{j}",), True, factors[j].shape[0]) for j in idx]
    edges.append(Hyperedge("rank", tuple(verts), True, R))
    net = TensorNetwork(verts, edges)
    for j in idx:
        net.bind(f"A{j}", factors[j])
    return net, [f"s{j}" for j in idx]


def chain_tree(vertices) -> ContractionTree:
    """Left-to-right chain ``((v0, v1), v2) ...``."""
    vertices = list(vertices)
    node = vertices[0]
    for v in vertices[1:]:
        node = [node, v]
    return ContractionTree.from_nested(node)


def random_tree(vertices, rng, connected_to=None) -> ContractionTree:
    """Random binary tree; merges prefer groups sharing an edge when a network is given."""
    items = [(frozenset([v]), v) for v in vertices]
    while len(items) > 1:
        pairs = []
        if connected_to is not None:
            for i in range(len(items)):
                for j in range(i + 1, len(items)):
                    if _touch(connected_to, items[i][0], items[j][0]):
                        pairs.append((i, j))
        if not pairs:
            pairs = [(i, j) for i in range(len(items)) for j in range(i + 1, len(items))]
        i, j = pairs[rng.integers(len(pairs))]
        if rng.random() < 0.5:
            i, j = j, i
        (A, ta), (B, tb) = items[i], items[j]
        items = [x for k, x in enumerate(items) if k not in (i, j)]
        items.append((A | B, [ta, tb]))
    return ContractionTree.from_nested(items[0][1])


def _touch(net, A, B):
    for e in net.edges:
        if any(u in A for u in e.endpoints) and any(u in B for u in e.endpoints):
            return True
    return False


def random_instance(rng, n_vertices, m, hyper=False, uniform=True,
                    bond_sizes=(1, 2, 3, 4, 8), sketch_sizes=None,
                    extra_free=0.0, seed=None):
    """Random connected data network with sketch edges and a random tree.

    Parameters
    ----------
    rng : numpy Generator
    n_vertices : int
    m : int
        Sketch size; sketch edges get sizes at least ``m``.
    hyper : bool
        Add hyperedges with three or more endpoints (some with free ends).
    uniform : bool
        Every vertex carries a sketch edge; otherwise about half do.
    extra_free : float
        Probability that a vertex gets an extra unsketched free edge.

    Returns
    -------
    spec : SketchSpec
    T0 : ContractionTree
    """
    if sketch_sizes is None:
        sketch_sizes = (m, 2 * m, 4 * m)
    verts = [f"v{j}" for j in range(n_vertices)]
    edges = []
    k = 0
    # spanning tree plus a few extra edges keeps it connected
    for j in range(1, n_vertices):
        i = int(rng.integers(j))
        edges.append(Hyperedge(f"b{k}", (verts[i], verts[j]), False,
                               int(rng.choice(bond_sizes))))
        k += 1
    for _ in range(int(rng.integers(0, n_vertices))):
        i, j = rng.choice(n_vertices, 2, replace=False)
        edges.append(Hyperedge(f"b{k}", (verts[i], verts[j]), False,
                               int(rng.choice(bond_sizes))))
        k += 1
    if hyper and n_vertices >= 3:
        for _ in range(int(rng.integers(1, 3))):
            r = int(rng.integers(3, n_vertices + 1))
            eps = tuple(verts[i] for i in rng.choice(n_vertices, r, replace=False))
            edges.append(Hyperedge(f"h{k}", eps, bool(rng.random() < 0.5),
                                   int(rng.choice(bond_sizes[1:] or bond_sizes))))
            k += 1
    if uniform:
        owners = list(verts)
    else:
        mask = rng.random(n_vertices) < 0.5
        if not mask.any():
            mask[int(rng.integers(n_vertices))] = True
        owners = [v for v, t in zip(verts, mask) if t]
    sk = []
    for j, v in enumerate(owners):
        edges.append(Hyperedge(f"e{j}", (v,), True, int(rng.choice(sketch_sizes))))
        sk.append(f"e{j}")
    for v in verts:
        if rng.random() < extra_free:
            edges.append(Hyperedge(f"f{k}", (v,), True, int(rng.choice(bond_sizes[1:] or bond_sizes))))
            k += 1
    net = TensorNetwork(verts, edges)
    if seed is not None:
        fill_uniform(net, seed)
    T0 = random_tree(verts, rng, connected_to=net)
    return SketchSpec(net, sk, m), T0


def random_source(seed, stream=0):
    return RandomSource(int(seed), int(stream))


def uniform_vectors(sizes, seed):
    g = np.random.default_rng(seed)
    return [g.random(s) for s in sizes]
