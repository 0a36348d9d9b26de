"""Modeled sketching costs and lower bounds, in exact integer arithmetic.

All quantities count multiply-adds of classical dense contraction (no
factor two). Square roots are rounded up before summation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .plan import (ContractionTree, SketchSpec,
                   classify_contractions, cut_size)

__all__ = [
    "ContractionLabels", "CostReport", "ceil_sqrt", "labels", "all_labels",
    "y_cost", "z_cost", "tree_step_cost", "stt_cost", "alg1_cost",
    "tree_cost", "lower_bound_uniform", "lower_bound_general",
    "approx_ratio", "tree_optimal", "cost_report", "m_pow_2_5",
]


def ceil_sqrt(n: int) -> int:
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def m_pow_2_5(m: int) -> int:
    """``ceil(m ** 2.5)`` without floating point."""
    return ceil_sqrt(m ** 5)


@dataclass(frozen=True)
class ContractionLabels:
    """Sizes around one contraction ``(U, V)`` of the sketch-free data graph.

    a, c : sizes of U-only / V-only uncontracted edges
    b : size of edges contracted between U and V
    d : size of edges shared by U and V that stay uncontracted
    """

    a: int
    b: int
    c: int
    d: int

    @property
    def abcd(self):
        return self.a * self.b * self.c * self.d


def _labels_for(R, U, V) -> ContractionLabels:
    a = b = c = d = 1
    UV = U | V
    for e in R.edges:
        tu = any(u in U for u in e.endpoints)
        tv = any(u in V for u in e.endpoints)
        if not (tu or tv):
            continue
        out = e.dangling or any(u not in UV for u in e.endpoints)
        if tu and tv:
            if out:
                d *= e.size
            else:
                b *= e.size
        elif out:
            if tu:
                a *= e.size
            else:
                c *= e.size
    return ContractionLabels(a, b, c, d)


def all_labels(spec: SketchSpec, T0: ContractionTree) -> list:
    R = spec.residual_view()
    return [_labels_for(R, U, V) for U, V in T0.path]


def labels(spec: SketchSpec, T0: ContractionTree, i: int) -> ContractionLabels:
    """Labels ``(a, b, c, d)`` of the ``i``-th contraction of ``T0.path``."""
    U, V = T0.path[i]
    return _labels_for(spec.residual_view(), U, V)


def y_cost(lb: ContractionLabels, m: int) -> int:
    """Cost of sketching one S contraction with a two-tensor small network.

    ``abcd m^2 + m^2 d sqrt(abcm) min(sqrt(a), sqrt(c))``.
    """
    a, b, c, d = lb.a, lb.b, lb.c, lb.d
    return a * b * c * d * m * m + m * m * d * ceil_sqrt(a * b * c * m * min(a, c))


def tree_step_cost(lb: ContractionLabels, m: int) -> int:
    """Cost of sketching one S contraction with a single order-3 tensor.

    Contract the two inputs first (``abcd m^2``) and then the tensor
    (``acd m^3``), unless absorbing the tensor into the smaller side first is
    cheaper.
    """
    a, b, c, d = lb.a, lb.b, lb.c, lb.d
    return a * b * c * d * m * m + min(a * c * d, a * b * d, b * c * d) * m ** 3


def z_cost(lb: ContractionLabels, has_adjacent_sketch_edges: bool, m: int) -> int:
    """Cost of an unsketched contraction after the Kronecker stage."""
    return lb.abcd * (m if has_adjacent_sketch_edges else 1)


def _stt_table(spec, cls, R, lbls, j, m):
    e = spec.sketch_edges[j]
    s = spec.data.edge(e).size
    v = spec.sketch_vertex()[e]
    Dj = cls.D[e]
    opts = []
    # option "direct": sketch v_j before any of its D contractions
    cost = cut_size(R, [v]) * s * m + sum(lbls[i].abcd * m for i in Dj)
    opts.append((cost, None))
    for t, k in enumerate(Dj):
        U, V = cls.path[k]
        side = U if v in U else V
        cost = sum(lbls[i].abcd * s for i in Dj[:t])
        cost += cut_size(R, side) * s * m
        cost += sum(lbls[i].abcd * m for i in Dj[t:])
        opts.append((cost, k))
    return opts


def stt_cost(spec, T0, j, m, cls=None):
    """Cheapest Kronecker-stage cost for sketch edge ``j``.

    Returns
    -------
    cost : int
    k_opt : int or None
        Index into ``T0.path`` of the contraction at which the sketch
        matrix is applied, or None to sketch the owning vertex directly.
        Ties go to the earliest option.
    """
    cls = cls or classify_contractions(spec, T0)
    R = spec.residual_view()
    lbls = all_labels(spec, T0)
    opts = _stt_table(spec, cls, R, lbls, j, m)
    best = opts[0]
    for o in opts[1:]:
        if o[0] < best[0]:
            best = o
    return best


def _adjacent(spec, U, V):
    own = set(spec.sketch_vertex().values())
    return any(u in own for u in U | V)


def _terms(spec, T0, m, step):
    cls = classify_contractions(spec, T0)
    lbls = all_labels(spec, T0)
    stt = [stt_cost(spec, T0, j, m, cls)[0] for j in range(spec.N)]
    ys = {i: step(lbls[i], m) for i in cls.S}
    zs = {i: z_cost(lbls[i], _adjacent(spec, *cls.path[i]), m) for i in cls.I}
    return cls, lbls, stt, ys, zs


def alg1_cost(spec, T0, m=None) -> int:
    """``sum stt_j + sum_S y_i + sum_I z_i``."""
    m = spec.m if m is None else m
    _, _, stt, ys, zs = _terms(spec, T0, m, y_cost)
    return sum(stt) + sum(ys.values()) + sum(zs.values())


def tree_cost(spec, T0, m=None) -> int:
    """Same as :func:`alg1_cost` with single-tensor S steps."""
    m = spec.m if m is None else m
    _, _, stt, ys, zs = _terms(spec, T0, m, tree_step_cost)
    return sum(stt) + sum(ys.values()) + sum(zs.values())


def lower_bound_uniform(spec, T0, m=None) -> int:
    """Lower bound when every data vertex carries a sketch edge."""
    m = spec.m if m is None else m
    spec.validate()
    own = set(spec.sketch_vertex().values())
    if set(spec.data.vertices) != own:
        raise ValueError("uniform lower bound inapplicable")
    total = sum(cut_size(spec.data, [v]) * m for v in spec.sketch_vertex().values())
    total += sum(y_cost(lb, m) for lb in all_labels(spec, T0))
    return total


def lower_bound_general(spec, T0, m=None) -> int:
    """``sum stt_j + sum_S abcd m^2 + N m^2.5 + sum_I z_i``."""
    m = spec.m if m is None else m
    cls, lbls, stt, _, zs = _terms(spec, T0, m, y_cost)
    return (sum(stt) + sum(lbls[i].abcd * m * m for i in cls.S)
            + spec.N * m_pow_2_5(m) + sum(zs.values()))


def approx_ratio(plan_cost, spec, T0, m=None) -> float:
    """Achieved cost divided by the general lower bound."""
    return plan_cost / max(lower_bound_general(spec, T0, m), 1)


def tree_optimal(spec, T0, m=None) -> bool:
    """Whether single-tensor steps already reach the optimal cost order.

    Holds when every data vertex carries a sketch edge and every S
    contraction contracts edges of total size at least ``m``.
    """
    m = spec.m if m is None else m
    cls = classify_contractions(spec, T0)
    own = set(spec.sketch_vertex().values())
    if set(spec.data.vertices) != own:
        return False
    lbls = all_labels(spec, T0)
    return all(lbls[i].b >= m for i in cls.S)


@dataclass
class CostReport:
    """Itemized modeled cost of a sketch plus bounds.

    ``ratio`` is ``achieved_flops / max(bound, 1)`` where the bound is the
    uniform one when it applies and the general one otherwise.
    """

    achieved_flops: int
    term_kron: int
    term_s: int
    term_i: int
    lb_uniform: int | None
    lb_general: int
    ratio: float
    tree_optimal: bool
    per_contraction: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def in_flops(self, achieved_flops, bound=None):
        """Copy with every modeled term doubled to flops.

        ``ratio`` is recomputed against twice ``bound`` (default: the
        applicable lower bound).
        """
        if bound is None:
            bound = self.lb_uniform if self.lb_uniform is not None else self.lb_general
        items = []
        for row in self.per_contraction:
            row = dict(row)
            for k in ("y", "z"):
                if k in row:
                    row[k] *= 2
            items.append(row)
        extra = dict(self.extra)
        if "stt" in extra:
            extra["stt"] = [2 * x for x in extra["stt"]]
        if "modeled_total" in extra:
            extra["modeled_total"] *= 2
        return CostReport(int(achieved_flops), 2 * self.term_kron, 2 * self.term_s,
                          2 * self.term_i,
                          None if self.lb_uniform is None else 2 * self.lb_uniform,
                          2 * self.lb_general, achieved_flops / max(2 * bound, 1),
                          self.tree_optimal, items, extra)


def cost_report(spec, T0, m=None, achieved=None, embedding="tn") -> CostReport:
    """Cost report for the small-network (``tn``) or single-tensor (``tree``) S steps.

    ``achieved`` defaults to the modeled total of the chosen embedding.
    """
    m = spec.m if m is None else m
    step = y_cost if embedding == "tn" else tree_step_cost
    cls, lbls, stt, ys, zs = _terms(spec, T0, m, step)
    total = sum(stt) + sum(ys.values()) + sum(zs.values())
    achieved = total if achieved is None else achieved
    try:
        lbu = lower_bound_uniform(spec, T0, m)
    except ValueError:
        lbu = None
    lbg = lower_bound_general(spec, T0, m)
    items = []
    for i, (U, V) in enumerate(cls.path):
        lb = lbls[i]
        k = cls.kind(i)
        row = {"index": i, "U": sorted(map(str, U)), "V": sorted(map(str, V)),
               "kind": k if isinstance(k, str) else "D", "a": lb.a, "b": lb.b,
               "c": lb.c, "d": lb.d}
        if i in ys:
            row["y"] = ys[i]
        if i in zs:
            row["z"] = zs[i]
        if not isinstance(k, str):
            row["edge"] = str(k[1])
        items.append(row)
    bound = lbu if lbu is not None else lbg
    return CostReport(achieved, sum(stt), sum(ys.values()), sum(zs.values()),
                      lbu, lbg, achieved / max(bound, 1),
                      tree_optimal(spec, T0, m), items,
                      {"stt": stt, "modeled_total": total})
