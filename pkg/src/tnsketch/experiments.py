"""Smallest-sketch-size experiments on random tensor-train and Kronecker inputs.

For each random input and embedding kind, sketch sizes are searched in
increasing order until every repeat satisfies
``|‖Sx‖ / ‖x‖ - 1| <= tau``. Sizes are scanned on a geometric grid and the
last gap is refined linearly.

By default each repeat draws ``Sx`` through :func:`~tnsketch.embed.sample_sketch`,
which has the same distribution as executing the plan but never
materializes the large embedding tensors. ``exact=True`` executes the plan.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .embed import build, execute_plan, sample_sketch
from .generators import chain_tree, kronecker_network, tt_network
from .plan import SketchSpec
from .tn import RandomSource, load_network, tn_norm

__all__ = ["ExperimentConfig", "ConfigError", "size_grid", "run_accuracy",
           "rows_to_csv", "CSV_HEADER", "NOT_FOUND"]

CSV_HEADER = ("inputId", "embedding", "smallest_m", "flops")
NOT_FOUND = "not-found"
KINDS = ("tn", "tree", "tt", "khatri-rao", "gaussian")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Settings of one accuracy sweep.

    ``orders`` and ``ranks`` are swept as a grid; ``trials`` random inputs
    are drawn per grid point.
    """

    input_kind: str = "kronecker"
    orders: tuple = (4,)
    size: int = 100
    ranks: tuple = (1,)
    embeddings: tuple = ("tn", "tree", "tt", "khatri-rao")
    tau: float = 0.2
    trials: int = 1
    repeats: int = 2
    seed: int = 0
    m_min: int = 2
    m_max: int | None = None
    grid_factor: float = 2.0
    refine_steps: int = 8
    exact: bool = False
    strict_accuracy: bool = False
    network_file: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.input_kind not in ("tensor-train", "kronecker", "file"):
            raise ConfigError(f"unknown input kind {self.input_kind!r}")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if self.trials < 1 or self.repeats < 1:
            raise ConfigError("trials and repeats must be at least 1")
        for k in self.embeddings:
            if k not in KINDS:
                raise ConfigError(f"unknown embedding kind {k!r}")
        if self.input_kind == "file" and not self.network_file:
            raise ConfigError("file input needs a network file")
        if self.m_min < 1 or self.grid_factor <= 1:
            raise ConfigError("m_min >= 1 and grid_factor > 1 required")
        if self.m_max is not None and self.m_max < self.m_min:
            raise ConfigError("empty sketch size range")
        return self


def size_grid(m_min, m_max, factor):
    """Geometric grid from ``m_min`` to ``m_max`` (both included)."""
    grid, m = [], float(m_min)
    while int(round(m)) < m_max:
        k = int(round(m))
        if not grid or k > grid[-1]:
            grid.append(k)
        m *= factor
    if not grid or grid[-1] != m_max:
        grid.append(int(m_max))
    return grid


def _input_seed(seed, *key):
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in key]).generate_state(1)[0])


def _inputs(cfg):
    """List of ``(input_id, key, builder_args)``; networks are built lazily."""
    out = []
    if cfg.input_kind == "file":
        for j in range(cfg.trials):
            out.append((f"file-{j}", (0, 0, j), ("file", cfg.network_file)))
        return out
    for N in cfg.orders:
        ranks = cfg.ranks if cfg.input_kind == "tensor-train" else (1,)
        for R in ranks:
            for j in range(cfg.trials):
                if cfg.input_kind == "tensor-train":
                    iid = f"tt-N{N}-s{cfg.size}-R{R}-{j}"
                else:
                    iid = f"kron-N{N}-s{cfg.size}-{j}"
                out.append((iid, (N, R, j), (cfg.input_kind, N, cfg.size, R,
                                             _input_seed(cfg.seed, N, R, j))))
    return out


def _make_input(args):
    if args[0] == "file":
        net, sk = load_network(args[1])
        return net, sk
    kind, N, s, R, seed = args
    if kind == "tensor-train":
        return tt_network(N, s, R, seed=seed)
    return kronecker_network([s] * N, seed=seed)


def _search_one(task):
    """Smallest passing sketch size for one (input, embedding) pair."""
    cfg, iid, key, args, kind, kidx = task
    net, sk = _make_input(args)
    nx = tn_norm(net)
    T0 = chain_tree(net.vertices)
    m_max = cfg.m_max or min(net.edge(e).size for e in sk)
    m_max = min(m_max, min(net.edge(e).size for e in sk))
    cache = {}

    def passes(m):
        if m not in cache:
            spec = SketchSpec(net, sk, m)
            emb, plan = build(kind, spec, T0, cfg.strict_accuracy)
            ok = True
            memo = {}
            for r in range(cfg.repeats):
                rng = RandomSource(cfg.seed, kidx, key + (m, r))
                if cfg.exact:
                    y, _ = execute_plan(plan, spec, emb, rng)
                else:
                    y, _ = sample_sketch(plan, spec, emb, rng, memo)
                err = abs(np.linalg.norm(y.values) / nx - 1.0)
                if err > cfg.tau:
                    ok = False
                    break
            cache[m] = (ok, plan.total_flops)
        return cache[m][0]

    grid = size_grid(cfg.m_min, m_max, cfg.grid_factor) if cfg.m_min <= m_max else []
    prev = cfg.m_min - 1
    found = None
    for m in grid:
        if passes(m):
            found = m
            break
        prev = m
    if found is not None and found - prev > 1:
        step = max(1, math.ceil((found - prev - 1) / cfg.refine_steps))
        for m in range(prev + step, found, step):
            if passes(m):
                found = m
                break
    if found is None:
        return (iid, kind, NOT_FOUND, NOT_FOUND)
    return (iid, kind, found, cache[found][1])


def run_accuracy(cfg: ExperimentConfig, workers: int = 1):
    """Rows ``(inputId, embedding, smallest_m, flops)``, one per input and embedding.

    Rows come back in input then embedding order regardless of ``workers``.
    """
    cfg.validate()
    tasks = []
    for iid, key, args in _inputs(cfg):
        for kidx, kind in enumerate(cfg.embeddings):
            tasks.append((cfg, iid, key, args, kind, KINDS.index(kind)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_search_one, tasks, chunksize=1))
    else:
        rows = [_search_one(t) for t in tasks]
    return rows


def metadata(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["orders"] = list(cfg.orders)
    d["ranks"] = list(cfg.ranks)
    d["embeddings"] = list(cfg.embeddings)
    d["search"] = ("geometric grid m_min * grid_factor^k up to m_max, then a "
                   "linear scan of the last gap in refine_steps steps")
    d["error"] = "|norm(Sx) / norm(x) - 1|"
    return d


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
