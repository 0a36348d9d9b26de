"""Command line: accuracy sweeps, cost reports, single sketches and the applications.

Exit status is 0 on success, 2 for configuration or input errors and 3
when a sketch-size search finds no passing size.
"""
from __future__ import annotations

import csv
import io
import json
import sys
import warnings

import click
import numpy as np

from . import apps
from .bounds import cost_report
from .embed import build, check_sufficient_condition, execute_plan
from .experiments import (NOT_FOUND, ConfigError, ExperimentConfig, metadata,
                          rows_to_csv, run_accuracy)
from .generators import chain_tree, kronecker_network, tt_network
from .plan import ContractionTree, SketchSpec
from .tn import NetworkFormatError, RandomSource, load_network, tn_norm

EXIT_CONFIG = 2
EXIT_NOT_FOUND = 3


def _fail(msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _emit(ctx, text, suffix=None):
    """Write ``text`` to ``--out`` (with ``suffix`` appended) or stdout."""
    out = ctx.obj["out"]
    if out is None:
        click.echo(text, nl=not text.endswith("\n"))
        return
    path = out if suffix is None else out + suffix
    with open(path, "w") as fh:
        fh.write(text)


def _data(network, kind, order, size, rank, seed):
    if network:
        try:
            net, sk = load_network(network)
        except (OSError, NetworkFormatError) as exc:
            _fail(str(exc))
        if not sk:
            _fail("network file lists no sketch_edges")
        return net, sk
    if kind == "tensor-train":
        return tt_network(order, size, rank, seed=seed)
    return kronecker_network([size] * order, seed=seed)


def _tree(path, net):
    if path is None:
        return chain_tree(net.vertices)
    try:
        with open(path) as fh:
            return ContractionTree.from_nested(json.load(fh))
    except (OSError, ValueError) as exc:
        _fail(f"{path}: {exc}")


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker processes for independent searches.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output path (stdout when omitted).")
@click.pass_context
def main(ctx, seed, threads, out):
    """Gaussian tensor-network sketching of tensor-network data."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, threads=max(1, threads), out=out)


_input_opts = [
    click.option("--input-kind", type=click.Choice(["tensor-train", "kronecker"]),
                 default="kronecker", show_default=True),
    click.option("--size", type=int, default=100, show_default=True),
]


def _with(opts):
    def deco(f):
        for o in reversed(opts):
            f = o(f)
        return f
    return deco


@main.command()
@_with(_input_opts)
@click.option("--order", type=int, multiple=True, default=(4,), show_default=True)
@click.option("--rank", type=int, multiple=True, default=(1,), show_default=True)
@click.option("--network", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--embedding", multiple=True,
              default=("tn", "tree", "tt", "khatri-rao"), show_default=True)
@click.option("--tau", type=float, default=0.2, show_default=True)
@click.option("--trials", type=int, default=1, show_default=True)
@click.option("--repeats", type=int, default=2, show_default=True)
@click.option("--m-min", type=int, default=2, show_default=True)
@click.option("--m-max", type=int, default=None)
@click.option("--grid-factor", type=float, default=2.0, show_default=True)
@click.option("--refine-steps", type=int, default=8, show_default=True)
@click.option("--exact", is_flag=True, help="Execute plans with explicit tensors.")
@click.pass_context
def accuracy(ctx, input_kind, size, order, rank, network, embedding, tau, trials,
             repeats, m_min, m_max, grid_factor, refine_steps, exact):
    """Smallest sketch size meeting the error threshold, per input and embedding."""
    cfg = ExperimentConfig(
        input_kind="file" if network else input_kind, orders=tuple(order),
        size=size, ranks=tuple(rank), embeddings=tuple(embedding), tau=tau,
        trials=trials, repeats=repeats, seed=ctx.obj["seed"], m_min=m_min,
        m_max=m_max, grid_factor=grid_factor, refine_steps=refine_steps,
        exact=exact, network_file=network)
    try:
        rows = run_accuracy(cfg, workers=ctx.obj["threads"])
    except (ConfigError, NetworkFormatError, ValueError) as exc:
        _fail(str(exc))
    _emit(ctx, rows_to_csv(rows))
    if ctx.obj["out"] is not None:
        _emit(ctx, json.dumps(metadata(cfg), indent=2), ".meta.json")
    if any(r[2] == NOT_FOUND for r in rows):
        sys.exit(EXIT_NOT_FOUND)


@main.command()
@_with(_input_opts)
@click.option("--order", type=int, default=4, show_default=True)
@click.option("--rank", type=int, default=1, show_default=True)
@click.option("--network", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--tree", "tree_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Nested-list JSON contraction tree.")
@click.option("--sketch-size", "m", type=int, required=True)
@click.option("--embedding", default="tn", show_default=True)
@click.option("--strict-accuracy", is_flag=True)
@click.pass_context
def cost(ctx, input_kind, size, order, rank, network, tree_path, m, embedding,
         strict_accuracy):
    """Plan flops, modeled cost terms and lower bounds as JSON."""
    net, sk = _data(network, input_kind, order, size, rank, None)
    T0 = _tree(tree_path, net)
    try:
        spec = SketchSpec(net, sk, m)
        emb, plan = build(embedding, spec, T0, strict_accuracy)
        rep = cost_report(spec, T0, m, embedding="tree" if embedding == "tree" else "tn")
        cond = check_sufficient_condition(emb, m) if embedding != "khatri-rao" else None
    except ValueError as exc:
        _fail(str(exc))
    d = rep.in_flops(plan.total_flops).to_dict()
    d["plan_flops"] = plan.total_flops
    d["plan_flops_by_kind"] = plan.flops_by_kind()
    d["constrained"] = plan.is_constrained()
    d["by_embedding"] = {k: build(k, spec, T0, strict_accuracy)[1].total_flops
                         for k in ("tn", "tree", "tt", "khatri-rao")}
    d["sufficient_condition"] = None if cond is None else bool(cond.satisfied)
    d["units"] = "flops (two per multiply-add)"
    _emit(ctx, json.dumps(d, indent=2, default=str))


@main.command()
@_with(_input_opts)
@click.option("--order", type=int, default=4, show_default=True)
@click.option("--rank", type=int, default=1, show_default=True)
@click.option("--network", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--tree", "tree_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--sketch-size", "m", type=int, required=True)
@click.option("--embedding", default="tn", show_default=True)
@click.option("--save", type=click.Path(dir_okay=False), default=None,
              help="Save the sketch as a .npy array.")
@click.pass_context
def sketch(ctx, input_kind, size, order, rank, network, tree_path, m, embedding, save):
    """Execute one sketch and report its norm ratio and flops."""
    seed = ctx.obj["seed"]
    net, sk = _data(network, input_kind, order, size, rank, seed)
    if not net.is_bound():
        _fail("network has no tensors")
    T0 = _tree(tree_path, net)
    try:
        spec = SketchSpec(net, sk, m)
        emb, plan = build(embedding, spec, T0)
        y, rep = execute_plan(plan, spec, emb, RandomSource(seed, 1))
    except ValueError as exc:
        _fail(str(exc))
    if save:
        np.save(save, y.values)
    d = {"embedding": embedding, "m": m, "shape": list(y.shape),
         "norm_ratio": float(np.linalg.norm(y.values) / tn_norm(net)),
         "flops": rep.achieved_flops}
    _emit(ctx, json.dumps(d, indent=2))


@main.command("cp-als")
@click.option("--order", type=int, default=3, show_default=True)
@click.option("--size", type=int, default=20, show_default=True)
@click.option("--rank", type=int, default=4, show_default=True,
              help="Rank of the synthetic data.")
@click.option("--target-rank", type=int, default=None,
              help="Rank of the decomposition (defaults to --rank).")
@click.option("--sketch-size", "m", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--constant", type=float, default=0.04, show_default=True)
@click.option("--iters", type=int, default=20, show_default=True)
@click.option("--strict-accuracy", is_flag=True)
@click.pass_context
def cp_als(ctx, order, size, rank, target_rank, m, epsilon, delta, constant, iters,
           strict_accuracy):
    """Sketched CP-ALS on an exact-rank random tensor.

    Writes the JSON ledger (``--out``) and a CSV residual trace
    (``--out`` + ``.csv``), or both to stdout.
    """
    R = target_rank or rank
    if m is None:
        if epsilon is None:
            _fail("give --sketch-size or --epsilon")
        m = apps.cp_sketch_size(order, R, epsilon, delta, constant)
    seed = ctx.obj["seed"]
    g = np.random.default_rng(seed)
    X = apps.cp_full([g.standard_normal((size, rank)) for _ in range(order)])
    try:
        _, led, res = apps.sketched_cp_als(X, R, m, iters, RandomSource(seed, 2),
                                           strict_accuracy)
    except ValueError as exc:
        _fail(str(exc))
    d = {"order": order, "size": size, "rank": rank, "target_rank": R, "m": m,
         "iters": iters, "ledger": led.to_dict(),
         "formula_madds_per_sweep": apps.cp_formula_madds(order, size, R, m)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sweep", "residual", "sweep_flops"))
    for t, r in enumerate(res):
        w.writerow((t + 1, f"{r:.6e}", led.sweep_total(t)))
    if ctx.obj["out"] is None:
        click.echo(json.dumps(d, indent=2))
        click.echo(buf.getvalue(), nl=False)
    else:
        _emit(ctx, json.dumps(d, indent=2))
        _emit(ctx, buf.getvalue(), ".csv")


@main.command("tt-round")
@click.option("--order", type=int, default=8, show_default=True)
@click.option("--size", type=int, default=40, show_default=True)
@click.option("--rank", type=int, default=10, show_default=True)
@click.option("--sketch-size", "m", type=int, default=6, show_default=True)
@click.pass_context
def tt_round(ctx, order, size, rank, m):
    """Sketch a random tensor train for rounding; JSON ledger plus CSV of the sketches."""
    seed = ctx.obj["seed"]
    tt = apps.random_tt(order, size, rank, seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sk, led = apps.tt_round_sketch(tt, m, RandomSource(seed, 3))
    N, s, R = order, size, max(tt.ranks)
    d = {"order": N, "size": s, "rank": R, "m": m, "ledger": led,
         "reference_flops": 2 * N * s * R * R * m,
         "ratio": led["total"] / (2 * N * s * R * R * m),
         "warnings": [str(w.message) for w in caught]}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("boundary", "rows", "cols", "fro_norm"))
    for k, t in enumerate(sk):
        w.writerow((t.modes[1], t.shape[0], t.shape[1], f"{np.linalg.norm(t.values):.6e}"))
    if ctx.obj["out"] is None:
        click.echo(json.dumps(d, indent=2))
        click.echo(buf.getvalue(), nl=False)
    else:
        _emit(ctx, json.dumps(d, indent=2))
        _emit(ctx, buf.getvalue(), ".csv")


if __name__ == "__main__":
    main()
