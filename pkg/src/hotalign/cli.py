"""``hot`` command line: gen, align, eval, bench."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .config import DEFAULT_K_LIST, RunConfig
from .embedding import tensor_elements
from .errors import CapacityError, FormatError, HotError, StageError, ValidationError
from .graph import (MultiNetworkProblem, generate_noisy_er, load_graph, load_tuples, write_graph,
                    write_tuples)
from .metrics import evaluate, summarize
from .pipeline import hot_align, read_alignment, write_alignment

EXIT_IO = 5


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _clusters(text):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a positive integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("cluster count must be positive")
    return v


def _add_solver_flags(p):
    d = RunConfig()
    p.add_argument("--clusters", type=_clusters, default=d.clusters,
                   help="number of co-clusters M, or 'auto' = ceil(max n / 50) (default: %(default)s)")
    p.add_argument("--alpha", type=float, default=d.alpha,
                   help="weight of the structural term vs. the feature term (default: %(default)s, "
                        "the reference experimental setting)")
    p.add_argument("--beta", type=float, default=d.beta,
                   help="random-walk restart probability (default: %(default)s, reference setting)")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam,
                   help="proximal / entropic regularization (default: %(default)s, reference setting)")
    p.add_argument("--seed", type=int, default=d.seed, help="seed for barycenter initialization (default: %(default)s)")
    p.add_argument("--outer-iters", type=int, default=d.outer_iters,
                   help="proximal steps per solve (default: %(default)s, reference setting)")
    p.add_argument("--inner-iters", type=int, default=d.inner_iters,
                   help="minimum Sinkhorn rounds per step (default: %(default)s, reference setting)")
    p.add_argument("--max-inner-iters", type=int, default=d.max_inner_iters,
                   help="Sinkhorn round cap when chasing marginal feasibility (default: %(default)s)")
    p.add_argument("--tol", type=float, default=d.tol,
                   help="stop once successive couplings differ by less than this in L1 (default: %(default)s)")
    p.add_argument("--bcd-rounds", type=int, default=d.bcd_rounds,
                   help="barycenter block-coordinate rounds (default: %(default)s)")
    p.add_argument("--budget", type=float, default=d.element_budget,
                   help="max coupling elements per cluster block (default: %(default)s)")
    p.add_argument("--workers", type=int, default=d.workers, help="parallel cluster solves (default: %(default)s)")
    p.add_argument("--barycenter-features", choices=("attr", "embed"), default=d.barycenter_features,
                   help="features used by the barycenter clustering (default: %(default)s)")


def _config_from(args, **extra) -> RunConfig:
    return RunConfig(lam=args.lam, alpha=args.alpha, beta=args.beta, clusters=args.clusters, seed=args.seed,
                     outer_iters=args.outer_iters, inner_iters=args.inner_iters,
                     max_inner_iters=args.max_inner_iters, tol=args.tol, bcd_rounds=args.bcd_rounds,
                     element_budget=args.budget, workers=args.workers,
                     barycenter_features=args.barycenter_features, **extra)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hot", description="Joint alignment of K networks by hierarchical "
                                     "multi-marginal optimal transport.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write noisy permuted Erdos-Renyi copies with ground truth and anchors",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    g.add_argument("--n", type=int, required=True, help="nodes per graph")
    g.add_argument("--p", type=float, required=True, help="edge probability of the base graph")
    g.add_argument("--k", type=int, default=3, help="number of copies")
    g.add_argument("--insert", type=float, default=0.10, help="fraction of edges inserted per copy")
    g.add_argument("--remove", type=float, default=0.15, help="fraction of edges removed per copy")
    g.add_argument("--anchor-frac", type=float, default=0.10, help="fraction of truth tuples used as anchors")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    a = sub.add_parser("align", help="align K graphs and write the block-diagonal coupling")
    a.add_argument("--graphs", required=True, help="comma-separated edge-list files, one per graph")
    a.add_argument("--attrs", help="comma-separated attribute CSVs (same order as --graphs)")
    a.add_argument("--anchors", required=True, help="CSV of anchor tuples")
    a.add_argument("--out", required=True, help="alignment output file")
    a.add_argument("--emit-threshold", type=float, default=RunConfig().emit_threshold,
                   help="smallest coupling entry written (default: %(default)s)")
    a.add_argument("--config", help="reuse the run configuration embedded in a previous alignment file "
                                    "(or a JSON config); overrides the solver flags below")
    _add_solver_flags(a)

    e = sub.add_parser("eval", help="score an alignment file against ground truth")
    e.add_argument("--alignment", required=True, nargs="+", help="alignment file(s); several are summarized")
    e.add_argument("--truth", required=True, help="CSV of ground-truth tuples")
    e.add_argument("--anchors", help="CSV of anchor tuples excluded from the test set")
    e.add_argument("--k", type=_int_list, default=list(DEFAULT_K_LIST),
                   help="comma-separated K values (default: 1,5,10,30,50)")
    e.add_argument("--rank-scope", choices=("global", "cluster"), default="global",
                   help="high-order candidates: every tuple, or only tuples in the query's cluster "
                        "(default: %(default)s)")
    e.add_argument("--out", required=True, help="report JSON; a CSV with the same stem is written next to it")

    b = sub.add_parser("bench", help="time hierarchical vs. flat alignment on seeded ER inputs")
    b.add_argument("--sizes", type=_int_list, default=[50, 100], help="node counts (default: 50,100)")
    b.add_argument("--graph-counts", type=_int_list, default=[3], help="values of K (default: 3)")
    b.add_argument("--degree", type=float, default=8.0, help="expected base-graph degree (default: %(default)s)")
    b.add_argument("--modes", default="hierarchical,flat",
                   help="comma-separated subset of hierarchical,flat (default: %(default)s)")
    b.add_argument("--out", help="CSV output (default: stdout)")
    _add_solver_flags(b)
    return parser


def _split(text):
    return [s for s in text.split(",") if s]


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    anchors = int(round(args.anchor_frac * args.n))
    problem = generate_noisy_er(args.n, args.p, args.k, args.insert, args.remove, args.seed, anchors)
    for i, g in enumerate(problem.graphs):
        write_graph(g, out / f"g{i + 1}.txt")
    write_tuples(problem.ground_truth, out / "truth.csv")
    write_tuples(problem.anchors, out / "anchors.csv")
    meta = {"n": args.n, "p": args.p, "k": args.k, "insert": args.insert, "remove": args.remove,
            "anchor_frac": args.anchor_frac, "seed": args.seed,
            "edges": [g.edge_count for g in problem.graphs]}
    (out / "gen.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.k} graphs to {out}")
    return 0


def load_config(path) -> RunConfig:
    """RunConfig from an alignment file header or from a JSON object of config fields."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text.splitlines()[0] if text.startswith('{"meta"') else text)
    except (json.JSONDecodeError, IndexError):
        raise FormatError("not a JSON config or alignment header", path, 1) from None
    if isinstance(d, dict) and "meta" in d:
        d = d["meta"].get("config")
    if not isinstance(d, dict):
        raise FormatError("no run configuration found", path)
    return RunConfig.from_dict(d)


def cmd_align(args) -> int:
    paths = _split(args.graphs)
    attrs = _split(args.attrs) if args.attrs else [None] * len(paths)
    if len(attrs) != len(paths):
        raise ValidationError("--attrs needs one file per graph")
    graphs = [load_graph(p, a, id=Path(p).stem) for p, a in zip(paths, attrs)]
    problem = MultiNetworkProblem(tuple(graphs), load_tuples(args.anchors))
    if len(problem.anchors) == 0:
        raise ValidationError("at least one anchor tuple is required")
    if args.config:
        config = load_config(args.config)
    else:
        config = _config_from(args, use_attributes=args.attrs is not None, emit_threshold=args.emit_threshold)
    result = hot_align(problem, config)
    write_alignment(result, args.out)
    print(f"aligned {problem.K} graphs in {result.M} cluster{'s' if result.M != 1 else ''}; {result.allocated_elements} coupling elements")
    return 0


def cmd_eval(args) -> int:
    truth = load_tuples(args.truth)
    anchors = load_tuples(args.anchors) if args.anchors else None
    reports = [evaluate(read_alignment(p), truth, anchors, args.k, args.rank_scope) for p in args.alignment]
    summary = summarize(reports)
    out = Path(args.out)
    payload = summary.to_dict() if len(reports) > 1 else reports[0].to_dict()
    payload["inputs"] = {"alignment": args.alignment, "truth": args.truth, "anchors": args.anchors}
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    out.with_suffix(".csv").write_text(summary.to_csv())
    for row in summary.rows():
        print(f"{row[0]:>16} {row[1]!s:>3} {row[2]:.4f}")
    return 0


BENCH_FIELDS = ["n", "K", "M", "mode", "status", "wall_time", "allocated_elements", "flat_elements"]


MODES = {"hierarchical": None, "flat": 1}


def bench_rows(sizes, graph_counts, base: RunConfig, degree: float = 8.0, modes=("hierarchical", "flat")):
    """One row per (n, K, mode); flat runs over the element budget are reported as ``capacity``."""
    for mode in modes:
        if mode not in MODES:
            raise ValidationError(f"unknown bench mode {mode!r}")
    rows = []
    for n in sizes:
        for K in graph_counts:
            problem = generate_noisy_er(n, min(0.99, degree / (n - 1)), K, seed=base.seed,
                                        anchor_count=max(1, n // 10))
            for mode in modes:
                clusters = base.clusters if MODES[mode] is None else MODES[mode]
                cfg = RunConfig(**{**base.to_dict(), "clusters": clusters, "k_list": base.k_list})
                M = cfg.cluster_count(problem.node_counts)
                row = {"n": n, "K": K, "M": M, "mode": mode, "flat_elements": tensor_elements(problem.node_counts)}
                if M == 1 and row["flat_elements"] > cfg.element_budget:
                    rows.append({**row, "status": "capacity", "wall_time": "",
                                 "allocated_elements": row["flat_elements"]})
                    continue
                t0 = time.perf_counter()
                try:
                    result = hot_align(problem, cfg)
                except StageError as exc:
                    if not isinstance(exc.cause, CapacityError):
                        raise
                    rows.append({**row, "status": "capacity", "wall_time": "",
                                 "allocated_elements": exc.cause.elements})
                    continue
                rows.append({**row, "M": result.M, "status": "ok",
                             "wall_time": f"{time.perf_counter() - t0:.3f}",
                             "allocated_elements": result.allocated_elements})
    return rows


def cmd_bench(args) -> int:
    rows = bench_rows(args.sizes, args.graph_counts, _config_from(args), args.degree, _split(args.modes))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


COMMANDS = {"gen": cmd_gen, "align": cmd_align, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except HotError as exc:
        print(f"hot {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hot {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
