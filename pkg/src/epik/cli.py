"""Command-line interface: check models, export dependency graphs, run the
benchmark suite.

Exit codes for `check`: 0 the property holds, 1 it fails (counterexample
printed), 2 any error (missing file, parse error, state-space overflow).
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
import time
from pathlib import Path

from .benchmarks import FAMILIES, generate
from .checker import check_system, expand_witness
from .errors import EpikError
from .frontend import parse_system
from .model import drop_leaves, equality_merge, resolve_formula, unfold
from .relevance import kappa
from .semantics import DEFAULT_WORLD_CAP


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="epik", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="check a model's spec formula")
    p_check.add_argument("file", type=Path)
    p_check.add_argument("--level", type=int, choices=(0, 1, 2), default=2)
    p_check.add_argument("--time", type=int, default=None, help="evaluation time override")
    p_check.add_argument("--horizon", type=int, default=None, help="horizon override")
    p_check.add_argument("--cap", type=int, default=DEFAULT_WORLD_CAP)
    p_check.add_argument("--stats", type=Path, default=None, help="write stats JSON here")
    p_check.add_argument("--witness", action="store_true",
                         help="expand a counterexample to a full run (enumeration scale only)")
    p_check.set_defaults(fn=cmd_check)

    p_graph = sub.add_parser("graph", help="export the dependency graph as DOT")
    p_graph.add_argument("file", type=Path)
    p_graph.add_argument("--stage", choices=("raw", "merged", "optimized"), default="raw")
    p_graph.add_argument("--agent", default=None, help="agent whose observables to cluster")
    p_graph.add_argument("-o", "--out", type=Path, required=True)
    p_graph.set_defaults(fn=cmd_graph)

    p_bench = sub.add_parser("bench", help="run benchmark families")
    p_bench.add_argument("--family", choices=FAMILIES, required=True)
    p_bench.add_argument("--sizes", default="3..6", help="inclusive range, e.g. 3..10")
    p_bench.add_argument("--levels", default="0,2", help="comma list of pipeline levels")
    p_bench.add_argument("--timeout", type=float, default=120.0, help="seconds per run")
    p_bench.add_argument("--cap", type=int, default=DEFAULT_WORLD_CAP)
    p_bench.add_argument("--jsonl", type=Path, default=None, help="write JSON lines here")
    p_bench.set_defaults(fn=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EpikError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _load(path: Path):
    return parse_system(path.read_text(encoding="utf-8"), str(path))


def cmd_check(args) -> int:
    spec = _load(args.file)
    verdict, stats = check_system(
        spec, level=args.level, cap=args.cap, eval_time=args.time, horizon=args.horizon
    )
    if args.stats:
        args.stats.write_text(stats.to_json() + "\n", encoding="utf-8")
    if verdict.is_valid:
        print("VALID")
        return 0
    print("FAILS")
    for name in sorted(verdict.counterexample):
        print(f"  {name} = {verdict.counterexample[name]}")
    if args.witness:
        run = expand_witness(
            spec, verdict.counterexample, cap=args.cap, eval_time=args.time
        )
        print("witness run:")
        for t, state in enumerate(run):
            inner = ",".join(f"{v}={state[v]}" for v in sorted(state))
            print(f"  {t}: {inner}")
    return 1


def _dot(sm, cluster_agent: str | None) -> str:
    lines = ["digraph model {", "  rankdir=TB;", '  node [shape=ellipse, fontsize=10];']
    observed = sm.obs.get(cluster_agent, frozenset()) if cluster_agent else frozenset()
    plain = [v for v in sm.vertices if v not in observed]
    for v in plain:
        shape = "box" if sm.meta[v].kind == "selector" else "ellipse"
        lines.append(f'  "{v}" [shape={shape}];')
    if observed:
        lines.append(f'  subgraph "cluster_{cluster_agent}" {{')
        lines.append(f'    label="observed by {cluster_agent}";')
        for v in sorted(observed):
            lines.append(f'    "{v}";')
        lines.append("  }")
    for u, v in sm.dag.edges():
        lines.append(f'  "{u}" -> "{v}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_graph(args) -> int:
    spec = _load(args.file)
    sm = unfold(spec)
    agent = args.agent or spec.agents[0].agent
    if args.stage != "raw":
        sm, alias = equality_merge(sm)
        if args.stage == "optimized":
            formula = resolve_formula(spec.stamped_formula(), alias)
            rel = kappa(formula, sm)
            sm = drop_leaves(sm, rel.final)
    args.out.write_text(_dot(sm, agent), encoding="utf-8")
    print(f"{len(sm.vertices)} nodes -> {args.out}")
    return 0


def _bench_worker(family: str, n: int, level: int, cap: int, queue) -> None:
    spec = parse_system(generate(family, n), f"{family}({n})")
    t0 = time.perf_counter()
    try:
        verdict, stats = check_system(spec, level=level, cap=cap)
        wall = (time.perf_counter() - t0) * 1000.0
        queue.put({"verdict": verdict.outcome, "wall_ms": round(wall, 3), **stats.to_dict()})
    except EpikError as err:
        wall = (time.perf_counter() - t0) * 1000.0
        queue.put({"verdict": None, "error": str(err), "wall_ms": round(wall, 3)})


def _parse_sizes(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes)
    levels = [int(x) for x in args.levels.split(",") if x != ""]
    records = []
    ctx = multiprocessing.get_context("fork")
    for n in sizes:
        for level in sorted(levels):
            queue = ctx.Queue()
            proc = ctx.Process(
                target=_bench_worker, args=(args.family, n, level, args.cap, queue)
            )
            proc.start()
            proc.join(args.timeout)
            record = {"family": args.family, "n": n, "level": level, "timeout": False}
            if proc.is_alive():
                proc.terminate()
                proc.join()
                record["timeout"] = True
                record["verdict"] = None
            else:
                record.update(queue.get())
            records.append(record)
            verdict = record.get("verdict") or (
                "timeout" if record["timeout"] else record.get("error", "error")
            )
            wall = record.get("wall_ms")
            wall_text = f"{wall / 1000.0:8.2f}s" if wall is not None else "       -"
            print(f"{args.family:>16} n={n:<3} level={level} {wall_text}  {verdict}")
    if args.jsonl:
        with args.jsonl.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
