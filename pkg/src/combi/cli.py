"""``combi`` command line: gen, hash, build, search, bench.

Machine output is JSON lines; tables and progress go to stderr.
Exit codes: 0 ok, 2 usage, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bitcode import MAX_BITS, generate_hyperplanes, hash_vectors
from .errors import CombiError
from .formats import atomic_write, read_bitcodes, read_vectors, write_bitcodes, write_vectors
from .tree import MutateBudget

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``"T:1,2,4;m:0,1,2"`` -> every (T, m) pair."""
    axes: dict[str, list[int]] = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        name, _, values = part.partition(":")
        name = name.strip()
        if name not in ("T", "m") or name in axes:
            raise UsageError(f"bad grid axis {name!r}; expected T and m once each")
        try:
            axes[name] = [int(v) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad grid values in {part!r}") from exc
    if set(axes) != {"T", "m"} or not axes["T"] or not axes["m"]:
        raise UsageError("grid needs non-empty T and m lists")
    if min(axes["T"]) < 1 or min(axes["m"]) < 0:
        raise UsageError("grid needs T >= 1 and m >= 0")
    return [(t, m) for t in axes["T"] for m in axes["m"]]


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path | None
    output: Path | None
    queries: Path | None
    bits: int
    trees: int
    mutates: int
    k: int
    seed: int
    nodes: int
    mode: str
    n: int
    dim: int
    clusters: int
    spread: float
    query_count: int | None
    fmt: str | None
    grid: tuple[tuple[int, int], ...]
    threads: int

    @classmethod
    def from_args(cls, a: argparse.Namespace) -> "RunConfig":
        cfg = cls(
            command=a.command,
            input=Path(a.input) if getattr(a, "input", None) else None,
            output=Path(a.output) if getattr(a, "output", None) else None,
            queries=Path(a.queries) if getattr(a, "queries", None) else None,
            bits=getattr(a, "bits", 64),
            trees=getattr(a, "trees", 4),
            mutates=getattr(a, "mutates", 2),
            k=getattr(a, "k", 10),
            seed=a.seed,
            nodes=getattr(a, "nodes", 1),
            mode=getattr(a, "mode", "exact"),
            n=getattr(a, "n", 1),
            dim=getattr(a, "dim", 1),
            clusters=getattr(a, "clusters", 1),
            spread=getattr(a, "spread", 0.5),
            query_count=getattr(a, "query_count", None),
            fmt=getattr(a, "format", None),
            grid=tuple(parse_grid(a.grid)) if getattr(a, "grid", None) else (),
            threads=_thread_cap(),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        checks = [
            (1 <= self.bits <= MAX_BITS, f"--bits must be in [1, {MAX_BITS}]"),
            (self.trees >= 1, "--trees must be >= 1"),
            (0 <= self.mutates <= self.bits, "--mutates must be in [0, bits]"),
            (self.k >= 1, "--k must be >= 1"),
            (self.nodes >= 1, "--nodes must be >= 1"),
            (self.n >= 1, "--n must be >= 1"),
            (self.dim >= 1, "--dim must be >= 1"),
            (self.clusters >= 1, "--clusters must be >= 1"),
            (self.spread >= 0, "--spread must be >= 0"),
            (self.query_count is None or self.query_count >= 1, "--query-count must be >= 1"),
            (self.seed >= 0, "--seed must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise UsageError(msg)
        if self.output is not None and not self.output.parent.is_dir() and str(self.output.parent):
            raise OSError(f"{self.output.parent}: output directory does not exist")


def _thread_cap() -> int:
    raw = os.environ.get("COMBI_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"COMBI_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("COMBI_THREADS must be >= 1")
    return n


def _need(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name} is required for {cfg.command}")


def _emit(records, cfg: RunConfig) -> None:
    lines = [json.dumps(r, sort_keys=True) + "\n" for r in records]
    if cfg.output is None:
        sys.stdout.writelines(lines)
    else:
        with atomic_write(cfg.output, "w") as fh:
            fh.writelines(lines)


def _queries(cfg: RunConfig):
    q = read_bitcodes(cfg.queries)
    if cfg.query_count is not None and cfg.query_count < q.n:
        q = q.subset(range(cfg.query_count))
    return q


# -- commands ----------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> None:
    from .synth import gaussian_mixture

    _need(cfg, "output")
    x, _ = gaussian_mixture(cfg.n, cfg.dim, cfg.clusters, cfg.seed, spread=cfg.spread)
    write_vectors(x, cfg.output, cfg.fmt or "csv")
    print(f"wrote {cfg.n} vectors of dimension {cfg.dim} to {cfg.output}", file=sys.stderr)


def cmd_hash(cfg: RunConfig) -> None:
    _need(cfg, "input", "output")
    x = read_vectors(cfg.input, cfg.fmt)
    planes = generate_hyperplanes(x.shape[1], cfg.bits, cfg.seed)
    write_bitcodes(hash_vectors(x, planes), cfg.output)
    print(f"hashed {x.shape[0]} vectors to {cfg.bits}-bit codes in {cfg.output}", file=sys.stderr)


def cmd_build(cfg: RunConfig) -> None:
    from .forest import forest_build, manifest_dict

    _need(cfg, "input", "output")
    data = read_bitcodes(cfg.input)
    forest = forest_build(data, cfg.trees, seed=cfg.seed)
    rel = os.path.relpath(cfg.input.resolve(), cfg.output.resolve().parent)
    with atomic_write(cfg.output, "w") as fh:
        fh.write(json.dumps(manifest_dict(forest, rel), indent=2) + "\n")
    sizes = ", ".join(f"{t.node_count}" for t in forest.trees)
    print(f"built {cfg.trees} trees over {data.n} codes (nodes: {sizes})", file=sys.stderr)


def cmd_search(cfg: RunConfig) -> None:
    from .forest import load_forest

    _need(cfg, "input", "queries")
    forest = load_forest(cfg.input)
    queries = _queries(cfg)
    if queries.length != forest.length:
        from .errors import InvalidState

        raise InvalidState(f"queries have {queries.length} bits, index has {forest.length}")
    budget = MutateBudget(0, cfg.mutates)
    codes = queries.codes

    if cfg.nodes > 1:
        from .cluster import cluster_build, cluster_search

        state = cluster_build(forest.dataset, cfg.nodes, seed=cfg.seed, trees=forest.n_trees)
        records = []
        for qi, q in enumerate(codes):
            t0 = time.perf_counter()
            res = cluster_search(state, q, cfg.k, budget, cfg.mode, qid=qi)
            records.append(_record(qi, res.neighbors, time.perf_counter() - t0,
                                   messages=res.messages, bytes=res.bytes))
    else:
        def one(item):
            qi, q = item
            t0 = time.perf_counter()
            neighbors, evaluated = forest.knn(q, cfg.k, budget)
            return _record(qi, neighbors, time.perf_counter() - t0, evaluated=evaluated)

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(one, enumerate(codes)))
    _emit(records, cfg)
    print(f"{len(records)} queries answered", file=sys.stderr)


def _record(qi, neighbors, seconds, **extra) -> dict:
    return {
        "query": qi,
        "ids": [nb.id for nb in neighbors],
        "hds": [nb.hd for nb in neighbors],
        "time_s": seconds,
        **extra,
    }


def cmd_bench(cfg: RunConfig) -> None:
    from .metrics import sweep

    _need(cfg, "input", "queries")
    grid = cfg.grid or ((cfg.trees, cfg.mutates),)
    data = read_bitcodes(cfg.input)
    queries = _queries(cfg)
    reports = sweep(data, queries, grid, cfg.k, seed=cfg.seed)
    _emit([r.to_dict() for r in reports], cfg)
    print(f"{'engine':<11}{'T':>3}{'m':>3}{'precision':>11}{'fdr':>8}"
          f"{'access%':>9}{'speedup':>9}{'lambda@1':>10}", file=sys.stderr)
    for r in reports:
        t = "-" if r.trees is None else r.trees
        m = "-" if r.mutates is None else r.mutates
        print(f"{r.engine:<11}{t:>3}{m:>3}{r.mean_precision:>11.4f}{r.fdr:>8.4f}"
              f"{r.access_pct:>9.3f}{r.speedup:>9.2f}{r.lambda_mass_at_1:>10.3f}", file=sys.stderr)


COMMANDS = {"gen": cmd_gen, "hash": cmd_hash, "build": cmd_build,
            "search": cmd_search, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="combi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, io=True):
        if io:
            sp.add_argument("--input", help="input file")
        sp.add_argument("--output", help="output file (stdout for JSON lines if omitted)")
        sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen", help="write Gaussian-mixture vectors")
    common(g, io=False)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--clusters", type=int, default=8)
    g.add_argument("--spread", type=float, default=0.5)
    g.add_argument("--format", choices=("csv", "fvecs"), default="csv")

    h = sub.add_parser("hash", help="hash vectors to a CBI1 bitcode file")
    common(h)
    h.add_argument("--bits", type=int, default=64)
    h.add_argument("--format", choices=("csv", "fvecs"), default=None)

    b = sub.add_parser("build", help="build a forest and write its manifest")
    common(b)
    b.add_argument("--trees", type=int, default=4)

    s = sub.add_parser("search", help="k-NN queries against a manifest")
    common(s)
    s.add_argument("--queries", required=True, help="CBI1 file of query codes")
    s.add_argument("--query-count", type=int, default=None)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--mutates", type=int, default=2)
    s.add_argument("--nodes", type=int, default=1, help="simulated cluster size")
    s.add_argument("--mode", choices=("exact", "approximate"), default="approximate",
                   help="local search mode on cluster nodes")

    bn = sub.add_parser("bench", help="sweep (T, m) against the exhaustive scan")
    common(bn)
    bn.add_argument("--queries", required=True, help="CBI1 file of query codes")
    bn.add_argument("--query-count", type=int, default=None)
    bn.add_argument("--k", type=int, default=10)
    bn.add_argument("--trees", type=int, default=4)
    bn.add_argument("--mutates", type=int, default=2)
    bn.add_argument("--grid", default=None, help='e.g. "T:1,2,4;m:0,1,2"')
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        cfg = RunConfig.from_args(args)
        COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"combi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CombiError as exc:
        print(f"combi: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"combi: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
