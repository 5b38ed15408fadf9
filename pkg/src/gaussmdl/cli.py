"""Command-line interface: ``gaussmdl {score,learn,simulate,experiment}``.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import GraphError, TooLarge, load_dag, mask_members, save_dag
from .experiments import RankConfig, ShdConfig, run_rank, run_shd
from .regress import DataError, SingularDesign, fit_local, read_data_csv, write_data_csv
from .scoring import DegenerateFit, Metric, build_table, local_score
from .search import learn
from .sim import Seed, sample_data, sample_params, sample_sparse_dag, sample_uniform_dag, save_params

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_score(args) -> int:
    data = read_data_csv(args.data)
    dag = load_dag(args.dag)
    if dag.m != data.m:
        raise DataError(f"DAG has {dag.m} nodes but data has {data.m} columns")
    metric = Metric.parse(args.metric)
    nodes = []
    total = 0.0
    for i, mask in enumerate(dag.parents):
        fit = fit_local(data, i, mask)
        value = local_score(metric, fit, data.m, clamp=not args.strict)
        total += value
        nodes.append({"node": i, "parents": mask_members(mask), "k": fit.k, "score_nats": value})
    print(f"metric {metric.value}")
    for rec in nodes:
        print(f"node {rec['node']} parents {rec['parents']} k {rec['k']} score {_fmt(rec['score_nats'])}")
    print(f"total {_fmt(total)}")
    if args.json:
        _dump({"metric": metric.value, "total_nats": total, "nodes": nodes}, args.json)
    return 0


def cmd_learn(args) -> int:
    data = read_data_csv(args.data)
    max_parents = data.m - 1 if args.max_parents is None else args.max_parents
    if max_parents < 0:
        raise UsageError("--max-parents must be non-negative")
    if args.algorithm == "exhaustive" and data.m > 6:
        raise UsageError("exhaustive search is limited to m <= 6; use --algorithm dp")
    table = build_table(args.metric, data, max_parents, clamp=not args.strict)
    if args.table:
        table.to_csv(args.table)
    result = learn(table, args.algorithm)
    _dump(result.to_json(), args.out)
    return 0


def cmd_simulate(args) -> int:
    seed = Seed(args.seed).child("simulate")
    if args.uniform:
        dag = sample_uniform_dag(args.m, seed.child("dag"))
    else:
        dag = sample_sparse_dag(args.m, args.nn, seed.child("dag"))
    params = sample_params(dag, seed.child("params"), random_signs=args.random_signs)
    data = sample_data(dag, params, args.n, seed.child("data"),
                       precision_noise=args.precision_noise)
    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_data_csv(data, f"{prefix}.csv")
    save_dag(dag, f"{prefix}.dag.json")
    save_params(params, f"{prefix}.params.json")
    print(f"wrote {prefix}.csv {prefix}.dag.json {prefix}.params.json")
    return 0


_LIST_KEYS = {"sample_sizes", "metrics", "node_counts", "neighbor_counts"}
_BOOL_KEYS = {"precision_noise", "random_signs"}


def load_config_file(path: str) -> dict:
    """Read experiment settings from JSON or ``key=value`` lines."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in _LIST_KEYS:
                obj[key] = [v.strip() for v in value.split(",") if v.strip()]
            elif key in _BOOL_KEYS:
                obj[key] = value.lower() in ("1", "true", "yes")
            else:
                obj[key] = value
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be an object")
    return {k.replace("-", "_"): v for k, v in obj.items()}


def _experiment_settings(args, fields: set[str]) -> dict:
    settings = load_config_file(args.config_file) if args.config_file else {}
    unknown = set(settings) - fields
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in fields:
        value = getattr(args, key, None)
        if value not in (None, False):
            settings[key] = value
    for key in ("iterations", "m", "seed"):
        if key in settings:
            settings[key] = int(settings[key])
    return settings


def _make_config(cls, settings: dict):
    try:
        return cls(**settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment configuration: {exc}") from None


def cmd_experiment(args) -> int:
    if args.kind == "rank":
        fields = {"m", "sample_sizes", "iterations", "metrics", "seed",
                  "precision_noise", "random_signs"}
        config = _make_config(RankConfig, _experiment_settings(args, fields))
        result = run_rank(config, threads=args.threads)
    else:
        fields = {"node_counts", "neighbor_counts", "sample_sizes", "iterations", "metrics",
                  "seed", "precision_noise", "random_signs"}
        config = _make_config(ShdConfig, _experiment_settings(args, fields))
        result = run_shd(config, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("") if out.suffix == ".csv" else out
    result.write_rows(out)
    result.write_summary(f"{stem}.summary.csv")
    result.write_failures(f"{stem}.failures.csv")
    if args.kind == "shd":
        result.write_table1(f"{stem}.table1.csv")
    print(f"{len(result.rows)} rows, {len(result.failures)} failed iterations -> {out}")
    return 0


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _num_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _metric_list(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    for name in names:
        Metric.parse(name)
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    metric_names = [mt.value for mt in Metric]
    parser = argparse.ArgumentParser(prog="gaussmdl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score a DAG on a dataset")
    p.add_argument("data")
    p.add_argument("dag")
    p.add_argument("--metric", choices=metric_names, default="rnml")
    p.add_argument("--json", help="also write a JSON report here")
    p.add_argument("--strict", action="store_true",
                   help="fail on degenerate fits instead of flooring them")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("learn", parents=[common], help="find the optimal DAG")
    p.add_argument("data")
    p.add_argument("--metric", choices=metric_names, default="rnml")
    p.add_argument("--max-parents", type=int, default=None)
    p.add_argument("--algorithm", choices=["dp", "exhaustive"], default="dp")
    p.add_argument("--out", help="write the result JSON here instead of stdout")
    p.add_argument("--table", help="export the local score table as CSV")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("simulate", parents=[common], help="draw a random network and data")
    p.add_argument("--m", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--nn", type=float, help="expected neighbours per node")
    g.add_argument("--uniform", action="store_true", help="uniform over all DAGs (m <= 5)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--random-signs", action="store_true")
    p.add_argument("--precision-noise", action="store_true",
                   help="treat tau as the noise precision rather than its variance")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", parents=[common], help="run a simulation study")
    p.add_argument("kind", choices=["rank", "shd"])
    p.add_argument("--config-file")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--m", type=int)
    p.add_argument("--node-counts", type=_int_list)
    p.add_argument("--neighbor-counts", type=_num_list)
    p.add_argument("--sample-sizes", type=_int_list)
    p.add_argument("--iterations", type=int)
    p.add_argument("--metrics", type=_metric_list)
    p.add_argument("--random-signs", action="store_true")
    p.add_argument("--precision-noise", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and args.command != "experiment":
        args.seed = 0
    try:
        return args.func(args)
    except (UsageError, TooLarge) as exc:
        print(f"gaussmdl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularDesign, DegenerateFit) as exc:
        print(f"gaussmdl: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GraphError, OSError, ValueError, KeyError) as exc:
        print(f"gaussmdl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
