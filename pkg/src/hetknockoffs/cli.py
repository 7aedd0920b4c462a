"""Command-line surface.

Subcommands: knockoff, stats, select, pipeline, simulate, cv,
transform-age.  Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.  Diagnostics go to stderr; data goes to files
(or stdout with --stdout where supported).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data import MixedDataset
from .errors import NumericalError, SchemaError
from .evaluation import age_transform, cv_ols_mse
from .filter import select
from .forest import ForestParams
from .importance import MlpConfig
from . import io as hio
from .sim import ExperimentResult, KnockoffSpec, SimConfig, StatisticSpec, run_experiment

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_KNOCKOFF_METHODS = {
    "second-order": "second_order",
    "cr": "conditional_residual",
    "scip": "scip",
}
_STAT_METHODS = {
    "lcd": "lcd",
    "lasso-max": "lasso_max",
    "mald-forest": "mald_forest",
    "mald-mlp": "mald_mlp",
    "gini": "gini",
}


def _forest_args(parser):
    parser.add_argument("--trees", type=int, default=50, help="trees per forest")
    parser.add_argument("--mtry", type=int, default=None)
    parser.add_argument("--min-node-size", type=int, default=20)
    parser.add_argument("--max-depth", type=int, default=None)


def _forest_params(args, seed) -> ForestParams:
    return ForestParams(
        n_trees=args.trees,
        mtry=args.mtry,
        min_node_size=args.min_node_size,
        max_depth=args.max_depth,
        seed=seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetknockoffs",
        description="Knockoff-based FDR-controlled feature selection for mixed data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pk = sub.add_parser("knockoff", help="generate a knockoff copy of a dataset")
    pk.add_argument("data", help="input CSV (header required)")
    pk.add_argument("--schema", default=None, help="TOML schema file")
    pk.add_argument("--method", choices=sorted(_KNOCKOFF_METHODS), default="cr")
    pk.add_argument("--residual-gen", choices=["second-order", "permute"], default=None)
    _forest_args(pk)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--threads", type=int, default=1)
    pk.add_argument("--out", required=True)
    pk.add_argument("--stdout", action="store_true", help="also print the CSV to stdout")
    pk.set_defaults(func=cmd_knockoff)

    ps = sub.add_parser("stats", help="compute W statistics from X, knockoffs, y")
    ps.add_argument("data")
    ps.add_argument("knockoffs")
    ps.add_argument("response", help="CSV holding the response column")
    ps.add_argument("--schema", default=None)
    ps.add_argument("--y-column", default=None)
    ps.add_argument("--method", choices=sorted(_STAT_METHODS), default="lcd")
    ps.add_argument("--b", type=float, default=None, help="MALD bandwidth (default n^-0.2)")
    ps.add_argument("--r", type=float, default=1.0, help="MALD exponent")
    ps.add_argument("--aggregate", choices=["max", "l2", "sum-abs"], default="max")
    _forest_args(ps)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--threads", type=int, default=1)
    ps.add_argument("--out", required=True)
    ps.add_argument("--stdout", action="store_true")
    ps.set_defaults(func=cmd_stats)

    pf = sub.add_parser("select", help="apply the knockoff filter to a W file")
    pf.add_argument("w", help="CSV with feature,w,method")
    pf.add_argument("--q", type=float, required=True)
    pf.add_argument("--offset", type=int, choices=[0, 1], default=1)
    pf.add_argument("--out", required=True)
    pf.add_argument("--stdout", action="store_true")
    pf.set_defaults(func=cmd_select)

    pp = sub.add_parser("pipeline", help="knockoff -> stats -> select in one run")
    pp.add_argument("data")
    pp.add_argument("response")
    pp.add_argument("--schema", default=None)
    pp.add_argument("--y-column", default=None)
    pp.add_argument("--method", choices=sorted(_KNOCKOFF_METHODS), default="cr")
    pp.add_argument("--residual-gen", choices=["second-order", "permute"], default=None)
    pp.add_argument("--statistic", choices=sorted(_STAT_METHODS), default="lcd")
    pp.add_argument("--b", type=float, default=None)
    pp.add_argument("--r", type=float, default=1.0)
    pp.add_argument("--aggregate", choices=["max", "l2", "sum-abs"], default="max")
    _forest_args(pp)
    pp.add_argument("--q", type=float, default=0.2)
    pp.add_argument("--offset", type=int, choices=[0, 1], default=1)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--threads", type=int, default=1)
    pp.add_argument("--out-dir", required=True)
    pp.set_defaults(func=cmd_pipeline)

    pm = sub.add_parser("simulate", help="run a replicated power/FDR experiment")
    pm.add_argument("--config", required=True, help="TOML experiment config")
    pm.add_argument("--out", default=None, help="results CSV (overrides config output)")
    pm.add_argument("--threads", type=int, default=None)
    pm.add_argument("--stdout", action="store_true")
    pm.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("cv", help="k-fold OLS cross-validated MSE for selected features")
    pc.add_argument("data")
    pc.add_argument("response")
    pc.add_argument("--schema", default=None)
    pc.add_argument("--y-column", default=None)
    pc.add_argument("--features", default=None, help="comma-separated feature names")
    pc.add_argument("--k", type=int, default=10)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", required=True)
    pc.add_argument("--stdout", action="store_true")
    pc.set_defaults(func=cmd_cv)

    pa = sub.add_parser("transform-age", help="apply the log-linear age transform")
    pa.add_argument("data")
    pa.add_argument("--column", required=True)
    pa.add_argument("--out", required=True)
    pa.add_argument("--stdout", action="store_true")
    pa.set_defaults(func=cmd_transform_age)
    return parser


def _maybe_stdout(path, use_stdout: bool) -> None:
    if use_stdout:
        sys.stdout.write(Path(path).read_text())


def _read_xy(args):
    X = hio.read_dataset(args.data, args.schema)
    y = hio.read_column(args.response, args.y_column)
    if y.shape[0] != X.n:
        raise SchemaError(f"response has {y.shape[0]} rows, data has {X.n}")
    return X, y


def _knockoff_spec(args) -> KnockoffSpec:
    gen = args.residual_gen.replace("-", "_") if args.residual_gen else None
    return KnockoffSpec(
        method=_KNOCKOFF_METHODS[args.method],
        residual_gen=gen,
        forest=_forest_params(args, args.seed),
    )


def _statistic_spec(args, method_attr="method") -> StatisticSpec:
    return StatisticSpec(
        method=_STAT_METHODS[getattr(args, method_attr)],
        b=args.b,
        r=args.r,
        aggregate=args.aggregate,
        forest=_forest_params(args, args.seed),
    )


def cmd_knockoff(args) -> int:
    X = hio.read_dataset(args.data, args.schema)
    Xt = _knockoff_spec(args).generate(X, seed=args.seed, n_jobs=args.threads)
    hio.write_knockoffs(Xt, args.out)
    _maybe_stdout(args.out, args.stdout)
    return 0


def cmd_stats(args) -> int:
    X, y = _read_xy(args)
    Xt_ds = hio.read_dataset(args.knockoffs, args.schema)
    if Xt_ds.schema != X.schema:
        raise SchemaError("knockoff file schema does not match the data schema")
    w = _statistic_spec(args).compute(y, X, Xt_ds, seed=args.seed)
    hio.write_w(w, args.out)
    _maybe_stdout(args.out, args.stdout)
    return 0


def cmd_select(args) -> int:
    w = hio.read_w(args.w)
    result = select(w, q=args.q, offset=args.offset)
    hio.write_selection(result, w.names, args.out)
    _maybe_stdout(args.out, args.stdout)
    return 0


def cmd_pipeline(args) -> int:
    X, y = _read_xy(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    Xt = _knockoff_spec(args).generate(X, seed=args.seed, n_jobs=args.threads)
    w = _statistic_spec(args, "statistic").compute(y, X, Xt, seed=args.seed)
    result = select(w, q=args.q, offset=args.offset)
    hio.write_knockoffs(Xt, out_dir / "knockoffs.csv")
    hio.write_w(w, out_dir / "w.csv")
    hio.write_selection(result, w.names, out_dir / "selection.csv")
    print(
        f"selected {len(result.selected)} of {X.p} features "
        f"(threshold={result.threshold}, q={args.q})",
        file=sys.stderr,
    )
    return 0


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ValueError(f"simulate config is missing {key!r} in {where}")
    return table[key]


def _config_forest(table: dict, default_trees: int) -> ForestParams:
    return ForestParams(
        n_trees=int(table.get("trees", default_trees)),
        mtry=table.get("mtry"),
        min_node_size=table.get("min_node_size", 20),
        max_depth=table.get("max_depth"),
    )


def load_run_config(path) -> dict:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    seed = _require(doc, "seed", "the top level")
    cov = _require(doc, "covariates", "the top level")
    config = SimConfig(
        n=int(_require(cov, "n", "[covariates]")),
        p=int(_require(cov, "p", "[covariates]")),
        n_numeric=int(_require(cov, "n_numeric", "[covariates]")),
        n_cat2=int(cov.get("n_cat2", 0)),
        n_cat3=int(cov.get("n_cat3", 0)),
        beta=float(cov.get("beta", 8.0)),
        modes=int(cov.get("modes", 5)),
        rho=float(cov.get("rho", 0.5)),
        mode_delta=float(cov.get("mode_delta", 3.0)),
        seed=int(seed),
    )
    ktab = doc.get("knockoff", {})
    knockoff = KnockoffSpec(
        method=str(ktab.get("method", "second_order")),
        residual_gen=ktab.get("residual_gen"),
        forest=_config_forest(ktab, 50),
    )
    stab = doc.get("statistic", {})
    statistic = StatisticSpec(
        method=str(stab.get("method", "lcd")),
        b=stab.get("b"),
        r=float(stab.get("r", 1.0)),
        aggregate=str(stab.get("aggregate", "max")),
        n_folds=int(stab.get("n_folds", 5)),
        forest=_config_forest(stab, 100),
        mlp=MlpConfig(
            epochs=int(stab.get("epochs", 500)),
            step_size=float(stab.get("step_size", 0.1)),
        ),
    )
    return {
        "config": config,
        "outcome": str(doc.get("outcome", "linear")),
        "knockoff": knockoff,
        "statistic": statistic,
        "q": float(doc.get("q", 0.2)),
        "offset": int(doc.get("offset", 1)),
        "n_reps": int(doc.get("n_reps", 100)),
        "seed": int(seed),
        "threads": int(doc.get("threads", 1)),
        "output": doc.get("output"),
    }


def write_results_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "method", "statistic", "q", "fdp", "power", "n_selected", "seconds"])
        for row in result.rows():
            writer.writerow(
                [
                    row["rep"],
                    row["method"],
                    row["statistic"],
                    hio._fmt(row["q"]),
                    hio._fmt(row["fdp"]),
                    hio._fmt(row["power"]),
                    row["n_selected"],
                    hio._fmt(row["seconds"]),
                ]
            )


def cmd_simulate(args) -> int:
    run = load_run_config(args.config)
    out = args.out or run["output"]
    if out is None:
        raise ValueError("simulate needs --out or an 'output' path in the config")
    threads = args.threads if args.threads is not None else run["threads"]
    result = run_experiment(
        run["config"],
        run["outcome"],
        run["knockoff"],
        run["statistic"],
        q=run["q"],
        n_reps=run["n_reps"],
        seed=run["seed"],
        offset=run["offset"],
        n_jobs=threads,
    )
    failures = [r for r in result.reps if r.error is not None]
    for r in failures:
        print(f"rep {r.rep} failed: {r.error}", file=sys.stderr)
    write_results_csv(result, out)
    _maybe_stdout(out, args.stdout)
    print(
        f"{len(result.reps) - len(failures)}/{len(result.reps)} reps ok; "
        f"mean FDR={result.mean_fdr:.4f} (SE {result.se_fdr:.4f}), "
        f"mean power={result.mean_power:.4f} (SE {result.se_power:.4f})",
        file=sys.stderr,
    )
    return 0


def cmd_cv(args) -> int:
    X, y = _read_xy(args)
    selected = None
    if args.features is not None:
        wanted = [s for s in args.features.split(",") if s]
        missing = [s for s in wanted if s not in X.names]
        if missing:
            raise SchemaError(f"unknown feature name(s): {missing}")
        selected = [X.names.index(s) for s in wanted]
    report = cv_ols_mse(X, y, k=args.k, seed=args.seed, selected=selected)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "mse"])
        for i, mse in enumerate(report.fold_mses):
            writer.writerow([i, hio._fmt(mse)])
        writer.writerow(["mean", hio._fmt(report.mean_mse)])
    _maybe_stdout(args.out, args.stdout)
    return 0


def cmd_transform_age(args) -> int:
    with open(args.data, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{args.data}: empty file")
        if args.column not in header:
            raise SchemaError(f"{args.data}: no column named {args.column!r}")
        j = header.index(args.column)
        rows = [r for r in reader if r]
    out_rows = []
    for i, row in enumerate(rows):
        try:
            age = float(row[j])
        except ValueError:
            raise SchemaError(
                f"row {i + 1}, column {args.column!r}: cannot parse {row[j]!r}"
            ) from None
        if age < 0:
            raise SchemaError(f"row {i + 1}: negative age {age}")
        new = list(row)
        new[j] = hio._fmt(age_transform(age))
        out_rows.append(new)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(out_rows)
    _maybe_stdout(args.out, args.stdout)
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (SchemaError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
