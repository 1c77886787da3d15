"""Command-line entry points ``bench`` and ``gp``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from asmfgp.errors import DataFormatError, GPError
from asmfgp.serialization import dumps, model_from_dict


def _bench_parser():
    p = argparse.ArgumentParser(prog="bench", description="Run and summarize GP benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="fit every configured model and write a results CSV")
    run.add_argument("--config", required=True, help="benchmark JSON config")
    run.add_argument("--out", required=True, help="results CSV")
    run.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    summ = sub.add_parser("summarize", help="median and quartiles per problem, budget and model")
    summ.add_argument("--in", dest="inp", required=True, help="results CSV from 'bench run'")
    summ.add_argument("--out", required=True, help="summary CSV")
    summ.add_argument("--plot-out", default=None, help="long-format plot CSV")
    summ.add_argument("--score-floor", type=float, default=None,
                      help="lower clip for plotted scores (default -5)")
    sub.add_parser("list-problems", help="print the problem registry")
    return p


def bench_main(argv=None) -> int:
    from asmfgp import bench, testbed

    args = _bench_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = bench.BenchConfig.from_json(args.config)
            rows = bench.run_bench(config, args.out, max(1, args.jobs))
            failed = sum(1 for r in rows if r.error)
            print(f"wrote {len(rows)} rows to {args.out} ({failed} failed)")
        elif args.command == "summarize":
            floor = bench.SCORE_FLOOR if args.score_floor is None else args.score_floor
            table = bench.summarize(args.inp, args.out, args.plot_out, floor)
            print(f"wrote {len(table)} summary rows to {args.out}")
        else:
            for name in testbed.list_problems():
                problem = testbed.build_problem(name, 0)
                print(f"{name}\td={problem.d}\t{problem.provenance['kind']}")
    except (GPError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2
    return 0


def _gp_parser():
    from asmfgp.bench import MODELS

    p = argparse.ArgumentParser(prog="gp", description="Fit and apply a single GP model.")
    sub = p.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", help="fit a model on a CSV table")
    fit.add_argument("--data", required=True, help="training CSV with a header row")
    fit.add_argument("--target", required=True, help="name of the response column")
    fit.add_argument("--model", required=True, choices=MODELS, help="model variant to fit")
    fit.add_argument("--out", required=True, help="model JSON")
    fit.add_argument("--n-starts", type=int, default=5, help="optimizer restarts (default 5)")
    fit.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    pred = sub.add_parser("predict", help="predict with a saved model")
    pred.add_argument("--model", required=True, help="model JSON from 'gp fit'")
    pred.add_argument("--data", required=True, help="CSV holding the input columns")
    pred.add_argument("--out", required=True, help="CSV with mean and variance columns")
    return p


def read_columns(path, columns) -> np.ndarray:
    """Numeric matrix of the named columns of a CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"{path} lacks column(s) {missing}")
        try:
            X = [[float(row[c]) for c in columns] for row in reader]
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: non-numeric or missing input value ({exc})") from exc
    return np.asarray(X, dtype=float).reshape(-1, len(columns))


def gp_fit_command(data, target, model, out, n_starts=5, seed=0):
    from asmfgp.bench import fit_model
    from asmfgp.errors import DegenerateDataError
    from asmfgp.testbed import ingest_csv

    problem = ingest_csv(data, target)
    X, y = problem.pool, problem.pool_values
    x_min = X.min(axis=0)
    span = X.max(axis=0) - x_min
    x_scale = np.where(span > 0, span, 1.0)
    y_mean, y_sd = float(y.mean()), float(y.std())
    if not y_sd > 0:
        raise DegenerateDataError("target is constant")
    fitted = fit_model(model, (X - x_min) / x_scale, (y - y_mean) / y_sd, n_starts, seed)
    doc = {
        "format": "asmfgp-model",
        "model_name": model,
        "columns": problem.provenance["columns"],
        "target": target,
        "scaling": {"x_min": x_min, "x_scale": x_scale, "y_mean": y_mean, "y_sd": y_sd},
        "r_selected": getattr(fitted, "r_selected", None),
        "model": fitted.to_dict(),
    }
    with open(out, "w") as fh:
        fh.write(dumps(doc))
    return doc


def gp_predict_command(model_path, data, out):
    with open(model_path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "asmfgp-model":
        raise DataFormatError(f"{model_path} is not a model file written by 'gp fit'")
    sc = doc["scaling"]
    model = model_from_dict(doc["model"])
    X = read_columns(data, doc["columns"])
    Xs = (X - np.asarray(sc["x_min"])) / np.asarray(sc["x_scale"])
    pred = model.predict(Xs)
    mean = pred.mean * sc["y_sd"] + sc["y_mean"]
    var = pred.variance * sc["y_sd"] ** 2
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mean", "variance"])
        for m, v in zip(mean, var):
            w.writerow([repr(float(m)), repr(float(v))])
    return mean, var


def gp_main(argv=None) -> int:
    args = _gp_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            gp_fit_command(args.data, args.target, args.model, args.out, args.n_starts, args.seed)
            print(f"wrote {args.model} model to {args.out}")
        else:
            mean, _ = gp_predict_command(args.model, args.data, args.out)
            print(f"wrote {len(mean)} predictions to {args.out}")
    except (GPError, OSError, KeyError) as exc:
        print(f"gp: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(gp_main())
