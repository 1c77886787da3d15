"""Benchmark runner: every model on every problem, budget and replicate."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from asmfgp import __version__, _backend
from asmfgp.active_subspace import MONTE_CARLO, estimate_C, select_r
from asmfgp.additive import additive_fit
from asmfgp.errors import ConfigError
from asmfgp.gp import optimize_hyperparams
from asmfgp.kernels import KernelSpec
from asmfgp.metrics import SCORE_FLOOR, floor_scores, rmse, score
from asmfgp.pipeline import ASMFConfig, Variant, build_variant
from asmfgp.testbed import POOL_SIZE, build_problem, descriptor_name, make_split

log = logging.getLogger(__name__)

MODELS = ("Ref", "Iso", "Add", "AS", "MF", "ASMF", "n-MF", "n-ASMF")
AS_MODELS = ("AS", "ASMF", "n-ASMF")
COLUMNS = ("problem", "d", "n", "replicate", "model", "rmse", "score", "r_selected",
           "wall_clock_s", "seed", "error")
DEFAULT_BUDGETS = (50, 100, 200, 500)


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark description, read from a single JSON document.

    Keys: ``problems`` (registry names or descriptor dicts), ``budgets``,
    ``models``, ``replicates``, ``seed``, ``output``, ``score_floor``,
    ``n_starts``, ``n_pool``.
    """

    problems: tuple
    budgets: tuple = DEFAULT_BUDGETS
    models: tuple = MODELS
    replicates: int = 10
    seed: int = 0
    output: str | None = None
    score_floor: float = SCORE_FLOOR
    n_starts: int = 5
    n_pool: int = POOL_SIZE

    def __post_init__(self):
        for name in ("problems", "budgets", "models"):
            value = getattr(self, name)
            if isinstance(value, (str, dict)):
                value = [value]
            object.__setattr__(self, name, tuple(value))
        if not self.problems:
            raise ConfigError("at least one problem is required")
        if not self.budgets or any(not isinstance(b, int) or b < 1 for b in self.budgets):
            raise ConfigError("budgets must be positive integers")
        unknown = set(self.models) - set(MODELS)
        if unknown or not self.models:
            raise ConfigError(f"unknown model(s) {sorted(unknown)}; choose from {MODELS}")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates must be an integer >= 1")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be >= 1")
        if any(b >= self.n_pool for b in self.budgets):
            raise ConfigError(f"budgets must be below the pool size {self.n_pool}")

    @classmethod
    def from_dict(cls, data: dict) -> BenchConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = set(cls.__dataclass_fields__)
        extra = set(data) - allowed
        if extra:
            raise ConfigError(f"unknown config key(s): {sorted(extra)}")
        if "problems" not in data:
            raise ConfigError("config needs a 'problems' list")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> BenchConfig:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("problems", "budgets", "models"):
            d[k] = list(d[k])
        return d


@dataclass
class BenchResult:
    problem: str
    d: int
    n: int
    replicate: int
    model: str
    rmse: float | None = None
    score: float | None = None
    r_selected: int | None = None
    wall_clock_s: float = 0.0
    seed: int = 0
    error: str = field(default="")


def cell_seed(seed: int, problem: str, n: int, replicate: int) -> int:
    """Seed of one (problem, budget, replicate) cell, independent of list order."""
    key = json.dumps([seed, problem, n, replicate]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def fit_model(name: str, X, y, n_starts: int = 5, seed: int = 0):
    """Fit one roster model; the result has ``predict`` and ``r_selected``."""
    d = X.shape[1]
    template = KernelSpec.product(np.full(d, 0.5 * np.sqrt(d)))
    if name == "Ref":
        return _Single(optimize_hyperparams(X, y, template, n_starts=n_starts, seed=seed))
    if name == "Iso":
        iso = KernelSpec.isotropic(0.5 * np.sqrt(d), d)
        return _Single(optimize_hyperparams(X, y, iso, n_starts=n_starts, seed=seed))
    if name == "Add":
        return _Single(additive_fit(X, y, n_starts=n_starts, seed=seed))
    if name == "AS":
        full = optimize_hyperparams(X, y, template, n_starts=n_starts, seed=seed)
        dec = estimate_C(full, MONTE_CARLO, seed=seed)
        m = select_r(X, y, dec, n_starts=n_starts, seed=seed)
        return _Single(m, m.r)
    if name in ("MF", "ASMF", "n-MF", "n-ASMF"):
        return build_variant(X, y, ASMFConfig(n_starts=n_starts, seed=seed), Variant(name))
    raise ValueError(f"unknown model {name!r}")


class _Single:
    def __init__(self, model, r=None):
        self.model = model
        self.r_selected = r

    def predict(self, Xs):
        return self.model.predict(Xs)

    def to_dict(self):
        return self.model.to_dict()


@lru_cache(maxsize=8)
def _cell_data(problem_json: str, n: int, seed: int, n_pool: int):
    problem = build_problem(json.loads(problem_json), seed)
    return problem.d, make_split(problem, n, seed, n_pool)


def _run_row(task) -> BenchResult:
    problem_json, label, n, rep, model, seed, n_starts, n_pool = task
    row = BenchResult(label, 0, n, rep, model, seed=seed)
    t0 = time.perf_counter()
    try:
        d, split = _cell_data(problem_json, n, seed, n_pool)
        row.d = d
        fitted = fit_model(model, split.X_train, split.y_train, n_starts, seed)
        pred = fitted.predict(split.X_test)
        row.rmse = rmse(split.y_test, pred.mean)
        row.score = score(split.y_test, pred.mean, pred.variance)
        if model in AS_MODELS:
            row.r_selected = fitted.r_selected
    except Exception as exc:  # a failed fit becomes a row, not an aborted run
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        log.warning("%s n=%d rep=%d %s failed: %s", label, n, rep, model, row.error)
    row.wall_clock_s = time.perf_counter() - t0
    return row


def _tasks(config: BenchConfig):
    tasks = []
    for desc in config.problems:
        label = descriptor_name(desc)
        pj = json.dumps(desc, sort_keys=True)
        for n in config.budgets:
            for rep in range(config.replicates):
                s = cell_seed(config.seed, label, n, rep)
                for model in config.models:
                    tasks.append((pj, label, n, rep, model, s, config.n_starts, config.n_pool))
    return tasks


def _sort_key(row: BenchResult):
    return (row.problem, row.n, row.replicate, MODELS.index(row.model))


def run_bench(config: BenchConfig, out=None, jobs: int = 1) -> list:
    """Run every row of ``config`` and write the CSV when ``out`` (or ``config.output``) is set.

    Rows are sorted by problem, budget, replicate and roster order, so the
    file does not depend on ``jobs``.
    """
    tasks = _tasks(config)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_row, tasks, chunksize=1))
    else:
        rows = [_run_row(t) for t in tasks]
    rows.sort(key=_sort_key)
    path = out or config.output
    if path:
        write_results(rows, path)
        write_metadata(config, path)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


def write_metadata(config: BenchConfig, path) -> None:
    """Sidecar ``<path>.meta.json`` with the config and the random-design choices."""
    meta = {
        "version": __version__,
        "backend": _backend.BACKEND,
        "config": config.to_dict(),
        "replicates": config.replicates,
        "seed_derivation": "sha256(json([seed, problem, n, replicate]))[:4], little endian",
        "embedding_matrices": {
            "orthonormal": "Q of QR(standard normal d x d_e), column signs fixed by diag(R)",
            "hashing": "one uniformly placed +-1 entry per row",
        },
        "location_pool": f"{config.n_pool} uniform points per cell, seeded by the cell seed",
    }
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def read_results(path) -> list:
    """Parse a results CSV, checking the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ConfigError(f"{path} does not have the result columns {COLUMNS}")
        rows = []
        for rec in reader:
            v = dict(zip(COLUMNS, rec))
            try:
                rows.append(BenchResult(
                    v["problem"], int(v["d"]), int(v["n"]), int(v["replicate"]), v["model"],
                    float(v["rmse"]) if v["rmse"] else None,
                    float(v["score"]) if v["score"] else None,
                    int(v["r_selected"]) if v["r_selected"] else None,
                    float(v["wall_clock_s"]), int(v["seed"]), v["error"],
                ))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"{path}: malformed row {rec}") from exc
    return rows


SUMMARY_COLUMNS = ("problem", "n", "model", "n_ok", "n_failed",
                   "rmse_median", "rmse_q1", "rmse_q3",
                   "score_median", "score_q1", "score_q3", "r_median")
PLOT_COLUMNS = ("problem", "n", "model", "replicate", "metric", "value")


def _quartiles(values):
    if not values:
        return "", "", ""
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return repr(float(med)), repr(float(q1)), repr(float(q3))


def summarize(in_path, out_path, plot_path=None, score_floor: float = SCORE_FLOOR) -> list:
    """Median and quartiles per (problem, n, model), plus a long-format plot file.

    Failed rows are excluded and counted in ``n_failed``.  Scores are
    floored at ``score_floor`` here only; the input CSV keeps raw values.
    The plot file defaults to ``<out stem>_plot.csv``.
    """
    rows = read_results(in_path)
    cells = {}
    for r in rows:
        cells.setdefault((r.problem, r.n, r.model), []).append(r)
    order = sorted(cells, key=lambda k: (k[0], k[1], MODELS.index(k[2]) if k[2] in MODELS else 99))
    table, plot = [], []
    for key in order:
        ok = [r for r in cells[key] if not r.error]
        rm = [r.rmse for r in ok]
        sc = list(floor_scores([r.score for r in ok], score_floor)) if ok else []
        rs = [r.r_selected for r in ok if r.r_selected is not None]
        table.append([key[0], key[1], key[2], len(ok), len(cells[key]) - len(ok),
                      *_quartiles(rm), *_quartiles(sc),
                      repr(float(np.median(rs))) if rs else ""])
        for r, s in zip(ok, sc):
            plot.append([key[0], key[1], key[2], r.replicate, "rmse", repr(r.rmse)])
            plot.append([key[0], key[1], key[2], r.replicate, "score", repr(float(s))])
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(table)
    if plot_path is None:
        stem = str(out_path)[:-4] if str(out_path).endswith(".csv") else str(out_path)
        plot_path = f"{stem}_plot.csv"
    with open(plot_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        w.writerows(plot)
    return table
