"""Benchmark problems on the unit hypercube.

Every :class:`Problem` maps rows of ``[0, 1]^d`` to scalars.  GP draws and
datasets also carry a fixed location pool at which they are known exactly;
:func:`make_split` draws train and test sets from that pool, or from fresh
uniform locations for closed-form problems.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from asmfgp.errors import DataFormatError, DegenerateDataError, DimensionMismatchError
from asmfgp.gp import cholesky_with_jitter, refined_solve
from asmfgp.kernels import Composition, Family, KernelSpec, covariance, kernel_matrix

log = logging.getLogger(__name__)

POOL_SIZE = 1000
ORTHONORMAL = "orthonormal"
HASHING = "hashing"
_MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass(frozen=True, eq=False)
class Problem:
    """A test function on ``[0, 1]^d``.

    Parameters
    ----------
    name : str
    d : int
    evaluate : callable
        ``(m, d)`` array to ``(m,)`` array.
    provenance : dict
        ``kind`` is one of ``analytic``, ``gp_draw``, ``embedded``,
        ``dataset`` plus kind-specific details.
    pool, pool_values : ndarray, optional
        Locations where the problem is known exactly.
    """

    name: str
    d: int
    evaluate: Callable = field(repr=False)
    provenance: dict = field(default_factory=dict)
    pool: np.ndarray | None = field(default=None, repr=False)
    pool_values: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DimensionMismatchError(f"{self.name} expects {self.d} columns, got {X.shape[1]}")
        return np.asarray(self.evaluate(X), dtype=float)


@dataclass(frozen=True, eq=False)
class Split:
    """Scaled train/test partition.

    ``y`` values are ``(raw - y_mean) / y_sd`` with training statistics; for
    datasets the inputs are min-max scaled with training statistics too.
    """

    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    y_mean: float
    y_sd: float
    train_index: np.ndarray
    test_index: np.ndarray
    x_min: np.ndarray | None = None
    x_scale: np.ndarray | None = None


# --- closed-form functions ---------------------------------------------------

def _branin(X):
    x1 = -5.0 + 15.0 * X[:, 0]
    x2 = 15.0 * X[:, 1]
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    t = 1.0 / (8.0 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0


_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]])


def _hartmann3(X):
    inner = np.einsum("jk,mjk->mj", _H3_A, (X[:, None, :] - _H3_P[None]) ** 2)
    return -np.exp(-inner) @ _H3_ALPHA


def _levy(X):
    w = 1.0 + (20.0 * X - 10.0 - 1.0) / 4.0
    head = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
    tail = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[:, -1]) ** 2)
    return head + mid + tail


def sobol_coefficients(d: int) -> np.ndarray:
    """Default g-function coefficients ``a_i = (i - 1) / 2``."""
    return np.arange(d) / 2.0


def _sobol(a):
    def f(X):
        return np.prod((np.abs(4.0 * X - 2.0) + a) / (1.0 + a), axis=1)
    return f


_FIXED_DIM = {"branin": 2, "hartmann3": 3}


def analytic_function(name: str, d: int | None = None, coefficients=None) -> Problem:
    """Branin, Hartmann3, Levy or the Sobol g-function, rescaled to ``[0, 1]^d``."""
    key = name.lower()
    if key in _FIXED_DIM:
        if d not in (None, _FIXED_DIM[key]):
            raise DimensionMismatchError(f"{name} is defined for d={_FIXED_DIM[key]} only")
        d = _FIXED_DIM[key]
        fn = _branin if key == "branin" else _hartmann3
        extra = {}
    elif key in ("levy", "sobol"):
        if d is None or d < 1:
            raise DimensionMismatchError(f"{name} needs an explicit dimension d >= 1")
        if key == "levy":
            fn, extra = _levy, {}
        else:
            a = sobol_coefficients(d) if coefficients is None else np.asarray(coefficients, float)
            if a.shape != (d,):
                raise DimensionMismatchError("need one Sobol coefficient per dimension")
            fn, extra = _sobol(a), {"coefficients": a.tolist()}
    else:
        raise KeyError(f"unknown analytic function {name!r}")
    return Problem(key, int(d), fn, {"kind": "analytic", "function": key, **extra})


# --- GP draws ----------------------------------------------------------------

def _draw_path(spec, X, z, jitter=1e-8):
    K = kernel_matrix(spec, X)
    L, _ = cholesky_with_jitter(K, spec.variance_normalization, jitter)
    values = L @ z
    weights = refined_solve(K, L, values)
    return values, weights


def gp_draw(d: int, kernel_spec: KernelSpec | None = None, n_points: int = POOL_SIZE,
            seed: int = 0, additive: bool = False, locations=None) -> Problem:
    """One sample path of a zero-mean GP, realized jointly on a location pool.

    The path is known exactly on the pool; elsewhere ``evaluate`` returns
    its conditional mean given the pool values.

    Parameters
    ----------
    kernel_spec : KernelSpec, optional
        Defaults to a unit-variance Matern 5/2 product kernel with
        lengthscales ``0.5 * sqrt(d)``, or ``0.5`` per coordinate when
        ``additive``.  With ``additive`` a product or isotropic spec
        contributes ``theta_i`` and ``sigma2 / d`` to each coordinate; an
        additive spec its own ``theta_i`` and ``alpha_i``.
    locations : array, optional
        Pool to use instead of ``n_points`` uniform points.
    additive : bool
        Sum ``d`` independent one-dimensional draws, each realized on the
        distinct values of its coordinate.
    """
    rng = np.random.default_rng(seed)
    pool = rng.uniform(size=(n_points, d)) if locations is None else np.asarray(locations, float)
    if pool.ndim != 2 or pool.shape[1] != d:
        raise DimensionMismatchError(f"locations must have {d} columns")
    if kernel_spec is None:
        kernel_spec = (KernelSpec.additive(np.full(d, 0.5), np.full(d, 1.0 / d)) if additive
                       else KernelSpec.product(np.full(d, 0.5 * np.sqrt(d))))
    if kernel_spec.dimension != d:
        raise DimensionMismatchError("kernel dimension differs from d")
    prov = {"kind": "gp_draw", "seed": seed, "additive": bool(additive),
            "kernel": kernel_spec.to_dict(), "n_points": int(pool.shape[0])}

    if not additive:
        z = rng.standard_normal(pool.shape[0])
        values, weights = _draw_path(kernel_spec, pool, z)

        def evaluate(X):
            return covariance(kernel_spec, X, pool) @ weights

        return Problem(f"gp_draw{d}", d, evaluate, prov, pool, values)

    theta = kernel_spec.theta
    if kernel_spec.composition is Composition.ADDITIVE:
        alphas = np.asarray(kernel_spec.variance)
    else:
        alphas = np.full(d, kernel_spec.variance / d)
    parts = []
    values = np.zeros(pool.shape[0])
    for i in range(d):
        u, inv = np.unique(pool[:, i], return_inverse=True)
        s1 = KernelSpec.product([theta[i]], alphas[i], kernel_spec.family)
        vals, w = _draw_path(s1, u[:, None], rng.standard_normal(u.size))
        values += vals[inv]
        parts.append((s1, u[:, None], w))

    def evaluate(X):
        return sum(covariance(s1, X[:, i:i + 1], u) @ w for i, (s1, u, w) in enumerate(parts))

    return Problem(f"addgp_draw{d}", d, evaluate, prov, pool, values)


# --- embeddings --------------------------------------------------------------

def embedding_matrix(d_outer: int, d_inner: int, kind: str = ORTHONORMAL, seed: int = 0) -> np.ndarray:
    """Random ``d_outer x d_inner`` matrix.

    ``orthonormal`` takes Q from the QR factorization of a standard-normal
    matrix; ``hashing`` puts one random +-1 in each row.
    """
    rng = np.random.default_rng(seed)
    if kind == ORTHONORMAL:
        Q, R = np.linalg.qr(rng.standard_normal((d_outer, d_inner)))
        return Q * np.sign(np.diag(R))
    if kind == HASHING:
        A = np.zeros((d_outer, d_inner))
        A[np.arange(d_outer), rng.integers(0, d_inner, d_outer)] = rng.choice([-1.0, 1.0], d_outer)
        return A
    raise ValueError(f"unknown embedding kind {kind!r}")


def embed(inner: Problem, d_outer: int, matrix_kind: str = ORTHONORMAL, seed: int = 0,
          matrix=None) -> Problem:
    """Ridge function ``x -> inner(u(A' (2x - 1)))``.

    ``u`` maps each coordinate of ``A' (2x - 1)`` from its range over the
    outer cube, ``[-sum_i |A_ij|, sum_i |A_ij|]``, affinely onto ``[0, 1]``
    and clips.  Coordinates whose column of ``A`` is zero sit at ``0.5``.
    ``matrix`` replaces the random draw.
    """
    if d_outer < inner.d:
        raise DimensionMismatchError("outer dimension must be at least the inner one")
    A = (embedding_matrix(d_outer, inner.d, matrix_kind, seed) if matrix is None
         else np.asarray(matrix, dtype=float))
    if A.shape != (d_outer, inner.d):
        raise DimensionMismatchError(f"embedding matrix must be {d_outer} x {inner.d}")
    half = np.abs(A).sum(axis=0)
    safe = np.where(half > 0, half, 1.0)

    def evaluate(X):
        z = (2.0 * X - 1.0) @ A
        u = np.where(half > 0, 0.5 * (z / safe + 1.0), 0.5)
        return inner.evaluate(np.clip(u, 0.0, 1.0))

    prov = {"kind": "embedded", "inner": inner.provenance, "matrix_kind": matrix_kind,
            "seed": seed, "matrix": A.tolist()}
    return Problem(f"{inner.name}_emb{d_outer}", d_outer, evaluate, prov)


def addgp_hartmann3(d: int = 8, seed: int = 0, n_points: int = POOL_SIZE) -> Problem:
    """Hartmann3 through a random orthonormal embedding plus an additive GP draw."""
    ridge = embed(analytic_function("hartmann3"), d, ORTHONORMAL, seed)
    draw = gp_draw(d, None, n_points, seed + 1, additive=True)

    def evaluate(X):
        return ridge.evaluate(X) + draw.evaluate(X)

    values = ridge.evaluate(draw.pool) + draw.pool_values
    prov = {"kind": "embedded", "ridge": ridge.provenance, "additive_draw": draw.provenance}
    return Problem(f"addgp_hartmann3_{d}", d, evaluate, prov, draw.pool, values)


# --- datasets ----------------------------------------------------------------

def ingest_csv(path, target_column: str) -> Problem:
    """Read a numeric CSV table with a header row.

    Rows with missing entries are dropped with a logged count.  The pool is
    the raw table; :func:`make_split` min-max scales it.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise DataFormatError(f"target column {target_column!r} not in header {header}")
    data, dropped = [], 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        if any(v.strip().lower() in _MISSING for v in row):
            dropped += 1
            continue
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: non-numeric value ({exc})") from exc
    if dropped:
        log.warning("dropped %d row(s) with missing values from %s", dropped, path)
    if not data:
        raise DataFormatError(f"{path} has no complete rows")
    table = np.asarray(data)
    t = header.index(target_column)
    y = table[:, t]
    X = np.delete(table, t, axis=1)
    if X.shape[1] == 0:
        raise DataFormatError("the table has no input columns")
    if np.ptp(y) == 0.0:
        raise DegenerateDataError(f"target column {target_column!r} is constant")

    def evaluate(Xq):
        raise ValueError("a dataset is only known on its own rows; use make_split")

    prov = {"kind": "dataset", "path": str(path), "target": target_column,
            "columns": [h for h in header if h != target_column], "dropped_rows": dropped}
    return Problem(f"dataset:{target_column}", X.shape[1], evaluate, prov, X, y)


def make_split(problem: Problem, n_train: int, seed: int = 0, n_pool: int = POOL_SIZE) -> Split:
    """Seeded train/test partition of the problem's pool.

    Closed-form problems are evaluated on ``n_pool`` fresh uniform
    locations.  The test set is every pool point not used for training.
    """
    rng = np.random.default_rng(seed)
    if problem.pool is not None:
        X, y = problem.pool, problem.pool_values
    else:
        X = rng.uniform(size=(n_pool, problem.d))
        y = problem(X)
    n = X.shape[0]
    if not 1 <= n_train < n:
        raise ValueError(f"n_train must lie in [1, {n - 1}] for a pool of {n} points")
    perm = rng.permutation(n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    x_min = x_scale = None
    if problem.provenance.get("kind") == "dataset":
        x_min = X[tr].min(axis=0)
        span = X[tr].max(axis=0) - x_min
        x_scale = np.where(span > 0, span, 1.0)
        X = (X - x_min) / x_scale
    mu = float(np.mean(y[tr]))
    sd = float(np.std(y[tr]))
    if not sd > 0.0:
        raise DegenerateDataError("training responses are constant")
    return Split(X[tr], (y[tr] - mu) / sd, X[te], (y[te] - mu) / sd, mu, sd, tr, te, x_min, x_scale)


# --- registry ----------------------------------------------------------------

def _registry():
    return {
        "branin": lambda s: analytic_function("branin"),
        "hartmann3": lambda s: analytic_function("hartmann3"),
        "levy10": lambda s: analytic_function("levy", 10),
        "levy20": lambda s: analytic_function("levy", 20),
        "sobol8": lambda s: analytic_function("sobol", 8),
        "hartmann3_emb8": lambda s: embed(analytic_function("hartmann3"), 8, ORTHONORMAL, s),
        "hartmann3_emb15": lambda s: embed(analytic_function("hartmann3"), 15, ORTHONORMAL, s),
        "branin_hash10": lambda s: embed(analytic_function("branin"), 10, HASHING, s),
        "gp_draw8": lambda s: gp_draw(8, seed=s),
        "addgp_draw8": lambda s: gp_draw(8, seed=s, additive=True),
        "addgp_hartmann3_8": lambda s: addgp_hartmann3(8, s),
    }


def list_problems() -> list:
    """Names accepted by :func:`build_problem`."""
    return sorted(_registry())


def build_problem(descriptor, seed: int = 0) -> Problem:
    """Build a problem from a registry name or a descriptor dict.

    Descriptor dicts take one of the forms::

        {"name": "<registry name>"}
        {"analytic": "levy", "d": 12}
        {"gp_draw": 6, "additive": true, "lengthscale": 0.4}
        {"embed": {...inner...}, "d": 12, "matrix": "hashing"}
        {"csv": "path.csv", "target": "y"}

    Random ingredients (GP draws, embedding matrices) use ``seed``.
    """
    if isinstance(descriptor, str):
        descriptor = {"name": descriptor}
    desc = dict(descriptor)
    if "name" in desc:
        reg = _registry()
        if desc["name"] not in reg:
            raise KeyError(f"unknown problem {desc['name']!r}; known: {', '.join(sorted(reg))}")
        return reg[desc["name"]](seed)
    if "analytic" in desc:
        return analytic_function(desc["analytic"], desc.get("d"), desc.get("coefficients"))
    if "gp_draw" in desc:
        d = int(desc["gp_draw"])
        additive = bool(desc.get("additive", False))
        spec = None
        if "lengthscale" in desc:
            ls = np.full(d, float(desc["lengthscale"]))
            var = float(desc.get("variance", 1.0))
            spec = (KernelSpec.additive(ls, np.full(d, var / d), Family(desc.get("family", "matern52")))
                    if additive else KernelSpec.product(ls, var, Family(desc.get("family", "matern52"))))
        return gp_draw(d, spec, int(desc.get("n_points", POOL_SIZE)), seed, additive)
    if "embed" in desc:
        inner = build_problem(desc["embed"], seed)
        return embed(inner, int(desc["d"]), desc.get("matrix", ORTHONORMAL), seed)
    if "csv" in desc:
        return ingest_csv(desc["csv"], desc["target"])
    raise KeyError(f"unrecognised problem descriptor {descriptor!r}")


def descriptor_name(descriptor) -> str:
    """Stable label for a descriptor, used in result tables."""
    if isinstance(descriptor, str):
        return descriptor
    if "name" in descriptor:
        return descriptor["name"]
    return descriptor.get("label") or "_".join(f"{k}={descriptor[k]}" for k in sorted(descriptor))
