"""Single-level zero-mean Gaussian process regression."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import linalg, optimize

from asmfgp import kernels
from asmfgp.errors import (
    DegenerateDataError,
    DimensionMismatchError,
    FactorizationError,
    GPError,
    InvalidSpecError,
    NonFiniteInputError,
    OptimizationError,
)
from asmfgp.kernels import Composition, KernelSpec

log = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-8
MAX_ESCALATIONS = 3
_LOG2PI = np.log(2.0 * np.pi)


class Prediction(NamedTuple):
    """Posterior mean and variance, one entry per test point."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class Bounds:
    """Search box for hyperparameters (natural scale).

    ``nugget`` is relative to the process variance.  ``variance`` bounds the
    additive component variances relative to the empirical variance of y.
    """

    lengthscale: tuple = (1e-2, 1e2)
    nugget: tuple = (1e-8, 10.0)
    variance: tuple = (1e-6, 10.0)

    @classmethod
    def default(cls, d: int) -> Bounds:
        s = np.sqrt(d)
        return cls(lengthscale=(1e-2 * s, 1e2 * s))

    def to_dict(self):
        return {k: list(getattr(self, k)) for k in ("lengthscale", "nugget", "variance")}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: tuple(v) for k, v in data.items()})


def cholesky_with_jitter(K, scale, jitter=DEFAULT_JITTER):
    """Lower Cholesky factor of ``K + j*I`` with escalating jitter.

    ``jitter`` is relative to ``scale``; it is multiplied by ten up to three
    times before giving up.

    Returns
    -------
    L : ndarray
    added : float
        Absolute jitter actually added to the diagonal.
    """
    j = jitter * scale
    n = K.shape[0]
    for _ in range(MAX_ESCALATIONS + 1):
        try:
            L = linalg.cholesky(K + j * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, j
        except linalg.LinAlgError:
            pass
        j = max(10.0 * j, 1e-10 * scale)
    raise FactorizationError(
        f"Cholesky failed after {MAX_ESCALATIONS} jitter escalations (last jitter {j / 10:.3g})"
    )


def _check_data(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < 2:
        raise GPError("at least two observations are required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInputError("training data must be finite")
    return X, y


@dataclass(frozen=True, eq=False)
class FittedGP:
    """Factorized zero-mean GP conditioned on training data.

    ``K = k(X, X) + (nugget + jitter) I = chol @ chol.T``.
    """

    spec: KernelSpec
    nugget: float
    X_train: np.ndarray
    y_train: np.ndarray
    chol: np.ndarray
    alpha_solve: np.ndarray
    log_lik: float
    jitter: float = 0.0
    sigma2_hat: float | None = None

    @property
    def n(self) -> int:
        return self.X_train.shape[0]

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def noise_variance(self) -> float:
        return self.nugget + self.jitter

    # protocol shared with the other model classes ----------------------
    @property
    def offset(self) -> float:
        return 0.0

    @property
    def y_centered(self) -> np.ndarray:
        return self.y_train

    def covariance(self, A, B) -> np.ndarray:
        return kernels.covariance(self.spec, A, B)

    def prior_variance(self, A) -> np.ndarray:
        return np.full(np.asarray(A).shape[0], self.spec.variance_normalization)

    @cached_property
    def train_covariance(self) -> np.ndarray:
        """``k(X, X) + nugget I`` without the guard jitter."""
        return kernels.kernel_matrix(self.spec, self.X_train, nugget=self.nugget)

    def predict(self, Xs) -> Prediction:
        return gp_predict(self, Xs)

    def to_dict(self) -> dict:
        return {
            "type": "FittedGP",
            "spec": self.spec.to_dict(),
            "nugget": self.nugget,
            "jitter": self.jitter,
            "sigma2_hat": self.sigma2_hat,
            "X_train": self.X_train.tolist(),
            "y_train": self.y_train.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FittedGP:
        model = _condition(
            np.asarray(data["X_train"], dtype=float),
            np.asarray(data["y_train"], dtype=float),
            KernelSpec.from_dict(data["spec"]),
            float(data["nugget"]),
            absolute_jitter=float(data["jitter"]),
        )
        if data.get("sigma2_hat") is not None:
            model = _with_sigma2(model, float(data["sigma2_hat"]))
        return model


def _with_sigma2(model, s2):
    return FittedGP(
        model.spec, model.nugget, model.X_train, model.y_train, model.chol,
        model.alpha_solve, model.log_lik, model.jitter, s2,
    )


def _loglik_from_chol(L, y):
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    n = y.shape[0]
    value = -0.5 * n * _LOG2PI - np.sum(np.log(np.diag(L))) - 0.5 * float(y @ alpha)
    return value, alpha


REFINE_STEPS = 50
REFINE_TOL = 1e-9


def refined_solve(K, L, y, alpha=None, steps: int = REFINE_STEPS, tol: float = REFINE_TOL):
    """Solve ``K a = y`` using the jittered factor ``L`` as a preconditioner.

    Each step multiplies the residual by ``j (K + j I)^-1``, so the guard
    jitter ``j`` stops biasing the mean at training inputs wherever ``K`` is
    better conditioned than ``j``.  Iteration stops once the largest
    residual is below ``tol * max|y|`` or after ``steps`` steps.
    """
    a = linalg.cho_solve((L, True), y, check_finite=False) if alpha is None else alpha
    target = tol * np.max(np.abs(y), axis=0, initial=0.0)
    for _ in range(steps):
        r = y - K @ a
        if np.all(np.max(np.abs(r), axis=0, initial=0.0) <= target):
            break
        a = a + linalg.cho_solve((L, True), r, check_finite=False)
    return a


def _condition(X, y, spec, nugget, jitter=DEFAULT_JITTER, absolute_jitter=None):
    K = kernels.kernel_matrix(spec, X, nugget=nugget)
    scale = spec.variance_normalization
    if absolute_jitter is None:
        L, added = cholesky_with_jitter(K, scale, jitter)
    else:
        L, added = cholesky_with_jitter(K + absolute_jitter * np.eye(len(y)), scale, 0.0)
        added += absolute_jitter
    value, alpha = _loglik_from_chol(L, y)
    alpha = refined_solve(K, L, y, alpha)
    return FittedGP(spec, float(nugget), X, y, L, alpha, float(value), float(added))


def gp_fit(X, y, spec: KernelSpec, nugget: float = 0.0, jitter: float = DEFAULT_JITTER) -> FittedGP:
    """Condition a GP with fixed hyperparameters on ``(X, y)``.

    Parameters
    ----------
    nugget : float
        Noise variance ``tau2`` added to the diagonal.
    jitter : float
        Minimum diagonal guard, relative to the kernel variance.
    """
    X, y = _check_data(X, y)
    if X.shape[1] != spec.dimension:
        raise DimensionMismatchError(f"X has {X.shape[1]} columns, kernel expects {spec.dimension}")
    if nugget < 0:
        raise InvalidSpecError("nugget must be non-negative")
    return _condition(X, y, spec, nugget, jitter)


def gp_predict(model: FittedGP, Xs) -> Prediction:
    """Posterior mean ``k(x)' K^-1 y`` and variance ``k(x,x) - k(x)' K^-1 k(x)``."""
    Xs = np.asarray(Xs, dtype=float)
    if Xs.ndim == 1:
        Xs = Xs.reshape(-1, 1) if model.dimension == 1 else Xs.reshape(1, -1)
    Ks = model.covariance(Xs, model.X_train)
    mean = Ks @ model.alpha_solve
    var = model.prior_variance(Xs) - reduction(model.train_covariance, model.chol, Ks.T)
    return Prediction(mean, _clamp_variance(var, model.spec.variance_normalization))


def reduction(K, L, k) -> np.ndarray:
    """Column-wise ``k' K^-1 k`` with the refined solve behind the mean."""
    return np.einsum("ij,ij->j", k, refined_solve(K, L, k))


def _clamp_variance(var, scale):
    low = var.min(initial=0.0)
    if low < -1e-6 * scale:
        log.warning("clamped negative predictive variance %.3g (scale %.3g)", low, scale)
    return np.maximum(var, 0.0)


def log_likelihood(X, y, spec: KernelSpec, nugget: float = 0.0, jitter: float = DEFAULT_JITTER) -> float:
    """Gaussian log-likelihood of ``y`` under ``k(X, X) + nugget*I``."""
    return gp_fit(X, y, spec, nugget, jitter).log_lik


def _correlation_spec(spec):
    if spec.composition is Composition.ADDITIVE:
        raise InvalidSpecError("the concentrated likelihood needs a factorizable variance")
    return spec.with_params(variance=1.0)


def _concentrated_terms(R, y, jitter):
    """Value, sigma2_hat and ``W = a a'/s2 - R^-1`` for the profiled likelihood."""
    n = y.shape[0]
    L, _ = cholesky_with_jitter(R, 1.0, jitter)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    quad = float(y @ alpha)
    if not quad > 0.0 or not np.isfinite(quad):
        raise DegenerateDataError("y'R^-1 y is zero: the response is identically zero")
    s2 = quad / n
    value = -0.5 * n * _LOG2PI - 0.5 * n * np.log(s2) - np.sum(np.log(np.diag(L))) - 0.5 * n
    Rinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) / s2 - Rinv
    return value, s2, W


def concentrated_log_likelihood(X, y, spec: KernelSpec, nugget_rel: float = 0.0,
                                jitter: float = DEFAULT_JITTER):
    """Log-likelihood with the process variance profiled out.

    With ``K = sigma2 (R + g I)`` the variance estimate is
    ``sigma2_hat = y' (R + g I)^-1 y / n``.

    Returns
    -------
    value : float
    sigma2_hat : float
    """
    value, s2, _ = concentrated_log_likelihood_grad(X, y, spec, nugget_rel, jitter=jitter)
    return value, s2


def concentrated_log_likelihood_grad(X, y, spec: KernelSpec, nugget_rel: float = 0.0,
                                     free_nugget: bool = True, jitter: float = DEFAULT_JITTER):
    """Concentrated log-likelihood and its gradient in log-hyperparameters.

    The gradient is ordered as the log-lengthscales of ``spec`` followed by
    ``log(nugget_rel)`` when ``free_nugget``.
    """
    X, y = _check_data(X, y)
    cspec = _correlation_spec(spec)
    R, dR = kernels.covariance_and_grad(cspec, X)
    R[np.diag_indices_from(R)] += nugget_rel
    value, s2, W = _concentrated_terms(R, y, jitter)
    k = len(cspec.lengthscales)
    theta = np.asarray(cspec.lengthscales)
    grad = 0.5 * theta * np.einsum("ij,pij->p", W, dR[:k])
    if free_nugget:
        grad = np.append(grad, 0.5 * nugget_rel * np.trace(W))
    return value, s2, grad


def _log_box(bounds_pair, floor=1e-12):
    lo, hi = bounds_pair
    return np.log(max(lo, floor)), np.log(max(hi, floor))


def _starts(template_log, box, n_starts, rng, include_template):
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    starts = []
    if include_template:
        starts.append(np.clip(template_log, lo, hi))
    while len(starts) < n_starts:
        starts.append(rng.uniform(lo, hi))
    return starts


def _run_starts(objective, starts, box):
    best, best_val, last_err = None, -np.inf, None
    for x0 in starts:
        try:
            res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=box)
            x, val = res.x, -float(res.fun)
        except (GPError, linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            last_err = exc
            continue
        if np.isfinite(val) and val > best_val:
            best, best_val = x, val
    if best is None:
        raise OptimizationError("all optimization starts failed", last_err) from last_err
    return best, best_val


def optimize_hyperparams(X, y, spec_template: KernelSpec, bounds: Bounds | None = None,
                         n_starts: int = 5, seed: int = 0, nugget="estimate",
                         jitter: float = DEFAULT_JITTER, include_template_start: bool = True) -> FittedGP:
    """Maximize the concentrated likelihood by multi-start L-BFGS-B.

    Lengthscales (and the relative nugget when ``nugget == "estimate"``) are
    searched in log-space; ``sigma2`` is profiled out.  A float ``nugget``
    fixes the nugget relative to the process variance.

    The first start is the template's lengthscales when
    ``include_template_start``; the others are log-uniform within the
    bounds.  Ties between starts go to the lowest start index.
    """
    X, y = _check_data(X, y)
    if spec_template.composition is Composition.ADDITIVE:
        raise InvalidSpecError("use additive.additive_fit for additive kernels")
    if np.all(y == 0):
        raise DegenerateDataError("y is identically zero")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    d = X.shape[1]
    bounds = bounds or Bounds.default(d)
    free = isinstance(nugget, str)
    if free and nugget != "estimate":
        raise ValueError("nugget must be 'estimate' or a float")
    k = len(spec_template.lengthscales)
    box = [_log_box(bounds.lengthscale)] * k
    template = list(np.log(spec_template.lengthscales))
    if free:
        box.append(_log_box(bounds.nugget))
        template.append(np.log(np.clip(1e-4, *bounds.nugget)))
    cspec = _correlation_spec(spec_template)
    fixed_g = 0.0 if free else float(nugget)

    def objective(p):
        theta = np.exp(p[:k])
        g = np.exp(p[k]) if free else fixed_g
        val, _, grad = concentrated_log_likelihood_grad(
            X, y, cspec.with_params(lengthscales=theta), g, free, jitter
        )
        return -val, -grad

    rng = np.random.default_rng(seed)
    starts = _starts(np.array(template), box, n_starts, rng, include_template_start)
    best, _ = _run_starts(objective, starts, box)
    theta = np.exp(best[:k])
    g = float(np.exp(best[k])) if free else fixed_g
    _, s2 = concentrated_log_likelihood(X, y, cspec.with_params(lengthscales=theta), g, jitter)
    spec = cspec.with_params(lengthscales=theta, variance=s2)
    model = _condition(X, y, spec, g * s2, jitter)
    return _with_sigma2(model, s2)
