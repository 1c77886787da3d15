"""First-order additive GP with per-component variances."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from asmfgp import kernels
from asmfgp.errors import DegenerateDataError, DimensionMismatchError
from asmfgp.gp import (
    DEFAULT_JITTER,
    Bounds,
    FittedGP,
    Prediction,
    _check_data,
    _condition,
    _log_box,
    _LOG2PI,
    _run_starts,
    cholesky_with_jitter,
)
from asmfgp.kernels import Family, KernelSpec


@dataclass(frozen=True, eq=False)
class AdditiveGP:
    """Additive GP fitted on centered responses.

    ``base`` is conditioned on ``y - offset``; predictions add ``offset``
    back.
    """

    base: FittedGP
    offset: float = 0.0

    @property
    def spec(self) -> KernelSpec:
        return self.base.spec

    @property
    def component_variances(self) -> np.ndarray:
        return np.asarray(self.base.spec.variance)

    @property
    def process_variance(self) -> float:
        return float(self.component_variances.sum())

    @property
    def nugget(self) -> float:
        return self.base.nugget

    @property
    def noise_variance(self) -> float:
        return self.base.noise_variance

    @property
    def X_train(self) -> np.ndarray:
        return self.base.X_train

    @property
    def y_centered(self) -> np.ndarray:
        return self.base.y_train

    @property
    def log_lik(self) -> float:
        return self.base.log_lik

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def covariance(self, A, B):
        return self.base.covariance(A, B)

    def prior_variance(self, A):
        return self.base.prior_variance(A)

    def predict(self, Xs) -> Prediction:
        p = self.base.predict(Xs)
        return Prediction(p.mean + self.offset, p.variance)

    def to_dict(self):
        return {"type": "AdditiveGP", "base": self.base.to_dict(), "offset": self.offset}

    @classmethod
    def from_dict(cls, data):
        return cls(FittedGP.from_dict(data["base"]), float(data["offset"]))


def additive_log_likelihood_grad(X, y, spec: KernelSpec, nugget: float,
                                 free_nugget: bool = True, jitter: float = DEFAULT_JITTER):
    """Full log-likelihood of ``K = sum_i alpha_i K_i + g I`` and its gradient.

    The gradient is taken with respect to ``log theta_1..d``,
    ``log alpha_1..d`` and, when ``free_nugget``, ``log g``.  The minimum
    jitter (``jitter * sum(alpha)``) is part of ``K`` and differentiated too.
    """
    X, y = _check_data(X, y)
    d = spec.dimension
    K, grads = kernels.covariance_and_grad(spec, X)
    K[np.diag_indices_from(K)] += nugget
    scale = spec.variance_normalization
    L, added = cholesky_with_jitter(K, scale, jitter)
    n = y.shape[0]
    a = linalg.cho_solve((L, True), y, check_finite=False)
    value = -0.5 * n * _LOG2PI - np.sum(np.log(np.diag(L))) - 0.5 * float(y @ a)
    W = np.outer(a, a) - linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    half = 0.5 * np.einsum("ij,pij->p", W, grads)
    trW = np.trace(W)
    theta = spec.theta
    alpha = np.asarray(spec.variance)
    rel = added / scale
    g_theta = theta * half[:d]
    g_alpha = alpha * (half[d:] + 0.5 * rel * trW)
    grad = np.concatenate([g_theta, g_alpha])
    if free_nugget:
        grad = np.append(grad, 0.5 * nugget * trW)
    return value, grad


def additive_fit(X, y, bounds: Bounds | None = None, n_starts: int = 5, seed: int = 0,
                 nugget="estimate", family=Family.MATERN52,
                 jitter: float = DEFAULT_JITTER) -> AdditiveGP:
    """Fit lengthscales, component variances and noise by maximum likelihood.

    ``y`` is centered first.  Component-variance and nugget bounds in
    ``bounds`` are relative to the empirical variance of ``y``.  A float
    ``nugget`` fixes the absolute noise variance instead of estimating it.
    """
    X, y = _check_data(X, y)
    d = X.shape[1]
    offset = float(np.mean(y))
    yc = y - offset
    v = float(np.var(yc))
    if not v > 0.0:
        raise DegenerateDataError("constant response: nothing for the additive model to fit")
    bounds = bounds or Bounds()
    free = isinstance(nugget, str)
    box = [_log_box(bounds.lengthscale)] * d
    box += [_log_box((v * bounds.variance[0], v * bounds.variance[1]))] * d
    if free:
        box.append(_log_box((v * bounds.nugget[0], v * bounds.nugget[1])))
    fixed_g = 0.0 if free else float(nugget)
    template = np.log(np.full(d, 1.0))
    alpha0 = np.log(np.full(d, v / d))

    def unpack(p):
        spec = KernelSpec.additive(np.exp(p[:d]), np.exp(p[d:2 * d]), family)
        g = float(np.exp(p[2 * d])) if free else fixed_g
        return spec, g

    def objective(p):
        spec, g = unpack(p)
        val, grad = additive_log_likelihood_grad(X, yc, spec, g, free, jitter)
        return -val, -grad

    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    starts = []
    for s in range(n_starts):
        th = template if s == 0 else rng.uniform(lo[:d], hi[:d])
        p = [th, alpha0]
        if free:
            g_hi = min(hi[2 * d], np.log(0.1 * v))
            p.append([np.log(1e-3 * v) if s == 0 else rng.uniform(lo[2 * d], g_hi)])
        starts.append(np.clip(np.concatenate(p), lo, hi))
    best, _ = _run_starts(objective, starts, box)
    spec, g = unpack(best)
    return AdditiveGP(_condition(X, yc, spec, g, jitter), offset)


def main_effect(model: AdditiveGP, i: int, xi) -> np.ndarray:
    """Component-wise posterior mean ``alpha_i k_i(x_i, X_i) K^-1 (y - offset)``.

    ``i`` is a zero-based coordinate index.
    """
    d = model.dimension
    if not 0 <= i < d:
        raise IndexError(f"component index {i} out of range for d={d}")
    xi = np.asarray(xi, dtype=float).reshape(-1, 1)
    a = model.component_variances[i]
    if a == 0.0:
        return np.zeros(xi.shape[0])
    spec1 = KernelSpec.product([model.spec.theta[i]], a, model.spec.family)
    k = kernels.covariance(spec1, xi, model.X_train[:, i:i + 1])
    return k @ model.base.alpha_solve


def overfit_guard(model: AdditiveGP, threshold: float = 0.01) -> bool:
    """True when the noise variance is at most ``threshold`` times the process variance."""
    return model.nugget <= threshold * model.process_variance


def export_main_effects(model: AdditiveGP, grid, path) -> None:
    """Write every main effect on ``grid`` to CSV with columns ``dim, x, effect``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = np.tile(grid[:, None], (1, model.dimension))
    if grid.shape[1] != model.dimension:
        raise DimensionMismatchError("grid must have one column per input dimension")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "x", "effect"])
        for i in range(model.dimension):
            eff = main_effect(model, i, grid[:, i])
            for x, e in zip(grid[:, i], eff):
                w.writerow([i, repr(float(x)), repr(float(e))])
