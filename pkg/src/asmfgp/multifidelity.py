"""Two-level auto-regressive multi-fidelity GP.

The fine response is ``Y_E(x) = rho * Y_C(x) + delta(x)`` with ``delta``
independent of the coarse process.  The coarse level may be any fitted
model exposing the shared protocol (``X_train``, ``y_centered``,
``offset``, ``nugget``, ``noise_variance``, ``covariance``,
``prior_variance``, ``predict``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from asmfgp import kernels
from asmfgp.errors import DegenerateDataError, GPError, ModeError, OptimizationError
from asmfgp.gp import (
    DEFAULT_JITTER,
    Bounds,
    FittedGP,
    Prediction,
    _check_data,
    _clamp_variance,
    _condition,
    _log_box,
    _LOG2PI,
    _with_sigma2,
    cholesky_with_jitter,
    reduction,
    refined_solve,
)
from asmfgp.kernels import Family, KernelSpec

DIRECT = "direct"
RECURSIVE = "recursive"


class ApproximationWarning(UserWarning):
    """The recursive predictor was used where it is not exact."""


def is_nested(X_E, X_C) -> bool:
    """True when every row of ``X_E`` is also a row of ``X_C``."""
    rows = {tuple(r) for r in np.asarray(X_C, dtype=float)}
    return all(tuple(r) in rows for r in np.asarray(X_E, dtype=float))


@dataclass(frozen=True, eq=False)
class MFModel:
    """Fitted auto-regressive model.

    ``fine_residual`` is conditioned on ``y_E - rho * coarse_mean(X_E)``.
    """

    coarse: object
    fine_residual: object
    rho: float
    X_E: np.ndarray
    y_E: np.ndarray
    mode: str = DIRECT
    jitter: float = DEFAULT_JITTER
    _system: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in (DIRECT, RECURSIVE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == RECURSIVE and not self.recursive_exact:
            raise ModeError("recursive mode requires a noiseless coarse level and nested designs")

    @property
    def nested(self) -> bool:
        return is_nested(self.X_E, self.coarse.X_train)

    @property
    def recursive_exact(self) -> bool:
        return self.coarse.nugget == 0.0 and self.nested

    @property
    def log_lik(self) -> float:
        return self.fine_residual.log_lik

    @property
    def dimension(self) -> int:
        return self.X_E.shape[1]

    def predict(self, Xs) -> Prediction:
        if self.mode == RECURSIVE:
            return mf_predict_recursive(self, Xs)
        return mf_predict_direct(self, Xs)

    def direct_system(self):
        """Joint block matrix, its jittered Cholesky factor and the solve against the data."""
        if self._system is None:
            object.__setattr__(self, "_system", _build_system(self))
        return self._system

    def to_dict(self):
        return {
            "type": "MFModel",
            "coarse": self.coarse.to_dict(),
            "fine_residual": self.fine_residual.to_dict(),
            "rho": self.rho,
            "X_E": self.X_E.tolist(),
            "y_E": self.y_E.tolist(),
            "mode": self.mode,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, data):
        from asmfgp.serialization import model_from_dict

        return cls(
            model_from_dict(data["coarse"]),
            model_from_dict(data["fine_residual"]),
            float(data["rho"]),
            np.asarray(data["X_E"], dtype=float),
            np.asarray(data["y_E"], dtype=float),
            data.get("mode", DIRECT),
            float(data.get("jitter", DEFAULT_JITTER)),
        )


def joint_covariance(model: MFModel) -> np.ndarray:
    """Joint covariance of coarse and fine observations.

    ``[[k_C(X_C, X_C) + g_C I, rho k_C(X_C, X_E)],
       [rho k_C(X_E, X_C), rho^2 k_C(X_E, X_E) + k_E(X_E, X_E) + g_E I]]``

    ``g_C`` and ``g_E`` are the nuggets of the two levels; the guard jitter
    is added at factorization time.
    """
    c, f, rho = model.coarse, model.fine_residual, model.rho
    XC, XE = c.X_train, model.X_E
    Kcc = c.covariance(XC, XC)
    Kcc[np.diag_indices_from(Kcc)] += c.nugget
    Kce = rho * c.covariance(XC, XE)
    Kee = rho**2 * c.covariance(XE, XE) + f.covariance(XE, XE)
    Kee[np.diag_indices_from(Kee)] += f.nugget
    K = np.block([[Kcc, Kce], [Kce.T, Kee]])
    return 0.5 * (K + K.T)


def _build_system(model):
    K = joint_covariance(model)
    L, _ = cholesky_with_jitter(K, float(np.max(np.diag(K))), model.jitter)
    c = model.coarse
    ytilde = np.concatenate([c.y_centered, model.y_E - model.rho * c.offset])
    return K, L, refined_solve(K, L, ytilde)


def mf_predict_direct(model: MFModel, Xs) -> Prediction:
    """Joint-system predictor ``m = k~' K~^-1 y~``, ``s2 = rho^2 k_C + k_E - k~' K~^-1 k~``."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    c, f, rho = model.coarse, model.fine_residual, model.rho
    K, L, alpha = model.direct_system()
    kt = np.vstack([
        rho * c.covariance(c.X_train, Xs),
        rho**2 * c.covariance(model.X_E, Xs) + f.covariance(model.X_E, Xs),
    ])
    mean = rho * c.offset + kt.T @ alpha
    prior = rho**2 * c.prior_variance(Xs) + f.prior_variance(Xs)
    var = prior - reduction(K, L, kt)
    return Prediction(mean, _clamp_variance(var, float(np.max(prior))))


def _recursive(model, Xs):
    pc = model.coarse.predict(Xs)
    pf = model.fine_residual.predict(Xs)
    rho = model.rho
    return Prediction(rho * pc.mean + pf.mean, rho**2 * pc.variance + pf.variance)


def mf_predict_recursive(model: MFModel, Xs, approximate: bool = False) -> Prediction:
    """Recursive predictor ``rho m_C + m_E`` and ``rho^2 s2_C + s2_E``.

    Exact only for a noiseless coarse level on a nested design; elsewhere it
    must be requested with ``approximate=True`` and emits an
    :class:`ApproximationWarning`.
    """
    if not model.recursive_exact:
        if not approximate:
            raise ModeError(
                "recursive predictor differs from the joint model when the coarse level is noisy "
                "or designs are not nested; pass approximate=True to use it anyway"
            )
        warnings.warn("recursive multi-fidelity predictor used as an approximation",
                      ApproximationWarning, stacklevel=2)
    return _recursive(model, np.atleast_2d(np.asarray(Xs, dtype=float)))


def fine_log_likelihood_grad(X_E, y_E, coarse_mean, spec: KernelSpec, nugget_rel: float,
                             rho: float, free_nugget: bool = True, jitter: float = DEFAULT_JITTER):
    """Concentrated likelihood of the residuals ``d = y_E - rho * coarse_mean``.

    Returns
    -------
    value : float
    sigma2_hat : float
    grad : ndarray
        Ordered as ``rho``, log-lengthscales, then ``log nugget_rel`` when
        ``free_nugget``.
    """
    X_E, y_E = _check_data(X_E, y_E)
    coarse_mean = np.asarray(coarse_mean, dtype=float)
    d = y_E - rho * coarse_mean
    cspec = spec.with_params(variance=1.0)
    R, dR = kernels.covariance_and_grad(cspec, X_E)
    R[np.diag_indices_from(R)] += nugget_rel
    n = d.shape[0]
    L, _ = cholesky_with_jitter(R, 1.0, jitter)
    a = linalg.cho_solve((L, True), d, check_finite=False)
    quad = float(d @ a)
    if not quad > 0.0:
        raise DegenerateDataError("residuals are identically zero")
    s2 = quad / n
    value = -0.5 * n * _LOG2PI - 0.5 * n * np.log(s2) - np.sum(np.log(np.diag(L))) - 0.5 * n
    W = np.outer(a, a) / s2 - linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    k = len(cspec.lengthscales)
    g = [float(coarse_mean @ a) / s2]
    g.extend(0.5 * np.asarray(cspec.lengthscales) * np.einsum("ij,pij->p", W, dR[:k]))
    if free_nugget:
        g.append(0.5 * nugget_rel * np.trace(W))
    return value, s2, np.asarray(g)


def least_squares_rho(y_E, coarse_mean) -> float:
    denom = float(coarse_mean @ coarse_mean)
    return float(coarse_mean @ y_E) / denom if denom > 0 else 0.0


def mf_fit(X_E, y_E, coarse, bounds: Bounds | None = None, n_starts: int = 5, seed: int = 0,
           nugget="estimate", family=Family.MATERN52, fix_rho: float | None = None,
           jitter: float = DEFAULT_JITTER) -> MFModel:
    """Fit ``rho`` and the fine-level product kernel on the coarse residuals.

    The coarse model is used as given; its posterior mean at ``X_E`` stands
    in for the coarse observations.  ``rho`` starts at the least-squares
    slope of ``y_E`` on that mean and is optimized jointly with the fine
    kernel unless ``fix_rho`` is set.
    """
    X_E, y_E = _check_data(X_E, y_E)
    n, d = X_E.shape
    bounds = bounds or Bounds.default(d)
    yc = coarse.predict(X_E).mean
    rho0 = least_squares_rho(y_E, yc) if fix_rho is None else float(fix_rho)
    free = isinstance(nugget, str)
    fixed_g = 0.0 if free else float(nugget)
    template = KernelSpec.product(np.full(d, 0.5 * np.sqrt(d)), 1.0, family)

    resid = y_E - rho0 * yc
    scale = max(float(np.var(y_E)), float(np.mean(y_E**2)), 1e-300)
    if float(resid @ resid) <= 1e-20 * n * scale:
        # exact scaling relationship: nothing left for the fine level
        floor = max(float(resid @ resid) / n, 1e-12 * scale)
        fine = _with_sigma2(_condition(X_E, resid, template.with_params(variance=floor), 0.0, jitter), floor)
        return MFModel(coarse, fine, rho0, X_E, y_E, DIRECT, jitter)

    k = d
    box_theta = [_log_box(bounds.lengthscale)] * k
    box_g = [_log_box(bounds.nugget)] if free else []
    opt_rho = fix_rho is None
    box = ([(None, None)] if opt_rho else []) + box_theta + box_g

    def unpack(p):
        i = 0
        rho = rho0
        if opt_rho:
            rho, i = float(p[0]), 1
        theta = np.exp(p[i:i + k])
        g = float(np.exp(p[i + k])) if free else fixed_g
        return rho, theta, g

    def objective(p):
        rho, theta, g = unpack(p)
        val, _, grad = fine_log_likelihood_grad(
            X_E, y_E, yc, template.with_params(lengthscales=theta), g, rho, free, jitter
        )
        if not opt_rho:
            grad = grad[1:]
        return -val, -grad

    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box_theta + box_g])
    hi = np.array([b[1] for b in box_theta + box_g])
    first = np.log(template.lengthscales)
    if free:
        first = np.append(first, np.log(np.clip(1e-4, *bounds.nugget)))
    starts = [np.clip(first, lo, hi)] + [rng.uniform(lo, hi) for _ in range(n_starts - 1)]
    best, best_val, last_err = None, -np.inf, None
    for s in starts:
        x0 = np.concatenate([[rho0], s]) if opt_rho else s
        try:
            res = optimize.minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=box)
        except (GPError, linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            last_err = exc
            continue
        val = -float(res.fun)
        if np.isfinite(val) and val > best_val:
            best, best_val = res.x, val
    if best is None:
        raise OptimizationError("all fine-level starts failed", last_err) from last_err
    rho, theta, g = unpack(best)
    resid = y_E - rho * yc
    spec = template.with_params(lengthscales=theta)
    _, s2, _ = fine_log_likelihood_grad(X_E, y_E, yc, spec, g, rho, False, jitter)
    fine = _condition(X_E, resid, spec.with_params(variance=s2), g * s2, jitter)
    return MFModel(coarse, _with_sigma2(fine, s2), rho, X_E, y_E, DIRECT, jitter)
