"""Stationary covariance kernels: evaluation, composition and derivatives.

A kernel is described by an immutable :class:`KernelSpec`.  Three
compositions of one-dimensional kernels are supported:

``product``
    ``sigma2 * prod_i k_i(x_i, x'_i; theta_i)``
``isotropic``
    the product form with a single lengthscale shared by all coordinates
``additive``
    ``sum_i alpha_i * k_i(x_i, x'_i; theta_i)``

Hyperparameters are stored on their natural scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from asmfgp import _backend
from asmfgp.errors import DimensionMismatchError, InvalidSpecError, NonFiniteInputError


class Family(str, Enum):
    MATERN52 = "matern52"
    GAUSSIAN = "gaussian"

    @property
    def code(self) -> int:
        return 0 if self is Family.MATERN52 else 1

    @property
    def curvature(self) -> float:
        """``-k''(0)`` of the unit-lengthscale 1-D kernel."""
        return 5.0 / 3.0 if self is Family.MATERN52 else 2.0


class Composition(str, Enum):
    PRODUCT = "product"
    ADDITIVE = "additive"
    ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class KernelSpec:
    """Declarative covariance description.

    Parameters
    ----------
    family : Family
    composition : Composition
    lengthscales : tuple of float
        ``d`` values, or a single value for the isotropic composition.
    variance : float or tuple of float
        Process variance ``sigma2`` for product/isotropic, component
        variances ``alpha_1..alpha_d`` for additive.
    dimension : int
    """

    family: Family
    composition: Composition
    lengthscales: tuple
    variance: float | tuple
    dimension: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "composition", Composition(self.composition))
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if self.composition is Composition.ADDITIVE:
            var = tuple(float(v) for v in np.atleast_1d(self.variance))
        else:
            var = float(np.asarray(self.variance).reshape(()))
        object.__setattr__(self, "variance", var)
        d = self.dimension or (len(var) if isinstance(var, tuple) else len(ls))
        object.__setattr__(self, "dimension", int(d))
        self._validate()

    def _validate(self):
        d = self.dimension
        if d < 1:
            raise InvalidSpecError("dimension must be >= 1")
        expected = 1 if self.composition is Composition.ISOTROPIC else d
        if len(self.lengthscales) != expected:
            raise InvalidSpecError(
                f"{self.composition.value} kernel needs {expected} lengthscale(s), "
                f"got {len(self.lengthscales)}"
            )
        if not all(np.isfinite(t) and t > 0 for t in self.lengthscales):
            raise InvalidSpecError("lengthscales must be finite and strictly positive")
        if self.composition is Composition.ADDITIVE:
            if len(self.variance) != d:
                raise InvalidSpecError(f"additive kernel needs {d} component variances")
            if any(not np.isfinite(a) or a < 0 for a in self.variance):
                raise InvalidSpecError("component variances must be non-negative")
            if not any(a > 0 for a in self.variance):
                raise InvalidSpecError("at least one component variance must be positive")
        elif not (np.isfinite(self.variance) and self.variance > 0):
            raise InvalidSpecError("variance must be finite and strictly positive")

    # convenience constructors -------------------------------------------
    @classmethod
    def product(cls, lengthscales, variance=1.0, family=Family.MATERN52):
        ls = tuple(np.atleast_1d(lengthscales))
        return cls(family, Composition.PRODUCT, ls, variance, len(ls))

    @classmethod
    def isotropic(cls, lengthscale, dimension, variance=1.0, family=Family.MATERN52):
        return cls(family, Composition.ISOTROPIC, (lengthscale,), variance, dimension)

    @classmethod
    def additive(cls, lengthscales, variances, family=Family.MATERN52):
        ls = tuple(np.atleast_1d(lengthscales))
        return cls(family, Composition.ADDITIVE, ls, tuple(np.atleast_1d(variances)), len(ls))

    @property
    def theta(self) -> np.ndarray:
        """Per-coordinate lengthscales (broadcast for the isotropic case)."""
        t = np.asarray(self.lengthscales, dtype=float)
        if self.composition is Composition.ISOTROPIC:
            return np.full(self.dimension, t[0])
        return t

    @property
    def variance_normalization(self) -> float:
        """Kernel value at zero distance."""
        if self.composition is Composition.ADDITIVE:
            return float(sum(self.variance))
        return self.variance

    @property
    def n_params(self) -> int:
        nv = self.dimension if self.composition is Composition.ADDITIVE else 1
        return len(self.lengthscales) + nv

    def with_params(self, lengthscales=None, variance=None) -> KernelSpec:
        kw = {}
        if lengthscales is not None:
            kw["lengthscales"] = tuple(np.atleast_1d(lengthscales))
        if variance is not None:
            kw["variance"] = variance if np.ndim(variance) == 0 else tuple(variance)
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "composition": self.composition.value,
            "lengthscales": list(self.lengthscales),
            "variance": list(self.variance) if isinstance(self.variance, tuple) else self.variance,
            "dimension": self.dimension,
        }

    @classmethod
    def from_dict(cls, data: dict) -> KernelSpec:
        return cls(
            Family(data["family"]),
            Composition(data["composition"]),
            tuple(data["lengthscales"]),
            tuple(data["variance"]) if isinstance(data["variance"], list) else data["variance"],
            int(data["dimension"]),
        )


def _as_design(spec, X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if spec.dimension == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != spec.dimension:
        raise DimensionMismatchError(
            f"{name} has {X.shape[-1] if X.ndim else 0} columns, kernel expects {spec.dimension}"
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteInputError(f"{name} contains non-finite coordinates")
    return X


def _weights(spec):
    return np.asarray(spec.variance, dtype=float)


def covariance(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Noise-free cross-covariance matrix ``k(X1, X2)``."""
    X1 = _as_design(spec, X1, "X")
    X2 = _as_design(spec, X2, "X'")
    theta = spec.theta
    if spec.composition is Composition.ADDITIVE:
        comps = _backend.additive_kernel(X1, X2, theta, spec.family.code)
        return np.tensordot(_weights(spec), comps, axes=1)
    return spec.variance * _backend.product_kernel(X1, X2, theta, spec.family.code)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Kernel value between two points."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.size != spec.dimension or x2.size != spec.dimension:
        raise DimensionMismatchError(
            f"points of size {x.size} and {x2.size}, kernel expects {spec.dimension}"
        )
    return float(covariance(spec, x[None, :], x2[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, X, X2=None, nugget: float = 0.0) -> np.ndarray:
    """Covariance matrix with the nugget on the diagonal of self-covariances.

    The nugget is added only when ``X2`` is omitted, is the same object as
    ``X``, or holds exactly the same rows.
    """
    X = _as_design(spec, X)
    same = X2 is None or X2 is X
    if not same:
        X2 = _as_design(spec, X2, "X'")
        same = X2.shape == X.shape and np.array_equal(X2, X)
    K = covariance(spec, X, X if same else X2)
    if same:
        K = 0.5 * (K + K.T)
        if nugget:
            K[np.diag_indices_from(K)] += nugget
    return K


def covariance_and_grad(spec: KernelSpec, X):
    """Self-covariance and its derivatives with respect to each hyperparameter.

    Returns
    -------
    K : (n, n) ndarray
    grads : (p, n, n) ndarray
        Ordered as lengthscales (one entry for isotropic), then variance
        (``sigma2``) or component variances ``alpha_i``.
    """
    X = _as_design(spec, X)
    theta = spec.theta
    code = spec.family.code
    if spec.composition is Composition.ADDITIVE:
        comps, dcomps = _backend.additive_kernel_grad(X, theta, code)
        alpha = _weights(spec)
        K = np.tensordot(alpha, comps, axes=1)
        grads = np.concatenate([alpha[:, None, None] * dcomps, comps], axis=0)
        return K, grads
    R, dR = _backend.product_kernel_grad(X, theta, code)
    s2 = spec.variance
    dtheta = s2 * dR
    if spec.composition is Composition.ISOTROPIC:
        dtheta = dtheta.sum(axis=0, keepdims=True)
    return s2 * R, np.concatenate([dtheta, R[None]], axis=0)


def kernel_grad(spec: KernelSpec, X) -> list:
    """Derivatives of ``kernel_matrix(spec, X, nugget=tau2)``.

    One ``(n, n)`` matrix per hyperparameter: lengthscales, variance(s),
    and finally the nugget (the identity).
    """
    _, grads = covariance_and_grad(spec, X)
    n = grads.shape[1]
    return [g for g in grads] + [np.eye(n)]


def input_gradient(spec: KernelSpec, Xs, X):
    """Gradient of ``k(x, X)`` with respect to ``x``, for each row of ``Xs``.

    Returns
    -------
    K : (m, n) ndarray
        ``k(Xs, X)``.
    G : (m, n, d) ndarray
        ``G[s, j, i] = dk(Xs[s], X[j]) / dx_i``.
    """
    Xs = _as_design(spec, Xs, "X*")
    X = _as_design(spec, X)
    theta = spec.theta
    code = spec.family.code
    if spec.composition is Composition.ADDITIVE:
        alpha = _weights(spec)
        comps = _backend.additive_kernel(Xs, X, theta, code)
        G = _backend.additive_kernel_xgrad(Xs, X, theta, code) * alpha
        return np.tensordot(alpha, comps, axes=1), G
    K, G = _backend.product_kernel_xgrad(Xs, X, theta, code)
    return spec.variance * K, spec.variance * G


def gradient_prior_covariance(spec: KernelSpec) -> np.ndarray:
    """``d^2 k(x, x') / dx_i dx'_j`` at ``x = x'`` (diagonal for these kernels)."""
    c = spec.family.curvature / spec.theta**2
    if spec.composition is Composition.ADDITIVE:
        return np.diag(_weights(spec) * c)
    return np.diag(spec.variance * c)
