"""Pure-numpy kernel primitives.

Every function here has a twin with the identical signature in the compiled
``_ckernels`` extension; :mod:`asmfgp._backend` picks one at import time.

Kernels are one-dimensional stationary families combined over coordinates.
``family`` is an integer code: 0 for Matern 5/2, 1 for Gaussian.  All values
are returned with unit variance; callers apply sigma^2 or per-component
weights.
"""

import numpy as np

SQRT5 = np.sqrt(5.0)


def _diff(X1, X2):
    return X1[:, None, :] - X2[None, :, :]


def _components(U, theta, family):
    if family == 0:
        r = SQRT5 * np.abs(U) / theta
        return (1.0 + r + r * r / 3.0) * np.exp(-r), r
    return np.exp(-((U / theta) ** 2)), None


def _dtheta_ratio(U, r, theta, family):
    # (dk/dtheta) / k, finite even where k underflows
    if family == 0:
        return r * r * (1.0 + r) / (3.0 * theta * (1.0 + r + r * r / 3.0))
    return 2.0 * U * U / theta**3


def _dx_ratio(U, r, theta, family):
    # (dk/du) / k with u = x - x'
    if family == 0:
        return -(5.0 / (3.0 * theta**2)) * U * (1.0 + r) / (1.0 + r + r * r / 3.0)
    return -2.0 * U / theta**2


def product_kernel(X1, X2, theta, family):
    comp, _ = _components(_diff(X1, X2), theta, family)
    return np.prod(comp, axis=-1)


def product_kernel_grad(X, theta, family):
    U = _diff(X, X)
    comp, r = _components(U, theta, family)
    K = np.prod(comp, axis=-1)
    dK = K[..., None] * _dtheta_ratio(U, r, theta, family)
    return K, np.ascontiguousarray(np.moveaxis(dK, -1, 0))


def additive_kernel(X1, X2, theta, family):
    comp, _ = _components(_diff(X1, X2), theta, family)
    return np.ascontiguousarray(np.moveaxis(comp, -1, 0))


def additive_kernel_grad(X, theta, family):
    U = _diff(X, X)
    comp, r = _components(U, theta, family)
    dcomp = comp * _dtheta_ratio(U, r, theta, family)
    return (
        np.ascontiguousarray(np.moveaxis(comp, -1, 0)),
        np.ascontiguousarray(np.moveaxis(dcomp, -1, 0)),
    )


def product_kernel_xgrad(Xs, X, theta, family):
    U = _diff(Xs, X)
    comp, r = _components(U, theta, family)
    K = np.prod(comp, axis=-1)
    return K, K[..., None] * _dx_ratio(U, r, theta, family)


def additive_kernel_xgrad(Xs, X, theta, family):
    U = _diff(Xs, X)
    comp, r = _components(U, theta, family)
    return comp * _dx_ratio(U, r, theta, family)
