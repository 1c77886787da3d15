"""Active subspace of a fitted GP and GPs on rotated/projected inputs.

The active-subspace matrix of a GP posterior on the unit hypercube is

    C = int E[grad f(x) grad f(x)' | data] dx
      = int grad m grad m' + (d2k(x, x) - dk(x, X) K^-1 dk(X, x)) dx

and is estimated either by Monte Carlo (any twice-differentiable kernel)
or in closed form for the Gaussian product kernel.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import erf

from asmfgp import kernels
from asmfgp.errors import (
    DegenerateEigenvalueError,
    DimensionMismatchError,
    GPError,
    InvalidSpecError,
    OptimizationError,
)
from asmfgp.gp import (
    Bounds,
    FittedGP,
    Prediction,
    _concentrated_terms,
    cholesky_with_jitter,
    optimize_hyperparams,
)
from asmfgp.kernels import Composition, Family, KernelSpec

MONTE_CARLO = "montecarlo"
CLOSED_FORM = "closed_form"
MC_SAMPLES_PER_DIM = 212
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class ASDecomposition:
    """Eigendecomposition ``C = U diag(lambdas) U'`` with descending eigenvalues."""

    C: np.ndarray
    U: np.ndarray
    lambdas: np.ndarray
    center: np.ndarray

    @property
    def dimension(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_matrix(cls, C, center) -> ASDecomposition:
        C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
        lam, U = np.linalg.eigh(C)
        order = np.argsort(lam)[::-1]
        lam, U = lam[order], U[:, order]
        U = _fix_signs(U)
        return cls(C, U, np.maximum(lam, 0.0), np.asarray(center, dtype=float))

    def explained(self, r: int) -> float:
        """Share of the trace captured by the leading ``r`` eigenvalues."""
        total = self.lambdas.sum()
        return float(self.lambdas[:r].sum() / total) if total > 0 else 0.0

    def to_dict(self):
        return {
            "C": self.C.tolist(),
            "U": self.U.tolist(),
            "lambdas": self.lambdas.tolist(),
            "center": self.center.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(*(np.asarray(data[k], dtype=float) for k in ("C", "U", "lambdas", "center")))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"U": self.U.tolist(), "center": self.center.tolist()}, fh)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, lam in enumerate(self.lambdas):
                w.writerow([i, repr(float(lam))])


def _fix_signs(U):
    # largest-magnitude entry of each eigenvector is made positive
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def estimate_C(model, method: str = MONTE_CARLO, n_samples: int | None = None,
               seed: int = 0) -> ASDecomposition:
    """Active-subspace matrix of ``model``'s posterior over ``[0, 1]^d``.

    Parameters
    ----------
    model : FittedGP or AdditiveGP
        Inputs are assumed scaled to the unit hypercube.
    method : {"montecarlo", "closed_form"}
        ``closed_form`` requires the Gaussian family with product or
        isotropic composition.
    n_samples : int, optional
        Monte Carlo budget, default ``212 * d``.
    """
    base = getattr(model, "base", model)
    spec = base.spec
    if method == MONTE_CARLO:
        C = _mc_matrix(base, n_samples or MC_SAMPLES_PER_DIM * spec.dimension, seed)
    elif method == CLOSED_FORM:
        if spec.family is not Family.GAUSSIAN or spec.composition is Composition.ADDITIVE:
            raise InvalidSpecError("closed-form AS matrix is available for Gaussian product kernels only")
        C = closed_form_matrix(base)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ASDecomposition.from_matrix(C, base.X_train.mean(axis=0))


def _mc_matrix(model: FittedGP, M: int, seed: int) -> np.ndarray:
    spec = model.spec
    d, n = spec.dimension, model.n
    rng = np.random.default_rng(seed)
    xs = rng.random((M, d))
    acc = np.zeros((d, d))
    for start in range(0, M, _CHUNK):
        chunk = xs[start:start + _CHUNK]
        _, G = kernels.input_gradient(spec, chunk, model.X_train)
        gm = np.einsum("mnd,n->md", G, model.alpha_solve)
        m = chunk.shape[0]
        V = linalg.solve_triangular(
            model.chol, G.transpose(1, 0, 2).reshape(n, m * d), lower=True, check_finite=False
        ).reshape(n, m, d)
        acc += gm.T @ gm - np.einsum("nmi,nmj->ij", V, V)
    return kernels.gradient_prior_covariance(spec) + acc / M


# --- closed form for the Gaussian product kernel ------------------------------

def _moments(c, lo, hi, pmax):
    """``J_p = int_lo^hi s^p exp(-c s^2) ds`` for p = 0..pmax (elementwise)."""
    sc = np.sqrt(c)
    e_lo, e_hi = np.exp(-c * lo * lo), np.exp(-c * hi * hi)
    J = [0.5 * np.sqrt(np.pi / c) * (erf(sc * hi) - erf(sc * lo))]
    if pmax >= 1:
        J.append((e_lo - e_hi) / (2 * c))
    for p in range(2, pmax + 1):
        J.append((lo ** (p - 1) * e_lo - hi ** (p - 1) * e_hi) / (2 * c) + (p - 1) / (2 * c) * J[p - 2])
    return J


def _poly_integral(coeffs, J):
    return sum(cf * J[p] for p, cf in enumerate(coeffs) if np.any(cf != 0))


def _unit_integrals(a, b, t, with_grad=False):
    """1-D integrals over [0, 1] for the kernel ``exp(-((x - a) / t)^2)``.

    Returns ``I0 = int k_a k_b``, ``Ia = int k_a' k_b``, ``Ib = int k_a k_b'``
    and ``I2 = int k_a' k_b'`` (primes are d/dx), each an array over the
    ``(a, b)`` grid, plus their t-derivatives when ``with_grad``.
    """
    A, B = a[:, None], b[None, :]
    m, dl = 0.5 * (A + B), 0.5 * (A - B)
    c = 2.0 / t**2
    G = np.exp(-c * dl * dl)
    J = _moments(c, -m, 1.0 - m, 5 if with_grad else 2)
    one = np.ones_like(dl)
    # integrands written as polynomials in s = x - m; x - a = s - dl, x - b = s + dl
    p0 = [one]
    pa = [2 * dl / t**2, -2 / t**2 * one]
    pb = [-2 * dl / t**2, -2 / t**2 * one]
    p2 = [-4 * dl * dl / t**4, 0 * one, 4 / t**4 * one]
    polys = (p0, pa, pb, p2)
    vals = [G * _poly_integral(p, J) for p in polys]
    if not with_grad:
        return vals
    # d/dt of k_a k_b = (2 ((x-a)^2 + (x-b)^2) / t^3) k_a k_b = (4 (s^2 + dl^2) / t^3) k_a k_b
    q = [4 * dl * dl / t**3, 0 * one, 4 / t**3 * one]
    # d/dt of the derivative-coefficient polynomials themselves
    dpa = [-4 * dl / t**3, 4 / t**3 * one]
    dpb = [4 * dl / t**3, 4 / t**3 * one]
    dp2 = [16 * dl * dl / t**5, 0 * one, -16 / t**5 * one]
    dpolys = ([0 * one], dpa, dpb, dp2)
    grads = [G * (_poly_integral(_polymul(p, q), J) + _poly_integral(dp, J))
             for p, dp in zip(polys, dpolys)]
    return vals, grads


def _polymul(p, q):
    out = [0.0] * (len(p) + len(q) - 1)
    for i, pi in enumerate(p):
        for j, qj in enumerate(q):
            out[i + j] = out[i + j] + pi * qj
    return out


def _w_blocks(X, theta, s2, with_grad=False):
    """``W[i][j] = int dk(x, X)/dx_i  dk(x, X)/dx_j' dx`` (n x n each)."""
    d = X.shape[1]
    per = [_unit_integrals(X[:, l], X[:, l], theta[l], with_grad) for l in range(d)]
    if with_grad:
        vals = [p[0] for p in per]
        grads = [p[1] for p in per]
    else:
        vals, grads = per, None
    def factors(i, j, source):
        f = [v[0] for v in source]
        if i == j:
            f[i] = source[i][3]
        else:
            f[i] = source[i][1]
            f[j] = source[j][2]
        return f

    W = [[None] * d for _ in range(d)]
    dW = [[None] * d for _ in range(d)] if with_grad else None
    for i in range(d):
        for j in range(d):
            f = factors(i, j, vals)
            W[i][j] = s2 * s2 * np.prod(f, axis=0)
            if with_grad:
                dW[i][j] = []
                df = factors(i, j, grads)
                for l in range(d):
                    fl = list(f)
                    fl[l] = df[l]
                    dW[i][j].append(s2 * s2 * np.prod(fl, axis=0))
    return W, dW


def closed_form_matrix(model: FittedGP) -> np.ndarray:
    """Closed-form AS matrix ``E - tr(K^-1 W) + y' K^-1 W K^-1 y``."""
    spec = model.spec
    theta, s2 = spec.theta, spec.variance
    d, n = spec.dimension, model.n
    Kinv = linalg.cho_solve((model.chol, True), np.eye(n), check_finite=False)
    a = model.alpha_solve
    W, _ = _w_blocks(model.X_train, theta, s2)
    E = kernels.gradient_prior_covariance(spec)
    C = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            C[i, j] = E[i, j] - np.sum(Kinv * W[i][j].T) + a @ W[i][j] @ a
    return C


# --- rotated GP ---------------------------------------------------------------

def rotate(decomposition: ASDecomposition, X, r: int) -> np.ndarray:
    """``(X - center) U[:, :r]``."""
    d = decomposition.dimension
    if not 1 <= r <= d:
        raise ValueError(f"r must lie in [1, {d}], got {r}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d:
        raise DimensionMismatchError(f"X has {X.shape[1]} columns, decomposition has {d}")
    return (X - decomposition.center) @ decomposition.U[:, :r]


@dataclass(frozen=True, eq=False)
class ASGP:
    """GP on the leading ``r`` rotated coordinates."""

    decomposition: ASDecomposition
    r: int
    inner: FittedGP
    X_train: np.ndarray
    candidate_log_liks: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.decomposition.dimension

    @property
    def log_lik(self) -> float:
        return self.inner.log_lik

    @property
    def nugget(self) -> float:
        return self.inner.nugget

    @property
    def noise_variance(self) -> float:
        return self.inner.noise_variance

    @property
    def spec(self) -> KernelSpec:
        return self.inner.spec

    @property
    def sigma2_hat(self):
        return self.inner.sigma2_hat

    @property
    def offset(self) -> float:
        return 0.0

    @property
    def y_centered(self) -> np.ndarray:
        return self.inner.y_train

    def project(self, X):
        return rotate(self.decomposition, X, self.r)

    def covariance(self, A, B):
        return self.inner.covariance(self.project(A), self.project(B))

    def prior_variance(self, A):
        return self.inner.prior_variance(A)

    def predict(self, Xs) -> Prediction:
        return self.inner.predict(self.project(Xs))

    def to_dict(self):
        return {
            "type": "ASGP",
            "decomposition": self.decomposition.to_dict(),
            "r": self.r,
            "inner": self.inner.to_dict(),
            "X_train": self.X_train.tolist(),
            "candidate_log_liks": {str(k): v for k, v in self.candidate_log_liks.items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ASDecomposition.from_dict(data["decomposition"]),
            int(data["r"]),
            FittedGP.from_dict(data["inner"]),
            np.asarray(data["X_train"], dtype=float),
            {int(k): v for k, v in data.get("candidate_log_liks", {}).items()},
        )


def default_candidates(d: int) -> list:
    return sorted(set(range(1, min(d, 10) + 1)) | {d})


def select_r(X, y, decomposition: ASDecomposition, candidates=None, bounds: Bounds | None = None,
             n_starts: int = 5, seed: int = 0, nugget="estimate",
             family=Family.MATERN52) -> ASGP:
    """Fit one GP per candidate dimension and keep the highest likelihood.

    Candidates whose log-likelihoods are within 1e-9 of each other resolve
    to the smaller ``r``.
    """
    X = np.asarray(X, dtype=float)
    d = decomposition.dimension
    candidates = sorted(set(candidates or default_candidates(d)))
    if not candidates or candidates[0] < 1 or candidates[-1] > d:
        raise ValueError(f"candidates must be a non-empty subset of [1, {d}]")
    bounds = bounds or Bounds.default(d)
    best, best_ll, last_err = None, -np.inf, None
    lls = {}
    for r in candidates:
        Z = rotate(decomposition, X, r)
        template = KernelSpec.product(np.full(r, 0.5 * np.sqrt(d)), 1.0, family)
        try:
            m = optimize_hyperparams(Z, y, template, bounds, n_starts, seed + r, nugget)
        except GPError as exc:
            last_err = exc
            continue
        lls[r] = m.log_lik
        if m.log_lik > best_ll + 1e-9:
            best, best_ll = (r, m), m.log_lik
    if best is None:
        raise OptimizationError("every candidate dimension failed to fit", last_err) from last_err
    return ASGP(decomposition, best[0], best[1], X, lls)


# --- one-shot joint learning (optional tier) -----------------------------------

def one_shot_gradient(theta, ell, X, y, sigma2: float = 1.0, nugget: float = 1e-6,
                      nugget_rel: float = 1e-6):
    """Low-dimensional concentrated log-likelihood and its joint gradient.

    The AS matrix of a Gaussian-kernel GP with lengthscales ``theta``
    (``sigma2``, ``nugget`` fixed) defines the rotation; a Gaussian-kernel
    GP with lengthscales ``ell`` is then fitted on the ``r = len(ell)``
    leading rotated coordinates with relative nugget ``nugget_rel``.

    Returns
    -------
    value : float
    grad : ndarray
        Natural-scale gradient ordered as ``ell`` then ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    ell = np.asarray(ell, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    r = ell.size
    if not 1 <= r <= d or theta.size != d:
        raise DimensionMismatchError("need len(theta) == d and 1 <= len(ell) <= d")

    # high-dimensional GP and its AS matrix
    spec_hi = KernelSpec.product(theta, sigma2, Family.GAUSSIAN)
    K, dK = kernels.covariance_and_grad(spec_hi, X)
    K[np.diag_indices_from(K)] += nugget
    L, _ = cholesky_with_jitter(K, sigma2, 0.0)
    Kinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    a = Kinv @ y
    W, dW = _w_blocks(X, theta, sigma2, with_grad=True)
    E = kernels.gradient_prior_covariance(spec_hi)
    C = np.empty((d, d))
    dC = np.zeros((d, d, d))  # dC[l] = dC / dtheta_l
    beta = [-(Kinv @ (dK[l] @ a)) for l in range(d)]
    KdK = [Kinv @ dK[l] @ Kinv for l in range(d)]
    for i in range(d):
        for j in range(d):
            Wij = W[i][j]
            C[i, j] = E[i, j] - np.sum(Kinv * Wij.T) + a @ Wij @ a
            for l in range(d):
                dWl = dW[i][j][l]
                v = np.sum(KdK[l] * Wij.T) - np.sum(Kinv * dWl.T)
                v += beta[l] @ Wij @ a + a @ Wij @ beta[l] + a @ dWl @ a
                if i == j == l:
                    v += -2.0 * sigma2 * spec_hi.family.curvature / theta[l] ** 3
                dC[l, i, j] = v
    C = 0.5 * (C + C.T)
    dC = 0.5 * (dC + dC.transpose(0, 2, 1))
    lam, U = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], _fix_signs(U[:, order])
    for l in range(r):
        gaps = np.abs(lam[l] - np.delete(lam, l))
        if gaps.min() < 1e-8 * abs(lam[0]):
            raise DegenerateEigenvalueError(
                f"eigenvalue {l} is within {gaps.min():.3g} of another; eigenvector derivative undefined"
            )

    # low-dimensional GP on the rotated coordinates
    Xc = X - X.mean(axis=0)
    Z = Xc @ U[:, :r]
    spec_lo = KernelSpec.product(ell, 1.0, Family.GAUSSIAN)
    R, dR = kernels.covariance_and_grad(spec_lo, Z)
    R[np.diag_indices_from(R)] += nugget_rel
    value, _, Wlo = _concentrated_terms(R, y, 0.0)
    g_ell = 0.5 * np.einsum("ij,pij->p", Wlo, dR[:r])
    diff = Z[:, None, :] - Z[None, :, :]
    dLdZ = np.einsum("ab,ab,abl->al", Wlo, R, -2.0 * diff / ell**2)
    dLdU = Xc.T @ dLdZ  # d x r

    g_theta = np.zeros(d)
    for l in range(r):
        pinv = sum(np.outer(U[:, m], U[:, m]) / (lam[l] - lam[m]) for m in range(d) if m != l)
        for i in range(d):
            g_theta[i] += dLdU[:, l] @ (pinv @ (dC[i] @ U[:, l]))
    return value, np.concatenate([g_ell, g_theta])
