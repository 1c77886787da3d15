"""Additive coarse level plus active-subspace fine level.

:func:`asmf_fit` runs the construction as a fixed sequence of numbered
stages.  Each stage is appended to an execution trace, and a failing stage
raises :class:`~asmfgp.errors.PipelineError` carrying its number.

=====  ====================================================================
step   action
=====  ====================================================================
2      fit the additive coarse model on all data
3      overfit guard: is the coarse noise below ``guard_threshold * sum(alpha)``
4      draw ``round(p * n)`` indices uniformly without replacement
5      refit the additive model on that subset
7      predict the coarse mean at the fine design
8      fit ``rho`` and a product-kernel GP on the residuals
9      estimate the active-subspace matrix of the residual GP
10     fit the residual GP on rotated inputs for each candidate ``r``
=====  ====================================================================

Steps 4 and 5 only run when the guard fires.  The fine level always keeps
all ``n`` points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from asmfgp.active_subspace import ASGP, MONTE_CARLO, estimate_C, select_r
from asmfgp.additive import AdditiveGP, additive_fit, overfit_guard
from asmfgp.errors import ConfigError, DimensionMismatchError, GPError, PipelineError
from asmfgp.gp import Bounds, Prediction, _check_data
from asmfgp.kernels import Family
from asmfgp.multifidelity import DIRECT, MFModel, _recursive, mf_fit, mf_predict_direct


class Variant(str, Enum):
    ASMF = "ASMF"
    MF = "MF"
    NAIVE_ASMF = "n-ASMF"
    NAIVE_MF = "n-MF"

    @property
    def naive(self) -> bool:
        return self in (Variant.NAIVE_ASMF, Variant.NAIVE_MF)

    @property
    def rotated(self) -> bool:
        return self in (Variant.ASMF, Variant.NAIVE_ASMF)


@dataclass(frozen=True)
class ASMFConfig:
    """Settings for :func:`asmf_fit`.

    Parameters
    ----------
    p : float
        Fraction of points kept for the coarse refit when the guard fires.
    guard_threshold : float
    r_candidates : list of int, optional
        Defaults to ``1..min(d, 10)`` plus ``d``.
    n_starts, seed : int
    bounds : Bounds, optional
    nugget : "estimate" or float
        ``0.0`` makes both levels interpolating.
    family : Family
    as_samples : int, optional
        Monte Carlo budget for the active-subspace matrix.
    """

    p: float = 0.8
    guard_threshold: float = 0.01
    r_candidates: tuple | None = None
    n_starts: int = 5
    seed: int = 0
    bounds: Bounds | None = None
    nugget: str | float = "estimate"
    family: Family = Family.MATERN52
    as_samples: int | None = None

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"p must lie in (0, 1], got {self.p}")
        if not self.guard_threshold > 0.0:
            raise ConfigError("guard_threshold must be positive")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be >= 1")
        if isinstance(self.nugget, str):
            if self.nugget != "estimate":
                raise ConfigError("nugget must be 'estimate' or a non-negative float")
        elif self.nugget < 0:
            raise ConfigError("nugget must be non-negative")
        if self.r_candidates is not None:
            object.__setattr__(self, "r_candidates", tuple(int(r) for r in self.r_candidates))
        object.__setattr__(self, "family", Family(self.family))

    def to_dict(self):
        return {
            "p": self.p,
            "guard_threshold": self.guard_threshold,
            "r_candidates": None if self.r_candidates is None else list(self.r_candidates),
            "n_starts": self.n_starts,
            "seed": self.seed,
            "bounds": None if self.bounds is None else self.bounds.to_dict(),
            "nugget": self.nugget,
            "family": self.family.value,
            "as_samples": self.as_samples,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get("bounds") is not None:
            data["bounds"] = Bounds.from_dict(data["bounds"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class ASMFModel:
    """Result of :func:`asmf_fit` or :func:`build_variant`."""

    variant: Variant
    coarse: AdditiveGP
    mf: MFModel
    trace: tuple = ()
    coarse_indices: np.ndarray | None = None

    @property
    def rho(self) -> float:
        return self.mf.rho

    @property
    def fine(self):
        return self.mf.fine_residual

    @property
    def r_selected(self) -> int | None:
        return self.fine.r if isinstance(self.fine, ASGP) else None

    @property
    def dimension(self) -> int:
        return self.mf.dimension

    def predict(self, Xs) -> Prediction:
        return asmf_predict(self, Xs)

    def to_dict(self):
        return {
            "type": "ASMFModel",
            "variant": self.variant.value,
            "mf": self.mf.to_dict(),
            "trace": list(self.trace),
            "coarse_indices": None if self.coarse_indices is None else self.coarse_indices.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        mf = MFModel.from_dict(data["mf"])
        idx = data.get("coarse_indices")
        return cls(Variant(data["variant"]), mf.coarse, mf, tuple(data.get("trace", ())),
                   None if idx is None else np.asarray(idx, dtype=int))

    def export_trace(self, path) -> None:
        """Write the execution trace as line-delimited JSON."""
        with open(path, "w") as fh:
            for entry in self.trace:
                fh.write(json.dumps(entry) + "\n")


class _Trace:
    def __init__(self):
        self.entries = []

    def run(self, step, name, fn, **inputs):
        self.entries.append({
            "step": step,
            "name": name,
            "inputs": {k: list(np.shape(v)) for k, v in inputs.items()},
        })
        try:
            return fn()
        except GPError as exc:
            raise PipelineError(step, f"{name}: {exc}") from exc


def asmf_fit(X, y, config: ASMFConfig | None = None) -> ASMFModel:
    """Fit the full model (variant ``ASMF``)."""
    return build_variant(X, y, config, Variant.ASMF)


def build_variant(X, y, config: ASMFConfig | None = None, variant=Variant.ASMF) -> ASMFModel:
    """Fit one of the four two-level variants on a single design.

    ``MF`` stops after step 8 and keeps the product-kernel residual GP on the
    original inputs.  The naive variants fix ``rho = 1`` and predict with the
    independent sum of both levels.
    """
    X, y = _check_data(X, y)
    config = config or ASMFConfig()
    variant = Variant(variant)
    n, d = X.shape
    fam = config.family
    trace = _Trace()
    coarse_nugget = config.nugget

    coarse = trace.run(
        2, "fit_additive_coarse",
        lambda: additive_fit(X, y, config.bounds, config.n_starts, config.seed, coarse_nugget, fam),
        X=X, y=y,
    )
    fired = trace.run(3, "overfit_guard", lambda: overfit_guard(coarse, config.guard_threshold))
    trace.entries[-1]["fired"] = bool(fired)
    idx = None
    if fired:
        n0 = int(round(config.p * n))
        rng = np.random.default_rng([config.seed, 4])
        idx = trace.run(4, "subsample", lambda: np.sort(rng.choice(n, size=n0, replace=False)), X=X)
        # for p = 1 the refit sees the same data; keep the original
        if n0 < n:
            coarse = trace.run(
                5, "refit_additive_coarse",
                lambda: additive_fit(X[idx], y[idx], config.bounds, config.n_starts,
                                     config.seed, coarse_nugget, fam),
                X=X[idx], y=y[idx],
            )
    trace.run(7, "predict_coarse", lambda: coarse.predict(X), X=X)
    fix_rho = 1.0 if variant.naive else None
    fine_nugget = config.nugget
    mf = trace.run(
        8, "fit_residual_gp",
        lambda: mf_fit(X, y, coarse, config.bounds, config.n_starts, config.seed,
                       fine_nugget, fam, fix_rho=fix_rho),
        X=X, y=y,
    )
    if variant.rotated:
        dec = trace.run(
            9, "estimate_active_subspace",
            lambda: estimate_C(mf.fine_residual, MONTE_CARLO, config.as_samples, config.seed),
            X=X,
        )
        resid = mf.fine_residual.y_centered
        fine = trace.run(
            10, "select_r",
            lambda: select_r(X, resid, dec, config.r_candidates, config.bounds, config.n_starts,
                             config.seed, fine_nugget, fam),
            X=X, d=resid,
        )
        trace.entries[-1]["r"] = fine.r
        mf = MFModel(coarse, fine, mf.rho, X, y, DIRECT)
    return ASMFModel(variant, coarse, mf, tuple(trace.entries), idx)


def asmf_predict(model: ASMFModel, Xs) -> Prediction:
    """Joint-system prediction, or the independent sum for naive variants."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if Xs.shape[1] != model.dimension:
        raise DimensionMismatchError(f"X has {Xs.shape[1]} columns, model expects {model.dimension}")
    if model.variant.naive:
        return _recursive(model.mf, Xs)
    return mf_predict_direct(model.mf, Xs)
