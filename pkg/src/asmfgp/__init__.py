"""Additive and active-subspace multi-fidelity Gaussian process regression."""

__version__ = "0.1.0"

from asmfgp._backend import BACKEND
from asmfgp.active_subspace import ASDecomposition, ASGP, estimate_C, rotate, select_r
from asmfgp.additive import AdditiveGP, additive_fit, main_effect, overfit_guard
from asmfgp.gp import Bounds, FittedGP, Prediction, gp_fit, gp_predict, optimize_hyperparams
from asmfgp.kernels import Composition, Family, KernelSpec, kernel_eval, kernel_grad, kernel_matrix
from asmfgp.multifidelity import MFModel, mf_fit, mf_predict_direct, mf_predict_recursive
from asmfgp.pipeline import ASMFConfig, ASMFModel, Variant, asmf_fit, asmf_predict, build_variant
from asmfgp.serialization import load_model, model_from_dict, save_model

__all__ = [
    "BACKEND", "ASDecomposition", "ASGP", "estimate_C", "rotate", "select_r",
    "AdditiveGP", "additive_fit", "main_effect", "overfit_guard",
    "Bounds", "FittedGP", "Prediction", "gp_fit", "gp_predict", "optimize_hyperparams",
    "Composition", "Family", "KernelSpec", "kernel_eval", "kernel_grad", "kernel_matrix",
    "MFModel", "mf_fit", "mf_predict_direct", "mf_predict_recursive",
    "ASMFConfig", "ASMFModel", "Variant", "asmf_fit", "asmf_predict", "build_variant",
    "load_model", "model_from_dict", "save_model",
]
