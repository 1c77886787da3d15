"""Select the compiled or the pure-numpy kernel primitives.

The compiled extension is used when importable.  Setting the environment
variable ``ASMFGP_BACKEND=python`` forces the numpy fallback.
"""

import os

import numpy as np

from asmfgp import _kernels_py

_NAMES = (
    "product_kernel",
    "product_kernel_grad",
    "additive_kernel",
    "additive_kernel_grad",
    "product_kernel_xgrad",
    "additive_kernel_xgrad",
)


def _load(name):
    if name == "python":
        return _kernels_py
    if name == "cython":
        from asmfgp import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def _select():
    requested = os.environ.get("ASMFGP_BACKEND", "").strip().lower()
    if requested:
        return requested, _load(requested)
    try:
        return "cython", _load("cython")
    except ImportError:
        return "python", _kernels_py


BACKEND, _impl = _select()


def get(name):
    """Return the primitive module for an explicit backend name."""
    return _load(name)


def _wrap(fn):
    # the compiled routines need C-contiguous float64 buffers
    def call(*args):
        conv = [
            np.ascontiguousarray(a, dtype=np.float64) if isinstance(a, np.ndarray) else a
            for a in args
        ]
        return fn(*conv)

    call.__name__ = fn.__name__
    return call


for _name in _NAMES:
    globals()[_name] = _wrap(getattr(_impl, _name))
