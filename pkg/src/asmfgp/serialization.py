"""JSON round-trip for every fitted model type."""

from __future__ import annotations

import json

import numpy as np


def _registry():
    from asmfgp.active_subspace import ASGP
    from asmfgp.additive import AdditiveGP
    from asmfgp.gp import FittedGP
    from asmfgp.multifidelity import MFModel
    from asmfgp.pipeline import ASMFModel

    return {c.__name__: c for c in (FittedGP, AdditiveGP, ASGP, MFModel, ASMFModel)}


def model_from_dict(data: dict):
    """Rebuild a model from the output of its ``to_dict``."""
    kind = data.get("type")
    reg = _registry()
    if kind not in reg:
        raise ValueError(f"unknown model type {kind!r}")
    return reg[kind].from_dict(data)


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        return super().default(o)


def dumps(obj) -> str:
    return json.dumps(obj, cls=_Encoder)


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model.to_dict()))


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
