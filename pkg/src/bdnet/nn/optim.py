"""Adam and plain SGD, operating functionally on Model parameter sets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import CongruenceError
from .model import Model


@dataclass
class OptimizerState:
    kind: str  # "adam" | "sgd"
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list | None = None
    v: list | None = None

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def adam(lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState("adam", lr, beta1, beta2, eps)


def sgd(lr: float) -> OptimizerState:
    return OptimizerState("sgd", lr)


def _check_congruent(params, grads):
    if len(grads) != len(params):
        raise CongruenceError("gradient layer count differs from parameters")
    for p, g in zip(params, grads):
        if set(p) != set(g):
            raise CongruenceError("gradient entries differ from parameters")
        for name in p:
            if p[name].shape != g[name].shape:
                raise CongruenceError(
                    f"gradient shape {g[name].shape} != parameter shape {p[name].shape}")


def optimizer_step(state: OptimizerState, model: Model, grads) -> tuple[Model, OptimizerState]:
    """One update step; returns the new model and advanced optimizer state."""
    _check_congruent(model.params, grads)
    t = state.step + 1
    if state.kind == "sgd":
        new_params = [
            {name: p[name] - state.lr * g[name] for name in p}
            for p, g in zip(model.params, grads)
        ]
        return model.with_params(new_params), replace(state, step=t)

    m = state.m if state.m is not None else [
        {name: np.zeros_like(arr) for name, arr in p.items()} for p in model.params
    ]
    v = state.v if state.v is not None else [
        {name: np.zeros_like(arr) for name, arr in p.items()} for p in model.params
    ]
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, mi, vi in zip(model.params, grads, m, v):
        np_, nm, nv = {}, {}, {}
        for name in p:
            nm[name] = b1 * mi[name] + (1 - b1) * g[name]
            nv[name] = b2 * vi[name] + (1 - b2) * g[name] ** 2
            mhat = nm[name] / (1 - b1 ** t)
            vhat = nv[name] / (1 - b2 ** t)
            np_[name] = p[name] - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        new_params.append(np_)
        new_m.append(nm)
        new_v.append(nv)
    return model.with_params(new_params), replace(state, step=t, m=new_m, v=new_v)
