"""Adam with functional updates: parameters and state are never modified in place."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.param = name


@dataclass(frozen=True)
class AdamState:
    t: int = 0
    m: Mapping[str, np.ndarray] = field(default_factory=dict)
    v: Mapping[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in sorted(self.m.items())},
            "v": {k: {"shape": list(a.shape), "data": a.ravel().tolist()} for k, a in sorted(self.v.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        def arrs(section):
            return {k: np.asarray(e["data"], dtype=float).reshape(e["shape"]) for k, e in section.items()}

        return cls(int(d["t"]), arrs(d["m"]), arrs(d["v"]))


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update over the parameters named in ``grads``.

    Parameters absent from ``grads`` are passed through untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    t = state.t + 1
    new_params = dict(params)
    new_m = dict(state.m)
    new_v = dict(state.v)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in sorted(grads):
        g = grads[name]
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * (g * g)
        new_params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(t, new_m, new_v)
