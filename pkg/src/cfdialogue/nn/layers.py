"""LSTM encoder and MLP parameter containers and their forward passes.

Parameter fields hold either plain arrays or :class:`Var` objects, so the same
forward code serves inference (no tape) and training (inside a tape).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Var

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh, "sigmoid": ad.sigmoid, "linear": ad.identity}


def _arr(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class LstmParams:
    """Single-layer LSTM.  Gate column order is (input, forget, output, candidate)."""

    w_input: object  # (D, 4H)
    w_hidden: object  # (H, 4H)
    bias: object  # (4H,)

    def __post_init__(self):
        wx, wh, b = _arr(self.w_input), _arr(self.w_hidden), _arr(self.bias)
        if wx.ndim != 2 or wh.ndim != 2 or b.ndim != 1:
            raise ValueError("LSTM weights must be 2-d and bias 1-d")
        H = wh.shape[0]
        if wh.shape != (H, 4 * H) or wx.shape[1] != 4 * H or b.shape != (4 * H,):
            raise ValueError(
                f"inconsistent LSTM shapes: w_input {wx.shape}, w_hidden {wh.shape}, bias {b.shape}"
            )

    @property
    def input_dim(self) -> int:
        return _arr(self.w_input).shape[0]

    @property
    def hidden_dim(self) -> int:
        return _arr(self.w_hidden).shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        H = hidden_dim
        return cls(
            _uniform(rng, input_dim, (input_dim, 4 * H)),
            _uniform(rng, H, (H, 4 * H)),
            _uniform(rng, H, (4 * H,)),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        H = hidden_dim
        return cls(np.zeros((input_dim, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H))

    def arrays(self, prefix: str) -> dict:
        return {
            f"{prefix}.w_input": self.w_input,
            f"{prefix}.w_hidden": self.w_hidden,
            f"{prefix}.bias": self.bias,
        }

    @classmethod
    def from_arrays(cls, arrays, prefix: str) -> "LstmParams":
        return cls(arrays[f"{prefix}.w_input"], arrays[f"{prefix}.w_hidden"], arrays[f"{prefix}.bias"])


@dataclass(frozen=True)
class MlpParams:
    """Stack of affine layers; the last layer is linear regardless of ``activations``."""

    weights: tuple
    biases: tuple
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))
        object.__setattr__(self, "activations", tuple(self.activations))
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ValueError("MLP needs matching, non-empty weight/bias/activation lists")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            w, b = _arr(w), _arr(b)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} do not match")
            if k and _arr(self.weights[k - 1]).shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input dim {w.shape[0]} does not chain")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def input_dim(self) -> int:
        return _arr(self.weights[0]).shape[0]

    @property
    def output_dim(self) -> int:
        return _arr(self.weights[-1]).shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [_arr(w).shape[1] for w in self.weights]

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "relu",
    ) -> "MlpParams":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            ws.append(_uniform(rng, fan_in, (fan_in, fan_out)))
            bs.append(_uniform(rng, fan_in, (fan_out,)))
        acts = [activation] * (len(ws) - 1) + ["linear"]
        return cls(tuple(ws), tuple(bs), tuple(acts))

    def arrays(self, prefix: str) -> dict:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{k}"] = w
            out[f"{prefix}.b{k}"] = b
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix: str, activations: Sequence[str]) -> "MlpParams":
        n = len(activations)
        return cls(
            tuple(arrays[f"{prefix}.w{k}"] for k in range(n)),
            tuple(arrays[f"{prefix}.b{k}"] for k in range(n)),
            tuple(activations),
        )


def mlp_forward(x, p: MlpParams):
    """Apply the MLP to a vector ``(d,)`` or a batch ``(B, d)``."""
    xv = _arr(x)
    if xv.shape[-1] != p.input_dim:
        raise ValueError(f"MLP expects input dim {p.input_dim}, got {xv.shape[-1]}")
    out = x
    last = len(p.weights) - 1
    for k, (w, b, act) in enumerate(zip(p.weights, p.biases, p.activations)):
        out = ad.add(ad.matmul(out, w), b)
        out = ad.identity(out) if k == last else ACTIVATIONS[act](out)
    if not isinstance(out, Var):
        out = Var(out)
    return out


def lstm_forward(seq, p: LstmParams) -> tuple[np.ndarray, np.ndarray]:
    """Run the LSTM over one ``(n, D)`` sequence from a zero state.

    Returns ``(hidden_sequence (n, H), final_hidden (H,))`` as arrays.
    """
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"sequence must be a non-empty (n, D) matrix, got shape {x.shape}")
    if x.shape[1] != p.input_dim:
        raise ValueError(f"LSTM expects input dim {p.input_dim}, got {x.shape[1]}")
    if np.isnan(x).any():
        raise ValueError("NaN in LSTM input")
    H = p.hidden_dim
    state = Var(np.zeros((1, 2 * H)))
    hs = []
    for t in range(x.shape[0]):
        state = ad.lstm_step(x[t : t + 1], state, p.w_input, p.w_hidden, p.bias)
        hs.append(state.value[0, :H])
    hidden = np.stack(hs)
    return hidden, hidden[-1].copy()


def pack_sequences(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad to ``(T, B, D)`` with a ``(T, B)`` validity mask and the lengths."""
    lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
    T, B, D = int(lengths.max()), len(seqs), seqs[0].shape[1]
    x = np.zeros((T, B, D))
    mask = np.zeros((T, B))
    for j, s in enumerate(seqs):
        x[: len(s), j] = s
        mask[: len(s), j] = 1.0
    return x, mask, lengths


def encode_batch(seqs: Sequence[np.ndarray], p: LstmParams, pooling: str = "last") -> Var:
    """Representation ``(B, H)`` for a batch of variable-length sequences.

    ``last`` takes each sequence's final hidden state; ``mean`` averages the
    hidden states over the valid steps.
    """
    if not seqs:
        raise ValueError("empty batch")
    for s in seqs:
        if s.ndim != 2 or s.shape[1] != p.input_dim:
            raise ValueError(f"LSTM expects input dim {p.input_dim}, got shape {s.shape}")
    x, mask, lengths = pack_sequences(seqs)
    hs = ad.lstm_sequence(x, mask, p.w_input, p.w_hidden, p.bias)
    B = len(seqs)
    if pooling == "last":
        return ad.take(hs, (lengths - 1, np.arange(B)))
    if pooling == "mean":
        summed = ad.sum_(ad.mul(hs, mask[:, :, None]), axis=0)
        return ad.mul(summed, (1.0 / lengths)[:, None])
    raise ValueError(f"unknown pooling {pooling!r}")
