"""JSON checkpoints for the three model kinds.

Floats are written with ``repr`` precision, so a load/save round trip is
exact and the same model always produces the same bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import NormStats
from .models import BaselineLstmModel, BaselineMlpModel, CfLstmModel, TrainConfig
from .nn.layers import LstmParams, MlpParams
from .nn.optim import AdamState
from .treatment import TreatmentPolicy

FORMAT = "cfdialogue-checkpoint/1"
KINDS = {"cf-lstm": CfLstmModel, "lstm": BaselineLstmModel, "mlp": BaselineMlpModel}


class CheckpointError(ValueError):
    pass


def _tensor(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _array(t: dict) -> np.ndarray:
    data = np.asarray(t["data"], dtype=np.float64)
    shape = tuple(int(x) for x in t["shape"])
    if data.size != int(np.prod(shape)):
        raise CheckpointError(f"tensor data length {data.size} does not match shape {list(shape)}")
    return data.reshape(shape)


def _history_to_json(obj):
    if isinstance(obj, AdamState):
        return obj.to_dict()
    if isinstance(obj, dict):
        return {k: _history_to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_history_to_json(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _history_from_json(obj):
    if isinstance(obj, dict):
        if set(obj) == {"t", "m", "v"}:
            return AdamState.from_dict(obj)
        return {k: _history_from_json(v) for k, v in obj.items()}
    return obj


def model_to_dict(model) -> dict:
    if model.kind not in KINDS:
        raise CheckpointError(f"unknown model kind {model.kind!r}")
    if isinstance(model, CfLstmModel):
        activations = {f"heads.{k}": list(h.activations) for k, h in enumerate(model.heads)}
    elif isinstance(model, BaselineLstmModel):
        activations = {"head": list(model.head.activations)}
    else:
        activations = {"regressor": list(model.regressor.activations)}
    return {
        "format": FORMAT,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "policy": model.policy.to_json() if isinstance(model, CfLstmModel) else None,
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats is not None else None,
        "activations": activations,
        "params": {k: _tensor(v) for k, v in sorted(model.parameters().items())},
        "history": _history_to_json(model.history),
    }


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {d.get('format')!r}, expected {FORMAT!r}")
    kind = d.get("kind")
    if kind not in KINDS:
        raise CheckpointError(f"unknown model kind {kind!r}")
    cfg = TrainConfig.from_dict(d["config"])
    params = {k: _array(t) for k, t in d["params"].items()}
    stats = NormStats.from_dict(d["norm_stats"]) if d.get("norm_stats") is not None else None
    history = _history_from_json(d.get("history", {}))
    acts = d["activations"]
    try:
        if kind == "cf-lstm":
            heads = tuple(
                MlpParams.from_arrays(params, f"heads.{k}", acts[f"heads.{k}"]) for k in range(len(acts))
            )
            return CfLstmModel(
                LstmParams.from_arrays(params, "encoder"),
                heads,
                TreatmentPolicy.from_json(d["policy"]),
                cfg,
                stats,
                history,
            )
        if kind == "lstm":
            return BaselineLstmModel(
                LstmParams.from_arrays(params, "encoder"),
                MlpParams.from_arrays(params, "head", acts["head"]),
                cfg,
                stats,
                history,
            )
        return BaselineMlpModel(MlpParams.from_arrays(params, "regressor", acts["regressor"]), cfg, stats, history)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing parameter {exc}") from None


def dumps(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_checkpoint(model, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model))


def load_checkpoint(path: str | Path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"checkpoint not found: {p}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{p}: not a JSON checkpoint ({exc})") from None
    return model_from_dict(d)
