"""Rating predictors: dialogue-level MLP, dialogue-level LSTM and CF-LSTM.

The CF-LSTM shares one LSTM encoder across treatment arms and gives each arm
its own MLP head.  Its loss is the per-arm mean squared error summed over
arms plus ``ipm_weight`` times the sliced Wasserstein distance between the
control arm's representations and each treated arm's.

All models take raw (unnormalized) dialogues at prediction time and apply
their stored normalization statistics.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import ipm
from .data import (
    RATING_MAX,
    RATING_MIN,
    Dataset,
    Dialogue,
    NormStats,
    zscore_fit,
)
from .nn import autodiff as ad
from .nn.autodiff import GradTape, Var, backward
from .nn.layers import LstmParams, MlpParams, encode_batch, mlp_forward
from .nn.optim import AdamState, optimizer_step
from .treatment import PositivityWarning, TreatmentPolicy, dataset_arms

log = logging.getLogger(__name__)

BUCKET_FACTOR = 8
PREDICT_CHUNK = 256


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 64
    head_layers: tuple[int, ...] = (32,)
    mlp_layers: tuple[int, ...] = (64, 32)
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    ipm_weight: float = 1.0
    n_proj: int = ipm.DEFAULT_N_PROJ
    seed: int = 0
    patience: int = 10
    val_fraction: float = 0.1
    pooling: str = "last"
    include_counts: bool = False
    finetune_lr_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "head_layers", tuple(int(x) for x in self.head_layers))
        object.__setattr__(self, "mlp_layers", tuple(int(x) for x in self.mlp_layers))
        for name in ("hidden_size", "epochs", "batch_size", "n_proj", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(x <= 0 for x in self.head_layers + self.mlp_layers):
            raise ValueError("layer sizes must be positive")
        if self.learning_rate <= 0 or self.finetune_lr_scale <= 0:
            raise ValueError("learning rates must be positive")
        if self.ipm_weight < 0:
            raise ValueError("ipm_weight must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.pooling not in ("last", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["head_layers"] = list(self.head_layers)
        d["mlp_layers"] = list(self.mlp_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# Model containers


def _normalized(d: Dialogue, stats: NormStats | None) -> np.ndarray:
    if stats is None:
        return d.features
    if d.dim != stats.dim:
        raise ValueError(f"model expects {stats.dim} features per turn, dialogue {d.id!r} has {d.dim}")
    return (d.features - stats.mean) / stats.std


def model_inputs(model, data: Dataset | Sequence[Dialogue]) -> list[np.ndarray]:
    """Normalized per-dialogue feature matrices for ``model``.

    A ``Dataset`` already normalized with the model's statistics is used as is.
    """
    stats = model.norm_stats
    if isinstance(data, Dataset) and data.norm_stats is not None:
        if stats is not None and data.norm_stats != stats:
            raise ValueError("dataset was normalized with statistics different from the model's")
        stats = None
    dialogues = list(data)
    out = [_normalized(d, stats) for d in dialogues]
    dim = model.input_dim
    for d, x in zip(dialogues, out):
        if x.shape[1] != dim:
            raise ValueError(f"model expects {dim} features per turn, dialogue {d.id!r} has {x.shape[1]}")
    return out


@dataclass(frozen=True)
class CfLstmModel:
    """Shared LSTM encoder plus one regression head per treatment arm."""

    encoder: LstmParams
    heads: tuple[MlpParams, ...]
    policy: TreatmentPolicy
    config: TrainConfig = field(default_factory=TrainConfig)
    norm_stats: NormStats | None = None
    history: dict = field(default_factory=dict, compare=False)

    kind = "cf-lstm"

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(self.heads))
        if not self.heads:
            raise ValueError("CF-LSTM needs at least one head")
        H = self.encoder.hidden_dim
        for k, h in enumerate(self.heads):
            if h.input_dim != H:
                raise ValueError(f"head {k} expects input {h.input_dim}, encoder emits {H}")
            if h.output_dim != 1:
                raise ValueError(f"head {k} must output a single rating")

    @property
    def n_arms(self) -> int:
        return len(self.heads)

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    def parameters(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.arrays("encoder"))
        for k, h in enumerate(self.heads):
            out.update(h.arrays(f"heads.{k}"))
        return out

    def with_parameters(self, arrays) -> "CfLstmModel":
        return dataclasses.replace(
            self,
            encoder=LstmParams.from_arrays(arrays, "encoder"),
            heads=tuple(
                MlpParams.from_arrays(arrays, f"heads.{k}", h.activations) for k, h in enumerate(self.heads)
            ),
        )


@dataclass(frozen=True)
class BaselineLstmModel:
    encoder: LstmParams
    head: MlpParams
    config: TrainConfig = field(default_factory=TrainConfig)
    norm_stats: NormStats | None = None
    history: dict = field(default_factory=dict, compare=False)

    kind = "lstm"

    def __post_init__(self):
        if self.head.input_dim != self.encoder.hidden_dim:
            raise ValueError("head input must equal the encoder hidden size")

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    def parameters(self) -> dict[str, np.ndarray]:
        return {**self.encoder.arrays("encoder"), **self.head.arrays("head")}

    def with_parameters(self, arrays) -> "BaselineLstmModel":
        return dataclasses.replace(
            self,
            encoder=LstmParams.from_arrays(arrays, "encoder"),
            head=MlpParams.from_arrays(arrays, "head", self.head.activations),
        )


@dataclass(frozen=True)
class BaselineMlpModel:
    regressor: MlpParams
    config: TrainConfig = field(default_factory=TrainConfig)
    norm_stats: NormStats | None = None
    history: dict = field(default_factory=dict, compare=False)

    kind = "mlp"

    def __post_init__(self):
        slots = 5 if self.config.include_counts else 4
        if self.regressor.input_dim % slots:
            raise ValueError(f"regressor input {self.regressor.input_dim} is not {slots} * D")

    @property
    def input_dim(self) -> int:
        return self.regressor.input_dim // (5 if self.config.include_counts else 4)

    def parameters(self) -> dict[str, np.ndarray]:
        return self.regressor.arrays("regressor")

    def with_parameters(self, arrays) -> "BaselineMlpModel":
        return dataclasses.replace(
            self, regressor=MlpParams.from_arrays(arrays, "regressor", self.regressor.activations)
        )


def init_cf_lstm(
    input_dim: int, policy: TreatmentPolicy, cfg: TrainConfig, rng: np.random.Generator, n_heads: int | None = None
) -> CfLstmModel:
    encoder = LstmParams.init(input_dim, cfg.hidden_size, rng)
    k = policy.n_arms if n_heads is None else n_heads
    heads = tuple(MlpParams.init([cfg.hidden_size, *cfg.head_layers, 1], rng) for _ in range(k))
    return CfLstmModel(encoder, heads, policy, cfg)


def init_baseline_lstm(input_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> BaselineLstmModel:
    encoder = LstmParams.init(input_dim, cfg.hidden_size, rng)
    head = MlpParams.init([cfg.hidden_size, *cfg.head_layers, 1], rng)
    return BaselineLstmModel(encoder, head, cfg)


def init_baseline_mlp(input_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> BaselineMlpModel:
    slots = 5 if cfg.include_counts else 4
    reg = MlpParams.init([slots * input_dim, *cfg.mlp_layers, 1], rng)
    return BaselineMlpModel(reg, cfg)


def _bind(model, trainable: Iterable[str] | None = None):
    """Copy of ``model`` whose (trainable) parameters are Vars, plus those Vars by name."""
    arrays = model.parameters()
    names = set(arrays) if trainable is None else set(trainable)
    pvars = {k: Var(v, name=k) for k, v in arrays.items() if k in names}
    bound = model.with_parameters({k: pvars.get(k, v) for k, v in arrays.items()})
    return bound, pvars


# --------------------------------------------------------------------------
# Losses


def _cf_loss(encoder, heads, seqs, arms, y, ipm_weight, directions, pooling) -> Var:
    phi = encode_batch(seqs, encoder, pooling)
    loss = Var(0.0)
    groups = []
    for k, head in enumerate(heads):
        idx = np.flatnonzero(arms == k)
        groups.append(idx)
        if idx.size == 0:
            continue
        pred = mlp_forward(ad.take(phi, idx), head)
        err = ad.sub(pred, y[idx, None])
        loss = ad.add(loss, ad.mean(ad.square(err)))
    if ipm_weight > 0 and len(heads) > 1:
        phi0 = ad.take(phi, groups[0]) if groups[0].size else None
        for idx in groups[1:]:
            phik = ad.take(phi, idx) if idx.size else None
            loss = ad.add(loss, ad.mul(ipm.ipm_term(phi0, phik, directions), ipm_weight))
    return loss


def _lstm_loss(encoder, head, seqs, y, pooling) -> Var:
    phi = encode_batch(seqs, encoder, pooling)
    err = ad.sub(mlp_forward(phi, head), y[:, None])
    return ad.mean(ad.square(err))


def _mlp_loss(regressor, x, y) -> Var:
    err = ad.sub(mlp_forward(x, regressor), y[:, None])
    return ad.mean(ad.square(err))


def _unpack_batch(batch):
    seqs, arms, ys = [], [], []
    for d, t, r in batch:
        if r is None:
            raise ValueError(f"dialogue {d.id!r} has no rating")
        seqs.append(d.features)
        arms.append(int(t))
        ys.append(float(r))
    return seqs, np.array(arms, dtype=np.int64), np.array(ys)


def cf_lstm_loss(batch, model: CfLstmModel, cfg: TrainConfig, directions=None) -> Var:
    """Composite CF-LSTM loss on ``batch`` of ``(dialogue, arm, rating)`` triples.

    Features are consumed as given, so pass normalized dialogues.  Bind the
    model's parameters to Vars (inside a tape) to differentiate.  Without
    ``directions`` the projection directions are drawn from ``cfg.seed``.
    """
    seqs, arms, y = _unpack_batch(batch)
    if np.any(arms < 0) or np.any(arms >= model.n_arms):
        raise ValueError(f"treatment outside 0..{model.n_arms - 1}")
    if directions is None:
        directions = ipm.random_directions(model.encoder.hidden_dim, cfg.n_proj, np.random.default_rng(cfg.seed))
    return _cf_loss(model.encoder, model.heads, seqs, arms, y, cfg.ipm_weight, directions, cfg.pooling)


def baseline_lstm_loss(batch, model: BaselineLstmModel) -> Var:
    """Mean squared error of the baseline LSTM on ``(dialogue, rating)`` pairs."""
    seqs = [d.features for d, _ in batch]
    y = np.array([float(r) for _, r in batch])
    return _lstm_loss(model.encoder, model.head, seqs, y, model.config.pooling)


# --------------------------------------------------------------------------
# Training


def _make_batches(idx: np.ndarray, lengths: np.ndarray, batch_size: int, rng: np.random.Generator) -> list:
    """Shuffle, sort by length within buckets to limit padding, shuffle batch order."""
    perm = rng.permutation(idx)
    chunk = batch_size * BUCKET_FACTOR
    batches = []
    for s in range(0, len(perm), chunk):
        part = perm[s : s + chunk]
        part = part[np.argsort(lengths[part], kind="stable")]
        batches.extend(part[i : i + batch_size] for i in range(0, len(part), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _split_validation(n: int, cfg: TrainConfig, rng: np.random.Generator):
    idx = np.arange(n)
    if cfg.val_fraction <= 0 or n < 10:
        return idx, np.array([], dtype=np.int64)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * cfg.val_fraction)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _fit(
    model,
    batch_loss: Callable,
    val_mse: Callable | None,
    train_idx: np.ndarray,
    lengths: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    trainable: Sequence[str] | None = None,
    lr: float | None = None,
    epochs: int | None = None,
):
    """Mini-batch Adam with early stopping on ``val_mse``.

    ``batch_loss(bound_model, batch_indices, directions)`` builds the loss.
    Returns the best model, the optimizer state and the loss history.
    """
    lr = cfg.learning_rate if lr is None else lr
    epochs = cfg.epochs if epochs is None else epochs
    H = getattr(getattr(model, "encoder", None), "hidden_dim", None)
    params = model.parameters()
    names = sorted(params) if trainable is None else sorted(trainable)
    state = AdamState()
    best_model, best_val, wait = model, math.inf, 0
    hist = {"train_loss": [], "val_mse": [], "best_epoch": None, "epochs_run": 0}
    for epoch in range(epochs):
        batches = _make_batches(train_idx, lengths, cfg.batch_size, rng)
        total, count = 0.0, 0
        for b in batches:
            directions = ipm.random_directions(H, cfg.n_proj, rng) if H is not None else None
            with GradTape() as tape:
                bound, pvars = _bind(model, names)
                loss = batch_loss(bound, b, directions)
            grads = backward(tape, loss, pvars)
            params, state = optimizer_step(params, grads, state, lr)
            model = model.with_parameters(params)
            total += loss.item() * len(b)
            count += len(b)
        hist["train_loss"].append(total / count)
        hist["epochs_run"] = epoch + 1
        if val_mse is None:
            best_model, hist["best_epoch"] = model, epoch
            continue
        v = val_mse(model)
        hist["val_mse"].append(v)
        if v < best_val:
            best_val, best_model, wait = v, model, 0
            hist["best_epoch"] = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, hist["best_epoch"])
                break
    return best_model, state, hist


def _prepare_training(train: Dataset):
    rated = train.rated()
    if len(rated) == 0:
        raise ValueError("training data has no rated dialogues")
    stats = train.norm_stats if train.norm_stats is not None else zscore_fit(train)
    seqs = [d.features if train.norm_stats is not None else _normalized(d, stats) for d in rated]
    y = np.array([d.rating for d in rated])
    lengths = np.array([len(s) for s in seqs])
    return rated, stats, seqs, y, lengths


def train_cf_lstm(train: Dataset, policy: TreatmentPolicy, cfg: TrainConfig = TrainConfig()) -> CfLstmModel:
    rated, stats, seqs, y, lengths = _prepare_training(train)
    arms = dataset_arms(rated, policy)
    if arms.max() >= policy.n_arms:
        raise ValueError(f"dataset holds arm {arms.max()} but the policy has {policy.n_arms} arms")
    present = np.unique(arms)
    if present.size < 2:
        warnings.warn(f"training data covers only arms {present.tolist()}", PositivityWarning, stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    model = init_cf_lstm(seqs[0].shape[1], policy, cfg, rng)
    model = dataclasses.replace(model, norm_stats=stats)
    train_idx, val_idx = _split_validation(len(seqs), cfg, rng)

    def batch_loss(m, b, directions):
        return _cf_loss(
            m.encoder, m.heads, [seqs[i] for i in b], arms[b], y[b], cfg.ipm_weight, directions, cfg.pooling
        )

    def val_mse(m):
        pred = _predict_arms_arrays(m, [seqs[i] for i in val_idx])
        return float(np.mean((pred[np.arange(len(val_idx)), arms[val_idx]] - y[val_idx]) ** 2))

    model, state, hist = _fit(model, batch_loss, val_mse if len(val_idx) else None, train_idx, lengths, cfg, rng)
    hist["optimizer"] = state
    hist["rng_state"] = rng.bit_generator.state
    return dataclasses.replace(model, history=hist)


def train_baseline_lstm(train: Dataset, cfg: TrainConfig = TrainConfig()) -> BaselineLstmModel:
    rated, stats, seqs, y, lengths = _prepare_training(train)
    rng = np.random.default_rng(cfg.seed)
    model = dataclasses.replace(init_baseline_lstm(seqs[0].shape[1], cfg, rng), norm_stats=stats)
    train_idx, val_idx = _split_validation(len(seqs), cfg, rng)

    def batch_loss(m, b, directions):
        return _lstm_loss(m.encoder, m.head, [seqs[i] for i in b], y[b], cfg.pooling)

    def val_mse(m):
        pred = _predict_lstm_arrays(m, [seqs[i] for i in val_idx])
        return float(np.mean((pred - y[val_idx]) ** 2))

    model, state, hist = _fit(model, batch_loss, val_mse if len(val_idx) else None, train_idx, lengths, cfg, rng)
    hist["optimizer"] = state
    hist["rng_state"] = rng.bit_generator.state
    return dataclasses.replace(model, history=hist)


def _aggregate(seqs: Sequence[np.ndarray], include_counts: bool) -> np.ndarray:
    rows = []
    for x in seqs:
        parts = [x.mean(axis=0), x[0], x[-1], x[-2]]
        if include_counts:
            parts.append(x.sum(axis=0))
        rows.append(np.concatenate(parts))
    return np.stack(rows)


def train_baseline_mlp(train: Dataset, cfg: TrainConfig = TrainConfig()) -> BaselineMlpModel:
    rated, stats, seqs, y, lengths = _prepare_training(train)
    X = _aggregate(seqs, cfg.include_counts)
    rng = np.random.default_rng(cfg.seed)
    model = dataclasses.replace(init_baseline_mlp(seqs[0].shape[1], cfg, rng), norm_stats=stats)
    train_idx, val_idx = _split_validation(len(seqs), cfg, rng)

    def batch_loss(m, b, directions):
        return _mlp_loss(m.regressor, X[b], y[b])

    def val_mse(m):
        pred = mlp_forward(X[val_idx], m.regressor).value[:, 0]
        return float(np.mean((pred - y[val_idx]) ** 2))

    # no sequences to pad: equal lengths keep the bucketing a plain shuffle
    model, state, hist = _fit(
        model, batch_loss, val_mse if len(val_idx) else None, train_idx, np.zeros(len(y)), cfg, rng
    )
    hist["optimizer"] = state
    hist["rng_state"] = rng.bit_generator.state
    return dataclasses.replace(model, history=hist)


def extend_treatments(
    model: CfLstmModel,
    k_new: int,
    fresh_data: Dataset,
    cfg: TrainConfig,
    policy: TreatmentPolicy,
    finetune: bool = True,
) -> CfLstmModel:
    """Add ``k_new`` heads for new arms and adapt the model to ``fresh_data``.

    Phase one trains only the new heads with everything else frozen; phase
    two (``finetune``) trains all parameters at ``finetune_lr_scale`` times
    the learning rate.  ``policy`` must define exactly ``K + k_new`` arms.
    """
    if k_new < 0:
        raise ValueError("k_new must be >= 0")
    if k_new == 0:
        return model
    K = model.n_arms
    if policy.n_arms != K + k_new:
        raise ValueError(f"policy defines {policy.n_arms} arms, expected {K + k_new}")
    rated = fresh_data.rated()
    if len(rated) == 0:
        raise ValueError("fresh data has no rated dialogues")
    seqs = model_inputs(model, rated)
    arms = dataset_arms(rated, policy)
    missing = sorted(set(range(K, K + k_new)) - set(arms.tolist()))
    if missing:
        raise ValueError(f"fresh data has no examples of new arms {missing}")
    y = np.array([d.rating for d in rated])
    lengths = np.array([len(s) for s in seqs])
    rng = np.random.default_rng(cfg.seed)
    H = model.encoder.hidden_dim
    new_heads = tuple(MlpParams.init([H, *cfg.head_layers, 1], rng) for _ in range(k_new))
    grown = dataclasses.replace(model, heads=model.heads + new_heads, policy=policy, history={})
    train_idx, val_idx = _split_validation(len(seqs), cfg, rng)

    def batch_loss(m, b, directions):
        return _cf_loss(
            m.encoder, m.heads, [seqs[i] for i in b], arms[b], y[b], cfg.ipm_weight, directions, cfg.pooling
        )

    def val_mse(m):
        pred = _predict_arms_arrays(m, [seqs[i] for i in val_idx])
        return float(np.mean((pred[np.arange(len(val_idx)), arms[val_idx]] - y[val_idx]) ** 2))

    val = val_mse if len(val_idx) else None
    new_names = [n for k in range(K, K + k_new) for n in new_heads[k - K].arrays(f"heads.{k}")]
    grown, state, hist1 = _fit(grown, batch_loss, val, train_idx, lengths, cfg, rng, trainable=new_names)
    history = {"phase1": hist1}
    if finetune:
        grown, state, hist2 = _fit(
            grown, batch_loss, val, train_idx, lengths, cfg, rng, lr=cfg.learning_rate * cfg.finetune_lr_scale
        )
        history["phase2"] = hist2
    history["optimizer"] = state
    history["rng_state"] = rng.bit_generator.state
    return dataclasses.replace(grown, history=history)


# --------------------------------------------------------------------------
# Prediction


def _chunks_by_length(seqs: Sequence[np.ndarray]):
    order = np.argsort([len(s) for s in seqs], kind="stable")
    for s in range(0, len(order), PREDICT_CHUNK):
        yield order[s : s + PREDICT_CHUNK]


def _encode_all(encoder: LstmParams, seqs: Sequence[np.ndarray], pooling: str) -> np.ndarray:
    out = np.zeros((len(seqs), encoder.hidden_dim))
    for idx in _chunks_by_length(seqs):
        out[idx] = encode_batch([seqs[i] for i in idx], encoder, pooling).value
    return out


def _predict_arms_arrays(model: CfLstmModel, seqs) -> np.ndarray:
    if not len(seqs):
        return np.zeros((0, model.n_arms))
    phi = _encode_all(model.encoder, seqs, model.config.pooling)
    return np.stack([mlp_forward(phi, h).value[:, 0] for h in model.heads], axis=1)


def _predict_lstm_arrays(model: BaselineLstmModel, seqs) -> np.ndarray:
    if not len(seqs):
        return np.zeros(0)
    phi = _encode_all(model.encoder, seqs, model.config.pooling)
    return mlp_forward(phi, model.head).value[:, 0]


def representations(model, data) -> np.ndarray:
    """Encoder output for every dialogue, ``(n, H)``."""
    return _encode_all(model.encoder, model_inputs(model, data), model.config.pooling)


def predict_arms(model: CfLstmModel, data) -> np.ndarray:
    """Raw head outputs for every dialogue and every arm, ``(n, K)``."""
    return _predict_arms_arrays(model, model_inputs(model, data))


def predict_raw(model, data, arms=None) -> np.ndarray:
    """Raw predictions for a batch of dialogues.

    For CF-LSTM ``arms`` selects the head per dialogue and is required;
    baselines ignore it.
    """
    seqs = model_inputs(model, data)
    if isinstance(model, CfLstmModel):
        if arms is None:
            raise ValueError("CF-LSTM predictions need an arm per dialogue")
        arms = np.asarray(arms, dtype=np.int64)
        if np.any(arms < 0) or np.any(arms >= model.n_arms):
            raise ValueError(f"arm outside 0..{model.n_arms - 1}")
        out = _predict_arms_arrays(model, seqs)
        return out[np.arange(len(seqs)), arms]
    if isinstance(model, BaselineLstmModel):
        return _predict_lstm_arrays(model, seqs)
    if isinstance(model, BaselineMlpModel):
        if not seqs:
            return np.zeros(0)
        return mlp_forward(_aggregate(seqs, model.config.include_counts), model.regressor).value[:, 0]
    raise TypeError(f"unsupported model {type(model).__name__}")


def predict(model: CfLstmModel, d: Dialogue, arm: int, raw: bool = False) -> float:
    """Rating estimate of head ``arm``, clamped to [1, 5] unless ``raw``.

    The factual arm gives the factual estimate, any other the counterfactual.
    """
    if not 0 <= arm < model.n_arms:
        raise ValueError(f"arm {arm} outside 0..{model.n_arms - 1}")
    value = float(predict_raw(model, [d], [arm])[0])
    return value if raw else float(np.clip(value, RATING_MIN, RATING_MAX))


# --------------------------------------------------------------------------
# Rating classes


def classify(rating, scheme: str = "binary"):
    """Binary: 0 below 3, else 1.  Five-class: round half up, clamped to 1..5."""
    r = np.asarray(rating, dtype=np.float64)
    if scheme == "binary":
        out = (r >= 3.0).astype(np.int64)
    elif scheme == "five_class":
        out = np.clip(np.floor(r + 0.5), 1, 5).astype(np.int64)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return int(out) if out.ndim == 0 else out
