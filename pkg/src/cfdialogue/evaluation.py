"""Correlation, aggregation, treatment-effect and accuracy measurements."""

from __future__ import annotations

import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import RATING_MAX, RATING_MIN, Dataset
from .models import CfLstmModel, classify, predict_arms, predict_raw
from .treatment import TreatmentPolicy, dataset_arms

ROLLING_WINDOW_DAYS = 7


class PearsonError(ValueError):
    """Base class for undefined correlations."""


class LengthMismatchError(PearsonError):
    pass


class TooShortError(PearsonError):
    pass


class ZeroVarianceError(PearsonError):
    pass


def pearson(x, y) -> float:
    """Sample Pearson correlation, clipped into [-1, 1] against rounding."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooShortError(f"need at least 2 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        which = "first" if sx == 0.0 else "second"
        raise ZeroVarianceError(f"{which} series has zero variance")
    return float(np.clip(np.dot(dx, dy) / (sx * sy), -1.0, 1.0))


def daily_average(preds: Iterable[tuple[dt.date, float]]) -> list[tuple[dt.date, float]]:
    """Mean value per date, in ascending date order."""
    groups: dict[dt.date, list[float]] = defaultdict(list)
    for date, value in preds:
        groups[date].append(float(value))
    if not groups:
        raise ValueError("daily_average needs at least one value")
    return [(d, float(np.mean(groups[d]))) for d in sorted(groups)]


def rolling_7day(series: Sequence[tuple[dt.date, float]]) -> list[tuple[dt.date, float]]:
    """Mean over the dates present in the 7 calendar days ending at each date."""
    dates = [d for d, _ in series]
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise ValueError(f"dates must be strictly increasing, got {a} then {b}")
    values = np.array([v for _, v in series], dtype=np.float64)
    out = []
    lo = 0
    for i, d in enumerate(dates):
        while (d - dates[lo]).days >= ROLLING_WINDOW_DAYS:
            lo += 1
        out.append((d, float(values[lo : i + 1].mean())))
    return out


@dataclass
class EvalReport:
    pearson_individual: float | None
    pearson_l1d: float | None
    pearson_l7d: float | None
    ate: float | None
    mse_factual_counterfactual: float | None
    accuracy_binary: float
    accuracy_5class: float
    n_dialogues: int
    n_days: int
    notes: list[str] = field(default_factory=list)

    KEYS = (
        "pearson_individual",
        "pearson_l1d",
        "pearson_l7d",
        "ate",
        "mse_factual_counterfactual",
        "accuracy_binary",
        "accuracy_5class",
        "n_dialogues",
        "n_days",
    )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.KEYS}
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{k: d[k] for k in cls.KEYS}, notes=list(d.get("notes", [])))

    def table(self) -> str:
        """Fixed-order plain-text summary: correlations, then accuracies."""
        cols = [
            ("Individual", self.pearson_individual),
            ("L1d", self.pearson_l1d),
            ("L7d", self.pearson_l7d),
            ("Binary", self.accuracy_binary),
            ("5-class", self.accuracy_5class),
            ("ATE", self.ate),
            ("MSE(Y1,Y0)", self.mse_factual_counterfactual),
        ]
        head = " ".join(f"{name:>11}" for name, _ in cols)
        row = " ".join(f"{'n/a':>11}" if v is None else f"{v:>11.4f}" for _, v in cols)
        return head + "\n" + row


def _require_binary(model: CfLstmModel, what: str) -> None:
    if not isinstance(model, CfLstmModel):
        raise TypeError(f"{what} needs a CF-LSTM model, got {type(model).__name__}")
    if model.n_arms != 2:
        raise ValueError(f"{what} is defined for 2 arms, model has {model.n_arms}; use arm_effects")


def arm_effects(model: CfLstmModel, ds: Dataset) -> dict[int, float]:
    """Mean raw head difference of every arm against arm 0."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    pred = predict_arms(model, ds)
    return {k: float(np.mean(pred[:, k] - pred[:, 0])) for k in range(1, model.n_arms)}


def ate(model: CfLstmModel, ds: Dataset) -> float:
    """Average of head 1 minus head 0 over every dialogue (raw outputs)."""
    _require_binary(model, "ate")
    return arm_effects(model, ds)[1]


def mse_factual_counterfactual(model: CfLstmModel, ds: Dataset) -> float:
    """Mean squared gap between the two heads' raw outputs."""
    _require_binary(model, "mse_factual_counterfactual")
    if len(ds) == 0:
        raise ValueError("empty dataset")
    pred = predict_arms(model, ds)
    return float(np.mean((pred[:, 1] - pred[:, 0]) ** 2))


def invert_treatments(ds: Dataset, policy: TreatmentPolicy) -> Dataset:
    """Swap arms 0 and 1 on every dialogue through the explicit treatment field."""
    if policy.n_arms > 2:
        raise ValueError(f"inversion is defined for binary treatments, policy has {policy.n_arms} arms")
    arms = dataset_arms(ds, policy)
    if np.any(arms > 1):
        raise ValueError("inversion is defined for binary treatments only")
    flipped = []
    for d, arm in zip(ds, arms):
        new = 1 - int(arm)
        # an override equal to the policy's own arm is dropped, so invert twice is the identity
        natural = int(policy.turn_arms(d.odes).max())
        flipped.append(d.replace(treatment=None if new == natural else new))
    return ds.with_dialogues(flipped)


def _safe_pearson(x, y, label: str, notes: list[str]) -> float | None:
    try:
        return pearson(x, y)
    except PearsonError as exc:
        notes.append(f"{label}: {exc}")
        return None


def evaluate(model, test: Dataset, policy: TreatmentPolicy, invert: bool = False) -> EvalReport:
    """Factual-prediction report on the rated part of ``test``."""
    data = test.rated()
    if len(data) == 0:
        raise ValueError("evaluation needs rated dialogues")
    if invert:
        data = invert_treatments(data, policy)
    notes: list[str] = []
    truth = np.array([d.rating for d in data])
    dates = [d.date for d in data]
    if isinstance(model, CfLstmModel):
        arms = dataset_arms(data, policy)
        if np.any(arms >= model.n_arms):
            raise ValueError(f"dataset uses arm {int(arms.max())}, model has {model.n_arms} heads")
        raw = predict_raw(model, data, arms)
    else:
        raw = predict_raw(model, data)
    pred = np.clip(raw, RATING_MIN, RATING_MAX)

    p_ind = _safe_pearson(pred, truth, "pearson_individual", notes)
    l1d_pred = daily_average(zip(dates, pred))
    l1d_true = daily_average(zip(dates, truth))
    p_l1d = _safe_pearson([v for _, v in l1d_pred], [v for _, v in l1d_true], "pearson_l1d", notes)
    l7d_pred = rolling_7day(l1d_pred)
    l7d_true = rolling_7day(l1d_true)
    p_l7d = _safe_pearson([v for _, v in l7d_pred], [v for _, v in l7d_true], "pearson_l7d", notes)

    ate_value = mse_value = None
    if isinstance(model, CfLstmModel) and model.n_arms == 2:
        both = predict_arms(model, data)
        gap = both[:, 1] - both[:, 0]
        ate_value = float(np.mean(gap))
        mse_value = float(np.mean(gap**2))
    elif isinstance(model, CfLstmModel):
        notes.append(f"ate: model has {model.n_arms} arms; see per-arm effects")
    else:
        notes.append("ate: baseline models have no counterfactual heads")

    return EvalReport(
        pearson_individual=p_ind,
        pearson_l1d=p_l1d,
        pearson_l7d=p_l7d,
        ate=ate_value,
        mse_factual_counterfactual=mse_value,
        accuracy_binary=float(np.mean(classify(pred, "binary") == classify(truth, "binary"))),
        accuracy_5class=float(np.mean(classify(pred, "five_class") == classify(truth, "five_class"))),
        n_dialogues=len(data),
        n_days=len(l1d_true),
        notes=notes,
    )
