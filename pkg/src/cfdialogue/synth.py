"""Synthetic dialogues with known potential outcomes.

Generative story, per dialogue ``i`` on calendar day ``d``:

* latent quality ``q_i = day_effect[d] + N(0, 1 - day_std**2)`` (unit variance
  overall), and a latent moderator ``u_i ~ N(0, 1)``;
* treated with probability ``sigmoid(a - confounding * q_i)``, the intercept
  ``a`` solved so the marginal treated fraction is exactly the configured one
  (so low-quality dialogues are treated more often, yet every propensity lies
  strictly inside (0, 1));
* turn features: sentiment valence/satisfaction and the first four FED
  scores load on ``q``; activation and the last four FED scores load on ``u``;
  the rest is noise.  Treated dialogues contain at least one problem-signal
  ODES turn of their arm; all other turns are ODES "other";
* outcomes, from turn-averaged features ``s`` (mean sentiment valence and
  satisfaction), ``e`` (mean of the first four FED scores) and ``v`` (mean of
  activation and the last four FED scores)::

      f(X)   = 3.6 + sentiment_weight * s + fed_weight * e
      additive:       Y(0) = f(X),                      Y(k) = f(X) + effect_k
      heterogeneous:  Y(0) = f(X) - heterogeneity * v,  Y(k) = f(X) + effect_k + heterogeneity * v
      rating = clamp(Y(T) + N(0, noise**2), 1, 5)

In the heterogeneous case ``v`` moves the two arms in opposite directions, so
a single regression head sees its effect cancel while per-arm heads see it
plainly.  ``v`` has mean zero, so the population ATE stays at ``effect_1``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .data import (
    FED_SLICE,
    FEATURE_DIM,
    N_ODES,
    RATING_MAX,
    RATING_MIN,
    SENTIMENT_SLICE,
    Dataset,
    Dialogue,
)
from .treatment import TreatmentPolicy, default_policy

# Observed utterance counts of categories 1..13 in a large rated corpus, used as sampling weights.
PROBLEM_CATEGORY_COUNTS = {
    1: 10938, 2: 12290, 3: 12399, 4: 21278, 5: 66532, 6: 4389, 7: 26779,
    8: 78504, 9: 12173, 10: 57539, 11: 15052, 12: 3147, 13: 12534,
}

F_INTERCEPT = 3.6
DEFAULT_EFFECT = -0.7809


@dataclass(frozen=True)
class SynthConfig:
    n_dialogues: int = 5000
    min_turns: int = 3
    max_turns: int = 230
    mean_turns: float = 20.0
    arm_fractions: tuple[float, ...] = (0.3,)
    effects: tuple[float, ...] = (DEFAULT_EFFECT,)
    effect_kind: str = "additive"
    heterogeneity: float = 0.5
    sentiment_weight: float = 0.7
    fed_weight: float = 0.7
    noise: float = 0.6
    confounding: float = 0.5
    turn_noise: float = 0.4
    problem_turn_rate: float = 0.05
    start_date: str = "2021-01-01"
    n_days: int = 90
    day_std: float = 0.6
    day_persistence: float = 0.9
    seed: int = 0
    policy: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "arm_fractions", tuple(float(x) for x in self.arm_fractions))
        object.__setattr__(self, "effects", tuple(float(x) for x in self.effects))
        if self.n_dialogues < 1:
            raise ValueError("n_dialogues must be >= 1")
        if self.min_turns < 3 or self.max_turns < self.min_turns:
            raise ValueError("turn range must satisfy 3 <= min_turns <= max_turns")
        if self.mean_turns < self.min_turns:
            raise ValueError("mean_turns must be >= min_turns")
        if len(self.arm_fractions) != len(self.effects) or not self.effects:
            raise ValueError("need one fraction and one effect per treated arm")
        total = sum(self.arm_fractions)
        if any(p <= 0 for p in self.arm_fractions) or not 0.0 < total < 1.0:
            raise ValueError("treated fractions must be positive and sum to less than 1 (positivity)")
        if self.effect_kind not in ("additive", "heterogeneous"):
            raise ValueError(f"unknown effect_kind {self.effect_kind!r}")
        if self.noise < 0 or self.turn_noise < 0 or self.confounding < 0:
            raise ValueError("noise levels and confounding must be >= 0")
        if not 0.0 <= self.day_std < 1.0:
            raise ValueError("day_std must lie in [0, 1)")
        if not 0.0 <= self.day_persistence < 1.0:
            raise ValueError("day_persistence must lie in [0, 1)")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        dt.date.fromisoformat(self.start_date)
        pol = self.treatment_policy()
        if pol.n_arms != len(self.effects) + 1:
            raise ValueError(f"policy has {pol.n_arms} arms but {len(self.effects)} effects were given")
        if 14 not in pol.categories_for(0):
            raise ValueError("category 14 must map to arm 0")

    def treatment_policy(self) -> TreatmentPolicy:
        return default_policy() if self.policy is None else TreatmentPolicy.from_json(self.policy)

    @property
    def n_arms(self) -> int:
        return len(self.effects) + 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["arm_fractions"] = list(self.arm_fractions)
        d["effects"] = list(self.effects)
        return d


@dataclass(frozen=True)
class GroundTruth:
    """Per-dialogue potential outcomes; row order matches the dataset."""

    ids: tuple[str, ...]
    arms: np.ndarray  # (n,)
    outcomes_raw: np.ndarray  # (n, K) before clamping, noise-free
    outcomes: np.ndarray  # (n, K) clamped to [1, 5], noise-free
    propensity: np.ndarray  # (n,) probability of being treated at all
    ate: float  # mean Y(1) - Y(0) before clamping
    ate_clamped: float
    clamp_fraction: float
    config: dict = field(default_factory=dict)

    @property
    def target_ate(self) -> float:
        """The ATE a test should compare against: pre-clamp unless clamping bit."""
        return self.ate if self.clamp_fraction == 0.0 else self.ate_clamped

    def to_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "arms": self.arms.tolist(),
            "outcomes_raw": self.outcomes_raw.tolist(),
            "outcomes": self.outcomes.tolist(),
            "propensity": self.propensity.tolist(),
            "ate": self.ate,
            "ate_clamped": self.ate_clamped,
            "clamp_fraction": self.clamp_fraction,
            "target_ate": self.target_ate,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            ids=tuple(d["ids"]),
            arms=np.asarray(d["arms"], dtype=np.int64),
            outcomes_raw=np.asarray(d["outcomes_raw"], dtype=float),
            outcomes=np.asarray(d["outcomes"], dtype=float),
            propensity=np.asarray(d["propensity"], dtype=float),
            ate=float(d["ate"]),
            ate_clamped=float(d["ate_clamped"]),
            clamp_fraction=float(d["clamp_fraction"]),
            config=d.get("config", {}),
        )

    def subset(self, ids) -> "GroundTruth":
        pos = {k: i for i, k in enumerate(self.ids)}
        idx = np.array([pos[k] for k in ids], dtype=np.int64)
        raw = self.outcomes_raw[idx]
        cl = self.outcomes[idx]
        return dataclasses.replace(
            self,
            ids=tuple(ids),
            arms=self.arms[idx],
            outcomes_raw=raw,
            outcomes=cl,
            propensity=self.propensity[idx],
            ate=float(np.mean(raw[:, 1] - raw[:, 0])),
            ate_clamped=float(np.mean(cl[:, 1] - cl[:, 0])),
            clamp_fraction=float(np.mean(np.any(raw != cl, axis=1))),
        )


def _treated_intercept(p: float, confounding: float) -> float:
    """Solve E[sigmoid(a - c Z)] = p for Z ~ N(0, 1) by Gauss-Hermite quadrature."""
    if confounding == 0:
        return float(special.logit(p))
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    weights = weights / weights.sum()

    def gap(a):
        return float(np.sum(weights * special.expit(a - confounding * nodes))) - p

    return float(optimize.brentq(gap, -50.0, 50.0, xtol=1e-14))


def _day_effects(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    rho = cfg.day_persistence
    e = np.empty(cfg.n_days)
    e[0] = rng.standard_normal()
    for t in range(1, cfg.n_days):
        e[t] = rho * e[t - 1] + np.sqrt(1.0 - rho * rho) * rng.standard_normal()
    return cfg.day_std * e


def _sample_length(cfg: SynthConfig, rng: np.random.Generator) -> int:
    extra = cfg.mean_turns - cfg.min_turns
    if extra <= 0:
        return cfg.min_turns
    n = cfg.min_turns - 1 + rng.geometric(1.0 / (extra + 1.0))
    return int(min(n, cfg.max_turns))


def _weights(categories: list[int]) -> np.ndarray:
    w = np.array([PROBLEM_CATEGORY_COUNTS.get(c, 1) for c in categories], dtype=float)
    return w / w.sum()


def _sample_odes(n: int, arm: int, policy: TreatmentPolicy, cfg: SynthConfig, rng) -> np.ndarray:
    odes = np.full(n, 14, dtype=np.int64)
    if arm == 0:
        return odes
    k = 1 + rng.binomial(n - 1, cfg.problem_turn_rate)
    pos = rng.choice(n, size=k, replace=False)
    top = policy.categories_for(arm)
    odes[pos[0]] = rng.choice(top, p=_weights(top))
    lower = [c for a in range(1, arm + 1) for c in policy.categories_for(a)]
    if k > 1:
        odes[pos[1:]] = rng.choice(lower, size=k - 1, p=_weights(lower))
    return odes


def _turn_features(odes: np.ndarray, q: float, u: float, cfg: SynthConfig, rng) -> np.ndarray:
    n = len(odes)
    s = cfg.turn_noise
    x = np.zeros((n, FEATURE_DIM))
    x[np.arange(n), odes - 1] = 1.0
    e = rng.standard_normal((n, FEATURE_DIM - N_ODES))
    x[:, 14] = 0.8 * q + s * e[:, 0]  # valence
    x[:, 15] = 0.6 * q + s * e[:, 1]  # satisfaction
    x[:, 16] = 0.8 * u + s * e[:, 2]  # activation
    x[:, 17] = special.expit(2.0 + 0.5 * e[:, 3])  # ASR confidence
    x[:, 18:22] = 0.7 * q + s * e[:, 4:8]
    x[:, 22:26] = 0.7 * u + s * e[:, 8:12]
    x[:, 26] = 0.3 * q + e[:, 12]
    x[:, 27:30] = e[:, 13:16]
    return x


def outcome_components(features: np.ndarray, cfg: SynthConfig = SynthConfig()) -> tuple[float, float]:
    """``(f(X), v(X))`` for one dialogue's raw ``(n, 30)`` features."""
    m = features.mean(axis=0)
    s = m[SENTIMENT_SLICE][:2].mean()
    fed = m[FED_SLICE]
    f = F_INTERCEPT + cfg.sentiment_weight * s + cfg.fed_weight * fed[:4].mean()
    v = (m[16] + fed[4:].sum()) / 5.0
    return float(f), float(v)


def potential_outcomes(f: float, v: float, cfg: SynthConfig) -> np.ndarray:
    """Noise-free, unclamped ``Y(0..K-1)``."""
    effects = np.array((0.0,) + cfg.effects)
    if cfg.effect_kind == "heterogeneous":
        h = cfg.heterogeneity * v
        return np.concatenate([[f - h], f + effects[1:] + h])
    return f + effects


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[Dataset, GroundTruth]:
    policy = cfg.treatment_policy()
    rng = np.random.default_rng(cfg.seed)
    start = dt.date.fromisoformat(cfg.start_date)
    days = _day_effects(cfg, rng)
    p_treated = sum(cfg.arm_fractions)
    a = _treated_intercept(p_treated, cfg.confounding)
    within = np.array(cfg.arm_fractions) / p_treated
    effects = np.array((0.0,) + cfg.effects)
    ind_std = np.sqrt(1.0 - cfg.day_std**2)

    dialogues, arms, raw, props = [], [], [], []
    width = max(6, len(str(cfg.n_dialogues - 1)))
    for i in range(cfg.n_dialogues):
        day = int(rng.integers(cfg.n_days))
        q = days[day] + ind_std * rng.standard_normal()
        u = rng.standard_normal()
        prop = float(special.expit(a - cfg.confounding * q))
        arm = 0
        if rng.random() < prop:
            arm = 1 + int(rng.choice(len(within), p=within))
        n = _sample_length(cfg, rng)
        odes = _sample_odes(n, arm, policy, cfg, rng)
        feats = _turn_features(odes, q, u, cfg, rng)
        y = potential_outcomes(*outcome_components(feats, cfg), cfg)
        noise = cfg.noise * rng.standard_normal() if cfg.noise > 0 else 0.0
        rating = float(np.clip(y[arm] + noise, RATING_MIN, RATING_MAX))
        dialogues.append(
            Dialogue(
                id=f"syn-{i:0{width}d}",
                date=start + dt.timedelta(days=day),
                odes=odes,
                features=feats,
                rating=rating,
            )
        )
        arms.append(arm)
        raw.append(y)
        props.append(prop)

    raw = np.array(raw)
    clamped = np.clip(raw, RATING_MIN, RATING_MAX)
    if cfg.effect_kind == "additive":
        ate = float(effects[1])  # exact by construction
    else:
        ate = float(np.mean(raw[:, 1] - raw[:, 0]))
    truth = GroundTruth(
        ids=tuple(d.id for d in dialogues),
        arms=np.array(arms, dtype=np.int64),
        outcomes_raw=raw,
        outcomes=clamped,
        propensity=np.array(props),
        ate=ate,
        ate_clamped=float(np.mean(clamped[:, 1] - clamped[:, 0])),
        clamp_fraction=float(np.mean(np.any(raw != clamped, axis=1))),
        config=cfg.to_dict(),
    )
    return Dataset(dialogues), truth


def truth_path(dataset_path: str | Path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".truth.json")


def save_truth(truth: GroundTruth, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_truth(path: str | Path) -> GroundTruth:
    with Path(path).open(encoding="utf-8") as fh:
        return GroundTruth.from_dict(json.load(fh))


def oracle_metrics(model, truth: GroundTruth, data: Dataset) -> dict:
    """Compare a CF-LSTM's counterfactual predictions with the true outcomes.

    ``data`` must hold the dialogues listed in ``truth`` (any order, any subset).
    """
    from .models import predict_arms

    sub = truth.subset(data.ids)
    pred = predict_arms(model, data)
    n = len(data)
    K = min(pred.shape[1], sub.outcomes.shape[1])
    model_ate = float(np.mean(pred[:, 1] - pred[:, 0]))
    cf_arm = 1 - np.minimum(sub.arms, 1)
    cf_true = sub.outcomes[np.arange(n), cf_arm]
    cf_pred = np.clip(pred[np.arange(n), cf_arm], RATING_MIN, RATING_MAX)
    per_arm = {}
    for k in range(1, K):
        per_arm[k] = {
            "model": float(np.mean(pred[:, k] - pred[:, 0])),
            "true": float(np.mean(sub.outcomes_raw[:, k] - sub.outcomes_raw[:, 0])),
        }
    return {
        "ate_model": model_ate,
        "ate_true": sub.target_ate,
        "ate_error": abs(model_ate - sub.target_ate),
        "counterfactual_rmse": float(np.sqrt(np.mean((cf_pred - cf_true) ** 2))),
        "arm_effects": per_arm,
    }
