"""Dialogues, turn features, dataset files and Z-score normalization.

Every turn pair carries a 30-dimensional numeric vector whose layout is fixed
by ``FEATURE_NAMES`` (see ``docs/feature_schema.md``).  The ODES category of
the turn is stored separately as an integer code and is never normalized.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

MIN_TURNS = 3
RATING_MIN = 1.0
RATING_MAX = 5.0
STD_FLOOR = 1e-6


class OdesCategory(enum.IntEnum):
    USER_DISINTEREST = 1
    USER_CRITIQUE = 2
    USER_NOT_UNDERSTAND = 3
    USER_REQUESTS_TOPIC_SWITCH = 4
    USER_OBSCENITY = 5
    USER_REJECTS_TOPIC_SWITCH = 6
    USER_REQUESTS_REPEAT = 7
    USER_REQUESTS_STOP = 8
    USER_INSULT = 9
    USER_COMPLIMENT = 10
    USER_CALLS_OUT_REPETITION = 11
    USER_CALLS_OUT_CONTRADICTION = 12
    SYSTEM_NOT_UNDERSTAND = 13
    OTHER = 14


N_ODES = len(OdesCategory)

SENTIMENT_NAMES = ("sentiment_valence", "sentiment_satisfaction", "sentiment_activation")
FED_NAMES = (
    "fed_interestingness",
    "fed_engagingness",
    "fed_specificity",
    "fed_relevance",
    "fed_correctness",
    "fed_semantic_appropriateness",
    "fed_understandability",
    "fed_fluency",
)
FEATURE_NAMES: tuple[str, ...] = (
    tuple(f"odes_{c.value:02d}_{c.name.lower()}" for c in OdesCategory)
    + SENTIMENT_NAMES
    + ("asr_confidence",)
    + FED_NAMES
    + ("dialogpt_relevance", "dialogrpt_width", "dialogrpt_depth", "mean_norm_idf")
)
FEATURE_DIM = len(FEATURE_NAMES)

# Column slices into the flattened vector.
ODES_SLICE = slice(0, 14)
SENTIMENT_SLICE = slice(14, 17)
ASR_INDEX = 17
FED_SLICE = slice(18, 26)
DIALOGPT_INDEX = 26
DIALOGRPT_SLICE = slice(27, 29)
MEAN_NORM_IDF_INDEX = 29

assert FEATURE_DIM == 30


class DataValidationError(ValueError):
    """A record violates a dataset invariant."""


class DatasetParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def odes_onehot(code: int) -> np.ndarray:
    v = np.zeros(N_ODES)
    v[int(code) - 1] = 1.0
    return v


@dataclass(frozen=True)
class TurnFeatures:
    """One turn pair: ODES label plus its flattened 30-d numeric vector."""

    odes: OdesCategory
    vector: np.ndarray

    @classmethod
    def from_parts(
        cls,
        odes: int,
        sentiment: Sequence[float],
        asr_confidence: float,
        fed: Sequence[float],
        dialogpt_relevance: float,
        dialogrpt: Sequence[float],
        mean_norm_idf: float,
    ) -> "TurnFeatures":
        vec = np.concatenate(
            [
                odes_onehot(odes),
                np.asarray(sentiment, dtype=float).reshape(3),
                [asr_confidence],
                np.asarray(fed, dtype=float).reshape(8),
                [dialogpt_relevance],
                np.asarray(dialogrpt, dtype=float).reshape(2),
                [mean_norm_idf],
            ]
        )
        return cls(OdesCategory(odes), vec)

    @property
    def odes_onehot(self) -> np.ndarray:
        return self.vector[ODES_SLICE]

    @property
    def sentiment(self) -> np.ndarray:
        return self.vector[SENTIMENT_SLICE]

    @property
    def asr_confidence(self) -> float:
        return float(self.vector[ASR_INDEX])

    @property
    def fed(self) -> np.ndarray:
        return self.vector[FED_SLICE]

    @property
    def dialogpt_relevance(self) -> float:
        return float(self.vector[DIALOGPT_INDEX])

    @property
    def dialogrpt(self) -> np.ndarray:
        return self.vector[DIALOGRPT_SLICE]

    @property
    def mean_norm_idf(self) -> float:
        return float(self.vector[MEAN_NORM_IDF_INDEX])


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dialogue:
    """An ordered sequence of turn pairs.

    ``odes`` holds one category code per turn and ``features`` the ``(n, 30)``
    numeric matrix.  ``treatment`` is normally ``None`` (derived from the ODES
    labels through a policy); it is set explicitly only for datasets whose
    assignment was overridden, e.g. by ``invert_treatments``.
    """

    id: str
    date: dt.date
    odes: np.ndarray
    features: np.ndarray
    rating: float | None = None
    treatment: int | None = None
    augmented: bool = False
    text: object = None

    def __post_init__(self):
        object.__setattr__(self, "odes", _frozen(self.odes, np.int64))
        object.__setattr__(self, "features", _frozen(self.features, np.float64))
        if self.features.ndim != 2 or self.features.shape[0] != self.odes.shape[0]:
            raise DataValidationError(
                f"dialogue {self.id!r}: features shape {self.features.shape} "
                f"does not match {self.odes.shape[0]} ODES labels"
            )
        if len(self.odes) < MIN_TURNS:
            raise DataValidationError(
                f"dialogue {self.id!r} has {len(self.odes)} turns; "
                f"at least {MIN_TURNS} turn pairs are required"
            )
        if np.any((self.odes < 1) | (self.odes > N_ODES)):
            raise DataValidationError(f"dialogue {self.id!r}: ODES code outside 1..{N_ODES}")
        if self.rating is not None:
            r = float(self.rating)
            if not (RATING_MIN <= r <= RATING_MAX):
                raise DataValidationError(
                    f"dialogue {self.id!r}: rating {r} outside [{RATING_MIN}, {RATING_MAX}]"
                )
            object.__setattr__(self, "rating", r)

    def __len__(self) -> int:
        return len(self.odes)

    @property
    def n_turns(self) -> int:
        return len(self.odes)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def turns(self) -> list[TurnFeatures]:
        return [TurnFeatures(OdesCategory(int(c)), v) for c, v in zip(self.odes, self.features)]

    def replace(self, **changes) -> "Dialogue":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_turns(cls, id: str, date: dt.date, turns: Sequence[TurnFeatures], **kw) -> "Dialogue":
        odes = [int(t.odes) for t in turns]
        feats = np.stack([np.asarray(t.vector, dtype=float) for t in turns]) if turns else np.zeros((0, FEATURE_DIM))
        return cls(id=id, date=date, odes=odes, features=feats, **kw)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean, np.float64))
        object.__setattr__(self, "std", _frozen(self.std, np.float64))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be vectors of equal length")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __eq__(self, other):
        if not isinstance(other, NormStats):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of dialogues.

    ``norm_stats`` is set when the features have already been Z-scored with
    those statistics.
    """

    dialogues: tuple[Dialogue, ...] = ()
    norm_stats: NormStats | None = None

    def __post_init__(self):
        object.__setattr__(self, "dialogues", tuple(self.dialogues))
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise DataValidationError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self) -> Iterator[Dialogue]:
        return iter(self.dialogues)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.dialogues[i], self.norm_stats)
        return self.dialogues[i]

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.dialogues]

    def rated(self) -> "Dataset":
        return Dataset([d for d in self.dialogues if d.rating is not None], self.norm_stats)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.dialogues[i] for i in indices], self.norm_stats)

    def with_dialogues(self, dialogues: Iterable[Dialogue]) -> "Dataset":
        return Dataset(tuple(dialogues), self.norm_stats)


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_test = int(round(len(ds) * test_fraction))
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


# --------------------------------------------------------------------------
# File IO


def _parse_record(obj: dict, line_no: int) -> Dialogue:
    if not isinstance(obj, dict):
        raise DatasetParseError(line_no, "record is not a JSON object")
    for key in ("id", "date", "turns"):
        if key not in obj:
            raise DatasetParseError(line_no, f"missing key {key!r}")
    try:
        date = dt.date.fromisoformat(obj["date"])
    except (TypeError, ValueError) as exc:
        raise DatasetParseError(line_no, f"bad date {obj['date']!r}") from exc
    turns = obj["turns"]
    if not isinstance(turns, list):
        raise DatasetParseError(line_no, "'turns' must be an array")
    odes, feats = [], []
    for k, t in enumerate(turns):
        try:
            code = t["odes"]
            vec = t["features"]
        except (TypeError, KeyError) as exc:
            raise DatasetParseError(line_no, f"turn {k}: needs 'odes' and 'features'") from exc
        if not isinstance(code, int) or isinstance(code, bool) or not 1 <= code <= N_ODES:
            raise DatasetParseError(line_no, f"turn {k}: odes must be an integer 1..{N_ODES}")
        if not isinstance(vec, list) or len(vec) != FEATURE_DIM:
            raise DatasetParseError(line_no, f"turn {k}: features must be an array of {FEATURE_DIM} numbers")
        odes.append(code)
        feats.append(vec)
    try:
        features = np.asarray(feats, dtype=np.float64).reshape(len(turns), FEATURE_DIM)
    except (TypeError, ValueError) as exc:
        raise DatasetParseError(line_no, "non-numeric feature value") from exc
    if not np.all(np.isfinite(features)):
        raise DatasetParseError(line_no, "non-finite feature value")
    rating = obj.get("rating")
    if rating is not None and (not isinstance(rating, (int, float)) or isinstance(rating, bool)):
        raise DatasetParseError(line_no, "rating must be a number or null")
    treatment = obj.get("treatment")
    if treatment is not None and (not isinstance(treatment, int) or treatment < 0):
        raise DatasetParseError(line_no, "treatment must be a non-negative integer or null")
    d = Dialogue(
        id=str(obj["id"]),
        date=date,
        odes=odes,
        features=features,
        rating=rating,
        treatment=treatment,
        augmented=bool(obj.get("augmented", False)),
        text=obj.get("text"),
    )
    onehot = features[:, ODES_SLICE]
    expected = np.eye(N_ODES)[d.odes - 1]
    if not np.array_equal(onehot, expected):
        raise DataValidationError(f"dialogue {d.id!r}: ODES one-hot block disagrees with 'odes' labels")
    return d


def load_dataset(path: str | Path) -> Dataset:
    """Read a line-delimited JSON dataset.  Blank lines are skipped."""
    path = Path(path)
    dialogues = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            try:
                dialogues.append(_parse_record(obj, line_no))
            except DataValidationError as exc:
                raise DataValidationError(f"line {line_no}: {exc}") from exc
    return Dataset(dialogues)


def dialogue_to_record(d: Dialogue) -> dict:
    rec = {
        "id": d.id,
        "date": d.date.isoformat(),
        "rating": d.rating,
        "turns": [
            {"odes": int(c), "features": [float(x) for x in v]} for c, v in zip(d.odes, d.features)
        ],
    }
    if d.treatment is not None:
        rec["treatment"] = int(d.treatment)
    if d.augmented:
        rec["augmented"] = True
    if d.text is not None:
        rec["text"] = d.text
    return rec


def save_dataset(ds: Dataset, path: str | Path) -> None:
    # float repr round-trips exactly through json
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for d in ds:
            fh.write(json.dumps(dialogue_to_record(d), separators=(",", ":")))
            fh.write("\n")


# --------------------------------------------------------------------------
# Normalization and aggregation


def zscore_fit(train: Dataset, epsilon: float = STD_FLOOR) -> NormStats:
    """Per-dimension mean and population std over every turn vector."""
    if len(train) == 0:
        raise ValueError("cannot fit normalization statistics on an empty dataset")
    stacked = np.concatenate([d.features for d in train], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), epsilon)
    return NormStats(mean, std)


def zscore_apply(ds: Dataset, stats: NormStats) -> Dataset:
    """Return a new dataset with features replaced by ``(x - mean) / std``.

    Not idempotent: applying it twice standardizes already standardized
    values a second time.
    """
    out = []
    for d in ds:
        if d.dim != stats.dim:
            raise ValueError(f"dialogue {d.id!r} has {d.dim} features but stats have {stats.dim}")
        out.append(d.replace(features=(d.features - stats.mean) / stats.std))
    return Dataset(out, stats)


def aggregate_dialogue_features(d: Dialogue, include_counts: bool = False) -> np.ndarray:
    """Concatenate [mean, first, last, penultimate] turn vectors.

    With ``include_counts`` a fifth slot holds per-dimension totals over the
    turns (category counts for the raw ODES block).
    """
    x = d.features
    if x.shape[0] < MIN_TURNS:
        raise ValueError(f"dialogue {d.id!r}: aggregation needs at least {MIN_TURNS} turns")
    parts = [x.mean(axis=0), x[0], x[-1], x[-2]]
    if include_counts:
        parts.append(x.sum(axis=0))
    return np.concatenate(parts)


def clamp_rating(x):
    return np.clip(x, RATING_MIN, RATING_MAX)
