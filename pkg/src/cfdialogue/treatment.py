"""Treatment assignment from ODES categories.

The default binary policy sends category 14 ("other") to arm 0 and every
problem-signal category, 1 through 13, to arm 1.  A dialogue's arm is the
largest arm among its turns, so for two arms it is treated as soon as any
single turn is.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import N_ODES, Dataset, Dialogue, OdesCategory, TurnFeatures


class PositivityWarning(UserWarning):
    """Some treatment arm is empty (or holds every dialogue)."""


@dataclass(frozen=True)
class TreatmentPolicy:
    category_to_arm: Mapping[int, int]

    def __post_init__(self):
        mapping = {int(k): int(v) for k, v in dict(self.category_to_arm).items()}
        missing = sorted(set(range(1, N_ODES + 1)) - set(mapping))
        if missing:
            raise ValueError(f"policy does not map ODES categories {missing}")
        extra = sorted(set(mapping) - set(range(1, N_ODES + 1)))
        if extra:
            raise ValueError(f"policy maps unknown ODES categories {extra}")
        arms = sorted(set(mapping.values()))
        if arms != list(range(len(arms))):
            raise ValueError(f"arm indices must be contiguous from 0, got {arms}")
        object.__setattr__(self, "category_to_arm", mapping)
        lut = np.zeros(N_ODES + 1, dtype=np.int64)
        for k, v in mapping.items():
            lut[k] = v
        lut.setflags(write=False)
        object.__setattr__(self, "_lut", lut)

    @property
    def n_arms(self) -> int:
        return max(self.category_to_arm.values()) + 1

    def turn_arms(self, odes: np.ndarray) -> np.ndarray:
        return self._lut[np.asarray(odes, dtype=np.int64)]

    def categories_for(self, arm: int) -> list[int]:
        return sorted(k for k, v in self.category_to_arm.items() if v == arm)

    def to_json(self) -> dict:
        return {str(k): v for k, v in sorted(self.category_to_arm.items())}

    @classmethod
    def from_json(cls, obj: Mapping) -> "TreatmentPolicy":
        return cls({int(k): int(v) for k, v in obj.items()})

    def __hash__(self):
        return hash(tuple(sorted(self.category_to_arm.items())))

    def __eq__(self, other):
        if not isinstance(other, TreatmentPolicy):
            return NotImplemented
        return self.category_to_arm == other.category_to_arm


def default_policy() -> TreatmentPolicy:
    # category 13 (system not understand) goes to arm 1 so the partition is exhaustive
    return TreatmentPolicy({c.value: (0 if c is OdesCategory.OTHER else 1) for c in OdesCategory})


def load_policy(path: str | Path) -> TreatmentPolicy:
    with Path(path).open(encoding="utf-8") as fh:
        return TreatmentPolicy.from_json(json.load(fh))


def assign_turn_treatment(turn: TurnFeatures, policy: TreatmentPolicy) -> int:
    return policy.category_to_arm[int(turn.odes)]


def assign_dialogue_treatment(d: Dialogue, policy: TreatmentPolicy) -> int:
    """Arm 0 iff every turn maps to arm 0, else the largest arm present."""
    return int(policy.turn_arms(d.odes).max())


def dialogue_arm(d: Dialogue, policy: TreatmentPolicy) -> int:
    """Effective arm: an explicit override on the dialogue wins over the policy."""
    if d.treatment is not None:
        return int(d.treatment)
    return assign_dialogue_treatment(d, policy)


def dataset_arms(ds: Dataset, policy: TreatmentPolicy) -> np.ndarray:
    return np.array([dialogue_arm(d, policy) for d in ds], dtype=np.int64)


def positivity_check(ds: Dataset, policy: TreatmentPolicy) -> np.ndarray:
    """Fraction of dialogues per arm; warns when an arm is empty or holds everything."""
    if len(ds) == 0:
        raise ValueError("positivity check needs a non-empty dataset")
    arms = dataset_arms(ds, policy)
    k = max(policy.n_arms, int(arms.max()) + 1)
    props = np.bincount(arms, minlength=k) / len(arms)
    if np.any(props == 0.0) or np.any(props == 1.0):
        warnings.warn(
            f"positivity violated: arm proportions {props.round(4).tolist()}",
            PositivityWarning,
            stacklevel=2,
        )
    return props


# --------------------------------------------------------------------------
# Keyword tagger for demos only; the real classifier is a trained model.

_RULES: list[tuple[OdesCategory, tuple[str, ...]]] = [
    (OdesCategory.USER_CALLS_OUT_REPETITION, (r"\balready (asked|said|told)\b", r"\byou keep (asking|saying)\b", r"\brepeating yourself\b")),
    (OdesCategory.USER_CALLS_OUT_CONTRADICTION, (r"\byou (just )?said you\b", r"\bthat contradicts\b")),
    (OdesCategory.SYSTEM_NOT_UNDERSTAND, (r"\bthat'?s not what i said\b", r"\bi didn'?t say that\b")),
    (OdesCategory.USER_REQUESTS_STOP, (r"\bstop\b", r"\bgoodbye\b", r"\bbye\b", r"\bi have to go\b")),
    (OdesCategory.USER_REQUESTS_REPEAT, (r"\bsay that again\b", r"\brepeat that\b", r"\bcome again\b")),
    (OdesCategory.USER_REQUESTS_TOPIC_SWITCH, (r"\bsomething else\b", r"\bchange the (topic|subject)\b")),
    (OdesCategory.USER_REJECTS_TOPIC_SWITCH, (r"\bkeep talking about\b", r"\bdon'?t want to change\b")),
    (OdesCategory.USER_INSULT, (r"\bfull of sh", r"\bshut up\b", r"\bidiot\b")),
    (OdesCategory.USER_CRITIQUE, (r"\bstupid\b", r"\bdumb\b", r"\byou'?re (bad|terrible|useless)\b")),
    (OdesCategory.USER_OBSCENITY, (r"\*\*\*", r"\bf\*+")),
    (OdesCategory.USER_NOT_UNDERSTAND, (r"\bi don'?t know what .* means\b", r"\bwhat does .* mean\b", r"\bi don'?t understand\b")),
    (OdesCategory.USER_DISINTEREST, (r"\bcouldn'?t care less\b", r"\bboring\b", r"\bnot interested\b", r"\bwho cares\b")),
    (OdesCategory.USER_COMPLIMENT, (r"\breally interesting\b", r"\bthat'?s (cool|awesome|great)\b", r"\byou'?re (smart|funny|great)\b")),
]
_COMPILED = [(cat, [re.compile(p) for p in pats]) for cat, pats in _RULES]


def stub_odes_tagger(utterance_text: str) -> OdesCategory:
    """Rule-based ODES guess; first matching rule wins, default is OTHER."""
    text = utterance_text.lower()
    for cat, patterns in _COMPILED:
        if any(p.search(text) for p in patterns):
            return cat
    return OdesCategory.OTHER
