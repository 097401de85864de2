"""Extra low-rated training dialogues made by truncating after treated turns."""

from __future__ import annotations

from .data import MIN_TURNS, Dataset, Dialogue
from .treatment import TreatmentPolicy

AUG_SEPARATOR = "#aug"


def select_low_rated(ds: Dataset, threshold: float = 3.0) -> Dataset:
    """Rated dialogues whose rating is strictly below ``threshold``."""
    return ds.with_dialogues(d for d in ds if d.rating is not None and d.rating < threshold)


def masking_points(d: Dialogue, policy: TreatmentPolicy, min_len: int = MIN_TURNS) -> list[int]:
    """Turn indices ``m`` that are treated and leave a prefix of at least ``min_len`` turns."""
    if min_len < MIN_TURNS:
        raise ValueError(f"min_len must be >= {MIN_TURNS}, got {min_len}")
    arms = policy.turn_arms(d.odes)
    return [m for m in range(len(arms)) if arms[m] > 0 and m + 1 >= min_len]


def augment_by_masking(d: Dialogue, policy: TreatmentPolicy, min_len: int = MIN_TURNS) -> list[Dialogue]:
    """One prefix dialogue ``turns[0..m]`` per qualifying treated turn ``m``.

    Prefixes keep the parent's rating and date, are flagged as augmented and
    get the id ``<parent id>#aug<m>``.  A treated final turn yields a prefix
    equal to the whole dialogue; its id suffix tells it apart from the parent.
    """
    return [
        Dialogue(
            id=f"{d.id}{AUG_SEPARATOR}{m}",
            date=d.date,
            odes=d.odes[: m + 1],
            features=d.features[: m + 1],
            rating=d.rating,
            augmented=True,
        )
        for m in masking_points(d, policy, min_len)
    ]


def augment_dataset(
    ds: Dataset,
    policy: TreatmentPolicy,
    threshold: float = 3.0,
    min_len: int = MIN_TURNS,
) -> Dataset:
    """``ds`` followed by the prefixes of its low-rated, non-augmented dialogues.

    New dialogues are ordered by (parent id, m).  Prefixes already present
    in ``ds`` are not emitted again, so augmenting twice changes nothing.
    """
    parents = sorted(
        (d for d in select_low_rated(ds, threshold) if not d.augmented),
        key=lambda d: d.id,
    )
    have = set(ds.ids)
    extra = [a for d in parents for a in augment_by_masking(d, policy, min_len) if a.id not in have]
    return ds.with_dialogues(list(ds) + extra)
