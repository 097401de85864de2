import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfdialogue.augment import augment_by_masking, augment_dataset, masking_points, select_low_rated
from cfdialogue.data import Dataset
from cfdialogue.treatment import default_policy

from conftest import make_dialogue


def closed_form_count(odes, min_len=3):
    return sum(1 for m, c in enumerate(odes) if c != 14 and m + 1 >= min_len)


def test_hand_example(rng):
    # treated turns at 0, 3 and 5; turn 0 is too early for a 3-turn prefix
    d = make_dialogue(rng, odes=[2, 14, 14, 7, 14, 1], rating=2.0, id="p")
    out = augment_by_masking(d, default_policy())
    assert [a.id for a in out] == ["p#aug3", "p#aug5"]
    assert [len(a) for a in out] == [4, 6]
    for a in out:
        assert a.augmented and a.rating == 2.0 and a.date == d.date and a.treatment is None
    np.testing.assert_array_equal(out[0].features, d.features[:4])


def test_min_len(rng):
    d = make_dialogue(rng, odes=[14, 3, 14, 14, 5])
    assert masking_points(d, default_policy()) == [4]
    assert masking_points(d, default_policy(), min_len=6) == []
    with pytest.raises(ValueError, match="min_len"):
        masking_points(d, default_policy(), min_len=2)


@given(st.lists(st.integers(1, 14), min_size=3, max_size=30), st.integers(3, 8))
def test_count_law_and_slices(odes, min_len):
    d = make_dialogue(np.random.default_rng(len(odes)), odes=odes)
    out = augment_by_masking(d, default_policy(), min_len)
    assert len(out) == closed_form_count(odes, min_len)
    for a in out:
        m = int(a.id.rsplit("#aug", 1)[1])
        assert a.features.tobytes() == d.features[: m + 1].tobytes()
        np.testing.assert_array_equal(a.odes, d.odes[: m + 1])
        assert a.odes[-1] != 14


def test_select_low_rated(rng):
    ds = Dataset(
        [make_dialogue(rng, id=str(i), rating=r) for i, r in enumerate([1.0, 2.99, 3.0, 4.5, None])]
    )
    assert select_low_rated(ds).ids == ["0", "1"]
    assert select_low_rated(ds, threshold=4.0).ids == ["0", "1", "2"]


def test_augment_dataset(rng):
    ds = Dataset(
        [
            make_dialogue(rng, id="b", odes=[14, 14, 3, 4], rating=1.0),
            make_dialogue(rng, id="a", odes=[14, 14, 3], rating=2.0),
            make_dialogue(rng, id="c", odes=[14, 14, 3], rating=4.0),
        ]
    )
    out = augment_dataset(ds, default_policy())
    assert out.ids == ["b", "a", "c", "a#aug2", "b#aug2", "b#aug3"]
    # augmented dialogues are never augmented again and existing prefixes are kept once
    assert augment_dataset(out, default_policy()).ids == out.ids
    assert augment_dataset(ds, default_policy(), threshold=5.0).ids[3:] == ["a#aug2", "b#aug2", "b#aug3", "c#aug2"]
