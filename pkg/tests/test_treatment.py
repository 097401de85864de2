import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfdialogue.data import Dataset, OdesCategory, TurnFeatures
from cfdialogue.treatment import (
    PositivityWarning,
    TreatmentPolicy,
    assign_dialogue_treatment,
    assign_turn_treatment,
    dataset_arms,
    default_policy,
    dialogue_arm,
    load_policy,
    positivity_check,
    stub_odes_tagger,
)

from conftest import make_dialogue


def test_default_policy_partition():
    p = default_policy()
    assert p.n_arms == 2
    assert p.categories_for(0) == [14]
    assert p.categories_for(1) == list(range(1, 14))


@pytest.mark.parametrize("code,arm", [(1, 1), (5, 1), (13, 1), (14, 0)])
def test_turn_treatment(code, arm):
    turn = TurnFeatures.from_parts(code, [0, 0, 0], 0.9, np.zeros(8), 0.5, [0, 0], 1.0)
    assert assign_turn_treatment(turn, default_policy()) == arm


def test_dialogue_any_treated_turn(rng):
    p = default_policy()
    assert assign_dialogue_treatment(make_dialogue(rng, odes=[14, 14, 14, 14]), p) == 0
    assert assign_dialogue_treatment(make_dialogue(rng, odes=[14, 14, 3, 14]), p) == 1
    assert assign_dialogue_treatment(make_dialogue(rng, odes=[9, 9, 9]), p) == 1


def test_multi_arm_takes_max(rng):
    mapping = {c: 0 for c in range(1, 15)}
    mapping.update({1: 1, 2: 2})
    p = TreatmentPolicy(mapping)
    assert p.n_arms == 3
    assert assign_dialogue_treatment(make_dialogue(rng, odes=[1, 14, 2]), p) == 2
    assert assign_dialogue_treatment(make_dialogue(rng, odes=[1, 14, 14]), p) == 1


def test_override_wins(rng):
    d = make_dialogue(rng, odes=[14, 14, 14], treatment=1)
    assert assign_dialogue_treatment(d, default_policy()) == 0
    assert dialogue_arm(d, default_policy()) == 1


@given(st.lists(st.integers(1, 14), min_size=3, max_size=40))
def test_binary_arm_is_any(codes):
    d = make_dialogue(np.random.default_rng(0), odes=codes)
    assert assign_dialogue_treatment(d, default_policy()) == int(any(c != 14 for c in codes))


@pytest.mark.parametrize(
    "mapping,msg",
    [
        ({c: 0 for c in range(1, 14)}, "does not map"),
        ({**{c: 0 for c in range(1, 15)}, 15: 1}, "unknown"),
        ({**{c: 0 for c in range(1, 15)}, 3: 2}, "contiguous"),
    ],
)
def test_policy_validation(mapping, msg):
    with pytest.raises(ValueError, match=msg):
        TreatmentPolicy(mapping)


def test_policy_json_round_trip(tmp_path):
    p = default_policy()
    path = tmp_path / "policy.json"
    path.write_text(json.dumps(p.to_json()))
    q = load_policy(path)
    assert q == p
    assert hash(q) == hash(p)


def test_positivity(rng):
    ds = Dataset([make_dialogue(rng, odes=[14, 14, 14], id="a"), make_dialogue(rng, odes=[14, 2, 14], id="b")])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        np.testing.assert_array_equal(positivity_check(ds, default_policy()), [0.5, 0.5])
    only0 = Dataset([make_dialogue(rng, odes=[14, 14, 14], id="a")])
    with pytest.warns(PositivityWarning):
        np.testing.assert_array_equal(positivity_check(only0, default_policy()), [1.0, 0.0])
    with pytest.raises(ValueError):
        positivity_check(Dataset([]), default_policy())


def test_dataset_arms(rng):
    ds = Dataset([make_dialogue(rng, odes=o, id=str(i)) for i, o in enumerate([[14] * 3, [14, 1, 14], [14] * 4])])
    np.testing.assert_array_equal(dataset_arms(ds, default_policy()), [0, 1, 0])


@pytest.mark.parametrize(
    "text,cat",
    [
        ("you're stupid", OdesCategory.USER_CRITIQUE),
        ("I couldn't care less", OdesCategory.USER_DISINTEREST),
        ("what does that mean", OdesCategory.USER_NOT_UNDERSTAND),
        ("stop", OdesCategory.USER_REQUESTS_STOP),
        ("can you repeat that", OdesCategory.USER_REQUESTS_REPEAT),
        ("that's awesome", OdesCategory.USER_COMPLIMENT),
        ("I already said that", OdesCategory.USER_CALLS_OUT_REPETITION),
        ("tell me about dogs", OdesCategory.OTHER),
    ],
)
def test_stub_tagger(text, cat):
    assert stub_odes_tagger(text) is cat


@settings(max_examples=50)
@given(st.text(max_size=80))
def test_stub_tagger_total(text):
    assert isinstance(stub_odes_tagger(text), OdesCategory)
