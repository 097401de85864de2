import dataclasses

import numpy as np
import pytest
from scipy import integrate, special, stats

from cfdialogue.data import MIN_TURNS, save_dataset
from cfdialogue.synth import (
    DEFAULT_EFFECT,
    SynthConfig,
    _treated_intercept,
    generate,
    load_truth,
    oracle_metrics,
    outcome_components,
    potential_outcomes,
    save_truth,
    truth_path,
)
from cfdialogue.treatment import dataset_arms

SMALL = SynthConfig(n_dialogues=300, max_turns=40)


@pytest.fixture(scope="module")
def small():
    return generate(SMALL)


def test_deterministic(tmp_path, small):
    ds, truth = small
    ds2, truth2 = generate(SMALL)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(ds, a)
    save_dataset(ds2, b)
    assert a.read_bytes() == b.read_bytes()
    np.testing.assert_array_equal(truth.outcomes_raw, truth2.outcomes_raw)
    ds3, _ = generate(dataclasses.replace(SMALL, seed=1))
    assert ds3[0].rating != ds[0].rating


def test_arms_follow_policy(small):
    ds, truth = small
    np.testing.assert_array_equal(dataset_arms(ds, SMALL.treatment_policy()), truth.arms)
    assert truth.ids == tuple(ds.ids)


def test_lengths_and_ratings(small):
    ds, _ = small
    lengths = np.array([len(d) for d in ds])
    assert lengths.min() >= MIN_TURNS and lengths.max() <= SMALL.max_turns
    r = np.array([d.rating for d in ds])
    assert r.min() >= 1.0 and r.max() <= 5.0


def test_additive_effect_is_exact(small):
    _, truth = small
    np.testing.assert_allclose(truth.outcomes_raw[:, 1] - truth.outcomes_raw[:, 0], DEFAULT_EFFECT, atol=1e-12)
    assert truth.ate == DEFAULT_EFFECT


def test_heterogeneous_effect():
    cfg = dataclasses.replace(SMALL, effect_kind="heterogeneous", heterogeneity=0.5)
    ds, truth = generate(cfg)
    gap = truth.outcomes_raw[:, 1] - truth.outcomes_raw[:, 0]
    assert gap.std() > 0.1
    assert truth.ate == pytest.approx(gap.mean(), abs=1e-12)
    f, v = outcome_components(ds[0].features, cfg)
    np.testing.assert_allclose(potential_outcomes(f, v, cfg), [f - 0.5 * v, f + DEFAULT_EFFECT + 0.5 * v])


def test_noise_free_ratings_are_clamped_outcomes():
    cfg = dataclasses.replace(SMALL, noise=0.0)
    ds, truth = generate(cfg)
    r = np.array([d.rating for d in ds])
    np.testing.assert_array_equal(r, truth.outcomes[np.arange(len(ds)), truth.arms])


def test_treated_intercept_hits_target_fraction():
    # marginal P(treated) = E[expit(a - c q)] for q ~ N(0, 1), checked by quadrature
    for p, c in [(0.3, 0.5), (0.1, 2.0), (0.6, 0.0)]:
        a = _treated_intercept(p, c)
        got, _ = integrate.quad(lambda q: special.expit(a - c * q) * stats.norm.pdf(q), -12, 12)
        assert got == pytest.approx(p, abs=1e-8)


def test_treated_fraction_sample():
    cfg = dataclasses.replace(SMALL, n_dialogues=3000, max_turns=10)
    _, truth = generate(cfg)
    frac = np.mean(truth.arms > 0)
    assert abs(frac - 0.3) < 4 * np.sqrt(0.21 / 3000)


def test_confounding_lowers_treated_baseline(small):
    _, truth = small
    y0 = truth.outcomes_raw[:, 0]
    # treated dialogues come from worse days/users even before the effect
    assert y0[truth.arms == 1].mean() < y0[truth.arms == 0].mean()


def test_truth_round_trip(tmp_path, small):
    _, truth = small
    path = truth_path(tmp_path / "data.jsonl")
    assert path.name == "data.truth.json"
    save_truth(truth, path)
    back = load_truth(path)
    np.testing.assert_array_equal(back.outcomes_raw, truth.outcomes_raw)
    assert back.ids == truth.ids and back.ate == truth.ate


def test_subset_recomputes_ate(small):
    _, truth = small
    sub = truth.subset(truth.ids[:10])
    assert sub.ate == pytest.approx(np.mean(sub.outcomes_raw[:, 1] - sub.outcomes_raw[:, 0]))
    assert len(sub.arms) == 10


@pytest.mark.parametrize(
    "kw",
    [
        {"arm_fractions": (0.7, 0.4), "effects": (1.0, 2.0)},
        {"arm_fractions": (0.0,)},
        {"effect_kind": "quadratic"},
        {"min_turns": 2},
        {"noise": -1.0},
        {"effects": (1.0, 2.0)},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)


def test_oracle_metrics_shapes(small):
    from cfdialogue.models import TrainConfig, init_cf_lstm

    ds, truth = small
    model = init_cf_lstm(30, SMALL.treatment_policy(), TrainConfig(hidden_size=3, head_layers=(2,)), np.random.default_rng(0))
    out = oracle_metrics(model, truth, ds.subset(range(20)))
    assert set(out) == {"ate_model", "ate_true", "ate_error", "counterfactual_rmse", "arm_effects"}
    assert out["ate_error"] == pytest.approx(abs(out["ate_model"] - out["ate_true"]))
