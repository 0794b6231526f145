import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsacnn import training
from fsacnn.augment import AugmentConfig
from fsacnn.dataset import DatasetManifest, ManifestEntry
from fsacnn.model import ModelConfig, build_model, save_checkpoint
from fsacnn.synth import synth_generate
from fsacnn.training import (
    AdamState,
    SplitSpec,
    TrainConfig,
    adam_step,
    batch_loss,
    draw_training_input,
    parse_split,
    split_cross_age,
    split_cross_subject,
    train,
    train_step,
)

SMALL = ModelConfig(widths=(4, 4), n_classes=3)


def id_manifest(ids, elderly_max=50):
    entries = [ManifestEntry(f"s{i}.skl", i, 0, "elderly" if i <= elderly_max else "adult", 50) for i in ids]
    return DatasetManifest(entries)


# --- splits -----------------------------------------------------------------

def test_cross_subject_sizes():
    split = split_cross_subject(id_manifest(range(1, 101)))
    assert (len(split.test), len(split.train)) == (33, 67)
    assert split.test == frozenset(range(3, 100, 3))


def test_cross_subject_small():
    split = split_cross_subject(id_manifest(range(1, 7)))
    assert split.test == {3, 6} and split.train == {1, 2, 4, 5}


def test_cross_age_sizes_and_relations():
    m = id_manifest(range(1, 101))
    s = split_cross_age(m)
    assert (len(s["elderly"].test), len(s["elderly"].train)) == (16, 34)
    assert (len(s["adult"].test), len(s["adult"].train)) == (17, 33)
    assert len(s["mixed"].train) == 33 and s["mixed"].train == frozenset(range(1, 98, 3))
    assert s["elderly"].test == frozenset(range(3, 49, 3))
    assert s["adult"].test == frozenset(range(51, 100, 3))
    assert s["elderly"].test <= split_cross_subject(m).test
    assert not s["mixed"].train & (s["elderly"].test | s["adult"].test)


def test_cross_age_rejects_convention_violation():
    bad = DatasetManifest([ManifestEntry("a.skl", 3, 0, "adult", 10), ManifestEntry("b.skl", 60, 0, "adult", 10)])
    with pytest.raises(ValueError, match="elderly"):
        split_cross_age(bad)


@settings(max_examples=100)
@given(st.sets(st.integers(1, 300), min_size=3, max_size=60))
def test_splits_disjoint_and_pure(ids):
    m = id_manifest(sorted(ids), elderly_max=150)
    try:
        split = split_cross_subject(m)
    except ValueError:
        assert all(i % 3 for i in ids) or all(i % 3 == 0 for i in ids)
        return
    assert not split.train & split.test and split == split_cross_subject(m)
    assert split.train | split.test == frozenset(ids)


def test_split_spec_validation():
    with pytest.raises(ValueError, match="overlap"):
        SplitSpec({1, 2}, {2, 3})
    with pytest.raises(ValueError, match="empty"):
        SplitSpec(set(), {1})
    with pytest.raises(ValueError, match="unknown split"):
        parse_split("age:teen", id_manifest(range(1, 101)))


# --- optimizer --------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    new, _ = adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adam_first_step_is_minus_lr():
    new, state = adam_step({"w": np.array([0.5])}, {"w": np.array([1.0])}, AdamState(), lr=1e-3)
    assert new["w"][0] == pytest.approx(0.5 - 1e-3, abs=1e-10)
    assert state.step == 1


def test_adam_deterministic_trajectory():
    def run():
        p, s = {"w": np.array([1.0, 2.0])}, AdamState()
        for k in range(20):
            p, s = adam_step(p, {"w": np.sin(p["w"] * (k + 1))}, s)
        return p["w"].tobytes()

    assert run() == run()


def test_adam_rejects_bad_gradients():
    with pytest.raises(FloatingPointError, match="aborted"):
        adam_step({"w": np.ones(2)}, {"w": np.array([1.0, np.nan])}, AdamState())
    with pytest.raises(ValueError, match="shape"):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState())


# --- training loop ----------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return synth_generate(6, 3, rng=np.random.default_rng(0))


def quick_cfg(**kw):
    base = dict(epochs=1, batch_size=4, l_min=16, l_max=32)
    base.update(kw)
    return TrainConfig(**base)


def test_train_smoke(corpus):
    model = build_model(SMALL, np.random.default_rng(0))
    ids = frozenset(range(1, 5))
    assert len(corpus.indices(ids)) >= 10
    _, history = train(model, corpus, ids, quick_cfg())
    assert len(history) == 1 and np.isfinite(history[0].train_loss) and history[0].skipped == 0


def test_full_batch_descent(corpus):
    rng = np.random.default_rng(1)
    model = build_model(SMALL, rng)
    cfg = quick_cfg(lr=1e-4, augment=AugmentConfig.identity())
    batch = [(draw_training_input(corpus, i, model, cfg, rng), corpus.entries[i].action_id) for i in range(8)]
    state, losses = AdamState(), []
    for _ in range(5):
        model, state, loss = train_step(model, batch, state, cfg)
        losses.append(loss)
    losses.append(batch_loss(model, batch, model.tensors()).item())
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_length_draws_cover_range(corpus):
    model = build_model(SMALL, np.random.default_rng(2))
    cfg = TrainConfig(l_min=32, l_max=128)
    rng = np.random.default_rng(3)
    lengths = np.array([draw_training_input(corpus, 0, model, cfg, rng).raw.shape[1] for _ in range(1000)])
    assert lengths.min() >= 32 and lengths.max() <= 128
    deciles = np.floor((lengths - 32) / (97 / 10)).astype(int)
    assert set(deciles) == set(range(10))


def test_training_reproducible(corpus, tmp_path):
    out = []
    for name in ("a", "b"):
        model = build_model(SMALL, np.random.default_rng(4))
        model, _ = train(model, corpus, frozenset(range(1, 5)), quick_cfg(seed=9))
        save_checkpoint(model, tmp_path / name)
        out.append((tmp_path / name).read_bytes())
    assert out[0] == out[1]


def test_short_samples_skipped_and_counted(corpus):
    model = build_model(ModelConfig(widths=(4,) * 10, n_classes=3), np.random.default_rng(5))
    ids = frozenset({1})
    _, history = train(model, corpus, ids, quick_cfg(l_min=16, l_max=20))
    assert history[0].skipped == len(corpus.indices(ids))


def test_non_finite_step_aborted_and_reported(corpus, monkeypatch):
    def explode(*args, **kwargs):
        raise FloatingPointError("non-finite gradient for head.W; step aborted")

    monkeypatch.setattr(training, "adam_step", explode)
    model = build_model(SMALL, np.random.default_rng(6))
    trained, history = train(model, corpus, frozenset(range(1, 5)), quick_cfg())
    assert history[0].aborted_steps > 0
    assert all(trained.params[k].tobytes() == model.params[k].tobytes() for k in model.params)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(l_min=1)
    with pytest.raises(ValueError):
        TrainConfig(l_min=64, l_max=32)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
