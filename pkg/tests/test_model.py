import numpy as np
import pytest

from fsacnn import numerics as nx
from fsacnn.checks import MODEL_TOL, model_gradcheck
from fsacnn.model import (
    MAGIC,
    ModelConfig,
    build_model,
    forward,
    fuse_scores,
    load_checkpoint,
    prepare_streams,
    save_checkpoint,
    stream_features,
)
from fsacnn.skeleton import FourStreamInput, SkeletonSequence
from fsacnn.synth import synth_generate

SMALL = ModelConfig(widths=(4, 6), n_classes=3)


def sample(T, seed=0):
    rng = np.random.default_rng(seed)
    seq = synth_generate(2, 2, rng=rng).load(0)
    idx = np.round(np.linspace(0, seq.T - 1, T)).astype(int)
    return seq.with_frames(seq.frames[idx])


def backbone_size(c_in, cfg):
    total = 0
    for w in cfg.widths:
        total += w * c_in * cfg.kernel + w + 2 * (cfg.K + 1) * w
        c_in = w
    return total


def test_sharing_saves_one_backbone():
    shared = build_model(ModelConfig(), np.random.default_rng(0))
    separate = build_model(ModelConfig(share_temporal=False), np.random.default_rng(0))
    assert separate.n_params - shared.n_params == backbone_size(75, ModelConfig())
    assert shared.n_params < separate.n_params


def test_build_deterministic():
    a = build_model(SMALL, np.random.default_rng(3))
    b = build_model(SMALL, np.random.default_rng(3))
    assert list(a.params) == list(b.params)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_default_config_smoke():
    model = build_model(ModelConfig(), np.random.default_rng(0))
    logits = forward(model, prepare_streams(sample(32), model.cfg))
    assert logits.shape == (10,) and np.all(np.isfinite(logits.data))


@pytest.mark.parametrize("T", [12, 32, 128, 512])
def test_logit_shape_independent_of_length(T):
    model = build_model(SMALL, np.random.default_rng(1))
    assert forward(model, prepare_streams(sample(T), SMALL)).shape == (3,)


def test_minimum_length_reported():
    model = build_model(SMALL, np.random.default_rng(1))
    assert SMALL.min_sequence_length() == 10
    with pytest.raises(ValueError, match="minimum sequence length 10"):
        forward(model, prepare_streams(sample(9), SMALL))


def test_min_length_accounts_for_stride_and_pad():
    cfg = ModelConfig(widths=(4, 4), kernel=5, stride=2, pad=1, n_classes=2)
    m = cfg.min_stream_length()
    assert nx.output_length(nx.output_length(m, 5, 2, 1), 5, 2, 1) >= 1
    assert m == 1 or nx.output_length(nx.output_length(m - 1, 5, 2, 1), 5, 2, 1) < 1


def test_pooling_ignores_duplicated_columns():
    rng = np.random.default_rng(2)
    fmap = rng.normal(size=(5, 40))
    np.testing.assert_array_equal(nx.global_max_pool_time(np.repeat(fmap, 2, axis=1)).data,
                                  nx.global_max_pool_time(fmap).data)


def test_pointwise_backbone_invariant_to_frame_duplication():
    # with width-1 kernels every output column depends on one input column only
    cfg = ModelConfig(widths=(4, 6), kernel=1, n_classes=3)
    model = build_model(cfg, np.random.default_rng(4))
    seq = sample(40)
    doubled = seq.with_frames(np.repeat(seq.frames, 2, axis=0))
    a = stream_features(model, prepare_streams(seq, cfg))[0].data
    b = stream_features(model, prepare_streams(doubled, cfg))[0].data
    assert np.max(np.abs(a - b)) < 1e-10


def test_shared_temporal_backbone_gives_identical_features():
    model = build_model(SMALL, np.random.default_rng(5))
    fs = prepare_streams(sample(30), SMALL)
    same = FourStreamInput(fs.raw, fs.short_diff, fs.short_diff, fs.spatial_diff)
    feats = stream_features(model, same)
    assert feats[1].data.tobytes() == feats[2].data.tobytes()


def test_channel_mismatch_rejected():
    model = build_model(SMALL, np.random.default_rng(5))
    fs = prepare_streams(sample(30), SMALL)
    with pytest.raises(ValueError, match="channels"):
        forward(model, FourStreamInput(fs.raw[:-1], fs.short_diff, fs.long_diff, fs.spatial_diff))


def test_two_dim_model_projects_input():
    cfg = ModelConfig(widths=(4,), n_classes=3, dims=2)
    model = build_model(cfg, np.random.default_rng(6))
    fs = prepare_streams(sample(20), cfg)
    assert fs.raw.shape[0] == 50 and forward(model, fs).shape == (3,)


def test_full_model_gradient():
    assert model_gradcheck(0) <= MODEL_TOL


# --- fusion -----------------------------------------------------------------

def test_fuse_hand_pair():
    p = np.exp(fuse_scores([2.0, 0.0], [0.0, 1.0]))
    np.testing.assert_allclose(p, [0.5748, 0.4252], atol=1e-4)
    np.testing.assert_allclose(p, [(0.880797 + 0.268941) / 2, (0.119203 + 0.731059) / 2], atol=1e-6)


def test_fuse_identical_and_uniform():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.normal(size=6) * 3
        assert np.argmax(fuse_scores(a, a)) == np.argmax(a)
        assert np.argmax(fuse_scores(a, np.zeros(6))) == np.argmax(a)
        np.testing.assert_allclose(np.exp(fuse_scores(a, a)).sum(), 1.0)


def test_fuse_confident_scores_stay_finite():
    a, b = np.array([0.0, 2000.0]), np.array([0.0, 3000.0])
    with np.errstate(divide="raise", invalid="raise"):
        s = fuse_scores(a, b)
    assert s[1] == 0.0 and s[0] == pytest.approx(np.log(0.5) - 2000.0)
    np.testing.assert_array_equal(fuse_scores(a, b, weight=1.0), a - 2000.0)


def test_fuse_rejects_mismatch():
    with pytest.raises(ValueError, match="class-count"):
        fuse_scores(np.zeros(3), np.zeros(4))


# --- checkpoints ------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    model = build_model(SMALL, np.random.default_rng(8))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    back = load_checkpoint(path)
    assert back.cfg == model.cfg and list(back.params) == list(model.params)
    assert all(back.params[k].tobytes() == model.params[k].tobytes() for k in model.params)
    save_checkpoint(back, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == raw
    payload = sum(p.size for p in model.params.values()) * 8
    assert raw[-payload:] == b"".join(np.asarray(p, "<f8").tobytes() for p in model.params.values())


def test_checkpoint_corruption(tmp_path):
    model = build_model(SMALL, np.random.default_rng(8))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    (tmp_path / "bad.ckpt").write_bytes(b"XXXXX1\n" + raw[len(MAGIC):])
    with pytest.raises(ValueError, match="not an FSAC1"):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "short.ckpt").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "long.ckpt").write_bytes(raw + b"\0")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(tmp_path / "long.ckpt")


def test_config_json_roundtrip_and_validation():
    cfg = ModelConfig(widths=(3, 5), K=2, share_temporal=False, per_node_branch=True)
    assert ModelConfig.from_json(cfg.to_json()) == cfg
    for bad in ({"widths": ()}, {"n_classes": 1}, {"short_gap": 5, "long_gap": 5}, {"K": 0}):
        with pytest.raises(ValueError):
            ModelConfig(**bad)
