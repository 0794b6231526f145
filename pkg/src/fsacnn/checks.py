"""Finite-difference gradient checks of one activation-network layer and of the
full four-stream model on a short synthetic clip."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .actnet import ActivationNetworkParams, act_conv_forward
from .model import FsaModel, ModelConfig, build_model, forward, prepare_streams
from .synth import synth_generate

LAYER_TOL = 1e-5
MODEL_TOL = 1e-4
CHECK_FRAMES = 16
CHECK_MODEL = ModelConfig(widths=(2, 2), n_classes=3, input_scale=0.5)


def layer_gradcheck(seed: int, K: int = 3, eps: float = 1e-5) -> float:
    """Max relative error over W, b, V, z of a conv activation-network layer."""
    rng = np.random.default_rng(seed)
    # positive inputs keep every gradient component away from zero, where the
    # relative error would measure finite-difference round-off instead
    x = rng.uniform(0.5, 1.5, size=(3, 9))
    inputs = [rng.uniform(0.1, 0.6, size=(4, 3, 3)), rng.uniform(0.0, 0.5, size=4),
              rng.uniform(0.0, 0.3, size=(K + 1, 4)), rng.uniform(0.2, 1.0, size=(K + 1, 4))]

    def loss(W, b, V, z):
        y = act_conv_forward(x, ActivationNetworkParams(W, b, V, z))
        return nx.mean(nx.elementwise_pow(nx.global_max_pool_time(y), 2))

    return nx.grad_check(loss, inputs, eps)


def perturbed_model(cfg: ModelConfig, rng: np.random.Generator, spread: float = 0.1,
                    bias_shift: tuple[float, float] = (0.5, 1.0)) -> FsaModel:
    """Fresh model moved off its linear start: branch coefficients jittered so the
    polynomial terms carry gradient, biases shifted so pooled pre-activations sit
    away from zero (their cubes would otherwise give gradients below round-off)."""
    model = build_model(cfg, rng)
    params = {}
    for name, p in model.params.items():
        if name.endswith(".V") or name.endswith(".z"):
            p = p + rng.uniform(-spread, spread, size=p.shape)
        elif name.endswith(".b"):
            p = p + rng.uniform(*bias_shift, size=p.shape)
        params[name] = p
    return model.with_params(params)


def model_gradcheck(seed: int, cfg: ModelConfig = CHECK_MODEL, frames: int = CHECK_FRAMES,
                    eps: float = 1e-5) -> float:
    """Max relative error over every model parameter of a random positive
    combination of the logits (cross-entropy itself is checked in numerics)."""
    rng = np.random.default_rng(seed)
    corpus = synth_generate(2, cfg.n_classes, rng=rng)
    seq = corpus.load(int(rng.integers(len(corpus))))
    seq = seq.with_frames(seq.frames[:frames])
    streams = prepare_streams(seq, cfg)
    model = perturbed_model(cfg, rng)
    names = list(model.params)
    # unequal weights keep the head's shared constant branch term from cancelling
    weights = rng.uniform(0.5, 1.5, size=cfg.n_classes)

    def loss(*arrays):
        logits = forward(model, streams, dict(zip(names, arrays)))
        return nx.sum_(nx.mul(logits, weights))

    return nx.grad_check(loss, [model.params[n] for n in names], eps)
