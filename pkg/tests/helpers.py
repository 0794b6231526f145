"""Shared fixtures-as-functions for the test suite."""

import numpy as np

from fsacnn import numerics as nx
from fsacnn.actnet import ActivationNetworkParams, act_forward, init_actnet
from fsacnn.numerics import Tensor
from fsacnn.training import AdamState, adam_step

CURVE_X = np.linspace(-1.0, 1.0, 201)
CURVE_Y = CURVE_X ** 3 - CURVE_X


def _fit(params: dict, predict, steps: int, lr: float) -> float:
    state = AdamState()
    for _ in range(steps):
        t = {k: Tensor(v, True) for k, v in params.items()}
        loss = nx.mean(nx.elementwise_pow(nx.sub(predict(t), CURVE_Y), 2))
        grads = dict(zip(t, nx.gradients(loss, list(t.values()))))
        params, state = adam_step(params, grads, state, lr=lr)
    t = {k: Tensor(v) for k, v in params.items()}
    return float(np.mean((predict(t).data - CURVE_Y) ** 2))


def fit_actnet_unit(steps: int = 5000, lr: float = 1e-2, seed: int = 0) -> float:
    """MSE of a single 1->1 K=3 activation-network unit trained on x^3 - x."""
    p = init_actnet(1, 1, 3, np.random.default_rng(seed))
    params = {"W": p.W.data, "b": p.b.data, "V": p.V.data, "z": p.z.data}

    def predict(t):
        layer = ActivationNetworkParams(t["W"], t["b"], t["V"], t["z"])
        return nx.reshape(act_forward(nx.reshape(Tensor(CURVE_X), (1, -1)), layer), (-1,))

    return _fit(params, predict, steps, lr)


def fit_relu_unit(steps: int = 5000, lr: float = 1e-2, seed: int = 0) -> float:
    """MSE of a single fixed-ReLU unit with affine input and output, c*relu(w x + b) + d."""
    rng = np.random.default_rng(seed)
    params = {"w": rng.uniform(-1, 1, size=1), "b": np.zeros(1), "c": np.ones(1), "d": np.zeros(1)}

    def predict(t):
        h = nx.relu(nx.add(nx.mul(Tensor(CURVE_X), t["w"]), t["b"]))
        return nx.add(nx.mul(h, t["c"]), t["d"])

    return _fit(params, predict, steps, lr)


def nearest_centroid_accuracy(manifest, train_ids, test_ids, length: int = 32) -> float:
    """Accuracy of a nearest-class-mean classifier on flattened, normalized,
    evenly resampled frames; the linear floor the network must beat."""
    from fsacnn.skeleton import normalize, resample_even

    def features(ids):
        idx = manifest.indices(ids)
        X = np.stack([normalize(resample_even(manifest.load(i), length)).frames.reshape(-1) for i in idx])
        y = np.array([manifest.entries[i].action_id for i in idx])
        return X, y

    X_tr, y_tr = features(train_ids)
    X_te, y_te = features(test_ids)
    classes = np.unique(y_tr)
    centroids = np.stack([X_tr[y_tr == c].mean(axis=0) for c in classes])
    dist = ((X_te[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    return float(np.mean(classes[np.argmin(dist, axis=1)] == y_te))
