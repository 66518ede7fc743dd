"""Bundled toy classification task and a minimal reference trainer.

The dataset is a seeded mixture of noisy class prototypes in [0, 1]^64 with
10 classes.  The network is a dense 64-32-32-10 MLP (three weight layers,
ReLU on the hidden layers).  Trained weights ship as a tensor container in
``nmpu/data`` and can be regenerated with :func:`train_toy_mlp`.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .aimc import LayerSpec
from .formats import read_tensors, write_tensors

N_FEATURES = 64
N_CLASSES = 10
HIDDEN = (32, 32)
DATA_SEED = 2024
FEATURE_NOISE = 0.5
WEIGHTS_FILE = "toy_mlp.nmt"


def make_dataset(n: int, seed: int = DATA_SEED, noise: float = FEATURE_NOISE):
    """``n`` samples ``(X, y)``; prototypes are fixed by ``DATA_SEED``."""
    protos = np.random.default_rng(DATA_SEED).uniform(0.0, 1.0, (N_CLASSES, N_FEATURES))
    rng = np.random.default_rng([seed, n])
    y = rng.integers(0, N_CLASSES, n)
    X = np.clip(protos[y] + rng.normal(0.0, noise, (n, N_FEATURES)), 0.0, 1.0)
    return X, y


def train_split():
    return make_dataset(6000, seed=1)


def test_split():
    return make_dataset(2000, seed=2)


def _init(rng, dims):
    params = []
    for a, b in zip(dims, dims[1:]):
        params.append([rng.normal(0, np.sqrt(2.0 / a), (a, b)), np.zeros(b)])
    return params


def train_toy_mlp(X, y, epochs: int = 60, lr: float = 3e-3, batch: int = 128,
                  weight_decay: float = 1e-4, seed: int = 0) -> list[LayerSpec]:
    """Adam on softmax cross-entropy; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    dims = (X.shape[1],) + HIDDEN + (N_CLASSES,)
    params = _init(rng, dims)
    m = [[np.zeros_like(p) for p in layer] for layer in params]
    v = [[np.zeros_like(p) for p in layer] for layer in params]
    b1, b2, eps, t = 0.9, 0.999, 1e-8, 0
    onehot = np.eye(N_CLASSES)[y]
    for _ in range(epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch):
            idx = order[start:start + batch]
            acts = [X[idx]]
            for i, (W, b) in enumerate(params):
                z = acts[-1] @ W + b
                acts.append(np.maximum(z, 0) if i < len(params) - 1 else z)
            logits = acts[-1] - acts[-1].max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot[idx]) / len(idx)
            t += 1
            for i in range(len(params) - 1, -1, -1):
                W, b = params[i]
                gW = acts[i].T @ g + weight_decay * W
                gb = g.sum(axis=0)
                if i:
                    g = (g @ W.T) * (acts[i] > 0)
                for j, grad in enumerate((gW, gb)):
                    m[i][j] = b1 * m[i][j] + (1 - b1) * grad
                    v[i][j] = b2 * v[i][j] + (1 - b2) * grad * grad
                    mh = m[i][j] / (1 - b1 ** t)
                    vh = v[i][j] / (1 - b2 ** t)
                    params[i][j] = params[i][j] - lr * mh / (np.sqrt(vh) + eps)
    n = len(params)
    return [LayerSpec(W, b, None, i < n - 1) for i, (W, b) in enumerate(params)]


def layers_to_tensors(layers) -> dict[str, np.ndarray]:
    out = {}
    for i, layer in enumerate(layers):
        out[f"layer{i}.weight"] = layer.weights
        if layer.bias is not None:
            out[f"layer{i}.bias"] = layer.bias
        out[f"layer{i}.relu"] = np.array([1.0 if layer.relu else 0.0])
    return out


def layers_from_tensors(tensors: dict[str, np.ndarray]) -> list[LayerSpec]:
    layers = []
    i = 0
    while f"layer{i}.weight" in tensors:
        relu = tensors.get(f"layer{i}.relu", np.array([1.0]))
        layers.append(LayerSpec(tensors[f"layer{i}.weight"], tensors.get(f"layer{i}.bias"),
                                None, bool(relu.ravel()[0])))
        i += 1
    return layers


def save_layers(path, layers) -> None:
    write_tensors(path, layers_to_tensors(layers))


def load_layers(path) -> list[LayerSpec]:
    return layers_from_tensors(read_tensors(path))


def bundled_weights_path():
    return resources.files("nmpu") / "data" / WEIGHTS_FILE


def load_toy_task():
    """``(layers, X_test, y_test)`` for the bundled toy MLP."""
    X, y = test_split()
    with resources.as_file(bundled_weights_path()) as p:
        layers = load_layers(p)
    return layers, X, y


def regenerate_bundled_weights(path=None):
    """Retrain on the training split and rewrite the bundled weight file."""
    X, y = train_split()
    layers = train_toy_mlp(X, y)
    save_layers(path or bundled_weights_path(), layers)
    return layers
