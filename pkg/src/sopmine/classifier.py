"""The weakly supervised binary classifier: a small fully connected network
with ReLU hidden layers and a sigmoid output, trained by cross-entropy with
plain full-batch gradient descent. Implemented directly on numpy so the
gradients can be verified against finite differences.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import ClassifierParams

PARAMS_MAGIC = b"LIMC"

# Probabilities are clamped to this band inside the loss, keeping it finite.
PROB_CLAMP = 1e-7


def init_classifier(input_dim: int, hidden_dims, seed: int) -> ClassifierParams:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    dims = [int(input_dim)] + [int(h) for h in hidden_dims] + [1]
    if any(d < 1 for d in dims):
        raise ValueError(f"all layer dims must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ClassifierParams(tuple(weights), tuple(biases), rng_seed=int(seed))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the output strictly inside (0, 1) even for saturating inputs
    return np.clip(out, 1e-15, 1.0 - 1e-15)


def _forward_pass(params: ClassifierParams, x: np.ndarray):
    """Returns (probabilities, hidden activations, hidden pre-activations)."""
    h = x
    activations = [x]
    pre_acts = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0)
        activations.append(h)
    z_out = h @ params.weights[-1] + params.biases[-1]
    return _sigmoid(z_out)[:, 0], activations, pre_acts


def forward_batch(params: ClassifierParams, features: np.ndarray) -> np.ndarray:
    """Probabilities for an (n, d) batch."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != params.layer_dims[0]:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match classifier input "
            f"{params.layer_dims[0]}"
        )
    return _forward_pass(params, x)[0]


def forward(params: ClassifierParams, feature: np.ndarray) -> float:
    """Probability that one feature vector is salient; strictly in (0, 1)."""
    return float(forward_batch(params, np.asarray(feature, dtype=np.float64).reshape(1, -1))[0])


def bce_loss(preds: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with the probability clamp applied."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise ValueError(f"predictions and labels must be equal-length vectors, got {p.shape} vs {y.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _gradients(params: ClassifierParams, x: np.ndarray, y: np.ndarray):
    """Mean-loss gradients for every weight and bias.

    The clamp makes the loss flat in saturated regions, so the output delta is
    zeroed wherever the probability left the clamp band.
    """
    p, activations, pre_acts = _forward_pass(params, x)
    n = x.shape[0]
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    delta = ((p - y) * inside)[:, None] / n

    grads_w = [np.empty(0)] * len(params.weights)
    grads_b = [np.empty(0)] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        grads_w[layer] = activations[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (pre_acts[layer - 1] > 0.0)
    return grads_w, grads_b


def train(
    params: ClassifierParams,
    pos_features: np.ndarray,
    neg_features: np.ndarray,
    epochs: int = 20,
    lr: float = 1e-3,
) -> tuple[ClassifierParams, np.ndarray]:
    """Full-batch gradient descent on the pseudo-labeled sets.

    Returns the updated parameters and the loss measured at the start of each
    epoch (so ``losses[0]`` is the untrained loss).
    """
    pos = np.asarray(pos_features, dtype=np.float64)
    neg = np.asarray(neg_features, dtype=np.float64)
    if pos.ndim == 1:
        pos = pos.reshape(1, -1)
    if neg.ndim == 1:
        neg = neg.reshape(1, -1)
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise ValueError("both classes must be non-empty")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    x = np.vstack([pos, neg])
    y = np.concatenate([np.ones(pos.shape[0]), np.zeros(neg.shape[0])])

    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    losses = np.empty(epochs)
    current = params
    for epoch in range(epochs):
        preds, _, _ = _forward_pass(current, x)
        losses[epoch] = bce_loss(preds, y)
        grads_w, grads_b = _gradients(current, x, y)
        for i in range(len(weights)):
            weights[i] = weights[i] - lr * grads_w[i]
            biases[i] = biases[i] - lr * grads_b[i]
        current = ClassifierParams(tuple(weights), tuple(biases), params.rng_seed)
    return current, losses


def gradient_check(params: ClassifierParams, feature: np.ndarray, label: float, h: float = 1e-4) -> float:
    """Max relative disagreement between analytic and central-difference
    gradients of the single-sample loss, over every parameter."""
    x = np.asarray(feature, dtype=np.float64).reshape(1, -1)
    y = np.asarray([float(label)])
    grads_w, grads_b = _gradients(params, x, y)

    def loss_at(weights, biases):
        p, _, _ = _forward_pass(ClassifierParams(tuple(weights), tuple(biases), params.rng_seed), x)
        return bce_loss(p, y)

    worst = 0.0
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    for layer in range(len(weights)):
        for arrs, grads in ((weights, grads_w), (biases, grads_b)):
            flat = arrs[layer].reshape(-1)
            gflat = grads[layer].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_at(weights, biases)
                flat[i] = orig - h
                down = loss_at(weights, biases)
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                denom = max(abs(gflat[i]) + abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def save_params(params: ClassifierParams, path: str) -> None:
    """Serialize to the LIMC binary format (header, layer table, f64 payloads)."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<qI", params.rng_seed, len(params.weights)))
        for w, b in zip(params.weights, params.biases):
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_params(path: str) -> ClassifierParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PARAMS_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {PARAMS_MAGIC!r}")
    seed, n_layers = struct.unpack_from("<qI", data, 4)
    offset = 16
    weights, biases = [], []
    for _ in range(n_layers):
        if offset + 8 > len(data):
            raise ValueError(f"{path}: truncated layer table")
        fan_in, fan_out = struct.unpack_from("<II", data, offset)
        offset += 8
        need = (fan_in * fan_out + fan_out) * 8
        if offset + need > len(data):
            raise ValueError(f"{path}: truncated layer payload")
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += fan_in * fan_out * 8
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += fan_out * 8
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes after layer payloads")
    return ClassifierParams(tuple(weights), tuple(biases), rng_seed=int(seed))
