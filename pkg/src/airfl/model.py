"""Fully-connected classifier over a flat parameter vector.

Parameters live in a single float64 vector so they can be segmented for
transmission: for each layer i, the weight matrix (fan_in x fan_out,
row-major) is followed by the bias vector. Hidden layers use ReLU with
optional inverted dropout during training; the output layer is a softmax
trained with cross-entropy. Gradients are minibatch means.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import ModelSpec

ParamVector = np.ndarray


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    sample_count: int


def layer_shapes(spec: ModelSpec) -> list[tuple[int, int]]:
    sizes = spec.layer_sizes
    return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]


def unflatten(params: ParamVector, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (no copies) of the per-layer (weights, bias) pairs."""
    layers = []
    pos = 0
    for fan_in, fan_out in layer_shapes(spec):
        w = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params[pos:pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    if pos != len(params):
        raise ValueError(f"parameter vector length {len(params)} != expected {pos}")
    return layers


def flatten(layers: list[tuple[np.ndarray, np.ndarray]]) -> ParamVector:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def init_params(spec: ModelSpec, stream: np.random.Generator) -> ParamVector:
    """Uniform Glorot hidden weights, a = sqrt(6/(fan_in+fan_out)); zero biases.

    The output layer starts at zero so the initial predictor is exactly
    uniform and the first gradients are readout-sized rather than scaling
    with the squared input norm. That keeps round-0 transmit energies in
    the regime where a Joules-per-round budget is meaningful, and the
    classifier head then fits within a few rounds.
    """
    params = np.zeros(spec.param_count)
    shapes = layer_shapes(spec)
    for i, ((w, _), (fan_in, fan_out)) in enumerate(zip(unflatten(params, spec), shapes)):
        if i == len(shapes) - 1:
            continue
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w[:] = stream.uniform(-bound, bound, size=(fan_in, fan_out))
    return params


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise FloatingPointError("non-finite activation (exploding parameters?)")


def gradient_and_loss(params: ParamVector, features: np.ndarray, labels: np.ndarray,
                      spec: ModelSpec, dropout_stream: np.random.Generator | None = None,
                      dropout_enabled: bool = False) -> tuple[np.ndarray, float]:
    """Mean cross-entropy loss and its gradient w.r.t. the flat parameters.

    With dropout enabled, each hidden layer's activations are masked
    Bernoulli(1-p) and scaled by 1/(1-p) (inverted dropout), fresh masks
    per call drawn from dropout_stream.
    """
    if len(features) == 0:
        raise ValueError("empty batch")
    layers = unflatten(params, spec)
    p = spec.dropout_p
    use_dropout = dropout_enabled and p > 0.0

    # forward
    activations = [features]
    masks: list[np.ndarray | None] = []
    pre_acts = []
    a = features
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        _check_finite(z)
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
            if use_dropout:
                mask = (dropout_stream.random(a.shape) >= p) / (1.0 - p)
                a = a * mask
            else:
                mask = None
            masks.append(mask)
            pre_acts.append(z)
            activations.append(a)
        else:
            logits = z

    probs = _softmax(logits)
    batch = len(features)
    rows = np.arange(batch)
    loss = float(-np.mean(np.log(probs[rows, labels])))

    # backward: delta starts as d(mean CE)/d(logits)
    delta = probs
    delta[rows, labels] -= 1.0
    delta /= batch

    grad = np.zeros_like(params)
    grad_layers = unflatten(grad, spec)
    for i in range(len(layers) - 1, -1, -1):
        gw, gb = grad_layers[i]
        gw[:] = activations[i].T @ delta
        gb[:] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layers[i][0].T
            if masks[i - 1] is not None:
                delta = delta * masks[i - 1]
            delta[pre_acts[i - 1] <= 0.0] = 0.0
    _check_finite(grad)
    return grad, loss


def local_gradient(params: ParamVector, features: np.ndarray, labels: np.ndarray,
                   spec: ModelSpec, dropout_stream: np.random.Generator | None = None,
                   dropout_enabled: bool = False) -> GradientVector:
    grad, _ = gradient_and_loss(params, features, labels, spec,
                                dropout_stream, dropout_enabled)
    return GradientVector(values=grad, sample_count=len(features))


def predict_logits(params: ParamVector, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Forward pass with dropout off."""
    a = features
    layers = unflatten(params, spec)
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return a


def evaluate(params: ParamVector, test_features: np.ndarray, test_labels: np.ndarray,
             spec: ModelSpec, batch_size: int = 10000) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on a held-out set, dropout disabled.

    argmax ties resolve to the lowest class index.
    """
    correct = 0
    loss_sum = 0.0
    n = len(test_features)
    for start in range(0, n, batch_size):
        X = test_features[start:start + batch_size]
        y = test_labels[start:start + batch_size]
        logits = predict_logits(params, X, spec)
        probs = _softmax(logits)
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
        loss_sum += float(-np.sum(np.log(probs[np.arange(len(y)), y])))
    return correct / n, loss_sum / n


def apply_update(params: ParamVector, aggregated_gradient: np.ndarray, learning_rate: float,
                 velocity: np.ndarray, momentum: float) -> ParamVector:
    """Momentum SGD step at the server: v <- mu*v + g; w <- w - eta*v.

    velocity is updated in place; momentum 0 reduces to plain descent.
    """
    if len(aggregated_gradient) != len(params) or len(velocity) != len(params):
        raise ValueError("length mismatch between parameters, gradient, and velocity")
    velocity *= momentum
    velocity += aggregated_gradient
    return params - learning_rate * velocity


# -- checkpoint serialization: little-endian f64, length-prefixed ---------

def save_params(params: ParamVector, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(params)))
        fh.write(np.asarray(params, dtype="<f8").tobytes())


def load_params(path: str) -> ParamVector:
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * count), dtype="<f8")
    if len(data) != count:
        raise ValueError(f"{path}: truncated checkpoint")
    return data.astype(np.float64)
