"""Minimal dense neural-network engine with exact analytic gradients.

Everything runs in float64.  Supported pieces: dense layers with
tanh/relu/sigmoid/linear activations, LeCun-uniform initialization, Adam
with global L2 gradient clipping, inverted dropout and early stopping.
The backward pass returns both parameter gradients and the gradient with
respect to the input, so networks can be chained (encoder -> decoder) and
checked against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "sigmoid", "linear")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(0.0, z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, a):
    # derivative in terms of pre-activation z and activation a
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    dropout: float = 0.0
    max_epochs: int = 150
    early_stopping_patience: int = 10
    grad_clip_l2: float = 4.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.grad_clip_l2 <= 0:
            raise ValueError("grad_clip_l2 must be positive")
        if not 0.0 <= self.dropout <= 0.5:
            raise ValueError("dropout must be in [0, 0.5]")


def init_lecun_uniform(shape, rng) -> np.ndarray:
    """Uniform on [-sqrt(3/fan_in), +sqrt(3/fan_in)], variance 1/fan_in."""
    fan_in = shape[0]
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def build_net(widths, activations, rng) -> DenseNet:
    """Stack dense layers; biases start at zero.

    `widths` lists the layer sizes input-first, e.g. (6, 32, 2); one
    activation per weight layer.
    """
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(widths, widths[1:], activations):
        layers.append(
            Layer(init_lecun_uniform((fan_in, fan_out), rng), np.zeros(fan_out), act)
        )
    return DenseNet(layers)


def forward(net: DenseNet, batch, dropout_masks=None):
    """Affine-then-activation chain over all layers.

    Returns (output, cache); the cache stores inputs, pre-activations and
    activations per layer for the backward pass.  `dropout_masks`, when
    given, multiplies each hidden activation (inverted dropout: masks are
    pre-scaled by 1/keep) — the output layer is never dropped.
    """
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise ValueError(
            f"input width {x.shape[1]} does not match first layer {net.input_dim}"
        )
    inputs, preacts, acts = [], [], []
    for i, layer in enumerate(net.layers):
        inputs.append(x)
        z = x @ layer.weights + layer.bias
        a = _act(layer.activation, z)
        if dropout_masks is not None and i < len(net.layers) - 1:
            a = a * dropout_masks[i]
        preacts.append(z)
        acts.append(a)
        x = a
    return x, {"inputs": inputs, "preacts": preacts, "acts": acts, "masks": dropout_masks}


def make_dropout_masks(net: DenseNet, batch_size: int, rate: float, rng):
    """Inverted-dropout masks for each hidden layer (None when rate == 0)."""
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    return [
        (rng.random((batch_size, layer.weights.shape[1])) < keep) / keep
        for layer in net.layers[:-1]
    ]


def backward(net: DenseNet, cache, grad_output):
    """Exact gradients of a scalar loss given d(loss)/d(output).

    Returns (grads, grad_input) where grads is a flat list matching
    net.parameters() order.
    """
    grad = np.atleast_2d(np.asarray(grad_output, dtype=np.float64))
    grads = [None] * (2 * len(net.layers))
    masks = cache["masks"]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if masks is not None and i < len(net.layers) - 1:
            grad = grad * masks[i]
        dz = grad * _act_grad(layer.activation, cache["preacts"][i], cache["acts"][i])
        grads[2 * i] = cache["inputs"][i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        grad = dz @ layer.weights.T
    return grads, grad


def clip_gradients(grads, max_norm: float):
    """Scale the whole gradient list so its global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grads], total
    return grads, total


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """In-place Adam update with bias correction; clips first.

    Raises on non-finite gradients so a training loop can abort the epoch
    with a diagnostic instead of silently corrupting the parameters.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in adam_step")
    grads, _ = clip_gradients(grads, config.grad_clip_l2)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def train_loop(nets, n_train, batch_fn, val_loss_fn, config: TrainConfig):
    """Generic minibatch training with Adam and early stopping.

    nets        list of DenseNet trained jointly (their parameters share one
                Adam state and one global clipping norm)
    n_train     number of training examples to shuffle each epoch
    batch_fn    (index_array) -> (loss, grads) where grads matches the
                concatenation of each net's parameters()
    val_loss_fn () -> validation loss, evaluated after every epoch

    Returns (nets, history); nets hold the best-validation snapshot.
    """
    if n_train <= 0:
        raise ValueError("empty batch stream")
    rng = np.random.default_rng(config.seed)
    params = [p for net in nets for p in net.parameters()]
    state = AdamState()
    history = TrainHistory()
    best_val = np.inf
    best_snapshot = [p.copy() for p in params]
    patience_left = config.early_stopping_patience
    for epoch in range(config.max_epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = batch_fn(idx)
            adam_step(params, grads, state, config)
            epoch_loss += loss
            n_batches += 1
        history.train_loss.append(epoch_loss / n_batches)
        val = float(val_loss_fn())
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best_snapshot = [p.copy() for p in params]
            history.best_epoch = epoch
            patience_left = config.early_stopping_patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break
    history.stopped_epoch = len(history.val_loss) - 1
    for p, best in zip(params, best_snapshot):
        p[...] = best
    return nets, history


# ------------------------------------------------------------ checkpoints
# Manifest: JSON with architecture + dtype; parameters: little-endian
# float64 blob, each array written C-contiguous in parameters() order.

def save_net(net: DenseNet, manifest_path, blob_path, extra: dict | None = None):
    manifest = {
        "dtype": "<f8",
        "widths": [net.input_dim] + [l.weights.shape[1] for l in net.layers],
        "activations": [l.activation for l in net.layers],
    }
    if extra:
        manifest["extra"] = extra
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    with open(blob_path, "wb") as fh:
        for p in net.parameters():
            data = np.ascontiguousarray(p, dtype="<f8")
            fh.write(struct.pack("<q", data.size))
            fh.write(data.tobytes())


def load_net(manifest_path, blob_path) -> DenseNet:
    manifest = json.loads(Path(manifest_path).read_text())
    widths = manifest["widths"]
    layers = []
    with open(blob_path, "rb") as fh:
        for fan_in, fan_out, act in zip(
            widths, widths[1:], manifest["activations"]
        ):
            (n,) = struct.unpack("<q", fh.read(8))
            w = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(fan_in, fan_out)
            (n,) = struct.unpack("<q", fh.read(8))
            b = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            layers.append(Layer(w.astype(np.float64).copy(), b, act))
    return DenseNet(layers)
