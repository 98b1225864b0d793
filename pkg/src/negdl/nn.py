"""A small dense network trained with plain mini-batch SGD.

Hidden layers use sigmoid, ReLU or tanh; the output layer is a softmax over
classes with cross-entropy loss. The network never sees where its features
came from: plaintext attribute values and expected values decoded from
sketches go through the same normalisation and the same forward pass.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("sigmoid", "relu", "tanh", "softmax")
CHECKPOINT_FORMAT = "negdl-mlp/1"


class TrainingDivergedError(RuntimeError):
    pass


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def activation(tag: str, z):
    if tag == "sigmoid":
        return sigmoid(z)
    if tag == "relu":
        return np.maximum(0.0, z)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "softmax":
        return softmax(z)
    raise ValueError(f"unknown activation {tag!r}")


def _activation_grad(tag: str, z, a):
    """Derivative of the activation w.r.t. its input, given input ``z`` and output ``a``."""
    if tag == "sigmoid":
        return a * (1.0 - a)
    if tag == "relu":
        return (z > 0).astype(np.float64)
    if tag == "tanh":
        return 1.0 - a * a
    raise ValueError(f"no elementwise derivative for {tag!r}")


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str
    dropout: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 50
    dropout_rate: float = 0.0
    seed: int = 0
    input_normalizer: float = 1.0
    # Stop once the epoch loss changes by less than this; None trains all epochs.
    tolerance: float | None = 1e-6

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.input_normalizer > 0:
            raise ValueError(f"input_normalizer must be > 0, got {self.input_normalizer}")


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.loss)


class Network:
    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise ValueError(f"layer sizes do not chain: {a.W.shape} -> {b.W.shape}")
        for layer in layers[:-1]:
            if layer.activation not in ("sigmoid", "relu", "tanh"):
                raise ValueError(f"hidden activation must be sigmoid/relu/tanh, got {layer.activation!r}")
        if layers[-1].activation != "softmax":
            raise ValueError("output layer must be softmax")
        self.layers = layers

    @classmethod
    def build(cls, sizes, hidden: str = "relu", seed: int = 0, dropout_layers=()) -> Network:
        """Glorot-uniform weights, zero biases. ``sizes`` runs input -> output."""
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            last = i == len(sizes) - 2
            layers.append(
                Layer(
                    rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                    np.zeros(fan_out),
                    "softmax" if last else hidden,
                    dropout=i in dropout_layers,
                )
            )
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.W.shape[1] for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def copy(self) -> Network:
        return Network([Layer(l.W.copy(), l.b.copy(), l.activation, l.dropout) for l in self.layers])

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {x.shape[-1]}")
        return x

    def _forward(self, x, dropout_rate=0.0, rng=None):
        """Returns pre-activations, activations (input first) and dropout masks."""
        zs, acts, masks = [], [x], []
        for layer in self.layers:
            z = acts[-1] @ layer.W + layer.b
            a = activation(layer.activation, z)
            mask = None
            if layer.dropout and dropout_rate > 0 and rng is not None:
                keep = 1.0 - dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            zs.append(z)
            acts.append(a)
            masks.append(mask)
        return zs, acts, masks

    def forward(self, features, mode: str = "eval", dropout_rate: float = 0.0, rng=None) -> np.ndarray:
        """Class distribution for one feature vector or a batch (rows)."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = self._check_input(features)
        if mode == "train":
            rng = rng if rng is not None else np.random.default_rng()
            return self._forward(x, dropout_rate, rng)[1][-1]
        return self._forward(x)[1][-1]

    def loss_and_grads(self, x, y, dropout_rate: float = 0.0, rng=None):
        """Mean cross-entropy over the batch and its gradient for every parameter.

        Gradients come back in :meth:`parameters` order.
        """
        x = self._check_input(np.atleast_2d(x))
        y = np.asarray(y, dtype=np.int64)
        n = len(y)
        zs, acts, masks = self._forward(x, dropout_rate, rng)
        probs = acts[-1]
        picked = np.clip(probs[np.arange(n), y], 1e-300, None)
        loss = float(-np.log(picked).mean())

        # softmax + cross-entropy: dL/dz = (p - onehot) / n
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i == 0:
                break
            back = delta @ self.layers[i].W.T
            tag = self.layers[i - 1].activation
            if masks[i - 1] is not None:
                back = back * masks[i - 1]
                a = activation(tag, zs[i - 1])
            else:
                a = acts[i]
            delta = back * _activation_grad(tag, zs[i - 1], a)
        return loss, grads

    def to_header(self, normalizer: float = 1.0) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "sizes": self.sizes,
            "activations": [l.activation for l in self.layers],
            "dropout": [l.dropout for l in self.layers],
            "normalizer": normalizer,
        }


def train(net: Network, features, labels, cfg: TrainConfig) -> tuple[Network, History]:
    """Mini-batch SGD on mean softmax cross-entropy. Mutates and returns ``net``.

    Each epoch visits every instance once in a seeded random order. ``features``
    are divided by ``cfg.input_normalizer`` first.
    """
    X = np.asarray(features, dtype=np.float64) / cfg.input_normalizer
    y = np.asarray(labels, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
    net._check_input(X)
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    history = History()
    prev = None
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = net.loss_and_grads(X[batch], y[batch], cfg.dropout_rate, rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch + 1}, batch starting {start}")
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
            total += loss * len(batch)
        epoch_loss = total / len(X)
        if not all(np.isfinite(p).all() for p in params):
            raise TrainingDivergedError(f"non-finite weights after epoch {epoch + 1}")
        history.loss.append(epoch_loss)
        log.debug("epoch %d loss %.6f", epoch + 1, epoch_loss)
        if cfg.tolerance is not None and prev is not None and abs(prev - epoch_loss) < cfg.tolerance:
            history.stopped_early = True
            break
        prev = epoch_loss
    return net, history


def predict(net: Network, features, normalizer: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Class indices (ties go to the lowest index) and distributions, eval mode."""
    probs = net.forward(np.asarray(features, dtype=np.float64) / normalizer, mode="eval")
    return np.argmax(probs, axis=-1), probs


def accuracy(net: Network, features, labels, normalizer: float = 1.0) -> float:
    pred, _ = predict(net, features, normalizer)
    return float(np.mean(pred == np.asarray(labels)))


def save_checkpoint(net: Network, path, normalizer: float = 1.0) -> None:
    header = json.dumps(net.to_header(normalizer)).encode()
    payload = np.concatenate([p.ravel() for p in net.parameters()]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(payload.tobytes())


def load_checkpoint(path) -> tuple[Network, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    sizes = header["sizes"]
    expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} weights, found {len(payload)}")
    layers, offset = [], 0
    for (fan_in, fan_out), act, drop in zip(zip(sizes[:-1], sizes[1:]), header["activations"], header["dropout"]):
        W = payload[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out).copy()
        offset += fan_in * fan_out
        b = payload[offset : offset + fan_out].copy()
        offset += fan_out
        layers.append(Layer(W, b, act, drop))
    return Network(layers), header
