"""Small dense embedding network with hand-derived backpropagation.

Everything here is plain float64 numpy: a feed-forward net of linear
layers with relu/identity activations, optional unit-norm output, a
momentum SGD optimizer, a central-difference gradient checker, and a
versioned JSON model format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

MODEL_FORMAT_VERSION = 1

ACTIVATIONS = ("relu", "identity")

# Distances and norms below this are treated as zero when dividing.
ZERO_GUARD = 1e-12


class DegenerateEmbeddingError(ArithmeticError):
    """Raised when a unit-norm output is requested for an all-zero vector."""


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class Gradients:
    """Per-parameter gradients, shape-congruent with the net that made them."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: "MlpNet") -> "Gradients":
        return cls(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
        )

    def __iadd__(self, other: "Gradients") -> "Gradients":
        for mine, theirs in zip(self.weights, other.weights):
            mine += theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine += theirs
        return self

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            [factor * w for w in self.weights],
            [factor * b for b in self.biases],
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.weights + self.biases)


@dataclass
class Tape:
    """Forward-pass record, enough to run backward."""

    inputs: np.ndarray
    preacts: list[np.ndarray]
    postacts: list[np.ndarray]
    prenorm: np.ndarray
    norms: np.ndarray | None
    output: np.ndarray
    squeeze: bool


class MlpNet:
    """Feed-forward embedding net: weights are (out_dim, in_dim) per layer.

    The last layer is always identity-activated; when ``normalize_output``
    is set the final vector is scaled to unit Euclidean length.
    """

    def __init__(self, weights, biases, activations, normalize_output=True):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = list(activations)
        self.normalize_output = bool(normalize_output)
        self._validate()

    def _validate(self) -> None:
        if not self.weights:
            raise ValueError("net needs at least one layer")
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must align")
        for k, (w, b, act) in enumerate(
            zip(self.weights, self.biases, self.activations)
        ):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight/bias shapes inconsistent")
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {k}: unknown activation {act!r}")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: in_dim does not chain with layer {k - 1}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {k}: non-finite parameters")
        if self.activations[-1] != "identity":
            raise ValueError("final layer activation must be identity")

    @classmethod
    def initialize(cls, dims, rng, normalize_output=True) -> "MlpNet":
        """Fresh net, weights and biases uniform in +-sqrt(6/(fan_in+fan_out)).

        ``dims`` is (input_dim, out_0, ..., out_last); all hidden layers get
        relu, the final layer identity. ``rng`` is a seeded numpy Generator
        (an int seed is also accepted). Biases use the same limit as their
        layer's weights: with zero biases a relu net is positively
        homogeneous, which would make unit-norm embeddings blind to input
        scale.
        """
        if len(dims) < 2:
            raise ValueError("dims needs an input and at least one output size")
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        weights, biases, acts = [], [], []
        for k in range(1, len(dims)):
            fan_in, fan_out = int(dims[k - 1]), int(dims[k])
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-limit, limit, size=fan_out))
            acts.append("relu" if k < len(dims) - 1 else "identity")
        return cls(weights, biases, acts, normalize_output)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpNet":
        return MlpNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            self.normalize_output,
        )

    def forward(self, x) -> tuple[np.ndarray, Tape]:
        """Map inputs to embeddings, recording a tape for backward.

        Accepts a single vector or an (n, in_dim) batch; the embedding
        mirrors the input arrangement.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x2d = x[None, :] if squeeze else x
        if x2d.ndim != 2 or x2d.shape[1] != self.dims[0]:
            raise ValueError(
                f"input dim {x2d.shape[-1] if x2d.ndim else '?'} does not match "
                f"net input dim {self.dims[0]}"
            )
        a = x2d
        preacts, postacts = [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            a = np.maximum(z, 0.0) if act == "relu" else z
            preacts.append(z)
            postacts.append(a)
        prenorm = a
        norms = None
        if self.normalize_output:
            norms = np.sqrt(np.sum(prenorm * prenorm, axis=1))
            dead = norms == 0.0
            if dead.any():
                row = int(np.flatnonzero(dead)[0])
                raise DegenerateEmbeddingError(
                    f"all-zero pre-normalization vector at row {row}"
                )
            a = prenorm / norms[:, None]
        tape = Tape(x2d, preacts, postacts, prenorm, norms, a, squeeze)
        return (a[0] if squeeze else a), tape

    def embed(self, x) -> np.ndarray:
        """Forward pass without keeping the tape."""
        return self.forward(x)[0]

    def backward(self, tape: Tape, grad_out) -> Gradients:
        """Chain-rule gradients of a scalar loss through the recorded pass.

        ``grad_out`` is dLoss/dEmbedding with the same arrangement the
        forward call returned. The relu subgradient at exactly 0 is 0.
        """
        g = np.asarray(grad_out, dtype=np.float64)
        if tape.squeeze:
            g = g[None, :]
        if g.shape != tape.output.shape:
            raise ValueError("grad_out shape does not match the taped forward pass")
        if self.normalize_output:
            y = tape.output
            g = (g - y * np.sum(g * y, axis=1, keepdims=True)) / tape.norms[:, None]
        grads = Gradients([None] * len(self.weights), [None] * len(self.biases))
        for k in range(len(self.weights) - 1, -1, -1):
            if self.activations[k] == "relu":
                g = g * (tape.preacts[k] > 0.0)
            below = tape.postacts[k - 1] if k > 0 else tape.inputs
            grads.weights[k] = g.T @ below
            grads.biases[k] = g.sum(axis=0)
            if k > 0:
                g = g @ self.weights[k]
        return grads

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError("flat parameter vector has the wrong length")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = theta[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = theta[pos : pos + b.size]
            pos += b.size


class SgdOptimizer:
    """Plain SGD with classical momentum; velocities start at zero."""

    def __init__(self, learning_rate: float, momentum: float = 0.9):
        if not learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.velocities: Gradients | None = None

    def step(self, net: MlpNet, grads: Gradients) -> MlpNet:
        """v <- momentum*v - lr*grad; param <- param + v. Updates in place."""
        if not grads.all_finite():
            raise NonFiniteError("non-finite gradient, training aborted")
        if self.velocities is None:
            self.velocities = Gradients.zeros_like(net)
        vel = self.velocities
        for p, v, g in zip(
            net.weights + net.biases, vel.weights + vel.biases, grads.weights + grads.biases
        ):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v
        return net


def grad_check(loss_and_grad, net: MlpNet, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad(net) -> (loss, Gradients)`` must be deterministic and
    smooth at the current parameters (callers keep clear of hinge and relu
    boundaries). The relative error denominator is guarded at 1e-12, so a
    gradient that is identically zero on both sides reports 0.
    """
    _, grads = loss_and_grad(net)
    analytic = grads.flat()
    theta0 = net.get_flat_params()
    numeric = np.empty_like(theta0)
    try:
        for i in range(theta0.size):
            theta = theta0.copy()
            theta[i] = theta0[i] + h
            net.set_flat_params(theta)
            up = loss_and_grad(net)[0]
            theta[i] = theta0[i] - h
            net.set_flat_params(theta)
            down = loss_and_grad(net)[0]
            numeric[i] = (up - down) / (2.0 * h)
    finally:
        net.set_flat_params(theta0)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ZERO_GUARD)
    return float(np.max(np.abs(analytic - numeric) / denom))


def model_to_dict(net: MlpNet) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "dims": net.dims,
        "activations": list(net.activations),
        "normalize_output": net.normalize_output,
        "layers": [
            {"weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }


def model_from_dict(doc: dict) -> MlpNet:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {version!r}")
    dims = doc["dims"]
    weights, biases = [], []
    for k, layer in enumerate(doc["layers"]):
        out_dim, in_dim = int(dims[k + 1]), int(dims[k])
        w = np.asarray(layer["weights"], dtype=np.float64)
        if w.size != out_dim * in_dim:
            raise ValueError(f"layer {k}: weight count does not match dims")
        weights.append(w.reshape(out_dim, in_dim))
        biases.append(np.asarray(layer["bias"], dtype=np.float64))
    return MlpNet(weights, biases, doc["activations"], doc["normalize_output"])


def model_to_json(net: MlpNet) -> str:
    # json emits shortest round-trip decimals for doubles, so the encoding
    # is value-exact and byte-deterministic.
    return json.dumps(model_to_dict(net), indent=2) + "\n"


def save_model(net: MlpNet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(net))


def load_model(path) -> MlpNet:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
