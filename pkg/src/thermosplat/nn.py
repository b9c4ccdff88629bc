"""Dense networks with hand-written reverse mode, plus the Adam optimizer.

Only the fixed pipeline composition is differentiated: affine layers with
ReLU between them, batched over the leading axis.  Forward returns a tape
that the matching backward consumes; a tape goes stale as soon as the
network parameters change.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import NumericError, ValidationError


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> NDArray[np.float64]:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


@dataclass
class MlpTape:
    """Activation record from one forward pass."""

    inputs: list[NDArray[np.float64]]  # input to each affine layer
    preacts: list[NDArray[np.float64]]  # pre-activation of each layer
    version: int


@dataclass
class MlpNet:
    """Affine layers with ReLU between them; last layer is linear."""

    weights: list[NDArray[np.float64]]  # (d_out, d_in) each
    biases: list[NDArray[np.float64]]  # (d_out,) each
    _version: int = 0

    @classmethod
    def create(cls, dims: list[int], rng: np.random.Generator) -> "MlpNet":
        if len(dims) < 2:
            raise ValidationError("MlpNet needs at least input and output dims")
        weights, biases = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            weights.append(kaiming_uniform(rng, d_in, d_out))
            biases.append(np.zeros(d_out))
        return cls(weights=weights, biases=biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def mark_updated(self) -> None:
        self._version += 1

    def check_finite(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"non-finite parameter in layer {i}")

    def forward(self, x: NDArray[np.float64]) -> tuple[NDArray[np.float64], MlpTape]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        inputs, preacts = [], []
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if h.shape[1] != w.shape[1]:
                raise ValidationError(
                    f"layer {i}: input dim {h.shape[1]} does not match weight dim {w.shape[1]}"
                )
            inputs.append(h)
            z = h @ w.T + b
            preacts.append(z)
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
        y = h[0] if squeeze else h
        return y, MlpTape(inputs=inputs, preacts=preacts, version=self._version)

    def backward(
        self, tape: MlpTape, d_out: NDArray[np.float64]
    ) -> tuple[list[tuple[NDArray[np.float64], NDArray[np.float64]]], NDArray[np.float64]]:
        """Exact gradients of the recorded composition.

        Returns per-layer (dW, db) and the gradient with respect to the input.
        """
        if tape.version != self._version:
            raise ValidationError("stale tape: parameters changed since the forward pass")
        g = np.asarray(d_out, dtype=np.float64)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[None, :]
        grads: list[tuple[NDArray[np.float64], NDArray[np.float64]]] = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g = g * (tape.preacts[i] > 0.0)
            grads[i] = (g.T @ tape.inputs[i], g.sum(axis=0))
            g = g @ self.weights[i]
        return grads, (g[0] if squeeze else g)

    def parameters(self) -> list[NDArray[np.float64]]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def state_arrays(self, prefix: str) -> dict[str, NDArray[np.float64]]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    @classmethod
    def from_state_arrays(cls, prefix: str, arrays: dict[str, NDArray[np.float64]]) -> "MlpNet":
        weights, biases = [], []
        i = 0
        while f"{prefix}.w{i}" in arrays:
            weights.append(np.array(arrays[f"{prefix}.w{i}"], dtype=np.float64))
            biases.append(np.array(arrays[f"{prefix}.b{i}"], dtype=np.float64))
            i += 1
        if not weights:
            raise ValidationError(f"checkpoint holds no arrays for '{prefix}'")
        return cls(weights=weights, biases=biases)


def flatten_mlp_grads(grads) -> list[NDArray[np.float64]]:
    out = []
    for dw, db in grads:
        out.append(dw)
        out.append(db)
    return out


def accumulate_mlp_grads(total, grads):
    if total is None:
        return [(dw.copy(), db.copy()) for dw, db in grads]
    for (tw, tb), (dw, db) in zip(total, grads):
        tw += dw
        tb += db
    return total


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (in place)."""

    def __init__(self, params: list[NDArray[np.float64]], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.skipped_steps = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[NDArray[np.float64]], lr_scale: float = 1.0) -> bool:
        """Apply one update; skips (with a warning) if any gradient is non-finite."""
        if len(grads) != len(self.params):
            raise ValidationError(f"adam: got {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if p.shape != g.shape:
                raise ValidationError(f"adam: gradient shape {g.shape} != parameter shape {p.shape}")
        if any(not np.all(np.isfinite(g)) for g in grads):
            self.skipped_steps += 1
            warnings.warn("adam: non-finite gradient, step skipped", RuntimeWarning, stacklevel=2)
            return False
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        lr = self.lr * lr_scale
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return True


def cosine_lr_scale(iteration: int, total: int, floor_frac: float = 0.05) -> float:
    """Cosine decay from 1 to floor_frac over ``total`` iterations."""
    if total <= 1:
        return 1.0
    c = 0.5 * (1.0 + np.cos(np.pi * iteration / (total - 1)))
    return float(floor_frac + (1.0 - floor_frac) * c)


# ---------------------------------------------------------------------------
# Bounded output maps used by the task heads


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    return np.logaddexp(0.0, z)
