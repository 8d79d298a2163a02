"""Feed-forward tanh network used as the barrier certificate.

Parameter layout (the flat vector used everywhere in synthesis): for each
layer in order, the weight matrix of shape ``(fan_out, fan_in)`` flattened
row-major, followed by that layer's bias vector.

Inputs pass through a fixed affine normalisation ``(x - input_shift) /
input_scale`` before the first layer. It is not trained and not part of the
parameter vector; synthesis sets it from the domain box so the tanh units
see inputs of order one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
}


def _as_batch(x, n):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if x.shape[-1] != n:
        raise ValueError(f"expected input of length {n}, got {x.shape[-1]}")
    return (x[None, :] if single else x.reshape(-1, n)), single


@dataclass(frozen=True)
class NeuralCertificate:
    weights: tuple
    biases: tuple
    activation: str = "tanh"
    input_shift: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        ws = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        bs = tuple(np.array(b, dtype=float, ndmin=1) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bias shape {b.shape} vs weights {w.shape}")
            if i and w.shape[1] != ws[i - 1].shape[0]:
                raise ValueError(f"layer {i}: fan-in does not match previous layer")
        if ws[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")
        n = ws[0].shape[1]
        shift = np.zeros(n) if self.input_shift is None else np.array(self.input_shift, dtype=float)
        scale = np.ones(n) if self.input_scale is None else np.array(self.input_scale, dtype=float)
        if shift.shape != (n,) or scale.shape != (n,):
            raise ValueError(f"input normalisation must have length {n}")
        if not np.all(scale > 0):
            raise ValueError("input_scale must be positive")
        for a in ws + bs + (shift, scale):
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "input_shift", shift)
        object.__setattr__(self, "input_scale", scale)

    # -- construction ------------------------------------------------------

    @classmethod
    def init(cls, layer_sizes: Sequence[int], seed: int = 0, activation="tanh",
             input_shift=None, input_scale=None):
        """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights and biases."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-lim, lim, (fan_out, fan_in)))
            bs.append(rng.uniform(-lim, lim, fan_out))
        return cls(tuple(ws), tuple(bs), activation, input_shift, input_scale)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], activation="tanh"):
        ws = [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        bs = [np.zeros(o) for o in layer_sizes[1:]]
        return cls(tuple(ws), tuple(bs), activation)

    def normalized_to(self, box) -> "NeuralCertificate":
        """Same weights, inputs centred on ``box`` and divided by its largest
        half-width. One scale for all coordinates, so thin directions of the
        box are not stretched (which would inflate the input gradient)."""
        half = float(np.max(0.5 * (box.upper - box.lower)))
        if half <= 0:
            raise ValueError("cannot normalise to a degenerate box")
        return NeuralCertificate(self.weights, self.biases, self.activation,
                                 0.5 * (box.lower + box.upper), np.full(box.dim, half))

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # -- parameter vector --------------------------------------------------

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def unflatten(self, theta) -> "NeuralCertificate":
        """New certificate with the same shape and parameters ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(theta[pos:pos + b.size])
            pos += b.size
        return NeuralCertificate(tuple(ws), tuple(bs), self.activation,
                                 self.input_shift, self.input_scale)

    # -- evaluation --------------------------------------------------------

    def _normalize(self, x):
        return (x - self.input_shift) / self.input_scale

    def _forward(self, x):
        act, _ = ACTIVATIONS[self.activation]
        hidden = []
        a = self._normalize(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = act(a @ w.T + b)
            hidden.append(a)
        out = a @ self.weights[-1][0] + self.biases[-1][0]
        return out, hidden

    def forward(self, x):
        """B(x) for one state (returns float) or a batch ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        xb, single = _as_batch(x, self.dim)
        out, _ = self._forward(xb)
        return float(out[0]) if single else out.reshape(x.shape[:-1])

    __call__ = forward

    def _backprop_input(self, hidden):
        _, dact = ACTIVATIONS[self.activation]
        delta = np.broadcast_to(self.weights[-1][0], (hidden[-1].shape[0] if hidden else 1,
                                                      self.weights[-1].shape[1]))
        for w, a in zip(reversed(self.weights[:-1]), reversed(hidden)):
            delta = (delta * dact(a)) @ w
        return delta / self.input_scale

    def grad_input(self, x):
        """dB/dx for one state or a batch."""
        x = np.asarray(x, dtype=float)
        xb, single = _as_batch(x, self.dim)
        _, hidden = self._forward(xb)
        g = self._backprop_input(hidden)
        if not hidden:
            g = np.broadcast_to(g, xb.shape).copy()
        return g[0] if single else g.reshape(x.shape)

    def value_and_grad_input(self, x):
        xb, _ = _as_batch(x, self.dim)
        out, hidden = self._forward(xb)
        g = self._backprop_input(hidden)
        if not hidden:
            g = np.broadcast_to(g, xb.shape).copy()
        return out, g

    def grad_params_weighted(self, x, coef) -> np.ndarray:
        """``sum_p coef[p] * dB(x_p)/dtheta`` as a flat parameter vector."""
        _, dact = ACTIVATIONS[self.activation]
        xb, _ = _as_batch(x, self.dim)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        if coef.size != xb.shape[0]:
            raise ValueError("one coefficient per point required")
        _, hidden = self._forward(xb)
        inputs = [self._normalize(xb)] + hidden
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = coef[:, None]  # dLoss/d(pre-activation) of the output unit
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = inputs[layer]
            grads_w[layer] = delta.T @ a_in
            grads_b[layer] = delta.sum(axis=0)
            if layer:
                delta = (delta @ self.weights[layer]) * dact(a_in)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def grad_params_batch(self, x) -> np.ndarray:
        """Per-point parameter gradients, shape ``(P, n_params)``."""
        _, dact = ACTIVATIONS[self.activation]
        xb, _ = _as_batch(x, self.dim)
        _, hidden = self._forward(xb)
        inputs = [self._normalize(xb)] + hidden
        cols = [None] * (2 * len(self.weights))
        delta = np.ones((xb.shape[0], 1))
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = inputs[layer]
            cols[2 * layer] = (delta[:, :, None] * a_in[:, None, :]).reshape(xb.shape[0], -1)
            cols[2 * layer + 1] = delta
            if layer:
                delta = (delta @ self.weights[layer]) * dact(a_in)
        return np.concatenate(cols, axis=1)

    def grad_params(self, x) -> np.ndarray:
        """dB(x)/dtheta for a single state, in flat-parameter layout."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("grad_params takes a single state")
        return self.grad_params_weighted(x, [1.0])

    def time_derivative(self, x, system) -> np.ndarray:
        """Lie derivative dB/dt = grad B(x) . f(x)."""
        if system.dim != self.dim:
            raise ValueError(f"certificate dim {self.dim} vs system dim {system.dim}")
        x = np.asarray(x, dtype=float)
        g = self.grad_input(x)
        val = np.sum(g * system.eval(x), axis=-1)
        return float(val) if x.ndim == 1 else val

    def operator_norm_bound(self) -> float:
        """Product of layer spectral norms times the activation's slope bound
        (1 for tanh) and the input normalisation: an upper bound on the
        Lipschitz constant of B."""
        prod = float(np.prod([np.linalg.norm(w, 2) for w in self.weights]))
        return prod / float(self.input_scale.min())

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "input_shift": self.input_shift.tolist(),
            "input_scale": self.input_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "NeuralCertificate":
        cert = cls(tuple(d["weights"]), tuple(d["biases"]), d.get("activation", "tanh"),
                   d.get("input_shift"), d.get("input_scale"))
        if "layer_sizes" in d and list(d["layer_sizes"]) != cert.layer_sizes:
            raise ValueError("layer_sizes disagree with weight shapes")
        return cert

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "NeuralCertificate":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def forward(cert: NeuralCertificate, x):
    return cert.forward(x)


def grad_input(cert: NeuralCertificate, x):
    return cert.grad_input(x)


def grad_params(cert: NeuralCertificate, x):
    return cert.grad_params(x)


def time_derivative(cert: NeuralCertificate, x, system):
    return cert.time_derivative(x, system)


def linear_certificate(w, b=0.0, activation="tanh") -> NeuralCertificate:
    """Single affine layer ``B(x) = w.x + b`` (no hidden layers)."""
    w = np.asarray(w, dtype=float)
    return NeuralCertificate((w[None, :],), (np.array([b], dtype=float),), activation)
