"""Dense math kernel: random-weight MLPs, softmax and categorical draws.

Parameters are stored as float32; all arithmetic accumulates in float64.
The dense product used here reduces over the input dimension in a fixed
order that does not depend on the row position, so results for a row are
bit-identical regardless of which batch (or batch position) it is evaluated
in. BLAS ``matmul`` does not give that guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .rng import Rng

ACTIVATIONS = ("relu", "tanh", "identity")


def dense(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-exact ``x @ w`` for 2-D ``x`` of shape (n, fan_in)."""
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense: input width {x.shape[1]} != fan_in {w.shape[0]}")
    if w.shape[0] == 0:
        return np.zeros((x.shape[0], w.shape[1]))
    out = x[:, 0:1] * w[0]
    for i in range(1, w.shape[0]):
        out = out + x[:, i : i + 1] * w[i]
    return out


def _activate(h, name):
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "tanh":
        return np.tanh(h)
    return h


@dataclass(frozen=True)
class MlpParams:
    layer_dims: tuple
    weights: tuple  # float32 (fan_in, fan_out) per layer
    biases: tuple  # float32 (fan_out,) per layer
    activations: tuple  # one per hidden layer; output layer is linear
    _w64: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("layer count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise DimensionError(f"layer {i}: weight {w.shape} / bias {b.shape} vs dims {dims}")
            if not np.all(np.isfinite(w)):
                raise ContractError(f"layer {i} has non-finite weights")
        if len(self.activations) != len(dims) - 2:
            raise DimensionError("need exactly one activation per hidden layer")
        object.__setattr__(
            self,
            "_w64",
            tuple((w.astype(np.float64), b.astype(np.float64)) for w, b in zip(self.weights, self.biases)),
        )

    @property
    def fan_in(self) -> int:
        return self.layer_dims[0]

    @property
    def fan_out(self) -> int:
        return self.layer_dims[-1]

    def scaled(self, factor: float) -> "MlpParams":
        """Copy with the last layer multiplied by ``factor`` (0 gives a zero map)."""
        ws = list(self.weights)
        ws[-1] = (ws[-1] * np.float32(factor)).astype(np.float32)
        bs = list(self.biases)
        bs[-1] = (bs[-1] * np.float32(factor)).astype(np.float32)
        return MlpParams(self.layer_dims, tuple(ws), tuple(bs), self.activations)


def mlp_init(rng: Rng, layer_dims, activation: str = "relu") -> MlpParams:
    """Kaiming-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"invalid MLP layer dims {list(layer_dims)}", "layer_dims")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}", "activation")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
        # float32 rounding may nudge a draw just past the bound
        weights.append(np.clip(w, np.float32(-bound), np.float32(bound)))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return MlpParams(dims, tuple(weights), tuple(biases), (activation,) * (len(dims) - 2))


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Apply the MLP to a vector (fan_in,) or a batch (n, fan_in); returns float64."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.fan_in:
        raise DimensionError(f"expected input width {params.fan_in}, got shape {np.shape(x)}")
    h = x
    last = len(params._w64) - 1
    for i, (w, b) in enumerate(params._w64):
        h = dense(h, w) + b
        if i < last:
            h = _activate(h, params.activations[i])
    return h[0] if single else h


def mlp_vjp(params: MlpParams, x, grad_out) -> np.ndarray:
    """Gradient of ``sum(grad_out * mlp_forward(params, x))`` with respect to ``x`` (batched)."""
    x = np.asarray(x, dtype=np.float64)
    acts, pre = [x], []
    last = len(params._w64) - 1
    h = x
    for i, (w, b) in enumerate(params._w64):
        a = dense(h, w) + b
        pre.append(a)
        h = _activate(a, params.activations[i]) if i < last else a
        acts.append(h)
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(last, -1, -1):
        if i < last:
            name = params.activations[i]
            if name == "relu":
                g = g * (pre[i] > 0)
            elif name == "tanh":
                g = g * (1.0 - np.tanh(pre[i]) ** 2)
        g = dense(g, params._w64[i][0].T)
    return g


def softmax(scores, axis: int = -1) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0 or s.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    if not np.all(np.isfinite(s)):
        raise ContractError("softmax scores must be finite")
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def categorical_from_uniform(probs, u) -> np.ndarray:
    """Inverse-CDF categorical draw for each row of ``probs`` given uniforms ``u``."""
    p = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(p, axis=-1)
    idx = (cdf <= (np.asarray(u) * cdf[..., -1])[..., None]).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def sample_categorical(probs, rng: Rng, size=None):
    """Draw index i with probability probs[i].

    A 1-D ``probs`` gives one int (or ``size`` draws); a batch (n, k) gives one
    index per row.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        raise DimensionError("empty probability vector")
    if np.any(p < 0):
        raise ContractError("negative probability")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-6):
        raise ContractError("probabilities must sum to 1")
    if p.ndim == 1:
        if size is None:
            return int(categorical_from_uniform(p, rng.random()))
        u = rng.random(size)
        return categorical_from_uniform(np.broadcast_to(p, np.shape(u) + p.shape), u)
    return categorical_from_uniform(p, rng.random(p.shape[0]))
