"""Dense feed-forward networks with hand-rolled reverse-mode gradients.

Everything is float64. A network is a plain list of dense layers; forward
keeps per-layer activations so backward can run the chain rule from the
outputs alone (every supported activation has a derivative expressible in
its own output). Batch averaging is the caller's job: loss functions fold
1/batch into the output gradient and backward just sums over rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DivergenceError, EncodingError, ShapeError

ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid", "softmax_blocks")

# Lower bound on ln() arguments in loss terms; keeps losses finite when a
# probability collapses to 0.
LOG_CLAMP = 1e-12

_ACT_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}
_MAGIC = b"SPZN"
_FORMAT_VERSION = 1


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


@dataclass
class DenseLayer:
    """One dense layer: out = activation(weights @ in + bias).

    `weights` is (out, in); `blocks` partitions the output into softmax
    segments and is required iff activation == "softmax_blocks".
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str
    blocks: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        self.weights = _as_matrix(self.weights, "weights")
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "softmax_blocks":
            if not self.blocks or sum(self.blocks) != self.out_dim:
                raise ShapeError(
                    f"softmax blocks {self.blocks} must sum to output width {self.out_dim}"
                )
            self.blocks = tuple(int(b) for b in self.blocks)
        elif self.blocks is not None:
            raise ValueError("blocks are only meaningful for softmax_blocks")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    """A chain of dense layers; consecutive dimensions must agree."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def glorot_layer(
    in_dim: int,
    out_dim: int,
    activation: str,
    rng: np.random.Generator,
    blocks: tuple[int, ...] | None = None,
) -> DenseLayer:
    """Glorot-style uniform init in +-sqrt(6/(in+out)); biases zero."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(w, np.zeros(out_dim), activation, blocks)


def build_mlp(
    sizes: list[int],
    hidden_activation: str,
    output_activation: str,
    rng: np.random.Generator,
    output_blocks: tuple[int, ...] | None = None,
) -> Mlp:
    """Build an Mlp from a width list [in, h1, .., out]."""
    if len(sizes) < 2:
        raise ShapeError("need at least input and output widths")
    layers = []
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        layers.append(
            glorot_layer(
                sizes[i],
                sizes[i + 1],
                output_activation if last else hidden_activation,
                rng,
                output_blocks if last else None,
            )
        )
    return Mlp(layers)


def block_slices(blocks: tuple[int, ...]) -> list[tuple[int, int]]:
    spans = []
    lo = 0
    for b in blocks:
        spans.append((lo, lo + b))
        lo += b
    return spans


@lru_cache(maxsize=None)
def _block_geometry(blocks: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    widths = np.asarray(blocks, dtype=np.intp)
    starts = np.concatenate([[0], np.cumsum(widths)[:-1]])
    return starts, widths


def softmax_blocks(z: np.ndarray, blocks: tuple[int, ...]) -> np.ndarray:
    """Block-wise softmax with per-block max subtraction for overflow safety."""
    starts, widths = _block_geometry(blocks)
    m = np.maximum.reduceat(z, starts, axis=1)
    e = np.exp(z - np.repeat(m, widths, axis=1))
    s = np.add.reduceat(e, starts, axis=1)
    return e / np.repeat(s, widths, axis=1)


def softmax_blocks_vjp(
    probs: np.ndarray, grad: np.ndarray, blocks: tuple[int, ...]
) -> np.ndarray:
    """Pull `grad` back through a block softmax evaluated at `probs`."""
    starts, widths = _block_geometry(blocks)
    s = np.add.reduceat(grad * probs, starts, axis=1)
    return probs * (grad - np.repeat(s, widths, axis=1))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if layer.activation == "linear":
        return z
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    if layer.activation == "tanh":
        return np.tanh(z)
    if layer.activation == "sigmoid":
        return _sigmoid(z)
    return softmax_blocks(z, layer.blocks)


def forward(mlp: Mlp, batch) -> list[np.ndarray]:
    """Run the network on a batch (rows are samples).

    Returns [input, a_1, ..., a_L]; entry l is the output of layer l.
    """
    a = _as_matrix(batch, "batch")
    if a.shape[1] != mlp.in_dim:
        raise ShapeError(f"batch width {a.shape[1]} != network input {mlp.in_dim}")
    acts = [a]
    for layer in mlp.layers:
        z = a @ layer.weights.T + layer.bias
        a = _activate(z, layer)
        # a finite sum certifies every entry is finite (NaN/Inf propagate)
        if not np.isfinite(a.sum()):
            raise DivergenceError(
                f"non-finite activations after a {layer.activation} layer"
            )
        acts.append(a)
    return acts


def _activation_vjp(layer: DenseLayer, a_out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if layer.activation == "linear":
        return grad
    if layer.activation == "relu":
        return grad * (a_out > 0.0)
    if layer.activation == "tanh":
        return grad * (1.0 - a_out * a_out)
    if layer.activation == "sigmoid":
        return grad * a_out * (1.0 - a_out)
    return softmax_blocks_vjp(a_out, grad, layer.blocks)


def backward(
    mlp: Mlp,
    activations: list[np.ndarray],
    output_gradient,
    from_logits: bool = False,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Chain-rule pass over activations produced by forward on the same mlp.

    Returns ([(dW_l, db_l) per layer], gradient w.r.t. the input batch).
    With from_logits=True the output gradient is taken w.r.t. the final
    pre-activation, skipping the last activation derivative (that is how
    cross_entropy_blocks hands back its gradient).
    """
    g = _as_matrix(output_gradient, "output_gradient")
    if len(activations) != len(mlp.layers) + 1:
        raise ShapeError("activations do not match network depth")
    if g.shape != activations[-1].shape:
        raise ShapeError(
            f"output gradient shape {g.shape} != output shape {activations[-1].shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(mlp.layers)  # type: ignore
    for l in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[l]
        if l == len(mlp.layers) - 1 and from_logits:
            dz = g
        else:
            dz = _activation_vjp(layer, activations[l + 1], g)
        grads[l] = (dz.T @ activations[l], dz.sum(axis=0))
        g = dz @ layer.weights
    return grads, g


@dataclass
class AdamState:
    """Adam optimizer moments, mirroring the parameter shapes of one Mlp."""

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(
    mlp: Mlp,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    def zeros(layer: DenseLayer) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros_like(layer.weights), np.zeros_like(layer.bias)

    return AdamState(
        m=[zeros(l) for l in mlp.layers],
        v=[zeros(l) for l in mlp.layers],
        t=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    mlp: Mlp,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update; returns a new network and state."""
    if len(grads) != len(mlp.layers):
        raise ShapeError("gradient list does not match network depth")
    for gw, gb in grads:
        if not (np.isfinite(gw.sum()) and np.isfinite(gb.sum())):
            raise DivergenceError("non-finite gradient entries in adam_step")
    t = state.t + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.epsilon, state.learning_rate
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_layers, new_m, new_v = [], [], []
    for layer, (gw, gb), (mw, mb), (vw, vb) in zip(mlp.layers, grads, state.m, state.v):
        mw2 = b1 * mw + (1.0 - b1) * gw
        mb2 = b1 * mb + (1.0 - b1) * gb
        vw2 = b2 * vw + (1.0 - b2) * gw * gw
        vb2 = b2 * vb + (1.0 - b2) * gb * gb
        w = layer.weights - lr * (mw2 / corr1) / (np.sqrt(vw2 / corr2) + eps)
        b = layer.bias - lr * (mb2 / corr1) / (np.sqrt(vb2 / corr2) + eps)
        new_layers.append(DenseLayer(w, b, layer.activation, layer.blocks))
        new_m.append((mw2, mb2))
        new_v.append((vw2, vb2))
    new_state = AdamState(new_m, new_v, t, lr, b1, b2, eps)
    return Mlp(new_layers), new_state


def clip_weights(mlp: Mlp, c: float) -> Mlp:
    """Clamp every weight and bias entry into [-c, c]."""
    if not c > 0:
        raise ValueError("clip bound must be positive")
    layers = [
        DenseLayer(
            np.clip(l.weights, -c, c), np.clip(l.bias, -c, c), l.activation, l.blocks
        )
        for l in mlp.layers
    ]
    return Mlp(layers)


def cross_entropy_blocks(
    probs, targets, blocks: tuple[int, ...]
) -> tuple[float, np.ndarray]:
    """Block cross-entropy between softmax outputs and one-hot targets.

    Returns the batch-mean loss and its gradient w.r.t. the pre-softmax
    logits, (probs - targets) / batch.
    """
    p = _as_matrix(probs, "probs")
    t = _as_matrix(targets, "targets")
    if p.shape != t.shape:
        raise ShapeError(f"probs {p.shape} and targets {t.shape} differ")
    if sum(blocks) != p.shape[1]:
        raise ShapeError("blocks do not cover the row width")
    starts, _ = _block_geometry(blocks)
    binary = ((t == 0.0) | (t == 1.0)).all()
    if not (binary and (np.add.reduceat(t, starts, axis=1) == 1.0).all()):
        raise EncodingError("targets are not one-hot within every block")
    n = p.shape[0]
    loss = -float((t * np.log(np.maximum(p, LOG_CLAMP))).sum()) / n
    return loss, (p - t) / n


def save_mlp(mlp: Mlp, path) -> None:
    """Versioned little-endian binary dump of a network."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _FORMAT_VERSION, len(mlp.layers)))
        for layer in mlp.layers:
            blocks = layer.blocks or ()
            f.write(
                struct.pack(
                    "<IIII",
                    layer.in_dim,
                    layer.out_dim,
                    _ACT_TAGS[layer.activation],
                    len(blocks),
                )
            )
            for b in blocks:
                f.write(struct.pack("<I", b))
            f.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_mlp(path) -> Mlp:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a network file (bad magic)")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off = 12
    layers = []
    for _ in range(n_layers):
        in_dim, out_dim, tag, n_blocks = struct.unpack_from("<IIII", data, off)
        off += 16
        blocks = struct.unpack_from(f"<{n_blocks}I", data, off) if n_blocks else None
        off += 4 * n_blocks
        w = np.frombuffer(data, dtype="<f8", count=in_dim * out_dim, offset=off)
        off += 8 * in_dim * out_dim
        b = np.frombuffer(data, dtype="<f8", count=out_dim, offset=off)
        off += 8 * out_dim
        layers.append(
            DenseLayer(
                w.reshape(out_dim, in_dim).copy(),
                b.copy(),
                ACTIVATIONS[tag],
                tuple(blocks) if blocks else None,
            )
        )
    return Mlp(layers)
