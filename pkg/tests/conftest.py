"""Shared helpers: independent finite-difference oracles and tiny factories."""

from __future__ import annotations

import numpy as np
import pytest

from synthpop import nn_core
from synthpop.data import CATEGORICAL, Schema, VariableSpec


def rel_err(a, b, floor: float = 1e-3) -> float:
    """Element-wise |a-b| / max(floor, |a|, |b|), reduced to the worst case."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))


def fd_param_grads(mlp, loss_fn, h_scale: float = 1e-6):
    """Central finite differences of loss_fn() over every network parameter.

    loss_fn takes no arguments and must read the current (mutated) mlp.
    Kept deliberately independent of nn_core.backward.
    """
    grads = []
    for layer in mlp.layers:
        layer_grads = []
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                h = h_scale * max(1.0, abs(old))
                arr[idx] = old + h
                lp = loss_fn()
                arr[idx] = old - h
                lm = loss_fn()
                arr[idx] = old
                g[idx] = (lp - lm) / (2.0 * h)
            layer_grads.append(g)
        grads.append(tuple(layer_grads))
    return grads


def random_small_net(rng: np.random.Generator):
    """A random net (<=3 layers, <=8 units) plus a batch clear of relu kinks.

    Returns (mlp, batch, targets_or_None). Softmax-output nets come with
    one-hot targets for a cross-entropy loss; others use a weighted-sum loss.
    """
    acts = ["linear", "relu", "tanh", "sigmoid"]
    n_layers = int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 9)) for _ in range(n_layers + 1)]
    out_kind = rng.choice(acts + ["softmax_blocks"])
    blocks = None
    targets = None
    if out_kind == "softmax_blocks":
        blocks = []
        remaining = sizes[-1]
        while remaining > 0:
            b = int(rng.integers(1, remaining + 1))
            blocks.append(b)
            remaining -= b
        blocks = tuple(blocks)
    hidden_kind = str(rng.choice(acts))
    mlp = nn_core.build_mlp(sizes, hidden_kind, str(out_kind), rng, output_blocks=blocks)
    n_rows = int(rng.integers(1, 5))
    for _ in range(50):
        batch = rng.standard_normal((n_rows, sizes[0]))
        if _min_preact_margin(mlp, batch) > 1e-3:
            break
    if blocks is not None:
        targets = np.zeros((n_rows, sizes[-1]))
        lo = 0
        for b in blocks:
            targets[np.arange(n_rows), lo + rng.integers(0, b, n_rows)] = 1.0
            lo += b
    return mlp, batch, targets


def _min_preact_margin(mlp, batch) -> float:
    """Smallest |pre-activation| in any relu layer (kinks break FD checks)."""
    margin = np.inf
    a = batch
    for layer in mlp.layers:
        z = a @ layer.weights.T + layer.bias
        if layer.activation == "relu" and z.size:
            margin = min(margin, float(np.min(np.abs(z))))
        a = nn_core._activate(z, layer)
    return margin


def tiny_schema(cards=(3, 3), prefix: str = "v") -> Schema:
    return Schema(
        tuple(
            VariableSpec(
                name=f"{prefix}{i}",
                kind=CATEGORICAL,
                cardinality=c,
                categories=tuple(f"{prefix}{i}_{j}" for j in range(c)),
            )
            for i, c in enumerate(cards)
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
