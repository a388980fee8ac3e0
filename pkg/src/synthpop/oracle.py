"""Synthetic ground truth with a fully known joint and provable zero cells.

The generating distribution is a dependency chain P(X1) P(X2|X1) ... so
exact marginals come from one tensor product and the structurally
impossible combinations are exactly the cells whose factor product is 0.
This makes the quantities the evaluation module estimates (sampling zeros,
structural zeros) exactly measurable at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .data import CATEGORICAL, CodedTable, Schema, VariableSpec, schema_from_dict, schema_to_dict
from .errors import SchemaError
from .evaluation import Combo, JointHistogram
from .sampling import categorical_rows

MAX_VARIABLES = 7
MAX_CELLS = 2_000_000

_ROW_SUM_TOL = 1e-12


@dataclass
class GroundTruthSpec:
    """Schema plus the chain of conditional probability tables.

    cpts[0] is P(X1) with shape (c1,); cpts[k] is P(X_{k+1} | X_k) with
    shape (c_k, c_{k+1}). Every row sums to 1 within 1e-12.
    """

    schema: Schema
    cpts: list[np.ndarray]

    def __post_init__(self) -> None:
        cards = self.schema.cardinalities
        if len(cards) > MAX_VARIABLES:
            raise SchemaError(f"ground truth limited to {MAX_VARIABLES} variables")
        if math.prod(cards) > MAX_CELLS:
            raise SchemaError(f"ground truth limited to {MAX_CELLS} cells")
        if len(self.cpts) != len(cards):
            raise SchemaError("need one table per variable")
        self.cpts = [np.asarray(t, dtype=np.float64) for t in self.cpts]
        expected_shapes = [(cards[0],)] + [
            (cards[i - 1], cards[i]) for i in range(1, len(cards))
        ]
        for i, (t, shape) in enumerate(zip(self.cpts, expected_shapes)):
            if t.shape != shape:
                raise SchemaError(f"table {i} has shape {t.shape}, expected {shape}")
            sums = t.sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL) or np.any(t < 0.0):
                raise SchemaError(f"table {i} rows must be distributions summing to 1")

    @property
    def n_c(self) -> int:
        return math.prod(self.schema.cardinalities)


def joint_tensor(spec: GroundTruthSpec) -> np.ndarray:
    """The full joint as a dense tensor over all variables, in schema order."""
    t = spec.cpts[0].copy()
    for cpt in spec.cpts[1:]:
        t = t[..., None] * cpt
    return t


def zero_cells(spec: GroundTruthSpec) -> frozenset[Combo]:
    """All combinations with exact probability 0."""
    t = joint_tensor(spec)
    return frozenset(tuple(int(c) for c in idx) for idx in zip(*np.nonzero(t == 0.0)))


def structural_zero_fraction(spec: GroundTruthSpec) -> float:
    t = joint_tensor(spec)
    return float(np.count_nonzero(t == 0.0)) / t.size


def generate_population(spec: GroundTruthSpec, n: int, seed: int) -> CodedTable:
    """Ancestral sampling along the chain; zero cells can never appear."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cols = []
    first = categorical_rows(np.broadcast_to(spec.cpts[0], (n, spec.cpts[0].size)), rng.random(n))
    cols.append(first)
    for cpt in spec.cpts[1:]:
        cols.append(categorical_rows(cpt[cols[-1]], rng.random(n)))
    return CodedTable(spec.schema, np.column_stack(cols))


def exact_joint(spec: GroundTruthSpec, variables: Sequence[str]) -> JointHistogram:
    """Marginalize the chain product exactly over the subset's complement.

    Returns probabilities (total_rows 0 by convention); cells with
    probability exactly 0 are omitted from the map.
    """
    if not variables:
        raise SchemaError("variable subset must not be empty")
    idx = [spec.schema.index_of(name) for name in variables]
    if len(set(idx)) != len(idx):
        raise SchemaError(f"duplicate variables in subset {variables}")
    t = joint_tensor(spec)
    drop = tuple(sorted(set(range(t.ndim)) - set(idx)))
    marg = t.sum(axis=drop) if drop else t
    # sum() left the kept axes in schema order; axis j of the result must be
    # the variable idx[j], i.e. the rank of idx[j] among the kept axes
    if len(idx) > 1:
        marg = np.transpose(marg, axes=np.argsort(np.argsort(idx)))
    freq = {
        tuple(int(c) for c in cell): float(marg[cell])
        for cell in zip(*np.nonzero(marg > 0.0))
    }
    return JointHistogram(
        variables=tuple(variables),
        cardinalities=tuple(spec.schema.cardinalities[i] for i in idx),
        freq=freq,
        total_rows=0,
        counts=None,
    )


_BENCHMARK_SEED = 167201
_BENCHMARK_CARDS = (8, 8, 6, 5, 4)
_BENCHMARK_VARS = ("home_zone", "work_sector", "income_band", "household_size", "cars")
_BENCHMARK_ZERO_RATE = 0.12


def default_benchmark() -> GroundTruthSpec:
    """The fixed, versioned 5-variable benchmark (N_c = 7,680).

    Chain-dependent with a deterministic pattern of structurally impossible
    cells (over a quarter of the universe). Fixed literals keep the spec,
    its hash, and every downstream result reproducible.
    """
    rng = np.random.default_rng(_BENCHMARK_SEED)
    cards = _BENCHMARK_CARDS
    tables: list[np.ndarray] = []
    w = rng.uniform(0.2, 1.0, size=cards[0])
    tables.append(w / w.sum())
    for k in range(1, len(cards)):
        w = rng.uniform(0.2, 1.0, size=(cards[k - 1], cards[k]))
        mask = rng.random(w.shape) < _BENCHMARK_ZERO_RATE
        # keep one deterministic survivor per row so no conditional dies
        mask[np.arange(cards[k - 1]), np.arange(cards[k - 1]) % cards[k]] = False
        w[mask] = 0.0
        tables.append(w / w.sum(axis=1, keepdims=True))
    variables = tuple(
        VariableSpec(
            name=name,
            kind=CATEGORICAL,
            cardinality=c,
            categories=tuple(f"{name}_{i}" for i in range(c)),
        )
        for name, c in zip(_BENCHMARK_VARS, cards)
    )
    return GroundTruthSpec(Schema(variables), tables)


# --- serialization ----------------------------------------------------------


def spec_to_dict(spec: GroundTruthSpec) -> dict:
    return {
        "schema": schema_to_dict(spec.schema),
        "cpts": [t.tolist() for t in spec.cpts],
    }


def spec_from_dict(doc: dict) -> GroundTruthSpec:
    return GroundTruthSpec(
        schema=schema_from_dict(doc["schema"]),
        cpts=[np.asarray(t, dtype=np.float64) for t in doc["cpts"]],
    )


def save_spec(spec: GroundTruthSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec_to_dict(spec), f, indent=2, sort_keys=True)
        f.write("\n")


def load_spec(path) -> GroundTruthSpec:
    with open(path, encoding="utf-8") as f:
        return spec_from_dict(json.load(f))


def spec_hash(spec: GroundTruthSpec) -> str:
    canon = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
