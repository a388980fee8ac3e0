"""Raw table ingestion, quantile binning, splitting, and one-hot codecs.

The pipeline is: CSV -> RawTable -> (drop sparse columns, bin/encode) ->
CodedTable -> one-hot EncodedMatrix. A CodedTable plus its Schema is the
common currency between preprocessing, models, and evaluation; row order
never carries information.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .errors import EncodingError, IngestionError, SchemaError

CATEGORICAL = "categorical"
NUMERICAL_BINNED = "numerical-binned"

# Label used when missing categorical values become their own category.
MISSING_LABEL = "missing"

DEFAULT_BINS = 5
DEFAULT_SPARSE_THRESHOLD = 0.2
DEFAULT_SPLIT = (0.4, 0.4, 0.2)


@dataclass(frozen=True)
class VariableSpec:
    """Name, kind and category layout of one agent attribute.

    For numerical-binned variables `bin_edges` are the right-closed bin
    boundaries and `missing_bin` marks a trailing extra bin holding rows
    whose raw value was missing.
    """

    name: str
    kind: str
    cardinality: int
    bin_edges: tuple[float, ...] | None = None
    categories: tuple[str, ...] | None = None
    missing_bin: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (CATEGORICAL, NUMERICAL_BINNED):
            raise SchemaError(f"unknown variable kind {self.kind!r}")
        if self.cardinality < 1:
            raise SchemaError(f"{self.name}: cardinality must be >= 1")
        if self.kind == CATEGORICAL:
            if self.categories is None or len(self.categories) != self.cardinality:
                raise SchemaError(f"{self.name}: need one label per category")
            if self.bin_edges is not None:
                raise SchemaError(f"{self.name}: categorical variables have no edges")
        else:
            edges = self.bin_edges if self.bin_edges is not None else ()
            if any(a >= b for a, b in zip(edges, edges[1:])):
                raise SchemaError(f"{self.name}: bin edges must be strictly ascending")
            expected = len(edges) + 1 + (1 if self.missing_bin else 0)
            if self.cardinality != expected:
                raise SchemaError(
                    f"{self.name}: cardinality {self.cardinality} != bins {expected}"
                )


@dataclass(frozen=True)
class Schema:
    """Ordered variable list; fixes the one-hot block layout."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise SchemaError("schema has no variables")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    @property
    def one_hot_width(self) -> int:
        return sum(self.cardinalities)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for c in self.cardinalities:
            out.append(acc)
            acc += c
        return tuple(out)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise SchemaError(f"unknown variable {name!r}")


@dataclass
class CodedTable:
    """Rows of per-variable category codes, validated against the schema."""

    schema: Schema
    codes: np.ndarray

    def __post_init__(self) -> None:
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2 or self.codes.shape[1] != len(self.schema.variables):
            raise EncodingError(
                f"codes shape {self.codes.shape} does not match schema width"
            )
        for j, var in enumerate(self.schema.variables):
            col = self.codes[:, j]
            if col.size and (col.min() < 0 or col.max() >= var.cardinality):
                raise EncodingError(f"{var.name}: code out of range [0, {var.cardinality})")

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]


@dataclass
class EncodedMatrix:
    """One-hot block matrix aligned to a schema."""

    schema: Schema
    matrix: np.ndarray


@dataclass
class RawColumn:
    name: str
    kind: str  # "categorical" | "numerical"
    values: list  # str|None, or float|None for numerical

    @property
    def missing_fraction(self) -> float:
        if not self.values:
            return 0.0
        return sum(v is None for v in self.values) / len(self.values)


@dataclass
class RawTable:
    columns: list[RawColumn]

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0


def load_csv(path, numerical: tuple[str, ...] | list[str] = ()) -> RawTable:
    """Read a UTF-8 comma-separated file; empty fields become missing.

    Columns named in `numerical` are parsed as floats, the rest stay
    categorical strings. The header is file row 1; data rows are numbered
    from 2 in error messages.
    """
    numerical = set(numerical)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise IngestionError(f"{path}: duplicate headers {dupes}")
        unknown = numerical - set(header)
        if unknown:
            raise IngestionError(f"{path}: declared numerical columns not present: {sorted(unknown)}")
        cols: list[list] = [[] for _ in header]
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: ragged row {i + 2} has {len(row)} fields, expected {len(header)}"
                )
            for j, field in enumerate(row):
                if field == "":
                    cols[j].append(None)
                elif header[j] in numerical:
                    try:
                        cols[j].append(float(field))
                    except ValueError:
                        raise IngestionError(
                            f"{path}: row {i + 2}, column {header[j]!r}: "
                            f"cannot parse {field!r} as a number"
                        ) from None
                else:
                    cols[j].append(field)
    kinds = ["numerical" if h in numerical else CATEGORICAL for h in header]
    return RawTable([RawColumn(h, k, v) for h, k, v in zip(header, kinds, cols)])


def drop_sparse_columns(table: RawTable, threshold: float = DEFAULT_SPARSE_THRESHOLD) -> RawTable:
    """Drop every column whose missing fraction strictly exceeds `threshold`."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    kept = [c for c in table.columns if c.missing_fraction <= threshold]
    if not kept:
        raise SchemaError("all columns dropped; nothing left to model")
    return RawTable(kept)


def dropped_columns(table: RawTable, threshold: float = DEFAULT_SPARSE_THRESHOLD) -> list[str]:
    return [c.name for c in table.columns if c.missing_fraction > threshold]


def quantile_bin(values, k: int = DEFAULT_BINS, name: str = "value") -> tuple[VariableSpec, np.ndarray]:
    """Bin reals into at most k quantile bins; returns the spec and codes.

    Edges sit at the i/k lower quantiles (nearest-rank) of the non-missing
    values; duplicates merge and edges at or above the maximum are dropped
    (they would bound an empty top bin). Bins are right-closed: code(v) is
    the index of the first edge >= v. Missing values, if any, get one
    trailing bin of their own.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = list(values)
    observed = sorted(v for v in vals if v is not None)
    if not observed:
        raise SchemaError(f"{name}: all values missing, cannot bin")
    n = len(observed)
    edges = sorted({observed[math.ceil(i * n / k) - 1] for i in range(1, k)})
    vmax = observed[-1]
    edges = [e for e in edges if e < vmax]
    n_bins = len(edges) + 1
    has_missing = any(v is None for v in vals)
    codes = np.fromiter(
        (n_bins if v is None else bisect_left(edges, v) for v in vals),
        dtype=np.int64,
        count=len(vals),
    )
    spec = VariableSpec(
        name=name,
        kind=NUMERICAL_BINNED,
        cardinality=n_bins + (1 if has_missing else 0),
        bin_edges=tuple(float(e) for e in edges),
        missing_bin=has_missing,
    )
    return spec, codes


def categorical_codes(values, name: str = "value") -> tuple[VariableSpec, np.ndarray]:
    """Map labels to codes; missing values become the explicit 'missing' label."""
    labels = [MISSING_LABEL if v is None else str(v) for v in values]
    if not labels:
        raise SchemaError(f"{name}: empty column")
    categories = tuple(sorted(set(labels)))
    index = {c: i for i, c in enumerate(categories)}
    codes = np.fromiter((index[v] for v in labels), dtype=np.int64, count=len(labels))
    spec = VariableSpec(name=name, kind=CATEGORICAL, cardinality=len(categories), categories=categories)
    return spec, codes


def code_table(table: RawTable, k: int = DEFAULT_BINS) -> CodedTable:
    """Bin numerical columns and code categorical ones into one CodedTable."""
    specs, columns = [], []
    for col in table.columns:
        if col.kind == "numerical":
            spec, codes = quantile_bin(col.values, k, name=col.name)
        else:
            spec, codes = categorical_codes(col.values, name=col.name)
        specs.append(spec)
        columns.append(codes)
    return CodedTable(Schema(tuple(specs)), np.column_stack(columns))


def split(
    table: CodedTable,
    fractions: tuple[float, float, float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> tuple[CodedTable, CodedTable, CodedTable]:
    """Shuffle deterministically under `seed`, then cut train/validation/test.

    Sizes are floor(N * f); remainder rows go to train.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("need three positive fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, expected 1")
    n = table.n_rows
    if n < 3:
        raise SchemaError(f"too few rows to split: {n}")
    n_val = math.floor(n * fractions[1])
    n_test = math.floor(n * fractions[2])
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    parts = (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )
    return tuple(CodedTable(table.schema, table.codes[p]) for p in parts)  # type: ignore[return-value]


def one_hot_encode(coded: CodedTable) -> EncodedMatrix:
    """Place a 1 at each variable's block offset + code."""
    schema = coded.schema
    n = coded.n_rows
    m = np.zeros((n, schema.one_hot_width), dtype=np.float64)
    rows = np.arange(n)
    for j, off in enumerate(schema.offsets):
        m[rows, off + coded.codes[:, j]] = 1.0
    return EncodedMatrix(schema, m)


def decode(row, schema: Schema) -> np.ndarray:
    """Per-block argmax of one encoded row back to a code vector."""
    r = np.asarray(row, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] != schema.one_hot_width:
        raise EncodingError(f"row width {r.shape} != schema width {schema.one_hot_width}")
    codes = np.empty(len(schema.variables), dtype=np.int64)
    for j, (off, card) in enumerate(zip(schema.offsets, schema.cardinalities)):
        codes[j] = int(np.argmax(r[off : off + card]))
    return codes


def decode_matrix(encoded: EncodedMatrix) -> CodedTable:
    schema = encoded.schema
    m = np.asarray(encoded.matrix, dtype=np.float64)
    cols = [
        np.argmax(m[:, off : off + card], axis=1)
        for off, card in zip(schema.offsets, schema.cardinalities)
    ]
    return CodedTable(schema, np.column_stack(cols) if cols else m.astype(np.int64))


# --- serialization ----------------------------------------------------------


def schema_to_dict(schema: Schema) -> dict:
    return {
        "variables": [
            {
                "name": v.name,
                "kind": v.kind,
                "cardinality": v.cardinality,
                "bin_edges": list(v.bin_edges) if v.bin_edges is not None else None,
                "categories": list(v.categories) if v.categories is not None else None,
                "missing_bin": v.missing_bin,
            }
            for v in schema.variables
        ]
    }


def schema_from_dict(doc: dict) -> Schema:
    variables = []
    for item in doc["variables"]:
        variables.append(
            VariableSpec(
                name=item["name"],
                kind=item["kind"],
                cardinality=int(item["cardinality"]),
                bin_edges=tuple(item["bin_edges"]) if item.get("bin_edges") is not None else None,
                categories=tuple(item["categories"]) if item.get("categories") is not None else None,
                missing_bin=bool(item.get("missing_bin", False)),
            )
        )
    return Schema(tuple(variables))


def save_schema(schema: Schema, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(schema_to_dict(schema), f, indent=2, sort_keys=True)
        f.write("\n")


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as f:
        return schema_from_dict(json.load(f))


def schema_hash(schema: Schema) -> str:
    canon = json.dumps(schema_to_dict(schema), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_coded_csv(table: CodedTable, path) -> None:
    """Coded rows as integers under the schema's variable-name header."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(table.schema.names)
        writer.writerows(table.codes.tolist())


def read_coded_csv(path, schema: Schema) -> CodedTable:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if tuple(header) != schema.names:
            raise IngestionError(f"{path}: header {header} does not match schema")
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise IngestionError(f"{path}: ragged row {i + 2}")
            try:
                rows.append([int(x) for x in row])
            except ValueError:
                raise IngestionError(f"{path}: row {i + 2}: non-integer code") from None
    codes = np.asarray(rows, dtype=np.int64) if rows else np.empty((0, len(header)), dtype=np.int64)
    return CodedTable(schema, codes)
