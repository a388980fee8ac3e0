"""Joint-distribution metrics and sampling/structural-zero accounting.

Frequencies are compared over variable subsets. Sampling zeros are the
combinations present in test but absent from train; structural-zero
proxies are generated combinations absent from both. All zero counts are
over DISTINCT combinations, so results are invariant to row order and
duplication in the generated table.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

from .data import CodedTable, Schema
from .errors import ComparabilityError, SchemaError
from .sampling import derive_seed

Combo = tuple[int, ...]

# n = rows to draw, seed -> coded table
SamplerFn = Callable[[int, int], CodedTable]


@dataclass
class JointHistogram:
    """Cell frequencies of a variable subset; n_c is the full cell count."""

    variables: tuple[str, ...]
    cardinalities: tuple[int, ...]
    freq: dict[Combo, float]
    total_rows: int
    counts: dict[Combo, int] | None = None

    @property
    def n_c(self) -> int:
        return math.prod(self.cardinalities)


@dataclass
class ComboSet:
    variables: tuple[str, ...]
    combos: frozenset[Combo]


@dataclass
class CurvePoint:
    n_generated: int
    n_recovered: int
    n_structural_proxy: int
    ratio: float | None


@dataclass
class ZeroReport:
    """Zero-cell bookkeeping for one generated table over one subset.

    `ratio` is structural proxies per recovered sampling zero (lower is
    better) and is None when nothing was recovered.
    """

    variables: tuple[str, ...]
    n_sampling_zeros: int
    n_recovered: int
    recovered_fraction: float
    n_structural_proxy: int
    ratio: float | None
    curve: list[CurvePoint] | None = None


def _subset_indices(schema: Schema, variables: Sequence[str]) -> list[int]:
    if not variables:
        raise SchemaError("variable subset must not be empty")
    if len(set(variables)) != len(variables):
        raise SchemaError(f"duplicate variables in subset {variables}")
    return [schema.index_of(name) for name in variables]


def _subset_rows(table: CodedTable, idx: list[int]) -> list[Combo]:
    return [tuple(row) for row in table.codes[:, idx].tolist()]


def empirical_joint(table: CodedTable, variables: Sequence[str]) -> JointHistogram:
    """Exact cell counts and frequencies of the observed joint."""
    idx = _subset_indices(table.schema, variables)
    counts = Counter(_subset_rows(table, idx))
    total = table.n_rows
    freq = {k: c / total for k, c in counts.items()} if total else {}
    return JointHistogram(
        variables=tuple(variables),
        cardinalities=tuple(table.schema.cardinalities[i] for i in idx),
        freq=freq,
        total_rows=total,
        counts=dict(counts),
    )


def _check_comparable(a: JointHistogram, b: JointHistogram) -> None:
    if a.variables != b.variables or a.n_c != b.n_c:
        raise ComparabilityError(
            f"histograms cover different subsets: {a.variables}/{a.n_c} vs {b.variables}/{b.n_c}"
        )


def srmse(generated: JointHistogram, reference: JointHistogram) -> float:
    """RMSE of cell frequencies standardized by the mean reference frequency.

    Equals sqrt(sum of squared frequency errors * N_c); cells absent from
    either histogram count as frequency 0.
    """
    _check_comparable(generated, reference)
    sq = 0.0
    for key in generated.freq.keys() | reference.freq.keys():
        d = generated.freq.get(key, 0.0) - reference.freq.get(key, 0.0)
        sq += d * d
    return math.sqrt(sq * generated.n_c)


def _paired_cells(generated: JointHistogram, reference: JointHistogram) -> tuple[list[float], list[float]]:
    keys = sorted(generated.freq.keys() | reference.freq.keys())
    x = [reference.freq.get(k, 0.0) for k in keys]
    y = [generated.freq.get(k, 0.0) for k in keys]
    return x, y


def pearson(generated: JointHistogram, reference: JointHistogram) -> float | None:
    """Pearson r over cells observed in either histogram; None if degenerate."""
    _check_comparable(generated, reference)
    x, y = _paired_cells(generated, reference)
    n = len(x)
    if n < 2:
        return None
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        return None
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(sxx * syy)


def r2(generated: JointHistogram, reference: JointHistogram) -> float | None:
    """Coefficient of determination of generated against reference cells."""
    _check_comparable(generated, reference)
    x, y = _paired_cells(generated, reference)
    n = len(x)
    if n == 0:
        return None
    mx = sum(x) / n
    ss_tot = sum((a - mx) ** 2 for a in x)
    if ss_tot == 0.0:
        return None
    ss_res = sum((b - a) ** 2 for a, b in zip(x, y))
    return 1.0 - ss_res / ss_tot


def combo_set(table: CodedTable, variables: Sequence[str]) -> ComboSet:
    idx = _subset_indices(table.schema, variables)
    return ComboSet(tuple(variables), frozenset(_subset_rows(table, idx)))


def combo_key(combo: Combo) -> str:
    """Stable text form of a combination, e.g. (1, 0, 2) -> "1-0-2"."""
    return "-".join(str(c) for c in combo)


def _check_same_schema(*tables: CodedTable) -> None:
    first = tables[0].schema
    for t in tables[1:]:
        if t.schema != first:
            raise ComparabilityError("tables do not share a schema")


def zero_analysis(
    train: CodedTable,
    test: CodedTable,
    generated: CodedTable,
    variables: Sequence[str],
) -> ZeroReport:
    """Classify distinct generated combos against train/test combo sets.

    Every distinct generated combo lands in exactly one of: seen in train,
    recovered sampling zero (in test but not train), or structural proxy
    (in neither).
    """
    _check_same_schema(train, test, generated)
    train_set = combo_set(train, variables).combos
    test_set = combo_set(test, variables).combos
    gen_set = combo_set(generated, variables).combos
    sampling_zeros = test_set - train_set
    recovered = gen_set & sampling_zeros
    structural = gen_set - (train_set | test_set)
    n_sampling = len(sampling_zeros)
    n_recovered = len(recovered)
    return ZeroReport(
        variables=tuple(variables),
        n_sampling_zeros=n_sampling,
        n_recovered=n_recovered,
        recovered_fraction=(n_recovered / n_sampling) if n_sampling else 0.0,
        n_structural_proxy=len(structural),
        ratio=(len(structural) / n_recovered) if n_recovered else None,
    )


def ratio_curve(
    train: CodedTable,
    test: CodedTable,
    generated: CodedTable,
    variables: Sequence[str],
    step: int,
) -> ZeroReport:
    """Zero analysis plus the cumulative ratio after every `step` rows."""
    if step < 1:
        raise ValueError("step must be >= 1")
    _check_same_schema(train, test, generated)
    idx = _subset_indices(train.schema, variables)
    train_set = combo_set(train, variables).combos
    test_set = combo_set(test, variables).combos
    sampling_zeros = test_set - train_set
    seen_union = train_set | test_set

    seen: set[Combo] = set()
    n_recovered = 0
    n_structural = 0
    curve: list[CurvePoint] = []

    def point(n_rows: int) -> CurvePoint:
        ratio = (n_structural / n_recovered) if n_recovered else None
        return CurvePoint(n_rows, n_recovered, n_structural, ratio)

    rows = _subset_rows(generated, idx)
    for i, combo in enumerate(rows, start=1):
        if combo not in seen:
            seen.add(combo)
            if combo in sampling_zeros:
                n_recovered += 1
            elif combo not in seen_union:
                n_structural += 1
        if i % step == 0:
            curve.append(point(i))
    if not curve or curve[-1].n_generated != len(rows):
        curve.append(point(len(rows)))

    report = zero_analysis(train, test, generated, variables)
    report.curve = curve
    return report


@dataclass
class SweepRow:
    variables: tuple[str, ...]
    model: str
    n_c: int
    srmse: float
    pearson: float | None
    r2: float | None
    n_sampling_zeros: int
    n_recovered: int
    recovered_fraction: float
    n_structural_proxy: int
    ratio: float | None


def dimension_sweep(
    train: CodedTable,
    test: CodedTable,
    samplers: Mapping[str, SamplerFn],
    ladder: Sequence[Sequence[str]],
    n: int = 200_000,
    seed: int = 0,
) -> list[SweepRow]:
    """Sample each model once, then score every subset in the ladder.

    Rows come back sorted by subset cell count N_c ascending (models keep
    their given order within a subset).
    """
    generated = {
        name: sampler(n, derive_seed(seed, "sweep", name))
        for name, sampler in samplers.items()
    }
    rows: list[SweepRow] = []
    for variables in ladder:
        ref = empirical_joint(test, variables)
        for name, table in generated.items():
            gen_hist = empirical_joint(table, variables)
            report = zero_analysis(train, test, table, variables)
            rows.append(
                SweepRow(
                    variables=tuple(variables),
                    model=name,
                    n_c=gen_hist.n_c,
                    srmse=srmse(gen_hist, ref),
                    pearson=pearson(gen_hist, ref),
                    r2=r2(gen_hist, ref),
                    n_sampling_zeros=report.n_sampling_zeros,
                    n_recovered=report.n_recovered,
                    recovered_fraction=report.recovered_fraction,
                    n_structural_proxy=report.n_structural_proxy,
                    ratio=report.ratio,
                )
            )
    rows.sort(key=lambda r: r.n_c)
    return rows


def scatter_data(
    generated: JointHistogram, reference: JointHistogram
) -> list[tuple[float, float]]:
    """(reference, generated) frequency pairs over the union of observed cells."""
    _check_comparable(generated, reference)
    x, y = _paired_cells(generated, reference)
    return list(zip(x, y))


def write_report_csv(rows: Sequence[SweepRow], path) -> None:
    """One CSV row per (subset, model); None metrics become empty cells."""

    def fmt(value) -> str:
        return "" if value is None else repr(value)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "subset",
                "model",
                "n_c",
                "srmse",
                "pearson",
                "r2",
                "n_sampling_zeros",
                "n_recovered",
                "recovered_fraction",
                "n_structural_proxy",
                "ratio",
                "undefined_flag",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    "+".join(r.variables),
                    r.model,
                    r.n_c,
                    repr(r.srmse),
                    fmt(r.pearson),
                    fmt(r.r2),
                    r.n_sampling_zeros,
                    r.n_recovered,
                    repr(r.recovered_fraction),
                    r.n_structural_proxy,
                    fmt(r.ratio),
                    int(r.ratio is None),
                ]
            )
