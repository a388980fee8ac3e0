"""Batch experiment surface.

    synthpop <preprocess|train|generate|evaluate|sweep|synth-data>
             --config <file.json> [--seed N] [--out PATH]

Each subcommand reads one JSON config (flags override its "seed"/"out"
keys), validates it fully before touching the filesystem, and removes
every file it wrote if anything fails midway. Identical config and seed
produce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import models, oracle, svgplot
from .data import (
    DEFAULT_BINS,
    DEFAULT_SPARSE_THRESHOLD,
    DEFAULT_SPLIT,
    code_table,
    drop_sparse_columns,
    dropped_columns,
    load_csv,
    load_schema,
    read_coded_csv,
    save_schema,
    split,
    write_coded_csv,
)
from .errors import SynthpopError
from .evaluation import (
    SweepRow,
    combo_key,
    dimension_sweep,
    empirical_joint,
    pearson,
    r2,
    ratio_curve,
    scatter_data,
    srmse,
    write_report_csv,
    zero_analysis,
)
from .models import TrainConfig
from .sampling import derive_seed

SUBCOMMANDS = ("preprocess", "train", "generate", "evaluate", "sweep", "synth-data")


class ConfigError(SynthpopError):
    """The run configuration is invalid; nothing was written."""


class _Outputs:
    """Tracks written files so a failed run leaves nothing behind."""

    def __init__(self) -> None:
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def write_text(self, path, text: str) -> Path:
        p = self.add(path)
        p.write_text(text, encoding="utf-8")
        return p

    def cleanup(self) -> None:
        for p in self.paths:
            p.unlink(missing_ok=True)


def _require(cfg: dict, key: str, kind, what: str):
    if key not in cfg:
        raise ConfigError(f"{what}: missing required key {key!r}")
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{what}: key {key!r} must be {kind}")
    return value


def _existing_file(cfg: dict, key: str, what: str) -> Path:
    path = Path(_require(cfg, key, str, what))
    if not path.is_file():
        raise ConfigError(f"{what}: {key} file not found: {path}")
    return path


def _positive_int(cfg: dict, key: str, default: int | None, what: str) -> int:
    value = cfg.get(key, default)
    if not isinstance(value, int) or value < 1:
        raise ConfigError(f"{what}: key {key!r} must be a positive integer")
    return value


def _seed(cfg: dict) -> int:
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return seed


def _subset_list(cfg: dict, key: str, schema, what: str) -> list[list[str]]:
    subsets = _require(cfg, key, list, what)
    if not subsets:
        raise ConfigError(f"{what}: {key} must not be empty")
    for subset in subsets:
        if not isinstance(subset, list) or not subset:
            raise ConfigError(f"{what}: every {key} entry must be a non-empty list")
        for name in subset:
            if not isinstance(name, str):
                raise ConfigError(f"{what}: variable names must be strings")
            schema.index_of(name)  # raises SchemaError for unknown names
    return subsets


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    overrides = dict(cfg.get("train_config", {}))
    overrides.setdefault("seed", seed)
    try:
        return TrainConfig.from_dict(overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train_config: {exc}") from None


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(out: _Outputs, path, header: list[str], rows: list[list]) -> Path:
    p = out.add(path)
    with open(p, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])
    return p


# --- subcommands ------------------------------------------------------------


def cmd_preprocess(cfg: dict, out: _Outputs) -> None:
    what = "preprocess"
    input_path = _existing_file(cfg, "input", what)
    numerical = cfg.get("numerical", [])
    if not isinstance(numerical, list) or not all(isinstance(x, str) for x in numerical):
        raise ConfigError(f"{what}: 'numerical' must be a list of column names")
    bins = _positive_int(cfg, "bins", DEFAULT_BINS, what)
    threshold = float(cfg.get("sparse_threshold", DEFAULT_SPARSE_THRESHOLD))
    fractions = tuple(cfg.get("fractions", DEFAULT_SPLIT))
    seed = _seed(cfg)
    out_dir = Path(_require(cfg, "out", str, what))

    raw = load_csv(input_path, numerical)
    for name in dropped_columns(raw, threshold):
        print(f"dropped column {name!r} (missing fraction above {threshold})")
    raw = drop_sparse_columns(raw, threshold)
    coded = code_table(raw, bins)
    train, validation, test = split(coded, fractions, derive_seed(seed, "split"))

    save_schema(coded.schema, out.add(out_dir / "schema.json"))
    write_coded_csv(train, out.add(out_dir / "train.csv"))
    write_coded_csv(validation, out.add(out_dir / "validation.csv"))
    write_coded_csv(test, out.add(out_dir / "test.csv"))


def cmd_train(cfg: dict, out: _Outputs) -> None:
    what = "train"
    kind = _require(cfg, "model", str, what)
    if kind not in ("vae", "wgan", "marginal"):
        raise ConfigError(f"{what}: unknown model kind {kind!r}")
    schema = load_schema(_existing_file(cfg, "schema", what))
    train_table = read_coded_csv(_existing_file(cfg, "train", what), schema)
    seed = _seed(cfg)
    config = _train_config(cfg, seed)
    out_dir = Path(_require(cfg, "out", str, what))
    name = cfg.get("name", kind)
    search = cfg.get("search")
    if search is not None and kind == "marginal":
        raise ConfigError(f"{what}: random search needs a trainable model")
    validation = None
    if search is not None:
        n_trials = _positive_int(search, "n_trials", None, f"{what}.search")
        validation = read_coded_csv(_existing_file(cfg, "validation", what), schema)

    if kind == "marginal":
        model = models.marginal_fit(train_table)
        log_rows, log_header = [], None
    elif search is not None:
        trials = models.random_search(train_table, validation, kind, n_trials, seed, config)
        _write_csv(
            out,
            out_dir / f"{name}_trials.csv",
            ["trial", "validation_srmse", "config"],
            [[t.trial, t.validation_srmse, json.dumps(t.config.to_dict(), sort_keys=True)] for t in trials],
        )
        config = trials[0].config
        model, log = (models.fit_vae if kind == "vae" else models.fit_wgan)(train_table, config)
        log_rows, log_header = _epoch_rows(log)
    else:
        model, log = (models.fit_vae if kind == "vae" else models.fit_wgan)(train_table, config)
        log_rows, log_header = _epoch_rows(log)

    # register the model files before writing so a failure cleans them up
    nets = {"vae": ("encoder", "decoder"), "wgan": ("generator", "critic"), "marginal": ()}[kind]
    for net in nets:
        out.add(out_dir / f"{name}.{net}.bin")
    out.add(out_dir / f"{name}.json")
    models.save_model(model, out_dir / name, config)
    if log_header is not None:
        _write_csv(out, out_dir / f"{name}_training_log.csv", log_header, log_rows)


def _epoch_rows(log) -> tuple[list[list], list[str]]:
    if log and isinstance(log[0], models.VaeEpochStats):
        return [[s.epoch, s.loss, s.recon, s.kl] for s in log], ["epoch", "loss", "recon", "kl"]
    return (
        [[s.epoch, s.critic_loss, s.generator_loss, s.score_gap] for s in log],
        ["epoch", "critic_loss", "generator_loss", "score_gap"],
    )


def cmd_generate(cfg: dict, out: _Outputs) -> None:
    what = "generate"
    prefix = Path(_require(cfg, "model", str, what))
    sidecar = prefix.with_name(prefix.name + ".json")
    if not sidecar.is_file():
        raise ConfigError(f"{what}: model sidecar not found: {sidecar}")
    n = _positive_int(cfg, "n", None, what)
    seed = _seed(cfg)
    out_path = Path(_require(cfg, "out", str, what))
    model = models.load_model(prefix)
    table = models.sample_from(model, n, derive_seed(seed, "sample"))
    write_coded_csv(table, out.add(out_path))


def _safe_name(variables) -> str:
    return "_".join(variables)


def cmd_evaluate(cfg: dict, out: _Outputs) -> None:
    what = "evaluate"
    schema = load_schema(_existing_file(cfg, "schema", what))
    train = read_coded_csv(_existing_file(cfg, "train", what), schema)
    test = read_coded_csv(_existing_file(cfg, "test", what), schema)
    generated_path = _existing_file(cfg, "generated", what)
    generated = read_coded_csv(generated_path, schema)
    subsets = _subset_list(cfg, "subsets", schema, what)
    label = cfg.get("label", generated_path.stem)
    out_dir = Path(_require(cfg, "out", str, what))

    rows: list[SweepRow] = []
    for subset in subsets:
        ref = empirical_joint(test, subset)
        gen_hist = empirical_joint(generated, subset)
        report = zero_analysis(train, test, generated, subset)
        metrics = SweepRow(
            variables=tuple(subset),
            model=label,
            n_c=ref.n_c,
            srmse=srmse(gen_hist, ref),
            pearson=pearson(gen_hist, ref),
            r2=r2(gen_hist, ref),
            n_sampling_zeros=report.n_sampling_zeros,
            n_recovered=report.n_recovered,
            recovered_fraction=report.recovered_fraction,
            n_structural_proxy=report.n_structural_proxy,
            ratio=report.ratio,
        )
        rows.append(metrics)
        annotation = [
            f"SRMSE = {metrics.srmse:.4f}",
            f"Pearson = {metrics.pearson:.4f}" if metrics.pearson is not None else "Pearson undefined",
            f"R2 = {metrics.r2:.4f}" if metrics.r2 is not None else "R2 undefined",
        ]
        svg = svgplot.scatter_svg(
            scatter_data(gen_hist, ref),
            title=f"{label}: {'+'.join(subset)}",
            xlabel="test frequency",
            ylabel="generated frequency",
            annotation=annotation,
        )
        out.write_text(out_dir / f"scatter_{_safe_name(subset)}.svg", svg)
    write_report_csv(rows, out.add(out_dir / "metrics.csv"))


def cmd_sweep(cfg: dict, out: _Outputs) -> None:
    what = "sweep"
    schema = load_schema(_existing_file(cfg, "schema", what))
    train = read_coded_csv(_existing_file(cfg, "train", what), schema)
    test = read_coded_csv(_existing_file(cfg, "test", what), schema)
    ladder = _subset_list(cfg, "ladder", schema, what)
    n = _positive_int(cfg, "n", 200_000, what)
    step = _positive_int(cfg, "step", max(1, n // 20), what)
    seed = _seed(cfg)
    log_structural = bool(cfg.get("log_structural", True))
    log_ratio = bool(cfg.get("log_ratio", True))
    out_dir = Path(_require(cfg, "out", str, what))

    model_specs = _require(cfg, "models", list, what)
    if not model_specs:
        raise ConfigError(f"{what}: 'models' must not be empty")
    loaded: dict[str, models.AnyModel] = {}
    for spec in model_specs:
        if not isinstance(spec, dict) or "name" not in spec:
            raise ConfigError(f"{what}: each model needs at least a 'name'")
        name = spec["name"]
        if "path" in spec:
            prefix = Path(spec["path"])
            if not prefix.with_name(prefix.name + ".json").is_file():
                raise ConfigError(f"{what}: model sidecar not found for {name!r}")
            loaded[name] = models.load_model(prefix)
        elif name == "uniform":
            loaded[name] = models.UniformModel(schema)
        else:
            raise ConfigError(f"{what}: model {name!r} needs a 'path'")

    samplers = {
        name: (lambda count, s, m=model: models.sample_from(m, count, s))
        for name, model in loaded.items()
    }
    rows = dimension_sweep(train, test, samplers, ladder, n=n, seed=seed)
    write_report_csv(rows, out.add(out_dir / "sweep_metrics.csv"))

    generated = {
        name: sampler(n, derive_seed(seed, "sweep", name))
        for name, sampler in samplers.items()
    }
    curve_rows: list[list] = []
    for subset in ladder:
        series = []
        for name in loaded:
            report = ratio_curve(train, test, generated[name], subset, step)
            for pt in report.curve:
                curve_rows.append(
                    [
                        "+".join(subset),
                        name,
                        pt.n_generated,
                        pt.n_recovered,
                        pt.n_structural_proxy,
                        pt.ratio,
                        int(pt.ratio is None),
                    ]
                )
            series.append((name, [(float(pt.n_generated), pt.ratio) for pt in report.curve]))
        svg = svgplot.line_chart_svg(
            series,
            title=f"structural per recovered sampling zero: {'+'.join(subset)}",
            xlabel="rows generated",
            ylabel="ratio",
            logy=log_ratio,
        )
        out.write_text(out_dir / f"ratio_curve_{_safe_name(subset)}.svg", svg)
    _write_csv(
        out,
        out_dir / "ratio_curves.csv",
        ["subset", "model", "n_generated", "n_recovered", "n_structural_proxy", "ratio", "undefined_flag"],
        curve_rows,
    )

    by_model: dict[str, list[SweepRow]] = {name: [] for name in loaded}
    for row in rows:
        by_model[row.model].append(row)
    panels = [
        ("n_sampling_zeros_recovered", "sampling zeros recovered", lambda r: float(r.n_recovered), False),
        ("n_structural_proxy", "structural zeros generated", lambda r: float(r.n_structural_proxy), log_structural),
        ("ratio", "structural per sampling zero", lambda r: r.ratio, log_ratio),
    ]
    for stem, ylabel, getter, logy in panels:
        series = [
            (name, [(float(r.n_c), getter(r)) for r in model_rows])
            for name, model_rows in by_model.items()
        ]
        svg = svgplot.line_chart_svg(
            series,
            title=f"{ylabel} at {n} generated rows",
            xlabel="subset cell count N_c",
            ylabel=ylabel,
            logx=True,
            logy=logy,
        )
        out.write_text(out_dir / f"dimension_sweep_{stem}.svg", svg)

    if "wgan" in loaded:
        base = {tuple(r.variables): r.ratio for r in by_model["wgan"]}
        table_rows = []
        for subset in sorted({tuple(r.variables) for r in rows}, key=lambda s: [r.n_c for r in rows if tuple(r.variables) == s][0]):
            base_ratio = base.get(subset)
            for name, model_rows in by_model.items():
                if name == "wgan":
                    continue
                row = next(r for r in model_rows if tuple(r.variables) == subset)
                if base_ratio is None or row.ratio is None or base_ratio == 0:
                    extra = None
                else:
                    extra = (row.ratio / base_ratio - 1.0) * 100.0
                table_rows.append(["+".join(subset), base_ratio, name, row.ratio, extra])
        _write_csv(
            out,
            out_dir / "ratio_vs_wgan.csv",
            ["subset", "wgan_ratio", "model", "model_ratio", "additional_ratio_pct"],
            table_rows,
        )


def cmd_synth_data(cfg: dict, out: _Outputs) -> None:
    what = "synth-data"
    source = cfg.get("spec", "builtin")
    if source == "builtin":
        spec = oracle.default_benchmark()
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"{what}: spec file not found: {path}")
        spec = oracle.load_spec(path)
    n = _positive_int(cfg, "n", None, what)
    seed = _seed(cfg)
    prefix = cfg.get("prefix", "population")
    out_dir = Path(_require(cfg, "out", str, what))

    table = oracle.generate_population(spec, n, derive_seed(seed, "synth-data"))
    write_coded_csv(table, out.add(out_dir / f"{prefix}.csv"))
    save_schema(spec.schema, out.add(out_dir / "schema.json"))
    oracle.save_spec(spec, out.add(out_dir / "ground_truth.json"))
    exact = oracle.exact_joint(spec, spec.schema.names)
    _write_csv(
        out,
        out_dir / "exact_joint.csv",
        ["combo", "probability"],
        [[combo_key(k), p] for k, p in sorted(exact.freq.items())],
    )


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "synth-data": cmd_synth_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthpop",
        description="Train, sample and evaluate synthetic-population models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    if not isinstance(cfg, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    outputs = _Outputs()
    try:
        _COMMANDS[args.command](cfg, outputs)
    except (SynthpopError, OSError, ValueError) as exc:
        outputs.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in outputs.paths:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
