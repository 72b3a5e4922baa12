"""Command-line interface.

Subcommands: transform, correlate, train, evaluate, pipeline, synth.
Exit codes: 0 success, 1 usage error, 2 data/schema/I-O error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import serialize
from .classifiers import model_from_dict, model_to_dict
from .correlation import DEFAULT_BINS, DEFAULT_TAU_THRESHOLD, prune_features
from .dataset import (
    ISCX_FEATURES,
    ISCX_LABEL,
    FeatureSchema,
    RegimeParams,
    SynthConfig,
    apply_dsrr,
    concat_tables,
    load_flow_csv,
    synth_generate,
    write_csv,
)
from .errors import DsrrError, ParameterError, SchemaError
from .evaluation import CSV_COLUMNS, confusion, metrics
from .pipeline import ModelConfig, PipelineConfig, fit_model, run_pipeline
from .rescaled_range import EDGE_POLICIES, MODES, DsrrConfig

log = logging.getLogger("dsrr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageExit(message)


# --------------------------------------------------------------------------
# argument groups
# --------------------------------------------------------------------------

def _add_input(p, out_help="output path"):
    p.add_argument("--input", "-i", nargs="+", required=True, help="input CSV file(s) or a directory")
    p.add_argument("--duration", type=int, help="with a directory input, pick files named like '*<duration>s*.csv'")
    p.add_argument("--out", "-o", help=out_help)
    p.add_argument(
        "--schema",
        default="detect",
        help="'detect' (default), 'iscx', 'auto' (every non-label column) or a JSON schema file",
    )
    p.add_argument("--label-column", help="label column name (default: class1 if present, else label)")
    p.add_argument("--timestamp-column", help="column used to order rows (default: 'timestamp' if present)")
    p.add_argument("--config", help="file of 'key = value' lines; command-line flags take precedence")


def _add_dsrr(p):
    p.add_argument("--window", "-w", type=int, default=40, help="block size w in samples (default 40)")
    p.add_argument("--step", "-a", type=int, default=1, help="prefix step a in samples (default 1)")
    p.add_argument("--edge", choices=EDGE_POLICIES, default="shrink", help="trailing partial block policy")
    p.add_argument("--mode", choices=MODES, default="replace", help="replace features or append transformed copies")


def _add_model(p):
    p.add_argument("--model", "-m", choices=["knn", "tree", "rf", "forest", "dt"], default="rf")
    p.add_argument("--k", type=int, default=5, help="kNN neighbour count")
    p.add_argument("--trees", type=int, default=100, help="forest size")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def _add_prune(p):
    p.add_argument("--tau-threshold", type=float, default=DEFAULT_TAU_THRESHOLD)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS, help="quantile bins per numeric variable for Φ_k")
    p.add_argument("--no-phik-one", dest="phik_one", action="store_false", help="keep pairs with Φ_k = 1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsrr", description="Sliding rescaled-range features for VPN traffic detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transform", help="apply the rescaled-range derivative to every feature column")
    _add_input(p, "output CSV")
    _add_dsrr(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("correlate", help="Φ_k / Kendall tau matrices and the redundancy drop list")
    _add_input(p, "output JSON report; matrix CSVs are written next to it")
    _add_dsrr(p)
    _add_prune(p)
    p.add_argument("--transform", action="store_true", help="transform features before the analysis")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("train", help="fit a model on a CSV and save it as JSON")
    _add_input(p, "output model JSON")
    _add_dsrr(p)
    _add_model(p)
    p.add_argument("--transform", action="store_true", help="transform features before fitting")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a CSV")
    _add_input(p, "output metrics JSON; a CSV row is written next to it")
    p.add_argument("--model-file", required=True, help="model JSON written by 'train'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="transform, split, prune, fit and evaluate in one go")
    _add_input(p, "output metrics JSON; a CSV table is written next to it")
    _add_dsrr(p)
    _add_model(p)
    _add_prune(p)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--no-prune", dest="prune", action="store_false", help="skip correlation pruning")
    p.add_argument("--baseline", action="store_true", help="also evaluate the model on raw features")
    p.add_argument("--transform-after-split", action="store_true", help="transform train and test parts separately")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("synth", help="write a synthetic regime-switch dataset")
    p.add_argument("--out", "-o", required=True, help="output CSV")
    p.add_argument("--blocks", type=int, default=40)
    p.add_argument("--block-len", type=int, default=50)
    p.add_argument("--features", type=int, default=4)
    p.add_argument("--burst", type=float, default=10.0, help="burst amplitude added at the start of bursty blocks")
    p.add_argument("--burst-len", type=int, default=1)
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", help="file of 'key = value' lines; command-line flags take precedence")
    p.set_defaults(func=cmd_synth)

    parser._subparsers_by_name = sub.choices  # type: ignore[attr-defined]
    return parser


# --------------------------------------------------------------------------
# config file
# --------------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _config_defaults(sub: argparse.ArgumentParser, values: dict) -> dict:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise ParameterError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ParameterError(f"config key {key!r} expects a boolean, got {raw!r}")
            defaults[key] = low in _TRUE
        elif action.nargs == "+":
            defaults[key] = raw.replace(",", " ").split()
        else:
            try:
                value = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise ParameterError(f"config key {key!r}: {exc}") from exc
            if action.choices and value not in action.choices:
                raise ParameterError(f"config key {key!r} must be one of {list(action.choices)}")
            defaults[key] = value
        # a config value satisfies a required flag
        action.required = False
    return defaults


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if a in parser._subparsers_by_name), None)
        if command is None:
            return parser.parse_args(argv)
        sub = parser._subparsers_by_name[command]
        sub.set_defaults(**_config_defaults(sub, read_config(known.config)))
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _input_files(args) -> list[Path]:
    files = []
    for item in args.input:
        path = Path(item)
        if path.is_dir():
            pattern = f"*{args.duration}s*.csv" if args.duration else "*.csv"
            found = sorted(path.glob(pattern))
            if not found:
                raise FileNotFoundError(f"no files matching {pattern} in {path}")
            files.extend(found)
        elif not path.exists():
            raise FileNotFoundError(f"input file not found: {path}")
        else:
            files.append(path)
    return files


def _header(path: Path) -> list[str]:
    with path.open(newline="", encoding="utf-8") as handle:
        for row in csv.reader(line for line in handle if not line.lstrip().startswith("#")):
            return [h.strip() for h in row]
    return []


def _schema(args, path: Path) -> FeatureSchema:
    header = _header(path)
    label = args.label_column or (ISCX_LABEL if ISCX_LABEL in header or "label" not in header else "label")
    timestamp = args.timestamp_column or ("timestamp" if "timestamp" in header else None)
    choice = args.schema
    if choice == "detect":
        choice = "iscx" if all(f in header for f in ISCX_FEATURES) else "auto"
    if choice == "iscx":
        return FeatureSchema(features=ISCX_FEATURES, label=label, timestamp=timestamp)
    if choice == "auto":
        return FeatureSchema.auto(label=label, timestamp=timestamp)
    try:
        doc = json.loads(Path(choice).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise SchemaError(f"cannot read schema file {choice}: {exc}") from exc
    return FeatureSchema(
        features=tuple(doc["features"]) if doc.get("features") else None,
        label=args.label_column or doc.get("label", label),
        timestamp=args.timestamp_column or doc.get("timestamp", timestamp),
    )


def _load(args):
    files = _input_files(args)
    tables = [load_flow_csv(f, _schema(args, f)) for f in files]
    return tables[0] if len(tables) == 1 else concat_tables(tables)


def _dsrr_config(args) -> DsrrConfig:
    return DsrrConfig(w=args.window, a=args.step, edge_policy=args.edge, mode=args.mode)


def _require_out(args) -> Path:
    if not args.out:
        raise ParameterError("--out is required")
    return Path(args.out)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _metrics_csv(rows) -> str:
    return ",".join(CSV_COLUMNS) + "\n" + "".join(rows)


def _print_metrics(method: str, m) -> None:
    print(f"{method:<22} Pr={m.precision:.4f} Rc={m.recall:.4f} F1={m.f1:.4f} Acc={m.accuracy:.4f}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_transform(args) -> int:
    out = _require_out(args)
    config = _dsrr_config(args)
    table = _load(args)
    result = apply_dsrr(table, config)
    write_csv(result, out, comment=f"dsrr: w={config.w},a={config.a},mode={config.mode}")
    print(f"transformed {table.n_rows} rows x {table.n_features} features -> {out}")
    print(f"dropped input rows: {table.dropped_count}")
    partial = result.flags["partial_rows"]
    if partial:
        policy = "zeroed" if config.edge_policy == "drop" else "processed as a shorter block"
        print(f"trailing partial block: {partial} rows {policy}")
    return EXIT_OK


def _matrix_csv(path: Path, names, matrix) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([""] + list(names))
        for name, row in zip(names, matrix):
            writer.writerow([name] + [format(float(v), ".17g") for v in row])


def cmd_correlate(args) -> int:
    out = _require_out(args)
    table = _load(args)
    if args.transform:
        table = apply_dsrr(table, _dsrr_config(args))
    kept, report = prune_features(table, args.tau_threshold, n_bins=args.bins, phik_one=args.phik_one)
    doc = report.to_dict()
    ordered = {
        "features": doc["features"],
        "phi_k": doc["phi_k"],
        "kendall_tau": doc["kendall_tau"],
        "target_association": doc["target_association"],
        "dropped": doc["dropped"],
        "kept": doc["kept"],
        "constant_features": doc["constant_features"],
        "n_bins": doc["n_bins"],
        "tau_threshold": doc["tau_threshold"],
    }
    _write_text(out, serialize.dumps(ordered))
    stem = out.with_suffix("")
    _matrix_csv(Path(f"{stem}_phik.csv"), report.feature_names, report.phi_k)
    _matrix_csv(Path(f"{stem}_kendall.csv"), report.feature_names, report.kendall_tau)
    print(f"{table.n_features} features, {len(kept)} kept, {len(report.dropped)} dropped -> {out}")
    for d in report.dropped:
        partner = f" (vs {d['partner']})" if "partner" in d else ""
        print(f"  drop {d['feature']}: {d['reason']}{partner}")
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        kind=args.model, k=args.k, n_trees=args.trees, max_depth=args.max_depth, min_leaf=args.min_leaf, seed=args.seed
    )


def cmd_train(args) -> int:
    out = _require_out(args)
    table = _load(args)
    dsrr = None
    if args.transform:
        config = _dsrr_config(args)
        table = apply_dsrr(table, config)
        dsrr = {"w": config.w, "a": config.a, "edge_policy": config.edge_policy, "mode": config.mode}
    model = fit_model(_model_config(args), table)
    doc = model_to_dict(model, table.feature_names)
    doc["dsrr"] = dsrr
    _write_text(out, serialize.dumps(doc))
    print(f"trained {doc['kind']} on {table.n_rows} rows x {table.n_features} features -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        doc = json.loads(Path(args.model_file).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise SchemaError(f"{args.model_file}: not valid JSON ({exc})") from exc
    model = model_from_dict(doc)
    table = _load(args)
    if doc.get("dsrr"):
        table = apply_dsrr(table, DsrrConfig(**doc["dsrr"]))
    names = doc.get("feature_names") or table.feature_names
    missing = [n for n in names if n not in table.feature_names]
    if missing:
        raise SchemaError(f"input lacks model feature(s): {', '.join(missing)}")
    table = table.select([table.feature_names.index(n) for n in names])
    predicted = model.predict(table.X)
    labels = np.unique(np.concatenate([np.asarray(doc["classes"]).astype(str), table.labels]))
    report = metrics(confusion(table.labels, predicted.astype(str), labels))
    method = doc["kind"] + ("+dsrr" if doc.get("dsrr") else "")
    _print_metrics(method, report)
    if args.out:
        out = Path(args.out)
        w = doc["dsrr"]["w"] if doc.get("dsrr") else None
        a = doc["dsrr"]["a"] if doc.get("dsrr") else None
        _write_text(out, serialize.dumps({"method": method, "w": w, "a": a, **report.to_dict()}))
        _write_text(out.with_suffix(".csv"), _metrics_csv([report.csv_row(method, w, a)]))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = PipelineConfig(
        dsrr=_dsrr_config(args),
        model=_model_config(args),
        prune=args.prune,
        phik_one=args.phik_one,
        tau_threshold=args.tau_threshold,
        n_bins=args.bins,
        train_fraction=args.train_fraction,
        seed=args.seed,
        baseline=args.baseline,
        transform_after_split=args.transform_after_split,
    )
    table = _load(args)
    result = run_pipeline(table, config)

    print(f"{table.n_rows} rows ({result.info['n_train']} train / {result.info['n_test']} test), "
          f"{table.dropped_count} input rows dropped")
    for r in result.results:
        _print_metrics(r.method, r.metrics)
    if result.correlation is not None:
        print(f"correlation pruning kept {len(result.correlation.kept)} of {len(result.correlation.feature_names)} features")

    if args.out:
        out = Path(args.out)
        corr = None
        if result.correlation is not None:
            c = result.correlation.to_dict()
            corr = {k: c[k] for k in ("target_association", "dropped", "kept", "constant_features")}
        doc = {
            "config": config.to_dict(),
            "data": result.info,
            "results": [r.to_dict() for r in result.results],
            "correlation": corr,
        }
        _write_text(out, serialize.dumps(doc))
        rows = [r.metrics.csv_row(r.method, r.w, r.a) for r in result.results]
        _write_text(out.with_suffix(".csv"), _metrics_csv(rows))
    return EXIT_OK


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_blocks=args.blocks,
        block_len=args.block_len,
        n_features=args.features,
        stationary=RegimeParams(variance=args.variance),
        bursty=RegimeParams(variance=args.variance, burst=args.burst),
        burst_len=args.burst_len,
        seed=args.seed,
    )
    table = synth_generate(config)
    write_csv(table, args.out)
    print(f"wrote {table.n_rows} rows ({config.n_blocks} blocks of {config.block_len}) -> {args.out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except _UsageExit:
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"dsrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dsrr: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"dsrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DsrrError, OSError, csv.Error, KeyError) as exc:
        print(f"dsrr: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
