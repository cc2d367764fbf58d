"""Command-line interface.

Exit codes: 0 success, 1 training failed to converge, 2 bad input
(data/expression/model files), 3 configuration error.

Hyperparameters can come from a flat JSON config file (--config) and/or
flags; flags win.  Flag names mirror the hyperparameter table verbatim.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import urllib.request

from . import analysis, data as data_mod, lsp_tree, training
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    GltreeError,
    ModelFormatError,
    NumericError,
    ParseError,
    ShapeError,
    TrainingFailure,
)
from .training import TrainedModel, TrainingConfig

REPORT_ENDPOINT_VAR = "GLTREE_REPORT_ENDPOINT"

_CONFIG_KEYS = {
    "acceptance_threshold": float,
    "attempts": int,
    "freeze_loss_threshold": float,
    "is_frozen": bool,
    "lock_loss_tolerance": float,
    "loss_amplifier": float,
    "max_epochs": int,
    "save_model": bool,
    "save_path": str,
    "tree_layout": str,
    "weight_penalty_strength": float,
    "learning_rate": float,
    "seed": int,
    "acceptance_loss_threshold": float,
    "sinkhorn_tau": float,
    "gumbel_scale_min": float,
    "gumbel_scale_max": float,
    "gumbel_increase": float,
    "gumbel_decrease": float,
    "tau_decay": float,
    "history_window": int,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON file of hyperparameters")
    for key, typ in _CONFIG_KEYS.items():
        if typ is bool:
            parser.add_argument(f"--{key}", type=_parse_bool, default=None)
        else:
            parser.add_argument(f"--{key}", type=typ, default=None)


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a flat JSON object")
    values = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        typ = _CONFIG_KEYS[key]
        if typ is bool and not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be true/false")
        try:
            values[key] = typ(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    return values


def build_training_config(args) -> TrainingConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return TrainingConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _add_data_flags(parser, required=True):
    parser.add_argument("--data", required=required, help="CSV file path")
    parser.add_argument("--label-column", default="label")
    parser.add_argument(
        "--no-header",
        action="store_true",
        help="CSV has no header row; --label-column must be an index",
    )


def _load_table(args) -> data_mod.RawTable:
    label = args.label_column
    if args.no_header:
        try:
            label = int(label)
        except ValueError:
            raise DataError("--label-column must be an index with --no-header") from None
    return data_mod.load_csv(args.data, label_column=label, has_header=not args.no_header)


def _normalized_for_model(model: TrainedModel, table: data_mod.RawTable):
    spec = model.normalizer
    if spec is None:
        spec = data_mod.fit_none(table)
    return data_mod.apply(spec, table)


def _print_metrics(result):
    print(f"threshold: {result.threshold:g}")
    print(f"accuracy:  {result.accuracy:.4f}")
    print(f"precision: {result.precision:.4f}" + (" (no predicted positives)" if result.precision_defaulted else ""))
    print(f"recall:    {result.recall:.4f}" + (" (no actual positives)" if result.recall_defaulted else ""))


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = build_training_config(args)
    table = _load_table(args)
    train_raw, test_raw = data_mod.split_raw(table, args.test_fraction, cfg.seed)
    spec = data_mod.fit(train_raw, args.normalizer)
    if args.reverse_features:
        spec = spec.with_reversed([c.strip() for c in args.reverse_features.split(",")])
    train_set = data_mod.apply(spec, train_raw)
    test_set = data_mod.apply(spec, test_raw)

    model = training.train(train_set, cfg)
    model.normalizer = spec
    out_path = args.out or cfg.save_path
    training.save_model(model, out_path)

    test_metrics = analysis.metrics(model.predict(test_set.X), test_set.y, 0.5)
    print(f"model saved to {out_path}")
    print(
        f"attempt {model.metadata.get('attempt')} froze at epoch "
        f"{model.metadata.get('freeze_epoch')} "
        f"(final loss {model.metadata.get('final_loss'):.6f})"
    )
    print(f"train accuracy: {model.metadata.get('train_accuracy'):.4f}")
    print(f"test accuracy:  {test_metrics.accuracy:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    model = training.load_model(args.model)
    table = _load_table(args)
    dataset = _normalized_for_model(model, table)
    result = analysis.metrics(model.predict(dataset.X), dataset.y, args.threshold)
    _print_metrics(result)
    if args.json_out:
        _write_json(args.json_out, result.to_dict())
    return 0


def cmd_prune(args) -> int:
    model = training.load_model(args.model)
    pruned = training.prune_model(model, args.k)
    training.save_model(pruned, args.out)
    print(f"kept {len(pruned.p_hard)} of {len(model.p_hard)} features")
    print("retained (deepest first): " + ", ".join(pruned.tree().features))
    if args.data:
        table = _load_table(args)
        dataset = _normalized_for_model(model, table)
        before = analysis.metrics(model.predict(dataset.X), dataset.y, 0.5).accuracy
        after = analysis.metrics(pruned.predict(dataset.X), dataset.y, 0.5).accuracy
        print(f"accuracy before: {before:.4f}")
        print(f"accuracy after:  {after:.4f}")
    return 0


def cmd_explain(args) -> int:
    model = training.load_model(args.model)
    tree = model.tree()
    simplified = lsp_tree.simplify(tree, code_merge=not args.no_merge)
    print(lsp_tree.to_json(simplified))
    print()
    print("closed-form expression:")
    print(lsp_tree.to_expression(tree))
    for var, name in lsp_tree.expression_variable_map(tree).items():
        print(f"  {var} = {name}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(lsp_tree.to_json(simplified))
            fh.write("\n")
    return 0


def cmd_thresholds(args) -> int:
    model = training.load_model(args.model)
    table = _load_table(args)
    dataset = _normalized_for_model(model, table)
    report = analysis.sweep_model(model, dataset, args.threshold_step)
    print(f"{'threshold':>9}  {'accuracy':>8}  {'precision':>9}  {'recall':>7}")
    for row in report.rows:
        print(
            f"{row.threshold:>9.3f}  {row.accuracy:>8.4f}  "
            f"{row.precision:>9.4f}  {row.recall:>7.4f}"
        )
    print()
    for label, pick in (
        ("max recall   ", report.max_recall),
        ("max accuracy ", report.max_accuracy),
        ("max precision", report.max_precision),
    ):
        print(
            f"{label} @ {pick.threshold:.3f}: accuracy {pick.accuracy:.4f} "
            f"precision {pick.precision:.4f} recall {pick.recall:.4f}"
        )
    if args.json_out:
        _write_json(args.json_out, report.to_dict())
    return 0


def cmd_attribution(args) -> int:
    model = training.load_model(args.model)
    table = _load_table(args)
    dataset = _normalized_for_model(model, table)
    report = analysis.attribution(model, dataset)
    print(f"{'pruned':>6}  {'retained':>8}  {'accuracy':>8}  removed feature")
    for row in report.rows:
        print(
            f"{row.pruned_count:>6}  {row.retained:>8}  {row.accuracy:>8.4f}  "
            f"{row.pruned_feature or '-'}"
        )
    print()
    print("importance ranking (top of tree first):")
    for i, name in enumerate(report.ranking, 1):
        print(f"  {i:>2}. {name}")
    if args.json_out:
        _write_json(args.json_out, report.to_dict())
    return 0


def cmd_boolgen(args) -> int:
    dataset = data_mod.boolean_dataset(args.expr, args.repeats)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + ["label"])
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([int(v) for v in row] + [int(label)])
    print(f"wrote {dataset.X.shape[0]} rows to {args.out}")
    return 0


def cmd_boolcheck(args) -> int:
    model = training.load_model(args.model)
    report = analysis.bool_equivalence(model.tree(), args.expr)
    print("equivalent" if report.equivalent else "NOT equivalent")
    print("operator chain (bottom-up): " + " ".join(report.operator_chain))
    for miss in report.mismatches[:16]:
        print(f"  mismatch at {miss['assignment']}: tree={miss['tree']} expr={miss['expression']}")
    if len(report.mismatches) > 16:
        print(f"  ... {len(report.mismatches) - 16} more")
    if args.json_out:
        _write_json(args.json_out, report.to_dict())
    return 0


def cmd_report_prompt(args) -> int:
    model = training.load_model(args.model)
    simplified = lsp_tree.simplify(model.tree(), code_merge=not args.no_merge)
    prompt = lsp_tree.emit_report_prompt(simplified, args.context)
    print(prompt)
    if args.post:
        endpoint = os.environ.get(REPORT_ENDPOINT_VAR)
        if not endpoint:
            raise ConfigError(
                f"--post requires the {REPORT_ENDPOINT_VAR} environment variable"
            )
        request = urllib.request.Request(
            endpoint,
            data=prompt.encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
        )
        with urllib.request.urlopen(request) as response:
            sys.stdout.write(response.read().decode("utf-8", "replace"))
    return 0


def cmd_repeat(args) -> int:
    cfg = build_training_config(args)
    table = _load_table(args)
    reversed_columns = []
    if args.reverse_features:
        reversed_columns = [c.strip() for c in args.reverse_features.split(",")]
    report = analysis.repeated_eval(
        table,
        cfg,
        runs=args.runs,
        normalizer=args.normalizer,
        test_fraction=args.test_fraction,
        reversed_columns=reversed_columns,
    )
    print(
        f"mean accuracy over {args.runs} runs: {report.mean_accuracy:.4f} "
        f"(95% CI [{report.ci_low:.4f}, {report.ci_high:.4f}], "
        f"{report.failures} failures)"
    )
    for run in report.runs:
        if run.accuracy is None:
            print(f"  seed {run.seed}: FAILED ({run.error})")
        else:
            print(f"  seed {run.seed}: {run.accuracy:.4f}  top: {', '.join(run.top_features)}")
    if args.json_out:
        _write_json(args.json_out, report.to_dict())
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gltree",
        description="Train and explain graded-logic aggregation trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a CSV dataset")
    _add_data_flags(p)
    _add_training_flags(p)
    p.add_argument("--normalizer", choices=data_mod.NORMALIZER_KINDS, default=data_mod.MINMAX)
    p.add_argument("--reverse-features", help="comma-separated columns to reverse (1-x)")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", help="model output path (defaults to save_path)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model against a CSV dataset")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("prune", help="drop the k deepest features from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_data_flags(p, required=False)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("explain", help="emit the simplified tree JSON and expression")
    p.add_argument("--model", required=True)
    p.add_argument("--no-merge", action="store_true", help="strict binary view")
    p.add_argument("--out", help="also write the tree JSON here")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("thresholds", help="sweep decision thresholds")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--threshold-step", type=float, default=0.01)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("attribution", help="accuracy-after-pruning feature report")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_attribution)

    p = sub.add_parser("boolgen", help="generate a boolean truth-table dataset")
    p.add_argument("--expr", required=True)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boolgen)

    p = sub.add_parser("boolcheck", help="check a model against a boolean expression")
    p.add_argument("--model", required=True)
    p.add_argument("--expr", required=True)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_boolcheck)

    p = sub.add_parser("report-prompt", help="emit the report-generation prompt")
    p.add_argument("--model", required=True)
    p.add_argument("--context", default="")
    p.add_argument("--no-merge", action="store_true")
    p.add_argument(
        "--post",
        action="store_true",
        help=f"POST the prompt to ${REPORT_ENDPOINT_VAR} and print the response",
    )
    p.set_defaults(func=cmd_report_prompt)

    p = sub.add_parser("repeat", help="repeated seeded train/test runs with CI")
    _add_data_flags(p)
    _add_training_flags(p)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--normalizer", choices=data_mod.NORMALIZER_KINDS, default=data_mod.MINMAX)
    p.add_argument("--reverse-features")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_repeat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        for diag in exc.diagnostics:
            print(f"  {diag}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (
        DataError,
        DomainError,
        ModelFormatError,
        NumericError,
        ParseError,
        ShapeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GltreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
