"""Command-line surface: ingest, train, evaluate, score.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .bundle import ModelBundle, pack_model, unpack_model
from .config import DESK_SCALE_OVERRIDES, MODEL_KINDS, RunConfig
from .deep import AutoencoderDetector, GanDetector, CnnLstmClassifier
from .ensemble import ensemble_train
from .errors import (
    BundleError, ConfigError, DivergenceDetected, NetadError, ParseError,
)
from .kdd import Category, Dataset, SplitSpec, load_dataset, split_train_test, \
    stratified_subsample
from .preprocess import Preprocessor
from .shallow import ForestClassifier, KnnClassifier

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

SCORER_KINDS = ("ae", "gan")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="netad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse a KDD file and print a summary")
    p_ingest.add_argument("--data", required=True, help="KDD-format text file")

    p_train = sub.add_parser("train", help="train a model and write a bundle")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--model", choices=MODEL_KINDS)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--subsample", type=float,
                         help="stratified fraction of the dataset to keep")
    p_train.add_argument("--desk-scale", action="store_true",
                         help="preset: 5%% subsample, capped KNN references")
    p_train.add_argument("--lenient-categories", action="store_true",
                         help="zero out unseen categorical tokens instead of erroring")
    p_train.add_argument("--threshold-percentile", type=float,
                         help="anomaly threshold percentile for ae/gan")
    p_train.add_argument("--lambda", dest="lam", type=float,
                         help="gan score mixing weight")

    p_eval = sub.add_parser("evaluate", help="score the test split of a dataset")
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True, help="output directory for report.json")
    p_eval.add_argument("--force", action="store_true",
                        help="proceed despite a dataset checksum mismatch")

    p_score = sub.add_parser("score", help="per-record verdicts for an input file")
    p_score.add_argument("--bundle", required=True)
    p_score.add_argument("--data", required=True)
    p_score.add_argument("--out", help="write verdict lines here instead of stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "score":
            return cmd_score(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceDetected as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ParseError, BundleError, NetadError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def cmd_ingest(args) -> int:
    dataset = load_dataset(args.data)
    counts = dataset.category_counts()
    print(f"records: {len(dataset)}")
    print(f"checksum: sha256:{dataset.checksum}")
    print("category counts:")
    for cat in Category:
        print(f"  {cat.name.lower():<8} {counts[cat]}")
    return EXIT_OK


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update_from_file(args.config)
    if getattr(args, "desk_scale", False):
        for key, val in DESK_SCALE_OVERRIDES.items():
            cfg.set(key, val)
    # CLI flags win over file and preset
    if args.data:
        cfg.set("data", args.data)
    if getattr(args, "model", None):
        cfg.set("model", args.model)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "subsample", None) is not None:
        cfg.set("subsample", args.subsample)
    if getattr(args, "lenient_categories", False):
        cfg.set("preprocess.strict", False)
    if getattr(args, "threshold_percentile", None) is not None:
        cfg.set("ae.threshold_percentile", args.threshold_percentile)
        cfg.set("gan.threshold_percentile", args.threshold_percentile)
    if getattr(args, "lam", None) is not None:
        cfg.set("gan.lambda", args.lam)
    return cfg


def _prepare_split(cfg: RunConfig, dataset: Dataset):
    subsample = float(cfg.get("subsample"))
    if subsample < 1.0:
        dataset = stratified_subsample(dataset, subsample, cfg.seed)
    spec = SplitSpec(train_fraction=float(cfg.get("split.train_fraction")),
                     seed=cfg.seed)
    return split_train_test(dataset, spec)


def fit_model(kind: str, cfg: RunConfig, train_fm):
    """Train one detector of the given kind on a preprocessed train matrix."""
    if kind == "ae":
        return AutoencoderDetector(cfg.ae_config()).fit(train_fm)
    if kind == "gan":
        return GanDetector(cfg.gan_config()).fit(train_fm)
    if kind == "knn":
        cap = int(cfg.get("knn.max_reference_rows")) or None
        return KnnClassifier(k=int(cfg.get("knn.k")), max_reference_rows=cap,
                             seed=cfg.seed).fit(train_fm)
    if kind == "rf":
        return ForestClassifier(cfg.forest_config()).fit(train_fm)
    if kind == "cnnlstm":
        return CnnLstmClassifier(cfg.cnnlstm_config()).fit(train_fm)
    if kind == "ensemble":
        return ensemble_train(train_fm, cfg.ensemble_config())
    raise ConfigError(f"unknown model kind {kind!r}")


def _training_log(kind: str, model) -> dict:
    log: dict = {"model_kind": kind}
    if kind in ("ae", "gan", "cnnlstm"):
        log["epochs"] = model.epoch_log
    if kind in SCORER_KINDS:
        log["threshold"] = model.threshold
    if kind == "cnnlstm":
        log["best_val_accuracy"] = model.best_val_accuracy
    if kind == "ensemble":
        log["conflict_count"] = model.conflict_count
        log["layer3_present"] = model.layer3 is not None
        log["layer2"] = {"epochs": model.layer2.epoch_log,
                         "best_val_accuracy": model.layer2.best_val_accuracy}
    if kind == "knn":
        log["reference_capped"] = model.reference_capped
    return log


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    kind = cfg.model_kind
    out = Path(args.out)
    dataset = load_dataset(cfg.get("data"))
    train_ds, _ = _prepare_split(cfg, dataset)

    pre = cfg.build_preprocessor(kind)
    pre.fit(train_ds)
    train_fm = pre.transform(train_ds)
    model = fit_model(kind, cfg, train_fm)

    bundle = pack_model(kind, model, pre, run_metadata={
        "dataset_checksum": dataset.checksum,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "split": {
            "train_fraction": float(cfg.get("split.train_fraction")),
            "subsample": float(cfg.get("subsample")),
            "seed": cfg.seed,
        },
    })
    bundle.save(out)
    (out / "training_log.json").write_text(
        json.dumps(_training_log(kind, model), indent=2, sort_keys=True))
    cfg.write(out / "config.resolved.txt")
    print(f"trained {kind} on {train_fm.n_rows} rows "
          f"({train_fm.n_cols} features); bundle written to {out}")
    return EXIT_OK


def _evaluate_bundle(bundle: ModelBundle, dataset: Dataset) -> evaluation.EvalReport:
    model, pre = unpack_model(bundle)
    kind = bundle.model_kind
    split_info = bundle.manifest["split"]
    cfg = RunConfig()
    cfg.set("subsample", split_info["subsample"])
    cfg.set("split.train_fraction", split_info["train_fraction"])
    cfg.set("seed", split_info["seed"])
    _, test_ds = _prepare_split(cfg, dataset)
    test_fm = pre.transform(test_ds)

    metadata = {
        "model_kind": kind,
        "seed": split_info["seed"],
        "config_hash": bundle.manifest["config_hash"],
        "dataset_checksum": bundle.manifest["dataset_checksum"],
        "test_rows": test_fm.n_rows,
    }
    if kind in SCORER_KINDS:
        verdicts = model.classify(test_fm.values).astype(np.int64)
        metadata["threshold"] = model.threshold
        return evaluation.build_binary_report(
            test_fm.binary_labels(), verdicts, metadata=metadata)
    if kind == "ensemble":
        detail = model.predict_detailed(test_fm.values)
        preds = detail["prediction"]
        labels = test_fm.labels
        metadata["intermediate_accuracy"] = {
            "knn": float((detail["layer1"] == labels).mean()),
            "cnnlstm": float((detail["layer2"] == labels).mean()),
        }
        metadata["conflicts_routed"] = int(detail["routed"].sum())
        metadata["knn_reference_capped"] = model.layer1.reference_capped
    else:
        if kind == "knn":
            metadata["knn_reference_capped"] = model.reference_capped
        preds = model.predict(test_fm.values)
    return evaluation.build_report(test_fm.labels, preds, metadata=metadata)


def cmd_evaluate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    dataset = load_dataset(args.data)
    if dataset.checksum != bundle.manifest["dataset_checksum"]:
        print("warning: dataset checksum does not match the bundle's "
              f"training dataset ({dataset.checksum[:12]} vs "
              f"{bundle.manifest['dataset_checksum'][:12]})", file=sys.stderr)
        if not args.force:
            print("use --force to evaluate anyway", file=sys.stderr)
            return EXIT_DATA
    report = _evaluate_bundle(bundle, dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())

    kind = bundle.model_kind
    print(f"model: {kind}")
    if report.confusion_5class is not None:
        print("confusion (5-class, rows=true):")
        for row in report.confusion_5class:
            print("  " + " ".join(f"{v:>8d}" for v in row))
    print("confusion (binary, rows=true, normal/attack):")
    for row in report.confusion_binary:
        print("  " + " ".join(f"{v:>8d}" for v in row))
    for mode in evaluation.MODES:
        ms = report.metric_sets[mode]
        print(f"{mode:<9} acc={ms.accuracy:.4f} p={ms.precision:.4f} "
              f"r={ms.recall:.4f} f1={ms.f1:.4f}")
    reference = evaluation.REFERENCE_RESULTS.get(kind)
    if reference:
        print(f"published reference deltas ({kind}), tolerance 2.5pp:")
        rows = evaluation.compare_to_reference(report, reference, tolerance=0.025)
        print(evaluation.format_delta_table(rows))
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


def score_lines(bundle: ModelBundle, dataset: Dataset) -> tuple[list[str], int]:
    """One verdict line per input record; returns (lines, error_count)."""
    model, pre = unpack_model(bundle)
    kind = bundle.model_kind
    strict = pre.strict
    unseen = pre.find_unseen(dataset)  # row -> (column, token)
    lenient_pre = Preprocessor.from_state(
        {**pre.to_state(), "strict": False},
        pre.scaler.col_min, pre.scaler.col_max)
    fm = lenient_pre.transform(dataset)

    scorable = np.ones(len(dataset), dtype=bool)
    if strict:
        for row in unseen:
            scorable[row] = False
    lines: list[str] = [""] * len(dataset)
    for row, (column, token) in unseen.items():
        if strict:
            lines[row] = (f"{row}\tERROR unseen category {column}={token!r} "
                          "not in training vocabulary")
    idx = np.flatnonzero(scorable)
    if idx.size:
        values = fm.values[idx]
        if kind in SCORER_KINDS:
            scores = model.scores(values)
            flags = scores > model.threshold
            for j, row in enumerate(idx):
                flag = str(bool(flags[j])).lower()
                lines[row] = f"{row}\tscore={scores[j]:.6g}\tanomalous={flag}"
        else:
            preds = model.predict(values)
            for j, row in enumerate(idx):
                cat = Category(int(preds[j])).name.lower()
                lines[row] = f"{row}\tclass={cat}\tanomalous={str(preds[j] != 0).lower()}"
    return lines, (len(unseen) if strict else 0)


def cmd_score(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    dataset = load_dataset(args.data)
    lines, n_errors = score_lines(bundle, dataset)
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if n_errors:
        print(f"{n_errors} record(s) failed: unseen categories in strict mode",
              file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
