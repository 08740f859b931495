"""Command-line pipeline: staged, config-hashed artifacts in a work directory.

Each stage reads its predecessor's artifact, verifies the stored config hash
(so artifacts from different configurations never mix silently) and writes
its own output plus a manifest.  Reruns with the same config and seed give
byte-identical outputs.

Stages::

    synth     -> data/*.csv            seeded synthetic cohort
    validate  -> validation.json       row accounting + coverage roster
    featurize -> features.csv          candidate feature matrix
    select    -> ranked_features.csv   importance table + selected columns
    train     -> forest.json           fitted model on the 80/20 train side
    evaluate  -> metrics.json          held-out metrics (or CV per --scheme)
    ablate    -> ablation.json/.csv    per-feature-family comparison
    report    -> report.txt            rendered tables from stored artifacts

Exit codes: 0 success, 2 input/configuration error, 3 pipeline/data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import aggregate, evaluation, features, forest, ingest, selection, synth

INPUT_ERROR = 2
PIPELINE_ERROR = 3


class InputError(Exception):
    pass


class PipelineError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    workdir: str = "run"
    data_dir: str | None = None  # defaults to <workdir>/data
    seed: int = 0
    scheme: str = "random_subject_80_20"
    select_k: int = 32
    n_trees: int = 112
    mtry: int | None = None
    min_leaf: int = 5
    labels: str = "binary"
    families: list[str] = dataclasses.field(
        default_factory=lambda: [name for name, _ in evaluation.ABLATION_ROWS]
    )
    min_consecutive_days: int = 14
    n_subjects: int = 111
    n_days: int = 180
    threads: int = 0  # 0 = all cores, capped by STRESSLENS_THREADS

    def resolved_threads(self) -> int:
        threads = self.threads if self.threads > 0 else (os.cpu_count() or 1)
        cap = os.environ.get("STRESSLENS_THREADS")
        if cap:
            threads = min(threads, max(1, int(cap)))
        return threads

    def forest_config(self) -> forest.ForestConfig:
        return forest.ForestConfig(
            n_trees=self.n_trees,
            mtry=self.mtry,
            min_leaf=self.min_leaf,
            seed=self.seed,
            n_threads=self.resolved_threads(),
        )

    def pipeline_config(self) -> evaluation.PipelineConfig:
        return evaluation.PipelineConfig(
            select_k=self.select_k,
            forest=self.forest_config(),
            label_scheme=self.labels,
        )

    def stage_hash(self, stage: str) -> str:
        """Hash of the config fields a stage's output actually depends on.

        Thread count and paths never change results and stay out; downstream
        flags (scheme, ablation families) do not invalidate upstream artifacts.
        """
        payload = dataclasses.asdict(self)
        fields = STAGE_FIELDS[stage]
        blob = json.dumps({k: payload[k] for k in fields}, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def data_path(self) -> Path:
        return Path(self.data_dir) if self.data_dir else Path(self.workdir) / "data"


_SYNTH_FIELDS = ("seed", "n_subjects", "n_days")
_FEATURIZE_FIELDS = _SYNTH_FIELDS + ("min_consecutive_days", "labels")
_MODEL_FIELDS = _FEATURIZE_FIELDS + ("select_k", "n_trees", "mtry", "min_leaf")
STAGE_FIELDS = {
    "synth": _SYNTH_FIELDS,
    "validate": _SYNTH_FIELDS + ("min_consecutive_days",),
    "featurize": _FEATURIZE_FIELDS,
    "select": _MODEL_FIELDS,
    "train": _MODEL_FIELDS,
    "evaluate": _MODEL_FIELDS + ("scheme",),
    "ablate": _MODEL_FIELDS + ("families",),
    "report": _MODEL_FIELDS,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_manifest(config: RunConfig, stage: str, inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "stage": stage,
        "config_hash": config.stage_hash(stage),
        "seed": config.seed,
        "inputs": {p.name: _sha256(p) for p in sorted(inputs)},
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    _write_json(Path(config.workdir) / f"{stage}_manifest.json", manifest)


def _require_stage(config: RunConfig, stage: str) -> dict:
    path = Path(config.workdir) / f"{stage}_manifest.json"
    if not path.exists():
        raise InputError(f"missing artifact from stage {stage!r}; run `stresslens {stage}` first")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("config_hash") != config.stage_hash(stage):
        raise InputError(
            f"stale artifact: stage {stage!r} was produced under a different configuration"
        )
    return manifest


def _load_dataset(config: RunConfig) -> tuple[ingest.SubjectDataset, ingest.IngestReport]:
    paths = ingest.StreamPaths.in_dir(config.data_path())
    try:
        return ingest.parse_logs(paths)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc


def stage_synth(config: RunConfig) -> None:
    cohort = synth.CohortConfig(
        n_subjects=config.n_subjects, n_days=config.n_days, seed=config.seed
    )
    dataset = synth.generate(cohort)
    data_dir = config.data_path()
    synth.emit_csv(dataset, data_dir, cohort)
    outputs = [data_dir / f"{s}.csv" for s in ingest.CSV_HEADERS] + [
        data_dir / "cohort_manifest.json"
    ]
    _write_manifest(config, "synth", [], outputs)
    print(f"synth: wrote {config.n_subjects} subjects x {config.n_days} days to {data_dir}")


def stage_validate(config: RunConfig) -> None:
    dataset, report = _load_dataset(config)
    roster = ingest.validate_coverage(dataset, config.min_consecutive_days)
    payload = {
        "streams": report.as_dict(),
        "subjects_seen": len(dataset.subjects),
        "subjects_retained": len(roster),
        "roster": roster,
        "min_consecutive_days": config.min_consecutive_days,
        "window": [d.isoformat() for d in dataset.window] if dataset.window else None,
        "config_hash": config.stage_hash("validate"),
        "seed": config.seed,
    }
    out = Path(config.workdir) / "validation.json"
    _write_json(out, payload)
    inputs = [config.data_path() / f"{s}.csv" for s in ingest.CSV_HEADERS]
    _write_manifest(config, "validate", inputs, [out])
    print(f"validate: {len(roster)} of {len(dataset.subjects)} subjects retained")
    for name, counts in report.as_dict().items():
        print(
            f"  {name}: read {counts['rows_read']}, stored {counts['rows_stored']}, "
            f"dropped {counts['duplicates_dropped']} duplicates"
        )


def stage_featurize(config: RunConfig) -> None:
    dataset, _report = _load_dataset(config)
    roster = ingest.validate_coverage(dataset, config.min_consecutive_days)
    daily = features.extract_daily(dataset, roster)
    matrix, report = aggregate.assemble(daily, dataset)
    out = Path(config.workdir) / "features.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    matrix.to_csv(out, label_scheme=config.labels)
    _write_json(
        Path(config.workdir) / "featurize_report.json",
        {
            "config_hash": config.stage_hash("featurize"),
            "seed": config.seed,
            **report.as_dict(),
        },
    )
    inputs = [config.data_path() / f"{s}.csv" for s in ingest.CSV_HEADERS]
    _write_manifest(
        config, "featurize", inputs, [out, Path(config.workdir) / "featurize_report.json"]
    )
    print(
        f"featurize: {report.n_rows} subject-day rows x {report.n_columns} candidate columns"
        + (f", {len(report.dropped_rows)} rows dropped" if report.dropped_rows else "")
    )


def _load_matrix(config: RunConfig) -> aggregate.FeatureMatrix:
    _require_stage(config, "featurize")
    return aggregate.FeatureMatrix.from_csv(
        Path(config.workdir) / "features.csv", label_scheme=config.labels
    )


def _train_side(config: RunConfig, matrix: aggregate.FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    plan = evaluation.make_split(matrix.subject_ids, "random_subject_80_20", config.seed)
    train_idx, test_idx = next(plan.folds())
    return train_idx, test_idx


def stage_select(config: RunConfig) -> None:
    matrix = _load_matrix(config)
    train_idx, _test_idx = _train_side(config, matrix)
    normalized = aggregate.normalize_fit_transform(matrix, train_idx)
    sel_config = selection.SelectionConfig(
        top_k=config.select_k, forest=config.forest_config(), permutation_importance=True
    )
    ranked = selection.rank_features(normalized, train_idx, sel_config, config.labels)
    chosen = selection.select_top(ranked, min(config.select_k, len(matrix.columns)))
    ranked_path = Path(config.workdir) / "ranked_features.csv"
    ranked.to_csv(ranked_path)
    selected_path = Path(config.workdir) / "selected_columns.json"
    _write_json(
        selected_path,
        {"config_hash": config.stage_hash("select"), "seed": config.seed, "columns": chosen},
    )
    _write_manifest(
        config, "select", [Path(config.workdir) / "features.csv"], [ranked_path, selected_path]
    )
    print(f"select: kept {len(chosen)} of {len(matrix.columns)} columns")


def stage_train(config: RunConfig) -> None:
    _require_stage(config, "select")
    matrix = _load_matrix(config)
    chosen = json.loads(
        (Path(config.workdir) / "selected_columns.json").read_text(encoding="utf-8")
    )["columns"]
    train_idx, _test_idx = _train_side(config, matrix)
    normalized = aggregate.normalize_fit_transform(matrix, train_idx)
    reduced = normalized.restrict_columns(chosen)
    y = reduced.labels(config.labels)
    if np.unique(y[train_idx]).size < 2:
        raise PipelineError("training rows contain a single class")
    model = forest.fit_forest(
        reduced.X[train_idx], y[train_idx], config.forest_config(), columns=chosen
    )
    forest_path = Path(config.workdir) / "forest.json"
    forest.save(model, forest_path)
    transform_path = Path(config.workdir) / "model_transform.json"
    _write_json(
        transform_path,
        {
            "config_hash": config.stage_hash("train"),
            "seed": config.seed,
            "columns": list(reduced.columns),
            "fill": [repr(float(v)) for v in reduced.fill],
            "center": [repr(float(v)) for v in reduced.center],
            "scale": [repr(float(v)) for v in reduced.scale],
            "oob_accuracy": forest.oob_accuracy(model, y[train_idx]),
        },
    )
    _write_manifest(
        config,
        "train",
        [Path(config.workdir) / "features.csv", Path(config.workdir) / "selected_columns.json"],
        [forest_path, transform_path],
    )
    print(
        f"train: {config.n_trees} trees on {train_idx.size} rows, "
        f"OOB accuracy {forest.oob_accuracy(model, y[train_idx]):.4f}"
    )


def stage_evaluate(config: RunConfig) -> None:
    matrix = _load_matrix(config)
    if config.scheme == "random_subject_80_20":
        _require_stage(config, "train")
        model = forest.load(Path(config.workdir) / "forest.json")
        transform = json.loads(
            (Path(config.workdir) / "model_transform.json").read_text(encoding="utf-8")
        )
        _train_idx, test_idx = _train_side(config, matrix)
        reduced = matrix.restrict_columns(transform["columns"])
        X = reduced.X[test_idx].copy()
        fill = np.array([float(v) for v in transform["fill"]])
        center = np.array([float(v) for v in transform["center"]])
        scale = np.array([float(v) for v in transform["scale"]])
        nan_mask = np.isnan(X)
        X[nan_mask] = np.take(fill, np.nonzero(nan_mask)[1])
        constant = scale == 0.0
        X = (X - center) / np.where(constant, 1.0, scale)
        X[:, constant] = 0.0
        y_true = reduced.labels(config.labels)[test_idx]
        y_pred, _fr = forest.predict(model, X)
        report = evaluation.metrics_from_predictions(y_true, y_pred)
        payload = {
            "config_hash": config.stage_hash("evaluate"),
            "seed": config.seed,
            "scheme": config.scheme,
            "metrics": report.as_dict(),
        }
    else:
        plan = evaluation.make_split(matrix.subject_ids, config.scheme, config.seed)
        result = evaluation.cross_validate(matrix, plan, config.pipeline_config())
        payload = {
            "config_hash": config.stage_hash("evaluate"),
            "seed": config.seed,
            "scheme": config.scheme,
            "folds": [o.report.as_dict() for o in result.fold_outcomes],
            "failed_folds": [{"fold": f, "reason": r} for f, r in result.failed_folds],
            "summary": result.summary,
            "pooled": result.pooled.as_dict(),
        }
    out = Path(config.workdir) / "metrics.json"
    _write_json(out, payload)
    _write_manifest(config, "evaluate", [Path(config.workdir) / "features.csv"], [out])
    if config.scheme == "random_subject_80_20":
        print(f"evaluate: accuracy {payload['metrics']['accuracy']:.4f}")
    else:
        acc = payload["summary"]["accuracy"]
        print(f"evaluate: {config.scheme} mean accuracy {acc['mean']:.4f}")


def stage_ablate(config: RunConfig) -> None:
    matrix = _load_matrix(config)
    plan = evaluation.make_split(matrix.subject_ids, "random_subject_80_20", config.seed)
    result = evaluation.ablation_suite(matrix, plan, config.pipeline_config())
    rows = [name for name in result.order if name in config.families]
    payload = {
        "config_hash": config.stage_hash("ablate"),
        "seed": config.seed,
        "rows": {name: result.rows[name].as_dict() for name in rows},
        "order": rows,
    }
    out = Path(config.workdir) / "ablation.json"
    _write_json(out, payload)
    csv_path = Path(config.workdir) / "ablation.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("Model,Accuracy,Kappa,Sensitivity,Specificity,F1\n")
        for name in rows:
            r = result.rows[name]
            fh.write(
                f"{name},{100 * r.accuracy:.2f},{100 * r.kappa:.2f},"
                f"{100 * r.sensitivity:.2f},{100 * r.specificity:.2f},{100 * r.f1:.2f}\n"
            )
    _write_manifest(config, "ablate", [Path(config.workdir) / "features.csv"], [out, csv_path])
    for name in rows:
        print(f"ablate: {name:22s} accuracy {result.rows[name].accuracy:.4f}")


def _fmt_pct(value: float) -> str:
    return "   nan" if value != value else f"{100 * value:6.2f}"


def stage_report(config: RunConfig) -> None:
    workdir = Path(config.workdir)
    lines: list[str] = []

    ranked_path = workdir / "ranked_features.csv"
    if ranked_path.exists():
        lines.append("Selected features ranked by mean decrease in accuracy")
        lines.append(ranked_path.read_text(encoding="utf-8").rstrip())
        lines.append("")

    metrics_path = workdir / "metrics.json"
    if metrics_path.exists():
        payload = json.loads(metrics_path.read_text(encoding="utf-8"))
        lines.append(f"Evaluation ({payload['scheme']}, seed {payload['seed']})")
        if "metrics" in payload:
            m = payload["metrics"]
            lines.append(f"  Accuracy            {m['accuracy']:.4f}")
            lines.append(f"  95% CI              ({m['ci95'][0]:.4f}, {m['ci95'][1]:.4f})")
            lines.append(f"  No Information Rate {m['nir']:.4f}")
            lines.append(f"  P-Value [Acc > NIR] {m['p_value_acc_gt_nir']:.4g}")
            lines.append(f"  Kappa               {m['kappa']:.4f}")
            lines.append(f"  Sensitivity         {m['sensitivity']:.4f}")
            lines.append(f"  Specificity         {m['specificity']:.4f}")
            lines.append("  'Positive' class    stressed (label 1)")
        else:
            lines.append("  per-fold summary (accuracy / kappa)")
            for stat in ("min", "q1", "median", "mean", "q3", "max"):
                acc = payload["summary"]["accuracy"][stat]
                kap = payload["summary"]["kappa"][stat]
                lines.append(f"  {stat:>6s}  {acc:.4f}  {kap:.4f}")
        lines.append("")

    ablation_path = workdir / "ablation.json"
    if ablation_path.exists():
        payload = json.loads(ablation_path.read_text(encoding="utf-8"))
        lines.append("Feature-family comparison (percent)")
        lines.append(f"{'Model':24s} {'Acc':>6s} {'Kappa':>6s} {'Sens':>6s} {'Spec':>6s} {'F1':>6s}")
        for name in payload["order"]:
            r = payload["rows"][name]
            lines.append(
                f"{name:24s} {_fmt_pct(r['accuracy'])} {_fmt_pct(r['kappa'])} "
                f"{_fmt_pct(r['sensitivity'])} {_fmt_pct(r['specificity'])} {_fmt_pct(r['f1'])}"
            )
        lines.append(
            "note: with positive class 'stressed', a majority-class predictor scores"
        )
        lines.append(
            "sensitivity 0 and specificity 100; reports that flip the positive class"
        )
        lines.append("would show 100/0 for the same predictor.")
        lines.append("")

    if not lines:
        raise InputError("nothing to report: run evaluate/ablate/select first")
    text = "\n".join(lines) + "\n"
    (workdir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


STAGES = {
    "synth": stage_synth,
    "validate": stage_validate,
    "featurize": stage_featurize,
    "select": stage_select,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "ablate": stage_ablate,
    "report": stage_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stresslens",
        description="Daily stress recognition pipeline over phone logs, weather and traits.",
    )
    parser.add_argument("stage", choices=sorted(STAGES), help="pipeline stage to run")
    parser.add_argument("--config", type=str, default=None, help="JSON file with RunConfig fields")
    parser.add_argument("--workdir", type=str, default=None, help="artifact directory")
    parser.add_argument("--data-dir", type=str, default=None, help="directory with the six CSVs")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--scheme", choices=["random", "kfold", "loso"], default=None, help="evaluation protocol"
    )
    parser.add_argument("--k", type=int, default=None, help="selected feature count")
    parser.add_argument("--ntree", type=int, default=None, help="trees per forest")
    parser.add_argument("--mtry", type=int, default=None, help="features tried per split")
    parser.add_argument("--min-leaf", type=int, default=None)
    parser.add_argument("--labels", choices=["binary", "ternary"], default=None)
    parser.add_argument("--families", type=str, default=None, help="comma list of ablation rows")
    parser.add_argument("--subjects", type=int, default=None, help="synth cohort size")
    parser.add_argument("--days", type=int, default=None, help="synth cohort length")
    parser.add_argument("--threads", type=int, default=None, help="0 = all cores")
    return parser


_SCHEME_ALIASES = {
    "random": "random_subject_80_20",
    "kfold": "kfold_10",
    "loso": "loso",
}


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        values.update(json.loads(path.read_text(encoding="utf-8")))
    overrides = {
        "workdir": args.workdir,
        "data_dir": args.data_dir,
        "seed": args.seed,
        "scheme": _SCHEME_ALIASES[args.scheme] if args.scheme else None,
        "select_k": args.k,
        "n_trees": args.ntree,
        "mtry": args.mtry,
        "min_leaf": args.min_leaf,
        "labels": args.labels,
        "families": args.families.split(",") if args.families else None,
        "n_subjects": args.subjects,
        "n_days": args.days,
        "threads": args.threads,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        Path(config.workdir).mkdir(parents=True, exist_ok=True)
        STAGES[args.stage](config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (ingest.ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PIPELINE_ERROR
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
