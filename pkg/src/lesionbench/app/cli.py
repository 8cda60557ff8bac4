"""`lesionbench` command-line interface.

Every command reads one TOML config file and takes the config section named
after itself (`lesionbench split --config run.toml` reads `[split]`).  Two
flags override config values for quick reruns: ``--seed`` and ``--out``.
Relative paths inside a config resolve against the config file's directory,
so a run directory can be moved wholesale.

Exit codes: 0 success; 2 usage or config errors (unknown command, missing
section or key, referenced input file absent); 1 failures while running
(malformed data files, training errors, I/O failures).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..data import (
    DatasetManifest,
    clean_dataset,
    load_manifest,
    rebase_manifest,
    save_manifest,
    split_dataset,
)
from ..detect import (
    DetectorConfig,
    box_argmax_classify,
    create_detector,
    detect,
    detection_accuracy,
    save_detections,
)
from ..ensemble import search_subsets, save_search_results
from ..metrics import EvaluationBatch, evaluate
from ..pipeline import (
    TrainingConfig,
    fine_tune,
    load_model,
    load_image,
    load_predictions,
    predict_image,
    predict_proba,
    save_model,
    save_predictions,
)
from ..synthgen import SynthSpec, generate_dataset
from .report import ENSEMBLE_DISPLAY_NAME, accuracy_table, format_percent, render_report, stats_table

COMMANDS = (
    "synth",
    "stats",
    "clean",
    "split",
    "train",
    "predict",
    "ensemble",
    "detect-eval",
    "report",
    "serve",
)


class ConfigError(ValueError):
    """The config file (or a path it references) is unusable; exit code 2."""


@dataclass
class RunConfig:
    """One resolved CLI invocation: a command plus its config section."""

    command: str
    section: dict
    base_dir: Path  # config file directory; anchors relative paths
    seed: int | None = None  # --seed override, if given
    out: Path | None = None  # resolved output directory
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path: str) -> dict:
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise ConfigError(f"config file not found: {cfg_path}")
    try:
        with cfg_path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{cfg_path}: invalid TOML: {exc}") from None


def _section(config: dict, command: str) -> dict:
    key = command.replace("-", "_")
    section = config.get(command, config.get(key))
    if section is None:
        raise ConfigError(f"config has no [{command}] section")
    if not isinstance(section, dict):
        raise ConfigError(f"[{command}] must be a table, got {type(section).__name__}")
    return section


def _require(section: dict, key: str, command: str):
    if key not in section:
        raise ConfigError(f"[{command}] is missing required key {key!r}")
    return section[key]


def _input_path(ctx: RunConfig, key: str, required: bool = True) -> Path | None:
    if key not in ctx.section:
        if required:
            raise ConfigError(f"[{ctx.command}] is missing required key {key!r}")
        return None
    path = Path(str(ctx.section[key]))
    if not path.is_absolute():
        path = ctx.base_dir / path
    if not path.exists():
        raise ConfigError(f"[{ctx.command}] {key} = {path} does not exist")
    return path


def _out_dir(ctx: RunConfig) -> Path:
    if ctx.out is None:
        raise ConfigError(f"[{ctx.command}] needs an output directory ('out' key or --out)")
    ctx.out.mkdir(parents=True, exist_ok=True)
    return ctx.out


def _seed(ctx: RunConfig, default: int = 0) -> int:
    if ctx.seed is not None:
        return ctx.seed
    value = ctx.section.get("seed", default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"[{ctx.command}] seed must be an integer, got {value!r}")
    return value


def _aligned_labels(manifest: DatasetManifest, sample_ids, command: str) -> list[int]:
    lut = {record.image_id: record.class_id for record in manifest.records}
    missing = [s for s in sample_ids if s not in lut]
    if missing:
        raise ConfigError(
            f"[{command}] manifest lacks {len(missing)} prediction-log sample ids "
            f"(first: {missing[0]!r})"
        )
    return [lut[s] for s in sample_ids]


def _k_values(ctx: RunConfig, num_classes: int) -> tuple[int, ...]:
    raw = ctx.section.get("k_values", [1])
    try:
        ks = tuple(sorted({int(k) for k in raw}))
    except (TypeError, ValueError):
        raise ConfigError(f"[{ctx.command}] k_values must be integers, got {raw!r}") from None
    if not ks or ks[0] < 1 or ks[-1] > num_classes:
        raise ConfigError(
            f"[{ctx.command}] k_values must lie in [1, {num_classes}], got {list(ks)}"
        )
    return ks


# ---------------------------------------------------------------------------
# commands


def cmd_synth(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    kwargs = {"class_counts": tuple(_require(ctx.section, "class_counts", ctx.command))}
    for key in ("image_size", "lesion_area_range"):
        if key in ctx.section:
            kwargs[key] = tuple(ctx.section[key])
    for key in ("texture_family", "noise_image_fraction"):
        if key in ctx.section:
            kwargs[key] = ctx.section[key]
    try:
        spec = SynthSpec(seed=_seed(ctx), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[synth] invalid spec: {exc}") from None
    manifest = generate_dataset(spec, out)
    print(f"generated {len(manifest)} images across {manifest.num_classes} classes")
    print(f"manifest: {out / 'manifest.jsonl'}")
    print(f"truth:    {out / 'truth.jsonl'}")


def cmd_stats(ctx: RunConfig) -> None:
    manifest = load_manifest(_input_path(ctx, "manifest"))
    print(stats_table(manifest))


def cmd_clean(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    manifest = load_manifest(_input_path(ctx, "manifest"))
    cleaned, removed = clean_dataset(manifest)
    path = save_manifest(rebase_manifest(cleaned, out), out / "manifest.jsonl")
    print(f"removed {removed} noise-flagged images ({len(manifest)} -> {len(cleaned)})")
    print(f"manifest: {path}")


def cmd_split(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    manifest = load_manifest(_input_path(ctx, "manifest"))
    split = split_dataset(
        manifest,
        test_fraction=ctx.section.get("test_fraction", 0.2),
        seed=_seed(ctx),
        allow_resplit=ctx.section.get("allow_resplit", False),
    )
    path = save_manifest(rebase_manifest(split, out), out / "manifest.jsonl")
    n_train = len(split.subset("train"))
    n_test = len(split.subset("test"))
    print(f"split {len(split)} records into {n_train} train / {n_test} test")
    print(f"manifest: {path}")


def cmd_train(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    backbone = _require(ctx.section, "backbone", ctx.command)
    training = dict(ctx.section.get("training", {}))
    if ctx.seed is not None:
        training["seed"] = ctx.seed
    try:
        cfg = TrainingConfig.from_dict(training)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[train.training] invalid: {exc}") from None
    manifest = load_manifest(_input_path(ctx, "manifest"))
    model = fine_tune(backbone, manifest, cfg, model_id=ctx.section.get("model_id"))
    for stats in model.history:
        line = f"epoch {stats.epoch:3d}  lr {stats.lr:.6g}  loss {stats.mean_loss:.4f}"
        if stats.eval_accuracy is not None:
            line += f"  eval top-1 {format_percent(stats.eval_accuracy)}%"
        print(line)
    path = save_model(model, out)
    print(f"model {model.model_id!r} ({backbone}) saved to {path}")


def cmd_predict(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    model = load_model(_input_path(ctx, "model"))
    manifest = load_manifest(_input_path(ctx, "manifest"))
    split = ctx.section.get("split", "test")
    batch = predict_proba(model, manifest, split=split)
    path = save_predictions(batch, out / "predictions.jsonl")
    print(f"wrote {batch.n_samples} prediction rows for model {batch.model_id!r}")
    print(f"predictions: {path}")


def _subset_display(member_ids: tuple[str, ...], all_ids: frozenset[str]) -> str:
    if frozenset(member_ids) == all_ids and len(all_ids) > 1:
        return ENSEMBLE_DISPLAY_NAME
    return "+".join(member_ids)


def cmd_ensemble(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    manifest = load_manifest(_input_path(ctx, "manifest"))
    raw_logs = _require(ctx.section, "logs", ctx.command)
    if not isinstance(raw_logs, list) or not raw_logs:
        raise ConfigError("[ensemble] logs must be a non-empty list of prediction logs")
    batches = []
    for entry in raw_logs:
        path = Path(str(entry))
        if not path.is_absolute():
            path = ctx.base_dir / path
        if not path.exists():
            raise ConfigError(f"[ensemble] prediction log {path} does not exist")
        batches.append(load_predictions(path))
    ks = _k_values(ctx, manifest.num_classes)
    labels = _aligned_labels(manifest, batches[0].sample_ids, ctx.command)
    results = search_subsets(batches, labels, k_values=ks)
    path = save_search_results(results, out / "subsets.json")
    all_ids = frozenset(b.model_id for b in batches)
    header = f"{'rank':>4}  {'members':<40}" + "".join(f"  top-{k} (%)" for k in ks)
    print(header)
    for result in results:
        row = f"{result.rank:>4}  {_subset_display(result.member_ids, all_ids):<40}"
        row += "".join(f"  {format_percent(result.accuracies[k]):>9}" for k in ks)
        print(row)
    print(f"subsets: {path}")


def cmd_detect_eval(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    manifest = load_manifest(_input_path(ctx, "manifest"))
    try:
        cfg = DetectorConfig(
            detector_id=_require(ctx.section, "detector_id", ctx.command),
            input_size=tuple(ctx.section.get("input_size", (400, 400))),
            score_threshold=ctx.section.get("score_threshold", 0.05),
            fallback_to_classifier=ctx.section.get("fallback_to_classifier", False),
        )
    except ValueError as exc:
        raise ConfigError(f"[detect-eval] invalid detector config: {exc}") from None
    options = {}
    for key in ("truth", "log"):
        path = _input_path(ctx, key, required=False)
        if path is not None:
            options[key] = path
    try:
        detector = create_detector(cfg, options)
    except ValueError as exc:
        raise ConfigError(f"[detect-eval] {exc}") from None

    fallback_model = None
    if cfg.fallback_to_classifier:
        fallback_model = load_model(_input_path(ctx, "model"))

    split = ctx.section.get("split", "test")
    records = manifest.subset(split).records
    if not records:
        raise ConfigError(f"[detect-eval] manifest has no records in split {split!r}")
    outcomes, labels, det_sets = [], [], []
    for record in records:
        image = load_image(manifest.resolve_path(record))
        dets = detect(detector, image, cfg, sample_id=record.image_id)
        det_sets.append(dets)
        outcome = box_argmax_classify(dets)
        if outcome is None and fallback_model is not None:
            probs = predict_image(fallback_model, image)
            outcome = (int(probs.argmax()), float(probs.max()))
        outcomes.append(outcome)
        labels.append(record.class_id)
    score = detection_accuracy(outcomes, labels, manifest.num_classes)

    log_path = save_detections(det_sets, out / "detections.jsonl")
    summary = {
        "detector_id": cfg.detector_id,
        "split": split,
        "overall": score.overall,
        "per_class": list(score.per_class),
        "class_counts": list(score.class_counts),
        "n_no_detection": score.n_no_detection,
    }
    summary_path = out / "detect_eval.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"overall accuracy: {format_percent(score.overall)}%")
    for c, name in enumerate(manifest.class_names):
        print(f"  {name}: {format_percent(score.per_class[c])}% (n={score.class_counts[c]})")
    print(f"no-detection outcomes: {score.n_no_detection}")
    print(f"detections: {log_path}")
    print(f"summary: {summary_path}")


def cmd_report(ctx: RunConfig) -> None:
    out = _out_dir(ctx)
    manifest = load_manifest(_input_path(ctx, "manifest"))
    logs = _require(ctx.section, "predictions", ctx.command)
    if not isinstance(logs, dict) or not logs:
        raise ConfigError("[report.predictions] must map model names to prediction logs")
    ks = _k_values(ctx, manifest.num_classes)
    reports = []
    for name, entry in logs.items():
        path = Path(str(entry))
        if not path.is_absolute():
            path = ctx.base_dir / path
        if not path.exists():
            raise ConfigError(f"[report] prediction log {path} does not exist")
        batch = load_predictions(path)
        labels = _aligned_labels(manifest, batch.sample_ids, ctx.command)
        eval_batch = EvaluationBatch(probs=batch.probs, labels=labels)
        reports.append(evaluate(eval_batch, k_values=ks, model_id=name))
    bundle = render_report(reports, manifest.class_names, out, manifest=manifest)
    print(accuracy_table(reports))
    print()
    print(f"featured model: {bundle.featured_model}")
    for path in (bundle.report_json, bundle.tables_txt, bundle.confusion_png, bundle.per_class_png):
        print(f"wrote {path}")


def build_service(ctx: RunConfig):
    """Assemble the FastAPI app a `serve` invocation would run."""
    from .service import create_app

    model = load_model(_input_path(ctx, "model"))
    detector = None
    detector_cfg = None
    if "detector_id" in ctx.section:
        try:
            detector_cfg = DetectorConfig(
                detector_id=ctx.section["detector_id"],
                input_size=tuple(ctx.section.get("input_size", (400, 400))),
                score_threshold=ctx.section.get("score_threshold", 0.05),
            )
        except ValueError as exc:
            raise ConfigError(f"[serve] invalid detector config: {exc}") from None
        options = {}
        for key in ("truth", "log"):
            path = _input_path(ctx, key, required=False)
            if path is not None:
                options[key] = path
        try:
            detector = create_detector(detector_cfg, options)
        except ValueError as exc:
            raise ConfigError(f"[serve] {exc}") from None
    return create_app(
        model=model,
        detector=detector,
        detector_cfg=detector_cfg,
        topk=ctx.section.get("topk", 5),
        max_payload_bytes=ctx.section.get("max_payload_bytes", 8 * 1024 * 1024),
    )


def cmd_serve(ctx: RunConfig) -> None:
    import uvicorn

    app = build_service(ctx)
    host = ctx.section.get("host", "127.0.0.1")
    port = ctx.section.get("port", 8000)
    print(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=int(port), log_level="warning")


_HANDLERS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "clean": cmd_clean,
    "split": cmd_split,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "detect-eval": cmd_detect_eval,
    "report": cmd_report,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionbench",
        description="Skin-lesion classification benchmark pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} step")
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="override the section's seed")
        p.add_argument("--out", default=None, help="override the section's output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage error, 0 on --help
        return int(exc.code or 0)

    try:
        config = _load_config(args.config)
        section = _section(config, args.command)
        base_dir = Path(args.config).resolve().parent
        out = args.out if args.out is not None else section.get("out")
        if out is not None:
            out = Path(str(out))
            if not out.is_absolute():
                out = base_dir / out
        ctx = RunConfig(
            command=args.command,
            section=section,
            base_dir=base_dir,
            seed=args.seed,
            out=out,
        )
        _HANDLERS[args.command](ctx)
    except ConfigError as exc:
        print(f"lesionbench: config error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # noqa: BLE001 — CLI boundary
        print(f"lesionbench: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
