#!/usr/bin/env python3
"""End-to-end desk benchmark: synthesize, train every backbone, ensemble, report.

Generates a labeled synthetic lesion dataset, fine-tunes each registered
backbone on the train split, evaluates per-model and ensembled top-k
accuracy on the test split, runs the exhaustive subset search, and writes
the full report bundle (tables, confusion heatmap, JSON) to the output
directory.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from lesionbench.app.report import accuracy_table, render_report
from lesionbench.data import split_dataset
from lesionbench.ensemble import ensemble_scores, save_search_results, search_subsets
from lesionbench.metrics import EvaluationBatch, evaluate
from lesionbench.pipeline import (
    TrainingConfig,
    fine_tune,
    list_backbones,
    predict_proba,
    save_model,
    save_predictions,
)
from lesionbench.synthgen import SynthSpec, generate_dataset


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("benchmark_run"),
                        help="output directory (default: ./benchmark_run)")
    parser.add_argument("--images-per-class", type=int, default=200)
    parser.add_argument("--num-classes", type=int, default=3)
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--gen-seed", type=int, default=8)
    parser.add_argument("--split-seed", type=int, default=0)
    parser.add_argument("--train-seed", type=int, default=1)
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--backbones", nargs="*", default=None,
                        help="backbone ids to train (default: all registered)")
    parser.add_argument("--k", type=int, nargs="*", default=[1, 3],
                        help="top-k values to report")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    backbones = args.backbones or list_backbones()

    print(f"generating {args.num_classes}x{args.images_per_class} synthetic images ...")
    spec = SynthSpec(
        class_counts=tuple([args.images_per_class] * args.num_classes),
        image_size=(args.image_size, args.image_size),
        seed=args.gen_seed,
    )
    manifest = generate_dataset(spec, out / "data")
    manifest = split_dataset(manifest, test_fraction=args.test_fraction, seed=args.split_seed)
    test_labels = [rec.class_id for rec in manifest.subset("test").records]

    cfg = TrainingConfig(
        initial_lr=0.01,
        decay_factor=0.1,
        decay_period_epochs=10,
        momentum=0.9,
        batch_size=64,
        epochs=args.epochs,
        input_size=(args.image_size, args.image_size),
        seed=args.train_seed,
    )

    members = []
    reports = []
    for backbone_id in backbones:
        start = time.perf_counter()
        model = fine_tune(backbone_id, manifest, cfg, model_id=backbone_id)
        batch = predict_proba(model, manifest, split="test")
        elapsed = time.perf_counter() - start
        save_model(model, out / "models" / backbone_id)
        save_predictions(batch, out / "predictions" / f"{backbone_id}.jsonl")
        members.append(batch)
        report = evaluate(
            EvaluationBatch(probs=batch.probs, labels=test_labels),
            k_values=tuple(args.k),
            model_id=backbone_id,
        )
        reports.append(report)
        print(f"  {backbone_id}: top-1 {100 * report.overall[1]:.2f}%  ({elapsed:.1f}s)")

    print("searching member subsets ...")
    results = search_subsets(members, test_labels, k_values=tuple(args.k))
    save_search_results(results, out / "subsets.json")
    for result in results[:5]:
        name = "+".join(result.member_ids)
        print(f"  #{result.rank} {name}: top-1 {100 * result.accuracies[1]:.2f}%")

    if len(members) > 1:
        full = ensemble_scores(members)
        reports.append(
            evaluate(
                EvaluationBatch(probs=full.probs, labels=test_labels),
                k_values=tuple(args.k),
                model_id="EnsembleNet",
            )
        )

    bundle = render_report(reports, manifest.class_names, out / "report")
    print(f"report bundle written to {bundle.report_json.parent}")
    print()
    print(accuracy_table(reports))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
