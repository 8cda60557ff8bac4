"""Text tables and figure rendering for evaluation results.

Strict renderer: every number shown comes straight out of the data or
metrics structures (``ClassStats``, ``EvaluationReport``) — nothing is
recomputed here, so a table can never disagree with the library.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..data import DatasetManifest, class_stats
from ..metrics import EvaluationReport

# Display name for the all-members ensemble in tables and plots.
ENSEMBLE_DISPLAY_NAME = "EnsembleNet"


def format_percent(value: float) -> str:
    """Accuracy as a two-decimal percentage string; NaN renders as '-'."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{100.0 * value:.2f}"


def _render_columns(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Space-aligned plain-text table (left-align first column, right-align rest)."""
    table = [list(header)] + [list(r) for r in rows]
    widths = [max(len(row[j]) for row in table) for j in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        cells = [
            cell.ljust(widths[j]) if j == 0 else cell.rjust(widths[j])
            for j, cell in enumerate(row)
        ]
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def stats_table(manifest: DatasetManifest) -> str:
    """Per-class train/test counts, one row per class plus a totals row.

    An extra ``unassigned`` column appears only when the manifest still has
    unsplit records, so fully split datasets render plain train/test rows.
    """
    stats = class_stats(manifest)
    unassigned = [
        stats.total[c] - stats.train[c] - stats.test[c]
        for c in range(manifest.num_classes)
    ]
    header = ["class", "train", "test"]
    rows = [
        [name, str(stats.train[c]), str(stats.test[c])]
        for c, name in enumerate(manifest.class_names)
    ]
    rows.append(["total", str(sum(stats.train)), str(sum(stats.test))])
    if any(unassigned):
        header.append("unassigned")
        for c, row in enumerate(rows[:-1]):
            row.append(str(unassigned[c]))
        rows[-1].append(str(sum(unassigned)))
    return _render_columns(header, rows)


def accuracy_table(reports: Sequence[EvaluationReport]) -> str:
    """Model x top-k accuracy table, percentages to two decimals."""
    if not reports:
        raise ValueError("accuracy_table needs at least one report")
    ks = reports[0].k_values
    for report in reports:
        if report.k_values != ks:
            raise ValueError(
                f"reports disagree on k values: {report.k_values} vs {ks}"
            )
    header = ["model"] + [f"top-{k} (%)" for k in ks]
    rows = [
        [report.model_id or "?"] + [format_percent(report.overall[k]) for k in ks]
        for report in reports
    ]
    return _render_columns(header, rows)


def per_class_table(report: EvaluationReport, class_names: Sequence[str]) -> str:
    """Per-class accuracy of one model for every evaluated k."""
    if len(class_names) != report.num_classes:
        raise ValueError(
            f"{len(class_names)} class names for {report.num_classes} classes"
        )
    header = ["class", "n"] + [f"top-{k} (%)" for k in report.k_values]
    rows = []
    for c, name in enumerate(class_names):
        rows.append(
            [name, str(report.class_counts[c])]
            + [format_percent(report.per_class[k][c]) for k in report.k_values]
        )
    rows.append(
        ["macro", str(report.n_samples)]
        + [format_percent(report.macro[k]) for k in report.k_values]
    )
    return _render_columns(header, rows)


def render_confusion_png(
    report: EvaluationReport, class_names: Sequence[str], path: str | Path
) -> Path:
    """Top-1 confusion heatmap (rows = true class), counts annotated."""
    path = Path(path)
    counts = np.asarray(report.confusion)
    C = counts.shape[0]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * C + 2), max(3.5, 0.6 * C + 1.5)))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(C), labels=class_names, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(C), labels=class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{report.model_id or 'model'} top-1 confusion")
    threshold = counts.max() / 2 if counts.max() > 0 else 0.5
    for r in range(C):
        for c in range(C):
            ax.text(
                c,
                r,
                str(int(counts[r, c])),
                ha="center",
                va="center",
                fontsize=7,
                color="white" if counts[r, c] > threshold else "black",
            )
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_per_class_png(
    report: EvaluationReport, class_names: Sequence[str], path: str | Path
) -> Path:
    """Per-class top-1 accuracy bar chart for one model."""
    path = Path(path)
    k = report.k_values[0]
    values = [0.0 if math.isnan(v) else v for v in report.per_class[k]]
    C = len(values)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * C + 2), 3.5))
    ax.bar(range(C), values, color="#4878b0")
    ax.set_xticks(range(C), labels=class_names, rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1.0)
    ax.set_ylabel(f"top-{k} accuracy")
    ax.set_title(f"{report.model_id or 'model'} per-class accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


@dataclass(frozen=True)
class ReportBundle:
    """Paths of everything one ``render_report`` call produced."""

    out_dir: Path
    report_json: Path
    tables_txt: Path
    confusion_png: Path
    per_class_png: Path
    featured_model: str


def render_report(
    reports: Sequence[EvaluationReport],
    class_names: Sequence[str],
    out_dir: str | Path,
    manifest: DatasetManifest | None = None,
    featured: str | None = None,
) -> ReportBundle:
    """Write the full bundle: report.json, tables.txt, confusion.png, per_class.png.

    Figures show the featured model — ``EnsembleNet`` when present, the
    first report otherwise.
    """
    if not reports:
        raise ValueError("render_report needs at least one report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {report.model_id: report for report in reports}
    if len(by_id) != len(reports):
        raise ValueError("reports must have distinct model_ids")
    if featured is None:
        featured = (
            ENSEMBLE_DISPLAY_NAME
            if ENSEMBLE_DISPLAY_NAME in by_id
            else reports[0].model_id
        )
    if featured not in by_id:
        raise ValueError(f"featured model {featured!r} not among {sorted(by_id)}")
    star = by_id[featured]

    payload = {
        "featured_model": featured,
        "class_names": list(class_names),
        "models": {report.model_id: report.to_dict() for report in reports},
    }
    report_json = out_dir / "report.json"
    report_json.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    sections = []
    if manifest is not None:
        sections.append("## dataset\n\n" + stats_table(manifest))
    sections.append("## accuracy\n\n" + accuracy_table(reports))
    sections.append(f"## per-class ({featured})\n\n" + per_class_table(star, class_names))
    tables_txt = out_dir / "tables.txt"
    tables_txt.write_text("\n\n".join(sections) + "\n", encoding="utf-8")

    confusion_png = render_confusion_png(star, class_names, out_dir / "confusion.png")
    per_class_png = render_per_class_png(star, class_names, out_dir / "per_class.png")
    return ReportBundle(
        out_dir=out_dir,
        report_json=report_json,
        tables_txt=tables_txt,
        confusion_png=confusion_png,
        per_class_png=per_class_png,
        featured_model=featured,
    )
