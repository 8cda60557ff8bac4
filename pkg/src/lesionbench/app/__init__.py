"""CLI, report rendering, and the HTTP inference service."""

from .cli import ConfigError, RunConfig, build_parser, build_service, main
from .report import (
    ENSEMBLE_DISPLAY_NAME,
    ReportBundle,
    accuracy_table,
    format_percent,
    per_class_table,
    render_confusion_png,
    render_per_class_png,
    render_report,
    stats_table,
)
from .service import create_app

__all__ = [
    "ConfigError",
    "ENSEMBLE_DISPLAY_NAME",
    "ReportBundle",
    "RunConfig",
    "accuracy_table",
    "build_parser",
    "build_service",
    "create_app",
    "format_percent",
    "main",
    "per_class_table",
    "render_confusion_png",
    "render_per_class_png",
    "render_report",
    "stats_table",
]
