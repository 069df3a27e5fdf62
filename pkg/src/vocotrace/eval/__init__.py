"""Metrics, confusion matrices, t-SNE and report rendering."""
from .metrics import ClassMetrics, ConfusionMatrix, MetricsReport, confusion, macro_f1, metrics, silhouette
from .report import SummaryRow, emit_report, format_summary, read_confusion_csv, read_metrics_json, render_svg, \
    write_confusion_csv, write_metrics_json
from .tsne import Embedding2D, joint_probabilities, tsne

__all__ = ["ClassMetrics", "ConfusionMatrix", "Embedding2D", "MetricsReport", "SummaryRow", "confusion",
           "emit_report", "format_summary", "joint_probabilities", "macro_f1", "metrics", "read_confusion_csv",
           "read_metrics_json", "render_svg", "silhouette", "tsne", "write_confusion_csv", "write_metrics_json"]
