"""Run artefacts: metrics JSON, confusion CSV, t-SNE SVG, summary table."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .metrics import ConfusionMatrix, MetricsReport
from .tsne import Embedding2D

SVG_SIZE = 800
# colour-blind friendly qualitative palette
PALETTE = ["#0072B2", "#E69F00", "#009E73", "#D55E00", "#CC79A7", "#56B4E9", "#F0E442", "#000000",
           "#999999", "#882255"]


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    precision: float
    recall: float
    f1: float
    note: str = ""


def write_metrics_json(report: MetricsReport, path: str | Path, extra: dict | None = None) -> Path:
    data = report.to_dict()
    if extra:
        data.update(extra)
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_metrics_json(path: str | Path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred", *cm.classes])
        for name, row in zip(cm.classes, cm.counts):
            w.writerow([name, *(int(v) for v in row)])
    return path


def read_confusion_csv(path: str | Path) -> ConfusionMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    classes = rows[0][1:]
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(counts, tuple(classes))


def render_svg(emb: Embedding2D, title: str = "", size: int = SVG_SIZE) -> str:
    classes = list(dict.fromkeys(emb.labels))
    colour = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}
    xy = emb.coords
    margin, legend_w = 40.0, 120.0
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    scale = (size - 2 * margin - legend_w) / span.max()
    pts = (xy - lo) * scale + margin
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="{margin}" y="24" font-family="sans-serif" font-size="16">{escape(title)}</text>')
    for (x, y), lab in zip(pts, emb.labels):
        out.append(f'<circle cx="{x:.2f}" cy="{size - y:.2f}" r="3" fill="{colour[lab]}" fill-opacity="0.8"/>')
    lx = size - legend_w
    for i, c in enumerate(classes):
        y = margin + 22 * i
        out.append(f'<g class="legend-entry"><circle cx="{lx:.0f}" cy="{y}" r="6" fill="{colour[c]}"/>'
                   f'<text x="{lx + 12:.0f}" y="{y + 5}" font-family="sans-serif" font-size="14">{escape(c)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def format_summary(rows: list[SummaryRow], title: str = "Summary of results (%)") -> str:
    lines = [title, f"{'Exp.':<10}{'Precision':>10}{'Recall':>10}{'F1':>10}  Note"]
    for r in rows:
        lines.append(f"{r.experiment:<10}{100 * r.precision:>10.2f}{100 * r.recall:>10.2f}{100 * r.f1:>10.2f}  {r.note}")
    return "\n".join(lines) + "\n"


def emit_report(out_dir: str | Path, report: MetricsReport, cm: ConfusionMatrix, emb: Embedding2D | None,
                experiment_id: str, extra: dict | None = None, note: str = "") -> dict[str, Path]:
    """Write the standard artefacts of one evaluation into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": write_metrics_json(report, out_dir / "metrics.json", extra),
        "confusion": write_confusion_csv(cm, out_dir / "confusion.csv"),
    }
    if emb is not None:
        p = out_dir / "tsne.svg"
        p.write_text(render_svg(emb, f"{experiment_id} fingerprints (t-SNE)"), encoding="utf-8")
        paths["tsne"] = p
    row = SummaryRow(experiment_id, report.macro.precision, report.macro.recall, report.macro.f1, note)
    p = out_dir / "summary.txt"
    p.write_text(format_summary([row]), encoding="utf-8")
    paths["summary"] = p
    return paths
