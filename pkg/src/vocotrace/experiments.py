"""Experiment harness: one grid row end to end, or a whole suite.

Layout under ``out_dir``::

    cache/corpus-<hash>/        synthesized WAVs + manifest, shared by rows
    cache/features-<hash>.lfcc  LFCC cache keyed by manifest bytes + DSP config
    <EXP>/                      one run: manifest, features, checkpoint,
                                metrics, confusion, t-SNE, lock.json
    failed/<EXP>/               partial outputs of a run that raised
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ExperimentConfig, sweep_specs
from .dsp import dsp_config_hash, extract_lfcc, load_features, save_features
from .errors import ConfigError, StageError
from .eval.metrics import MetricsReport, confusion, metrics
from .eval.report import SummaryRow, emit_report, format_summary, write_confusion_csv, write_metrics_json
from .eval.tsne import tsne
from .audio import read_wav
from .manifest import CorpusManifest, read_manifest, write_manifest
from .nn import Checkpoint, FingerprintClassifier, save_checkpoint, train
from .perturb import PerturbSpec, perturb_manifest
from .simsource import model_hash, synth_corpus

log = logging.getLogger(__name__)


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass
class RunResult:
    experiment_id: str
    run_dir: Path
    report: MetricsReport | None
    sweep: dict[str, MetricsReport] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class _Stage:
    """Context manager that re-raises any failure as a StageError."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def corpus_dir(cfg: ExperimentConfig, cache: Path) -> Path:
    return cache / f"corpus-{_hash(cfg.corpus_key())[:16]}"


def ensure_corpus(cfg: ExperimentConfig, cache: Path) -> CorpusManifest:
    d = corpus_dir(cfg, cache)
    done = d / "manifest.jsonl"
    if done.is_file():
        return read_manifest(done)
    tmp = d.with_name(d.name + ".partial")
    shutil.rmtree(tmp, ignore_errors=True)
    synth_corpus(cfg, tmp)
    shutil.rmtree(d, ignore_errors=True)
    tmp.rename(d)
    return read_manifest(done)


def features_key(manifest_path: Path, salt: dict | None = None) -> str:
    """Key of a feature cache: manifest bytes, DSP config and, for perturbed
    corpora, the perturbation (perturbed manifests of different kinds are
    byte-identical because only the WAV payloads differ)."""
    h = hashlib.sha256(manifest_path.read_bytes())
    h.update(dsp_config_hash().encode())
    if salt:
        h.update(json.dumps(salt, sort_keys=True).encode())
    return h.hexdigest()[:16]


def extract_manifest(m: CorpusManifest, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    tmp = out_path.with_name(out_path.name + ".partial")
    save_features(tmp, (extract_lfcc(read_wav(m.resolve(e))) for e in m.entries))
    tmp.replace(out_path)
    return out_path


def ensure_features(manifest_path: Path, cache: Path, salt: dict | None = None) -> tuple[np.ndarray, Path]:
    path = cache / f"features-{features_key(manifest_path, salt)}.lfcc"
    if not path.is_file():
        extract_manifest(read_manifest(manifest_path), path)
    return load_features(path), path


def _link(src: Path, dst: Path) -> None:
    if dst.exists():
        dst.unlink()
    try:
        os.link(src, dst)
    except OSError:
        shutil.copyfile(src, dst)


def _labels(cfg: ExperimentConfig, m: CorpusManifest, split: str) -> list[str]:
    return [cfg.label_of(e.acoustic_label, e.vocoder_label) for e in m.split(split)]


def _split_rows(m: CorpusManifest, split: str) -> np.ndarray:
    return np.array([i for i, e in enumerate(m.entries) if e.split == split], dtype=np.int64)


def _evaluate(clf: FingerprintClassifier, X: np.ndarray, y_true: list[str], classes: list[str]):
    probs, emb = clf.forward(X)
    pred = [classes[i] for i in probs.argmax(axis=1)]
    cm = confusion(y_true, pred, classes)
    return cm, metrics(cm), emb


def write_lock(cfg: ExperimentConfig, run_dir: Path) -> dict:
    (run_dir / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
    lock = {
        "experiment_id": cfg.experiment_id,
        "config_hash": cfg.config_hash(),
        "dsp_config_hash": dsp_config_hash(),
        "model_hash": model_hash(),
        "seeds": {
            "corpus": cfg.seed,
            "train": cfg.train.seed,
            "tsne": cfg.tsne.seed,
            "perturb": cfg.perturb.seed if cfg.perturb else None,
        },
        "version": __version__,
    }
    (run_dir / "lock.json").write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return lock


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, cache_dir: str | Path | None = None,
                   with_tsne: bool = True) -> RunResult:
    """Run one grid row; raises StageError naming the failed stage.

    On failure the partial run directory is moved to ``out_dir/failed/``.
    """
    out_dir = Path(out_dir)
    cache = Path(cache_dir) if cache_dir is not None else out_dir / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    run_dir = out_dir / cfg.experiment_id
    shutil.rmtree(run_dir, ignore_errors=True)
    run_dir.mkdir(parents=True)
    try:
        return _run(cfg, run_dir, cache, with_tsne)
    except StageError as exc:
        failed = out_dir / "failed" / cfg.experiment_id
        shutil.rmtree(failed, ignore_errors=True)
        failed.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(run_dir), failed)
        (failed / "error.json").write_text(
            json.dumps({"stage": exc.stage, "cause": repr(exc.cause)}, indent=2) + "\n", encoding="utf-8")
        raise


def _run(cfg: ExperimentConfig, run_dir: Path, cache: Path, with_tsne: bool) -> RunResult:
    write_lock(cfg, run_dir)
    with _Stage("synth"):
        corpus = ensure_corpus(cfg, cache)
        manifest_path = write_manifest(corpus, run_dir / "manifest.jsonl")
    with _Stage("extract"):
        feats, fpath = ensure_features(corpus.root / "manifest.jsonl", cache)
        _link(fpath, run_dir / "features.lfcc")
    classes = cfg.classes()
    idx = {s: _split_rows(corpus, s) for s in ("train", "val", "test")}
    y = {s: _labels(cfg, corpus, s) for s in idx}
    for s in ("val", "test"):
        unknown = sorted(set(y[s]) - set(classes))
        if unknown:
            raise StageError("train", ConfigError(f"{s} labels {unknown} never occur in training"))
    with _Stage("train"):
        clf = FingerprintClassifier(len(classes), seed=cfg.train.seed)
        to_int = {c: i for i, c in enumerate(classes)}
        hist = train(clf, feats[idx["train"]], np.array([to_int[v] for v in y["train"]]),
                     feats[idx["val"]], np.array([to_int[v] for v in y["val"]]), cfg.train)
        save_checkpoint(Checkpoint(clf.state_dict(), {
            "epoch": hist.best_epoch, "seed": cfg.train.seed, "config_hash": cfg.config_hash(),
            "classes": classes}), run_dir / "checkpoint.vtck")
        (run_dir / "history.json").write_text(json.dumps(hist.to_dict(), indent=2) + "\n", encoding="utf-8")

    # test sets: the clean one, or one per perturbation setting
    specs: list[PerturbSpec] = []
    if cfg.perturb is not None:
        specs = [cfg.perturb] + [s for s in sweep_specs(cfg) if s != cfg.perturb]
    sweep: dict[str, MetricsReport] = {}
    main_report = None
    if not specs:
        with _Stage("eval"):
            cm, rep, emb = _evaluate(clf, feats[idx["test"]], y["test"], classes)
        main_report = rep
        with _Stage("report"):
            _report(cfg, run_dir, cm, rep, emb, y["test"], with_tsne)
    for spec in specs:
        sub = run_dir / "perturbed" / spec.label
        with _Stage("perturb"):
            pm = perturb_manifest(read_manifest(manifest_path), spec, sub)
        with _Stage("extract"):
            pfeats, _ = ensure_features(sub / "manifest.jsonl", cache, {"perturb": spec.to_dict()})
        with _Stage("eval"):
            cm, rep, emb = _evaluate(clf, pfeats[_split_rows(pm, "test")], _labels(cfg, pm, "test"), classes)
        sweep[spec.label] = rep
        with _Stage("report"):
            if spec == cfg.perturb:
                main_report = rep
                _report(cfg, run_dir, cm, rep, emb, _labels(cfg, pm, "test"), with_tsne,
                        {"perturbation": spec.to_dict()})
            write_metrics_json(rep, sub / "metrics.json", {"perturbation": spec.to_dict()})
            write_confusion_csv(cm, sub / "confusion.csv")
            shutil.rmtree(sub / "wav", ignore_errors=True)
    return RunResult(cfg.experiment_id, run_dir, main_report, sweep)


def _report(cfg, run_dir, cm, rep, emb, labels, with_tsne, extra=None):
    e2d = None
    if with_tsne and len(emb) >= 3 * cfg.tsne.perplexity:
        e2d = tsne(emb, labels, cfg.tsne.perplexity, cfg.tsne.iters, cfg.tsne.seed)
        np.savetxt(run_dir / "tsne.csv", e2d.coords, delimiter=",", fmt="%.17g")
    note = cfg.perturb.label if cfg.perturb else ""
    emit_report(run_dir, rep, cm, e2d, cfg.experiment_id, {"experiment_id": cfg.experiment_id, **(extra or {})}, note)


def run_suite(grid: list[ExperimentConfig], out_dir: str | Path, with_tsne: bool = True) -> str:
    """Run every config; failures are recorded and the suite carries on.

    Writes ``summary.txt`` (one row per experiment), ``sweep.txt`` (one row
    per perturbation setting) and ``suite.json``; returns the summary text.
    """
    if not grid:
        raise ConfigError("empty experiment grid")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, sweep_rows, record = [], [], {}
    for cfg in grid:
        try:
            res = run_experiment(cfg, out_dir, with_tsne=with_tsne)
        except StageError as exc:
            log.error("%s failed: %s", cfg.experiment_id, exc)
            rows.append(SummaryRow(cfg.experiment_id, float("nan"), float("nan"), float("nan"),
                                   f"FAILED at {exc.stage}"))
            record[cfg.experiment_id] = {"error": str(exc)}
            continue
        m = res.report.macro
        others = [f"{k}: F1 {100 * v.macro.f1:.2f}" for k, v in res.sweep.items() if k != cfg.perturb.label] \
            if cfg.perturb else []
        note = (cfg.perturb.label + ("; " + "; ".join(others) if others else "")) if cfg.perturb else ""
        rows.append(SummaryRow(cfg.experiment_id, m.precision, m.recall, m.f1, note))
        record[cfg.experiment_id] = {"macro": res.report.to_dict()["macro"],
                                     "sweep": {k: v.to_dict()["macro"] for k, v in res.sweep.items()}}
        for label, rep in res.sweep.items():
            sweep_rows.append(SummaryRow(f"{cfg.experiment_id} {label}", rep.macro.precision, rep.macro.recall,
                                         rep.macro.f1))
    summary = format_summary(rows)
    (out_dir / "summary.txt").write_text(summary, encoding="utf-8")
    if sweep_rows:
        (out_dir / "sweep.txt").write_text(format_summary(sweep_rows, "Perturbation sweep (%)"), encoding="utf-8")
    (out_dir / "suite.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
