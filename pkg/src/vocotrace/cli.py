"""Command line entry point: ``vocotrace <command> ...``.

Every command accepts ``--config``, ``--seed`` and ``--out``. Exit status is
0 on success, 2 for configuration errors and 3 for any other failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import GRID, ExperimentConfig, load_config
from .dsp import load_features
from .errors import ConfigError, StageError, VocotraceError
from .eval.metrics import confusion, metrics
from .eval.report import SummaryRow, emit_report, format_summary, read_metrics_json, render_svg
from .eval.tsne import tsne
from .experiments import extract_manifest, run_experiment, run_suite
from .manifest import read_manifest
from .nn import Checkpoint, FingerprintClassifier, load_checkpoint, save_checkpoint, train
from .perturb import PerturbSpec, perturb_manifest
from .simsource import synth_corpus

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("vocotrace")


def _cfg(args, required: bool = True) -> ExperimentConfig | None:
    if args.config is None:
        if required:
            raise ConfigError(f"{args.command} needs --config (a grid id such as V1, or a YAML file)")
        return None
    return load_config(args.config, args.seed)


def _out(args) -> Path:
    if args.out is None:
        raise ConfigError(f"{args.command} needs --out")
    return Path(args.out)


def _split_data(cfg: ExperimentConfig, manifest: Path, features: Path, split: str, classes: list[str]):
    m = read_manifest(manifest)
    X = load_features(features)
    if len(X) != len(m.entries):
        raise ConfigError(f"{features} holds {len(X)} matrices but {manifest} lists {len(m.entries)} entries")
    rows = [i for i, e in enumerate(m.entries) if e.split == split]
    labels = [cfg.label_of(m.entries[i].acoustic_label, m.entries[i].vocoder_label) for i in rows]
    unknown = sorted(set(labels) - set(classes))
    if unknown:
        raise ConfigError(f"{split} labels {unknown} are not among the classes {classes}")
    return X[rows], labels


def _load_classifier(path: Path) -> tuple[FingerprintClassifier, list[str]]:
    ck = load_checkpoint(path)
    classes = list(ck.meta["classes"])
    clf = FingerprintClassifier(len(classes))
    clf.load_state_dict(ck.tensors)
    return clf, classes


def cmd_synth_corpus(args) -> int:
    m = synth_corpus(_cfg(args), _out(args))
    print(f"wrote {len(m.entries)} utterances to {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    out = _out(args)
    if out.suffix != ".lfcc":
        out = out / "features.lfcc"
    out.parent.mkdir(parents=True, exist_ok=True)
    extract_manifest(read_manifest(args.manifest), out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    spec = PerturbSpec(kind=args.kind, snr_db=args.snr_db, rt60=args.rt60, speed_factor=args.speed_factor,
                       seed=args.seed or 0)
    m = perturb_manifest(read_manifest(args.manifest), spec, _out(args))
    print(f"perturbed {len(m.split('test'))} test utterances ({spec.label}) into {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _cfg(args)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    classes = cfg.classes()
    to_int = {c: i for i, c in enumerate(classes)}
    Xtr, ytr = _split_data(cfg, args.manifest, args.features, "train", classes)
    Xva, yva = _split_data(cfg, args.manifest, args.features, "val", classes)
    tc = cfg.train
    if args.epochs is not None:
        tc = dataclasses.replace(tc, max_epochs=args.epochs)
    clf = FingerprintClassifier(len(classes), seed=tc.seed)
    hist = train(clf, Xtr, np.array([to_int[v] for v in ytr]), Xva, np.array([to_int[v] for v in yva]), tc)
    save_checkpoint(Checkpoint(clf.state_dict(), {"epoch": hist.best_epoch, "seed": tc.seed,
                                                  "config_hash": cfg.config_hash(), "classes": classes}),
                    out / "checkpoint.vtck")
    (out / "history.json").write_text(json.dumps(hist.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"best epoch {hist.best_epoch}, validation macro-F1 {hist.best_val_f1:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _cfg(args)
    clf, classes = _load_classifier(args.checkpoint)
    X, y = _split_data(cfg, args.manifest, args.features, args.split, classes)
    probs, emb = clf.forward(X)
    cm = confusion(y, [classes[i] for i in probs.argmax(axis=1)], classes)
    rep = metrics(cm)
    emit_report(_out(args), rep, cm, None, cfg.experiment_id, {"experiment_id": cfg.experiment_id})
    np.save(_out(args) / "embeddings.npy", emb)
    print(f"{cfg.experiment_id} {args.split}: macro P {rep.macro.precision:.4f} R {rep.macro.recall:.4f} "
          f"F1 {rep.macro.f1:.4f}")
    return EXIT_OK


def cmd_tsne(args) -> int:
    cfg = _cfg(args)
    clf, classes = _load_classifier(args.checkpoint)
    X, y = _split_data(cfg, args.manifest, args.features, args.split, classes)
    _, emb = clf.forward(X)
    e2d = tsne(emb, y, cfg.tsne.perplexity, cfg.tsne.iters, cfg.tsne.seed)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "tsne.csv", e2d.coords, delimiter=",", fmt="%.17g")
    (out / "tsne.svg").write_text(render_svg(e2d, f"{cfg.experiment_id} fingerprints (t-SNE)"), encoding="utf-8")
    print(f"final KL {e2d.kl:.4f}; wrote {out / 'tsne.svg'}")
    return EXIT_OK


def cmd_run(args) -> int:
    res = run_experiment(_cfg(args), _out(args), with_tsne=not args.no_tsne)
    m = res.report.macro
    print(f"{res.experiment_id}: macro P {m.precision:.4f} R {m.recall:.4f} F1 {m.f1:.4f}")
    for label, rep in res.sweep.items():
        print(f"  {label}: F1 {rep.macro.f1:.4f}")
    return EXIT_OK


def cmd_suite(args) -> int:
    names = args.config.split(",") if args.config else list(GRID)
    grid = [load_config(n.strip(), args.seed) for n in names if n.strip()]
    print(run_suite(grid, _out(args), with_tsne=not args.no_tsne), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    """Rebuild the summary table from the run directories under ``--out``."""
    out = _out(args)
    rows = []
    for d in sorted(p.parent for p in out.glob("*/metrics.json")):
        rep = read_metrics_json(d / "metrics.json")
        extra = json.loads((d / "metrics.json").read_text(encoding="utf-8"))
        note = PerturbSpec(**extra["perturbation"]).label if "perturbation" in extra else ""
        rows.append(SummaryRow(d.name, rep.macro.precision, rep.macro.recall, rep.macro.f1, note))
    if not rows:
        raise ConfigError(f"no run directories with metrics.json under {out}")
    text = format_summary(rows)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="grid id (V1..N3) or path to a YAML config")
    common.add_argument("--seed", type=int, default=None, help="override the config / RNG seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vocotrace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    add("synth-corpus", cmd_synth_corpus, "synthesize the labelled corpus of a config")
    sp = add("extract", cmd_extract, "extract LFCC features for every manifest entry")
    sp.add_argument("--manifest", required=True, type=Path)
    sp = add("perturb", cmd_perturb, "perturb the test split of a corpus")
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--kind", required=True, choices=["noise", "reverb", "speed"])
    sp.add_argument("--snr-db", type=float)
    sp.add_argument("--rt60", type=float)
    sp.add_argument("--speed-factor", type=float)
    for name, fn, help_ in (("train", cmd_train, "train a classifier"),
                            ("eval", cmd_eval, "evaluate a checkpoint"),
                            ("tsne", cmd_tsne, "embed fingerprints in 2-d")):
        sp = add(name, fn, help_)
        sp.add_argument("--manifest", required=True, type=Path)
        sp.add_argument("--features", required=True, type=Path)
        if name == "train":
            sp.add_argument("--epochs", type=int, help="override the maximum number of epochs")
        else:
            sp.add_argument("--checkpoint", required=True, type=Path)
            sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp = add("run", cmd_run, "run one experiment end to end")
    sp.add_argument("--no-tsne", action="store_true")
    sp = add("suite", cmd_suite, "run several experiments (--config V1,V2,... ; default: all)")
    sp.add_argument("--no-tsne", action="store_true")
    add("report", cmd_report, "rebuild the summary table of a suite directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
    except (VocotraceError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
