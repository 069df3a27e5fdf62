"""Declarative experiment configuration loaded from YAML."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .manifest import SPLITS
from .nn.train import TrainConfig
from .perturb import PerturbSpec
from .simsource import model_hash, parse_pipeline

LABEL_AXES = ("vocoder", "acoustic")
LABEL_LEVELS = ("family", "instance")
GRID = ("V1", "V2", "V3", "A1", "A2", "R1", "R2", "N1", "N2", "N3")


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    label_axis: str
    sources: dict[str, list[str]]
    label_level: str = "family"
    n_per_source: dict[str, int] = field(default_factory=lambda: {"train": 100, "val": 25, "test": 25})
    duration: float = 3.0
    seed: int = 0
    base: str | None = None
    perturb: PerturbSpec | None = None
    sweep: list[float] = field(default_factory=list)
    train: TrainConfig = TrainConfig()
    tsne: TsneConfig = TsneConfig()
    description: str = ""

    def __post_init__(self):
        if self.label_axis not in LABEL_AXES:
            raise ConfigError(f"{self.experiment_id}: label_axis must be one of {LABEL_AXES}")
        if self.label_level not in LABEL_LEVELS:
            raise ConfigError(f"{self.experiment_id}: label_level must be one of {LABEL_LEVELS}")
        for split in SPLITS:
            srcs = self.sources.get(split)
            if not srcs:
                raise ConfigError(f"{self.experiment_id}: no sources for split {split!r}")
            for s in srcs:
                parse_pipeline(s)
            if self.n_per_source.get(split, 0) < 1:
                raise ConfigError(f"{self.experiment_id}: n_per_source[{split}] must be >= 1")
        if not 1.0 <= self.duration <= 10.0:
            raise ConfigError(f"{self.experiment_id}: duration must lie in [1, 10] s")
        if self.sweep and self.perturb is None:
            raise ConfigError(f"{self.experiment_id}: a sweep needs a perturbation")

    def label_of(self, acoustic: str, vocoder: str) -> str:
        """Class label of a pipeline under this experiment's labelling."""
        model = vocoder if self.label_axis == "vocoder" else acoustic
        if self.label_axis == "vocoder" and self.label_level == "family":
            return model[0]
        return model

    def classes(self) -> list[str]:
        """Training classes in order of first appearance."""
        out: list[str] = []
        for s in self.sources["train"]:
            lab = self.label_of(*parse_pipeline(s))
            if lab not in out:
                out.append(lab)
        return out

    def corpus_key(self) -> dict:
        """Fields that determine the synthesized corpus (perturbation excluded)."""
        return {"sources": self.sources, "n_per_source": self.n_per_source, "duration": self.duration,
                "seed": self.seed, "model_hash": model_hash()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["perturb"] = self.perturb.to_dict() if self.perturb else None
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_perturb(self, spec: PerturbSpec | None) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["perturb"] = spec
        d["sweep"] = []
        return ExperimentConfig(**d)


def _expand_sources(raw: dict) -> dict[str, list[str]]:
    if not isinstance(raw, dict) or "train" not in raw:
        raise ConfigError("sources must map split names to lists, starting with train")
    out = {}
    for split in SPLITS:
        v = raw.get(split, "same")
        out[split] = list(raw["train"]) if v == "same" else list(v or [])
    return out


def _perturb_spec(raw: dict | None) -> PerturbSpec | None:
    if raw is None:
        return None
    try:
        return PerturbSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad perturbation spec {raw}: {exc}") from exc


def sweep_specs(cfg: ExperimentConfig) -> list[PerturbSpec]:
    """One spec per sweep value, same kind and seed as the main perturbation."""
    if cfg.perturb is None:
        return []
    key = {"noise": "snr_db", "reverb": "rt60", "speed": "speed_factor"}[cfg.perturb.kind]
    return [PerturbSpec(kind=cfg.perturb.kind, seed=cfg.perturb.seed, **{key: float(v)}) for v in cfg.sweep]


def config_from_dict(raw: dict, search_dir: Path | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    if not isinstance(raw, dict) or "experiment_id" not in raw:
        raise ConfigError("config must be a mapping with an experiment_id")
    base = raw.get("base")
    if base:
        parent = _load_raw(base, search_dir)
        if parent.get("base"):
            raise ConfigError(f"{raw['experiment_id']}: base config {base} must not itself have a base")
        merged = {k: v for k, v in parent.items() if k not in ("experiment_id", "description")}
        merged.update(raw)
        raw = merged
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{raw['experiment_id']}: unknown keys {sorted(unknown)}")
    try:
        return ExperimentConfig(
            experiment_id=str(raw["experiment_id"]),
            label_axis=raw.get("label_axis", ""),
            label_level=raw.get("label_level", "family"),
            sources=_expand_sources(raw.get("sources")),
            n_per_source={**{"train": 100, "val": 25, "test": 25}, **(raw.get("n_per_source") or {})},
            duration=float(raw.get("duration", 3.0)),
            seed=int(raw.get("seed", 0)),
            base=base,
            perturb=_perturb_spec(raw.get("perturb")),
            sweep=[float(v) for v in raw.get("sweep") or []],
            train=TrainConfig(**(raw.get("train") or {})),
            tsne=TsneConfig(**(raw.get("tsne") or {})),
            description=str(raw.get("description", "")),
        )
    except TypeError as exc:
        raise ConfigError(f"{raw['experiment_id']}: {exc}") from exc


def _load_raw(name_or_path: str | Path, search_dir: Path | None) -> dict:
    p = Path(name_or_path)
    candidates = [p] if p.suffix in (".yaml", ".yml") else []
    if search_dir is not None:
        candidates.append(search_dir / f"{name_or_path}.yaml")
    for c in candidates:
        if c.is_file():
            return _parse_yaml(c.read_text(encoding="utf-8"), c)
    builtin = resources.files("vocotrace.configs") / f"{name_or_path}.yaml"
    if builtin.is_file():
        return _parse_yaml(builtin.read_text(encoding="utf-8"), builtin)
    raise ConfigError(f"no config named {name_or_path!r}")


def _parse_yaml(text: str, where) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: top level must be a mapping")
    return raw


def load_config(name_or_path: str | Path, seed: int | None = None) -> ExperimentConfig:
    """Load a config file, or a built-in grid row by id (``"V1"``)."""
    p = Path(name_or_path)
    search = p.parent if p.suffix in (".yaml", ".yml") else None
    cfg = config_from_dict(_load_raw(name_or_path, search), search)
    if seed is not None:
        d = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
        d["seed"] = seed
        cfg = ExperimentConfig(**d)
    return cfg


def load_grid(names=GRID, seed: int | None = None) -> list[ExperimentConfig]:
    return [load_config(n, seed) for n in names]
