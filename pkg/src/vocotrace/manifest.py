"""JSON-lines corpus manifest shared by synthesis, perturbation and training.

Line 1 is a header ``{"schema": "vocotrace-manifest", "version": 1, "seed": ...}``;
every following line is one utterance. Paths are stored relative to the
manifest's directory so a corpus can be moved or compared byte-for-byte.
External corpora (real TTS output) can be ingested by writing this format.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError, FormatError

SCHEMA = "vocotrace-manifest"
SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: str
    acoustic_label: str
    vocoder_label: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"{self.utterance_id}: unknown split {self.split!r}")


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    seed: int
    root: Path = field(default=Path("."), compare=False)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def validate(self) -> None:
        seen: dict[str, str] = {}
        for e in self.entries:
            if e.utterance_id in seen:
                raise ConfigError(
                    f"utterance {e.utterance_id} appears twice (splits {seen[e.utterance_id]}, {e.split})")
            seen[e.utterance_id] = e.split


def write_manifest(m: CorpusManifest, path: str | Path) -> Path:
    path = Path(path)
    m.validate()
    lines = [json.dumps({"schema": SCHEMA, "version": SCHEMA_VERSION, "seed": m.seed}, sort_keys=True)]
    for e in m.entries:
        rec = asdict(e)
        rec["path"] = os.path.relpath(m.resolve(e).resolve(), path.parent.resolve())
        lines.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    raw = path.read_text(encoding="utf-8").splitlines()
    if not raw:
        raise FormatError(f"{path}: empty manifest")
    try:
        header = json.loads(raw[0])
        records = [json.loads(line) for line in raw[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if header.get("schema") != SCHEMA:
        raise FormatError(f"{path}: not a {SCHEMA} file")
    if header.get("version") != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {header.get('version')}")
    try:
        entries = [ManifestEntry(**r) for r in records]
    except TypeError as exc:
        raise FormatError(f"{path}: bad entry ({exc})") from exc
    m = CorpusManifest(entries, int(header["seed"]), path.parent)
    m.validate()
    return m
