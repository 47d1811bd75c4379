"""Corpus manifest CSV: one row per pre-segmented utterance."""

import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from ..errors import DataError
from .labels import CATEGORIES, map_trace, read_trace

COLUMNS = ["id", "audio_path", "corpus_id", "speaker_id", "label", "trace_path"]


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: Path
    corpus_id: str
    speaker_id: str
    label: Optional[str] = None
    trace_path: Optional[Path] = None

    def __post_init__(self):
        if (self.label is None) == (self.trace_path is None):
            raise DataError(f"utterance {self.id!r}: exactly one of label / trace_path is required")
        if not self.speaker_id:
            raise DataError(f"utterance {self.id!r}: empty speaker_id")
        if self.label is not None and self.label not in CATEGORIES:
            raise DataError(f"utterance {self.id!r}: unknown label {self.label!r}")


def load_manifest(path, check_files: bool = False) -> list[UtteranceRecord]:
    """Parse and validate a manifest.  Relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: manifest not found")
    base = path.parent
    records: list[UtteranceRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COLUMNS:
            raise DataError(f"{path}:1: header must be {','.join(COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            uid, audio, corpus, speaker, label, trace = (c.strip() for c in row)
            if not uid:
                raise DataError(f"{path}:{lineno}: empty id")
            if uid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {uid!r} (first on line {seen[uid]})")
            if not audio:
                raise DataError(f"{path}:{lineno}: empty audio_path")
            if bool(label) == bool(trace):
                raise DataError(f"{path}:{lineno}: exactly one of label / trace_path must be set")
            try:
                rec = UtteranceRecord(
                    id=uid,
                    audio_path=base / audio,
                    corpus_id=corpus,
                    speaker_id=speaker,
                    label=label or None,
                    trace_path=(base / trace) if trace else None,
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if check_files:
                for p in (rec.audio_path, rec.trace_path):
                    if p is not None and not p.is_file():
                        raise DataError(f"{path}:{lineno}: file not found: {p}")
            seen[uid] = lineno
            records.append(rec)
    return records


def write_manifest(records: Sequence[UtteranceRecord], path) -> None:
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Optional[Path]) -> str:
        if p is None:
            return ""
        return Path(os.path.relpath(Path(p).resolve(), base)).as_posix()

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.id, rel(r.audio_path), r.corpus_id, r.speaker_id,
                        r.label or "", rel(r.trace_path)])


def resolve_labels(records: Sequence[UtteranceRecord]) -> list[UtteranceRecord]:
    """Replace trace references by the category their trace maps to."""
    out = []
    for r in records:
        if r.label is None:
            r = replace(r, label=map_trace(read_trace(r.trace_path)), trace_path=None)
        out.append(r)
    return out
