"""Manifest-to-volume feature extraction and its on-disk cache."""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import dsp
from .container import read_container, write_container
from .dataset.audio import read_audio
from .dataset.labels import CLASS_INDEX
from .dataset.manifest import UtteranceRecord, load_manifest, resolve_labels
from .errors import CheckpointError, DataError

log = logging.getLogger(__name__)

KIND = "ser3d-features"


@dataclass
class FeatureSet:
    ids: list
    labels: dict          # id -> class index
    volumes: dict         # id -> [L, T, S] or, with multi_segment, [n, L, T, S]
    multi_segment: bool = False
    speakers: dict = field(default_factory=dict)  # id -> "corpus/speaker"


def extract_features(records: Sequence[UtteranceRecord], multi_segment: bool = False,
                     progress: Optional[Callable[[int, int], None]] = None) -> FeatureSet:
    """Read, gain-normalize per speaker and convert every record, in manifest order.

    Speakers are processed one at a time so only one speaker's audio is in
    memory at once.
    """
    if not records:
        raise DataError("no records to extract features from")
    records = resolve_labels(records)
    groups: dict[str, list[UtteranceRecord]] = {}
    for r in records:
        groups.setdefault(f"{r.corpus_id}/{r.speaker_id}", []).append(r)
    volumes: dict[str, np.ndarray] = {}
    done = 0
    for speaker, recs in groups.items():
        waves = dsp.normalize_gain([read_audio(r.audio_path, speaker) for r in recs])
        for r, w in zip(recs, waves):
            vols = dsp.extract_volumes(w, r.id, multi_segment)
            stacked = np.stack([v.values for v in vols])
            volumes[r.id] = stacked if multi_segment else stacked[0]
        done += len(recs)
        if progress:
            progress(done, len(records))
    ids = [r.id for r in records]
    return FeatureSet(ids, {r.id: CLASS_INDEX[r.label] for r in records},
                      {i: volumes[i] for i in ids}, multi_segment,
                      {r.id: f"{r.corpus_id}/{r.speaker_id}" for r in records})


def save_features(fs: FeatureSet, path) -> None:
    counts = [int(fs.volumes[i].shape[0]) if fs.multi_segment else 1 for i in fs.ids]
    stacked = np.concatenate([fs.volumes[i].reshape(-1, *dsp.VOLUME_SHAPE) for i in fs.ids])
    header = {"kind": KIND, "ids": fs.ids, "labels": [fs.labels[i] for i in fs.ids],
              "speakers": [fs.speakers.get(i, "") for i in fs.ids],
              "segments": counts, "multi_segment": fs.multi_segment}
    write_container(path, header, [(b"FEAT", [stacked])])


def load_features(path) -> FeatureSet:
    header, sections = read_container(path)
    if header.get("kind") != KIND or "FEAT" not in sections:
        raise CheckpointError(f"{path}: not a feature cache")
    stacked = sections["FEAT"][0]
    ids, counts = header["ids"], header["segments"]
    if sum(counts) != stacked.shape[0] or len(counts) != len(ids):
        raise CheckpointError(f"{path}: segment counts do not match the stored volumes")
    multi = bool(header["multi_segment"])
    offsets = np.concatenate([[0], np.cumsum(counts)])
    volumes = {}
    for i, uid in enumerate(ids):
        block = stacked[offsets[i]:offsets[i + 1]]
        volumes[uid] = block if multi else block[0]
    return FeatureSet(list(ids), dict(zip(ids, header["labels"])), volumes, multi,
                      dict(zip(ids, header["speakers"])))


def manifest_digest(manifest_path, records: Sequence[UtteranceRecord], multi_segment: bool) -> str:
    """Content hash of the manifest, every audio and trace file, and the options."""
    h = hashlib.sha256()
    h.update(Path(manifest_path).read_bytes())
    h.update(b"multi" if multi_segment else b"single")
    for r in records:
        for p in (r.audio_path, r.trace_path):
            if p is not None:
                try:
                    h.update(Path(p).read_bytes())
                except OSError as exc:
                    raise DataError(f"{p}: cannot read ({exc})") from exc
    return h.hexdigest()[:16]


def cached_features(manifest_path, cache_dir=None, multi_segment: bool = False,
                    progress: Optional[Callable[[int, int], None]] = None) -> FeatureSet:
    """Extract features for a manifest, reusing ``cache_dir/features-<digest>.s3dc`` if present."""
    records = load_manifest(manifest_path, check_files=True)
    if cache_dir is None:
        return extract_features(records, multi_segment, progress)
    cache_dir = Path(cache_dir)
    target = cache_dir / f"features-{manifest_digest(manifest_path, records, multi_segment)}.s3dc"
    if target.is_file():
        log.info("using cached features %s", target)
        return load_features(target)
    fs = extract_features(records, multi_segment, progress)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(".tmp")
    save_features(fs, tmp)
    tmp.replace(target)
    return fs
