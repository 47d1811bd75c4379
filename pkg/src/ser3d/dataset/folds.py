"""Speaker-independent five-fold planning.

Speakers of every corpus are shuffled independently.  Fold ``f`` rotates
the shuffled list by ``(f * n) // 5`` positions and takes the first
~20 % as test, the next ~20 % as validation and the rest as training, so
test blocks spread evenly over the ring (for n divisible by 5 they tile it
exactly).  Per-corpus partitions are then merged into the fold.
"""

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DataError
from .manifest import UtteranceRecord

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
N_FOLDS = 5
PARTITIONS = ("train", "val", "test")


@dataclass
class FoldPlan:
    fold_index: int
    speakers: dict = field(default_factory=dict)  # corpus -> partition -> [speaker ids]
    partitions: dict = field(default_factory=dict)  # partition -> [utterance ids]
    seed: int = 0

    def partition_of(self, corpus_id: str, speaker_id: str) -> str:
        for part in PARTITIONS:
            if speaker_id in self.speakers[corpus_id][part]:
                return part
        raise KeyError((corpus_id, speaker_id))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "fold_index": self.fold_index,
            "seed": self.seed,
            "speakers": self.speakers,
            "partitions": self.partitions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        if d.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported fold plan format_version {d.get('format_version')!r}")
        return cls(int(d["fold_index"]), d["speakers"], d["partitions"], int(d.get("seed", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FoldPlan":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{path}: cannot read fold plan ({exc})") from exc


def split_sizes(n: int) -> tuple[int, int, int]:
    """(test, val, train) speaker counts for a corpus of ``n`` speakers."""
    test = max(1, round(0.2 * n)) if n >= 1 else 0
    val = round(0.2 * n)
    if n >= 3:
        val = max(1, val)
    test = min(test, n)
    val = min(val, n - test)
    return test, val, n - test - val


def _corpus_rng(seed: int, corpus_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(corpus_id.encode("utf-8"))])


def make_folds(records: Sequence[UtteranceRecord], seed: int,
               n_folds: int = N_FOLDS) -> list[FoldPlan]:
    if not records:
        raise DataError("cannot build folds from an empty manifest")
    by_corpus: dict[str, list[str]] = {}
    for r in records:
        spk = by_corpus.setdefault(r.corpus_id, [])
        if r.speaker_id not in spk:
            spk.append(r.speaker_id)

    plans = [FoldPlan(f, seed=seed) for f in range(n_folds)]
    for corpus in sorted(by_corpus):
        order = sorted(by_corpus[corpus])
        _corpus_rng(seed, corpus).shuffle(order)
        n = len(order)
        if n < 2:
            log.warning("corpus %r has %d speaker(s); it supplies a test speaker in fold 0 only",
                        corpus, n)
        n_test, n_val, _ = split_sizes(n)
        for plan in plans:
            f = plan.fold_index
            if n < 2:
                parts = {"test": order if f == 0 else [], "val": [],
                         "train": [] if f == 0 else order}
            else:
                offset = (f * n) // n_folds
                rot = order[offset:] + order[:offset]
                parts = {"test": rot[:n_test], "val": rot[n_test:n_test + n_val],
                         "train": rot[n_test + n_val:]}
            plan.speakers[corpus] = {p: sorted(parts[p]) for p in PARTITIONS}

    for plan in plans:
        plan.partitions = {p: [] for p in PARTITIONS}
        for r in records:
            plan.partitions[plan.partition_of(r.corpus_id, r.speaker_id)].append(r.id)
    return plans
