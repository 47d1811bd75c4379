"""Discrete categories and the mapping from valence/arousal traces."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import DataError, DegenerateInputError

# index order doubles as the tie-breaking order
CATEGORIES = ("neutral", "happy", "sad", "angry")
CLASS_INDEX = {name: i for i, name in enumerate(CATEGORIES)}

LANDMARKS: Mapping[str, tuple[float, float]] = {
    "neutral": (0.00, 0.00),
    "happy": (0.74, 0.52),
    "angry": (-0.77, 0.75),
    "sad": (-0.70, -0.48),
}


@dataclass(frozen=True)
class TraceSample:
    time: float
    valence: float
    arousal: float


def average_distances(trace: Sequence[TraceSample],
                      landmarks: Mapping[str, tuple[float, float]] = LANDMARKS) -> dict[str, float]:
    """Mean Euclidean distance from every trace sample to each landmark."""
    if not trace:
        raise DegenerateInputError("cannot map an empty trace")
    n = len(trace)
    return {
        cat: sum(math.hypot(s.valence - v, s.arousal - a) for s in trace) / n
        for cat, (v, a) in ((c, landmarks[c]) for c in CATEGORIES)
    }


def map_trace(trace: Sequence[TraceSample],
              landmarks: Mapping[str, tuple[float, float]] = LANDMARKS) -> str:
    dist = average_distances(trace, landmarks)
    # min() keeps the first minimum, so ties follow CATEGORIES order
    return min(CATEGORIES, key=lambda c: dist[c])


def read_trace(path) -> list[TraceSample]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: trace file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time", "valence", "arousal"]:
            raise DataError(f"{path}:1: trace header must be 'time,valence,arousal'")
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                t, v, a = (float(c) for c in row)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not (-1.0 <= v <= 1.0 and -1.0 <= a <= 1.0):
                raise DataError(f"{path}:{lineno}: valence/arousal outside [-1, 1]")
            if samples and t < samples[-1].time:
                raise DataError(f"{path}:{lineno}: time decreases ({t} < {samples[-1].time})")
            samples.append(TraceSample(t, v, a))
    return samples


def write_trace(path, trace: Sequence[TraceSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "valence", "arousal"])
        for s in trace:
            w.writerow([repr(s.time), repr(s.valence), repr(s.arousal)])
