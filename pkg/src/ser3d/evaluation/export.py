"""CSV feature exports and gnuplot-readable embedding dumps."""

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dataset.labels import CATEGORIES, CLASS_INDEX
from ..errors import DataError
from ..models.network import ModelParams, top_activations


def utterance_activations(model: ModelParams, ids: Sequence[str], volumes) -> np.ndarray:
    """Top fully-connected activations per utterance; segments are averaged."""
    rows = []
    for uid in ids:
        v = np.asarray(volumes[uid], dtype=np.float32)
        acts = top_activations(model, v[None] if v.ndim == 3 else v)
        rows.append(acts[0] if acts.shape[0] == 1 else acts.mean(axis=0))
    return np.stack(rows) if rows else np.zeros((0, model.config.fc_width), np.float32)


def write_features_csv(path, ids: Sequence[str], labels: Sequence[int], values: np.ndarray) -> None:
    """``id,label,f0..f{D-1}``; 9 significant digits round-trip float32 exactly."""
    values = np.asarray(values, dtype=np.float32)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{j}" for j in range(values.shape[1])])
        for uid, lab, row in zip(ids, labels, values):
            w.writerow([uid, CATEGORIES[int(lab)]] + [f"{v:.9g}" for v in row])


def export_features(model: ModelParams, ids: Sequence[str], volumes, labels, path) -> np.ndarray:
    values = utterance_activations(model, ids, volumes)
    write_features_csv(path, ids, [labels[u] for u in ids], values)
    return values


def read_features_csv(path) -> tuple[list, np.ndarray, np.ndarray]:
    """Returns ``(ids, label indices, float32 matrix)``."""
    path = Path(path)
    ids, labels, rows = [], [], []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["id", "label"]:
            raise DataError(f"{path}:1: header must start with id,label")
        width = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width + 2:
                raise DataError(f"{path}:{lineno}: expected {width + 2} fields, got {len(row)}")
            if row[1] not in CLASS_INDEX:
                raise DataError(f"{path}:{lineno}: unknown label {row[1]!r}")
            try:
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            ids.append(row[0])
            labels.append(CLASS_INDEX[row[1]])
    return ids, np.array(labels, dtype=int), np.array(rows, dtype=np.float32).reshape(len(ids), width)


def write_embedding(path, embedding: np.ndarray, labels: Sequence[int]) -> None:
    """Two columns ``x y``; one gnuplot data block per class, in class order."""
    embedding, labels = np.asarray(embedding), np.asarray(labels)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        blocks = []
        for k, name in enumerate(CATEGORIES):
            rows = embedding[labels == k]
            if rows.size:
                blocks.append(f"# class {name}\n" + "".join(f"{x:.9g} {y:.9g}\n" for x, y in rows))
        fh.write("\n\n".join(blocks))
