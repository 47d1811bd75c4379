"""Mini-batch Adam training with validation-UA early stopping."""

import copy
import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .. import elm
from ..core.adam import AdamState, adam_step
from ..errors import DataError, NumericError
from .network import ModelParams, loss_and_grads, predict, utterance_scores

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    batch_size: int = 128
    learning_rate: float = 3e-3
    max_epochs: int = 20
    patience: int = 5
    # gradient of one batch is accumulated over chunks of this size to bound memory
    micro_batch: int = 32


def stack_partition(ids: Sequence[str], features: Mapping[str, np.ndarray],
                    labels: Mapping[str, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack volumes for ``ids``; multi-segment entries ``[n, L, T, S]`` expand to n rows.

    Returns ``(volumes, labels, owner)`` where ``owner[i]`` indexes ``ids``.
    """
    vols, ys, owner = [], [], []
    for k, uid in enumerate(ids):
        try:
            v = np.asarray(features[uid])
            y = int(labels[uid])
        except KeyError as exc:
            raise DataError(f"no features/label for utterance {uid!r}") from exc
        v = v[None] if v.ndim == 3 else v
        vols.append(v)
        ys.extend([y] * v.shape[0])
        owner.extend([k] * v.shape[0])
    if not vols:
        return np.zeros((0, 0, 0, 0), np.float32), np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(vols).astype(np.float32, copy=False), np.array(ys), np.array(owner)


def _ua(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    recalls = [np.mean(y_pred[y_true == k] == k) for k in range(n_classes) if np.any(y_true == k)]
    return float(np.mean(recalls)) if recalls else 0.0


def vote(pred: np.ndarray, owner: Optional[np.ndarray], n_items: Optional[int],
         n_classes: int) -> np.ndarray:
    """Majority vote of segment decisions per owner; ties go to the lowest class index."""
    if owner is None:
        return pred
    n_items = n_items if n_items is not None else int(owner.max()) + 1
    votes = np.zeros((n_items, n_classes), dtype=int)
    np.add.at(votes, (owner, pred), 1)
    return votes.argmax(axis=1)


def classify(model: ModelParams, volumes: np.ndarray, owner: Optional[np.ndarray] = None,
             n_items: Optional[int] = None) -> np.ndarray:
    """Class decision per item; segments sharing an owner are majority-voted.

    An ELM-head model with a fitted ELM decides through functionals and the
    ELM; without one it uses the step-averaged softmax output.
    """
    if volumes.shape[0] == 0:
        return np.zeros(0, dtype=int)
    probs = predict(model, volumes)
    if model.elm is not None:
        pred = elm.elm_predict(model.elm, elm.functionals(probs, model.elm.threshold))
    else:
        pred = utterance_scores(model, probs).argmax(axis=-1)
    return vote(pred, owner, n_items, model.config.n_classes)


def fit_elm(model: ModelParams, ids: Sequence[str], features: Mapping[str, np.ndarray],
            labels: Mapping[str, int], seed: int, hidden: int = elm.HIDDEN,
            ridge: float = elm.RIDGE, threshold: float = elm.THRESHOLD) -> ModelParams:
    """Fit the ELM stage on functionals of the per-step outputs for ``ids``."""
    if model.config.head != "ELM":
        raise DataError("an ELM stage needs a model with the ELM head")
    x, y, _ = stack_partition(ids, features, labels)
    if x.shape[0] == 0:
        raise DataError("no training volumes for the ELM stage")
    feats = elm.functionals(predict(model, x), threshold)
    model = copy.copy(model)
    model.elm = elm.elm_train(feats, y, hidden, ridge, seed, model.config.n_classes, threshold)
    return model


def train(model: ModelParams, fold, features: Mapping[str, np.ndarray],
          labels: Mapping[str, int], seed: int, settings: TrainSettings = TrainSettings(),
          progress: Optional[Callable[[dict], None]] = None) -> tuple[ModelParams, list[dict]]:
    """Train on ``fold.partitions['train']``, early-stopping on ``'val'``.

    Returns a new :class:`ModelParams` holding the best-validation snapshot
    (the last epoch if there is no validation data) and the per-epoch history.
    """
    model = copy.deepcopy(model)
    cfg = model.config
    x_tr, y_tr, _ = stack_partition(fold.partitions["train"], features, labels)
    if x_tr.shape[0] == 0:
        raise DataError(f"fold {fold.fold_index}: empty training partition")
    val_ids = fold.partitions.get("val", [])
    x_va, _, own_va = stack_partition(val_ids, features, labels)
    y_va = np.array([int(labels[u]) for u in val_ids])

    shuffle_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    state = model.adam or AdamState.for_params(model.params, learning_rate=settings.learning_rate)
    history: list[dict] = []
    best = None
    since_best = 0
    n = x_tr.shape[0]
    for epoch in range(1, settings.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for b, start in enumerate(range(0, n, settings.batch_size)):
            idx = order[start:start + settings.batch_size]
            grads, batch_loss = None, 0.0
            for m in range(0, idx.size, settings.micro_batch):
                sub = idx[m:m + settings.micro_batch]
                w = sub.size / idx.size
                l, g = loss_and_grads(model, x_tr[sub], y_tr[sub], rng=dropout_rng, scale=w)
                batch_loss += w * l
                if grads is None:
                    grads = g
                else:
                    for k in grads:
                        grads[k] += g[k]
            if not np.isfinite(batch_loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b + 1}")
            try:
                adam_step(model.params, grads, state)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b + 1}: {exc}") from exc
            total_loss += batch_loss * idx.size

        entry = {"epoch": epoch, "train_loss": total_loss / n}
        if y_va.size:
            entry["val_ua"] = _ua(y_va, classify(model, x_va, own_va, len(val_ids)), cfg.n_classes)
        history.append(entry)
        if progress:
            progress(entry)
        log.info("epoch %d: %s", epoch, entry)

        score = entry.get("val_ua")
        if score is None:
            best = (epoch, None, copy.deepcopy(model.params), copy.deepcopy(state))
            continue
        if best is None or score > best[1]:
            best = (epoch, score, copy.deepcopy(model.params), copy.deepcopy(state))
            since_best = 0
        else:
            since_best += 1
            if since_best >= settings.patience:
                break

    best_epoch, best_score, params, best_state = best
    model.params = params
    model.adam = best_state
    model.metadata = {
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_val_ua": best_score,
        "train_seed": seed,
        "fold_index": fold.fold_index,
    }
    return model, history
