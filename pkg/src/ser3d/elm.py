"""Statistical functionals over per-step softmax outputs and an Extreme Learning Machine."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.special

from .errors import DataError, DimensionError, NumericError

log = logging.getLogger(__name__)

FUNCTIONALS = ("max", "min", "mean", "frac")
THRESHOLD = 0.2
HIDDEN = 256
RIDGE = 1e-3
# systems worse than this keep only ~4 significant digits in float64
COND_LIMIT = 1e12
MAX_RETRIES = 3


def functionals(per_step_probs: np.ndarray, threshold: float = THRESHOLD) -> np.ndarray:
    """Per class: max, min, mean and fraction of steps above ``threshold``.

    ``[steps, K]`` gives ``4K`` values ordered class-major; a leading batch
    axis ``[B, steps, K]`` gives ``[B, 4K]``.
    """
    p = np.asarray(per_step_probs, dtype=np.float64)
    if p.ndim not in (2, 3) or p.shape[-2] < 1 or p.shape[-1] < 2:
        raise DimensionError(f"functionals expects [steps, K] or [B, steps, K], got {p.shape}")
    if not np.all(np.isfinite(p)) or p.min() < -1e-6 or np.abs(p.sum(axis=-1) - 1).max() > 1e-4:
        raise DataError("functionals: rows must be probability vectors (nonnegative, summing to 1)")
    stats = np.stack([p.max(axis=-2), p.min(axis=-2), p.mean(axis=-2),
                      (p > threshold).mean(axis=-2)], axis=-1)  # [..., K, 4]
    return stats.reshape(*stats.shape[:-2], -1)


@dataclass(frozen=True)
class ElmModel:
    input_weights: np.ndarray   # [H, D], frozen after initialization
    hidden_bias: np.ndarray     # [H]
    output_weights: np.ndarray  # [H, n_classes]
    ridge: float                # lambda actually used by the solver
    threshold: float = THRESHOLD

    @property
    def hidden(self) -> int:
        return self.input_weights.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.output_weights.shape[1]


def _hidden(model_w: np.ndarray, model_b: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = x.astype(np.float64) @ model_w.T.astype(np.float64) + model_b.astype(np.float64)
    return scipy.special.expit(z)


def elm_train(features: np.ndarray, labels: np.ndarray, hidden: int = HIDDEN, ridge: float = RIDGE,
              seed: int = 0, n_classes: Optional[int] = None,
              threshold: float = THRESHOLD) -> ElmModel:
    """Random sigmoid hidden layer; output weights by ridge-regularized normal equations.

    Every weight is stored as float32 so a checkpoint round trip is exact;
    the solve itself runs in float64 on the rounded input weights.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimensionError(f"elm_train: features {x.shape} and labels {y.shape} do not align")
    if hidden < 1 or ridge < 0:
        raise ValueError("elm_train: hidden must be >= 1 and ridge >= 0")
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 0
    missing = [k for k in range(n_classes) if not np.any(y == k)]
    if y.size == 0 or missing or y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"elm_train: need >= 1 example of each of {n_classes} classes "
                        f"(missing {missing})")
    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-1.0, 1.0, (hidden, x.shape[1])).astype(np.float32)
    b = rng.uniform(-1.0, 1.0, hidden).astype(np.float32)
    h = _hidden(w_in, b, x)
    target = np.eye(n_classes)[y]
    gram, rhs = h.T @ h, h.T @ target
    lam = float(ridge)
    for attempt in range(MAX_RETRIES + 1):
        a = gram + lam * np.eye(hidden)
        cond = np.linalg.cond(a)
        if np.isfinite(cond) and cond < COND_LIMIT:
            beta = scipy.linalg.solve(a, rhs, assume_a="pos")
            return ElmModel(w_in, b, beta.astype(np.float32), lam, float(threshold))
        if attempt < MAX_RETRIES:
            log.warning("ELM system ill-conditioned (cond %.3g at lambda %.3g); retrying with %.3g",
                        cond, lam, max(lam, 1e-12) * 10)
            lam = max(lam, 1e-12) * 10
    raise NumericError(f"ELM normal equations singular even with ridge lambda {lam:.3g} "
                       f"(condition number {cond:.3g})")


def elm_scores(model: ElmModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features)
    if x.shape[-1] != model.n_inputs or x.ndim not in (1, 2):
        raise DimensionError(f"ELM expects features of length {model.n_inputs}, got shape {x.shape}")
    return _hidden(model.input_weights, model.hidden_bias, x) @ model.output_weights.astype(np.float64)


def elm_predict(model: ElmModel, features: np.ndarray):
    """Argmax class (ties to the lowest index) for one feature vector or a batch."""
    return elm_scores(model, features).argmax(axis=-1)


def elm_arrays(model: ElmModel) -> list[np.ndarray]:
    return [model.input_weights, model.hidden_bias, model.output_weights]


def elm_from_arrays(arrays, ridge: float, threshold: float) -> ElmModel:
    w_in, b, beta = arrays
    if w_in.ndim != 2 or b.shape != (w_in.shape[0],) or beta.ndim != 2 or beta.shape[0] != w_in.shape[0]:
        raise DimensionError(f"inconsistent ELM tensors {w_in.shape}, {b.shape}, {beta.shape}")
    return ElmModel(w_in, b, beta, float(ridge), float(threshold))
