"""Exact O(N^2) t-SNE with the standard optimisation schedule."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ..errors import NumericError, ParameterError

MAX_POINTS = 5000
EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_SWITCH = 250
LEARNING_RATE = 200.0
KL_EVERY = 50
_TINY = 1e-12


@dataclass
class TsneResult:
    embedding: np.ndarray           # [N, 2]
    kl_history: list                # (iteration, KL(P || Q)) every KL_EVERY iterations
    bandwidths: np.ndarray          # per-point Gaussian precision beta_i = 1 / (2 sigma_i^2)


def _conditional_p(sq: np.ndarray, perplexity: float, tol: float = 1e-5,
                   max_steps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise binary search on beta so each row's entropy is ln(perplexity)."""
    n = sq.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(sq[i], i)
        d = d - d.min()  # shift for stability; the normalised row is unchanged
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            w = np.exp(-d * beta)
            s = w.sum()
            h = np.log(s) + beta * np.dot(d, w) / s
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:  # entropy too high: sharpen
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        betas[i] = beta
        p[i, np.arange(n) != i] = w / s
    return p, betas


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_run(features: np.ndarray, perplexity: float = 30.0, seed: int = 0,
             iters: int = 1000, learning_rate: float = LEARNING_RATE) -> TsneResult:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError(f"tsne expects an N x D matrix, got shape {x.shape}")
    n = x.shape[0]
    if n > MAX_POINTS:
        raise ParameterError(f"exact tsne is limited to {MAX_POINTS} points, got {n}")
    if not 0 < perplexity < n / 3:
        raise ParameterError(f"perplexity must lie in (0, N/3) = (0, {n / 3:.3g}), got {perplexity}")
    if not np.all(np.isfinite(x)):
        raise NumericError("tsne input contains non-finite values")
    sq = squareform(pdist(x, "sqeuclidean"))
    if not sq.any():
        raise NumericError("tsne input points are all identical; the embedding is undefined")

    cond, betas = _conditional_p(sq, perplexity)
    p = (cond + cond.T) / (2.0 * n)
    p = np.maximum(p, _TINY)
    np.fill_diagonal(p, 0.0)

    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    history = []
    for it in range(iters):
        exag = EXAGGERATION if it < EXAGGERATION_ITERS else 1.0
        momentum = 0.5 if it < MOMENTUM_SWITCH else 0.8
        num = 1.0 / (1.0 + squareform(pdist(y, "sqeuclidean")))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), _TINY)
        pq = (exag * p - q) * num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"tsne diverged at iteration {it + 1}")
        if (it + 1) % KL_EVERY == 0:
            num = 1.0 / (1.0 + squareform(pdist(y, "sqeuclidean")))
            np.fill_diagonal(num, 0.0)
            q = np.maximum(num / num.sum(), _TINY)
            history.append((it + 1, _kl(p, q)))
    return TsneResult(y, history, betas)


def tsne(features: np.ndarray, perplexity: float = 30.0, seed: int = 0,
         iters: int = 1000) -> np.ndarray:
    return tsne_run(features, perplexity, seed, iters).embedding
