"""Two-sided Wilcoxon signed-rank test for paired samples."""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from ..errors import InsufficientDataError

ALPHA = 0.01
EXACT_MAX_N = 20
MIN_NONZERO = 5


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float   # min(W+, W-)
    p_value: float     # two-sided
    w_plus: float
    w_minus: float
    n: int             # nonzero differences
    method: str        # "exact" or "normal"
    alpha: float = ALPHA

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def __iter__(self):
        # unpacks as (statistic, p_two_sided)
        return iter((self.statistic, self.p_value))


def _exact_lower_tail(doubled_ranks: np.ndarray, doubled_stat: int) -> float:
    """P(W+ <= stat) under the null, counting all 2^n sign patterns.

    Mid-ranks are half-integers, so sums are tracked on doubled ranks.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        counts[r:] = counts[r:] + counts[:total + 1 - r].copy()
    return float(counts[:doubled_stat + 1].sum() / 2.0 ** doubled_ranks.size)


def wilcoxon_signed_rank(paired_a, paired_b, method: str = "auto",
                         alpha: float = ALPHA) -> WilcoxonResult:
    """Zero differences are dropped and tied ``|d|`` get mid-ranks.

    ``method="auto"`` enumerates exactly for n <= 20 and otherwise uses the
    normal approximation with tie and continuity corrections.
    """
    a, b = np.asarray(paired_a, dtype=np.float64), np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be equal-length vectors, got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n < MIN_NONZERO:
        raise InsufficientDataError(
            f"Wilcoxon test needs >= {MIN_NONZERO} nonzero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus, w_minus = float(ranks[d > 0].sum()), float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = 2.0 * _exact_lower_tail(doubled, int(round(2 * stat)))
    elif method == "normal":
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        z = max(abs(stat - mean) - 0.5, 0.0) / np.sqrt(var)
        p = 2.0 * float(ndtr(-z))
    else:
        raise ValueError(f"method must be auto, exact or normal, got {method!r}")
    return WilcoxonResult(stat, min(1.0, p), w_plus, w_minus, n, method, alpha)
