"""Per-experiment results files (text for people, JSON for tools)."""

import json
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..dataset.labels import CATEGORIES
from .metrics import FoldResult, row_percent
from .wilcoxon import WilcoxonResult


def summarize(results: Sequence[FoldResult]) -> tuple[float, float]:
    """Mean and population standard deviation of the per-fold UAs."""
    uas = np.array([r.ua for r in results])
    return float(uas.mean()), float(uas.std())


def _matrix_lines(cm: np.ndarray) -> list[str]:
    abbrev = [c[0].upper() for c in CATEGORIES]
    lines = ["      " + "".join(f"{a:>5}" for a in abbrev)]
    for a, row in zip(abbrev, row_percent(cm)):
        cells = "".join(f"{v:>5}" for v in row) if row is not None else "    (no examples)"
        lines.append(f"  {a:>3} {cells}")
    return lines


def format_results(name: str, results: Sequence[FoldResult],
                   comparison: Optional[tuple[str, Union[WilcoxonResult, str]]] = None) -> str:
    """``comparison`` pairs another experiment's name with a test result or a reason it is absent."""
    mean, std = summarize(results)
    lines = [f"experiment: {name}", ""]
    lines += [f"fold {r.fold_index}: UA {r.ua:.3f}" for r in results]
    lines += [f"UA mean±std: {mean:.3f}±{std:.3f}", ""]
    for r in results:
        lines.append(f"confusion matrix (%), fold {r.fold_index}, rows true, columns predicted:")
        lines += _matrix_lines(r.confusion) + [""]
    pooled = sum(r.confusion for r in results)
    lines.append("confusion matrix (%), all folds pooled:")
    lines += _matrix_lines(pooled) + [""]
    if comparison is not None:
        other, w = comparison
        if isinstance(w, str):
            lines.append(f"wilcoxon signed-rank vs {other}: not computed ({w})")
            return "\n".join(lines) + "\n"
        lines.append(f"wilcoxon signed-rank vs {other}: W={w.statistic:g} (W+={w.w_plus:g}, "
                     f"W-={w.w_minus:g}), n={w.n}, p={w.p_value:.5f} ({w.method}), "
                     f"significant at {w.alpha:g}: {'yes' if w.significant else 'no'}")
    return "\n".join(lines).rstrip("\n") + "\n"


def results_dict(name: str, results: Sequence[FoldResult]) -> dict:
    mean, std = summarize(results)
    return {
        "experiment": name,
        "folds": [{"fold_index": r.fold_index, "ua": r.ua, "confusion": r.confusion.tolist(),
                   "predictions": r.predictions} for r in results],
        "ua_mean": mean,
        "ua_std": std,
    }


def write_results(out_dir, name: str, results: Sequence[FoldResult],
                  comparison: Optional[tuple[str, Union[WilcoxonResult, str]]] = None) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt, js = out_dir / "results.txt", out_dir / "results.json"
    txt.write_text(format_results(name, results, comparison), encoding="utf-8")
    js.write_text(json.dumps(results_dict(name, results), indent=1, sort_keys=True) + "\n",
                  encoding="utf-8")
    return txt, js


def read_results(path) -> list[FoldResult]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FoldResult(f["fold_index"], f["ua"], np.array(f["confusion"]), f["predictions"])
            for f in d["folds"]]
