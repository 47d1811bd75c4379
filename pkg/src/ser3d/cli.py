"""Command-line interface: ``ser3d <command> [options]``.

Exit status: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.  Failures also print one JSON object on standard error,
e.g. ``{"error": "DataError", "exit_code": 3, "message": "..."}``.
Progress goes to standard error; results go to files and standard output.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset
from .config import ExperimentConfig, format_config, load_config
from .dataset.labels import CATEGORIES
from .errors import CheckpointError, ConfigurationError, DataError, InsufficientDataError, Ser3dError
from .evaluation import (
    FoldResult,
    confusion_matrix,
    export_features,
    read_features_csv,
    read_results,
    tsne_run,
    unweighted_accuracy,
    wilcoxon_signed_rank,
    write_embedding,
    write_results,
)
from .features import FeatureSet, cached_features, save_features
from .models import (
    ArchConfig,
    build,
    classify,
    count_params,
    fit_elm,
    layer_table,
    load_checkpoint,
    save_checkpoint,
    stack_partition,
    train,
)

CACHE_ENV = "SER3D_CACHE"
log = logging.getLogger("ser3d")


def _setup_logging(verbose: bool, log_file: Optional[Path] = None) -> None:
    root = logging.getLogger()
    for h in list(root.handlers):
        root.removeHandler(h)
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(message)s"))
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.addHandler(console)
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(log_file, encoding="utf-8")
        fh.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        fh.setLevel(logging.DEBUG)
        root.addHandler(fh)
    root.setLevel(logging.DEBUG)


def _cache_dir(cfg: ExperimentConfig) -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else cfg.out_dir / "cache"


def _experiment(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = ExperimentConfig(cfg.manifest, Path(args.out), cfg.arch, cfg.train, cfg.elm,
                               cfg.seeds, cfg.multi_segment, cfg.n_folds, cfg.source)
    return cfg


def _fold_indices(spec: str, n_folds: int) -> list[int]:
    if spec == "all":
        return list(range(n_folds))
    try:
        k = int(spec)
    except ValueError:
        raise ConfigurationError(f"--fold must be 'all' or 0..{n_folds - 1}, got {spec!r}") from None
    if not 0 <= k < n_folds:
        raise ConfigurationError(f"--fold must be 'all' or 0..{n_folds - 1}, got {k}")
    return [k]


def _progress(done: int, total: int) -> None:
    log.info("features: %d/%d utterances", done, total)


def _load_features(cfg: ExperimentConfig) -> FeatureSet:
    return cached_features(cfg.manifest, _cache_dir(cfg), cfg.multi_segment, _progress)


def _fold_plans(cfg: ExperimentConfig):
    """Write (or reuse) ``folds/fold<k>.json`` for the configured fold seed."""
    records = dataset.load_manifest(cfg.manifest)
    plans = dataset.make_folds(records, cfg.seeds["folds"], cfg.n_folds)
    fold_dir = cfg.out_dir / "folds"
    fold_dir.mkdir(parents=True, exist_ok=True)
    for p in plans:
        p.save(fold_dir / f"fold{p.fold_index}.json")
    return plans


# --- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    if not args.out:
        raise ConfigurationError("--out is required")
    recs = dataset.synth_corpus(args.out, n_speakers=args.speakers, n_utt_per_class=args.per_class,
                                seed=args.seed if args.seed is not None else 0,
                                corpus_id=args.corpus_id)
    print(f"wrote {len(recs)} utterances and {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_features(args) -> int:
    if args.config:
        cfg = _experiment(args)
        manifest, multi = cfg.manifest, cfg.multi_segment or args.multi_segment
        out = Path(args.out) if args.out else cfg.out_dir
    elif args.manifest and args.out:
        manifest, multi, out = Path(args.manifest), args.multi_segment, Path(args.out)
    else:
        raise ConfigurationError("features needs --config, or --manifest together with --out")
    fs = cached_features(manifest, os.environ.get(CACHE_ENV), multi, _progress)
    out.mkdir(parents=True, exist_ok=True)
    save_features(fs, out / "features.s3dc")
    n = sum(v.shape[0] if multi else 1 for v in fs.volumes.values())
    print(f"wrote {len(fs.ids)} utterances ({n} volumes) to {out / 'features.s3dc'}")
    return 0


def cmd_folds(args) -> int:
    if args.config:
        cfg = _experiment(args)
        manifest, seed, out = cfg.manifest, cfg.seeds["folds"], Path(args.out or cfg.out_dir / "folds")
    else:
        if not (args.manifest and args.out) or args.seed is None:
            raise ConfigurationError("folds needs --config, or --manifest, --seed and --out")
        manifest, seed, out = Path(args.manifest), args.seed, Path(args.out)
    plans = dataset.make_folds(dataset.load_manifest(manifest), seed)
    out.mkdir(parents=True, exist_ok=True)
    for p in plans:
        p.save(out / f"fold{p.fold_index}.json")
        sizes = {k: len(v) for k, v in p.partitions.items()}
        print(f"fold {p.fold_index}: " + ", ".join(f"{k} {v}" for k, v in sizes.items()))
    return 0


def cmd_map_labels(args) -> int:
    if not (args.manifest and args.out):
        raise ConfigurationError("map-labels needs --manifest and --out")
    records = dataset.load_manifest(args.manifest, check_files=True)
    resolved = dataset.resolve_labels(records)
    dataset.write_manifest(resolved, args.out)
    mapped = sum(1 for r in records if r.label is None)
    print(f"mapped {mapped} trace-labelled utterances; wrote {args.out}")
    return 0


def _fold_paths(cfg: ExperimentConfig, k: int) -> tuple[Path, Path]:
    d = cfg.out_dir / f"fold{k}"
    return d / "model.s3dc", d / "history.json"


def _completed(cfg: ExperimentConfig, k: int) -> bool:
    ckpt, hist = _fold_paths(cfg, k)
    if not (ckpt.is_file() and hist.is_file()):
        return False
    try:
        m = load_checkpoint(ckpt, expected_config=cfg.arch)
    except CheckpointError as exc:
        log.warning("fold %d: existing checkpoint unusable (%s); retraining", k, exc)
        return False
    return m.metadata.get("train_seed") == cfg.seeds["train"] and m.seed == cfg.seeds["init"]


def train_fold(cfg: ExperimentConfig, k: int, fs: Optional[FeatureSet] = None) -> Path:
    fs = fs if fs is not None else _load_features(cfg)
    plan = dataset.FoldPlan.load(cfg.out_dir / "folds" / f"fold{k}.json")
    model = build(cfg.arch, cfg.seeds["init"])

    def report(entry):
        extra = f", val UA {entry['val_ua']:.3f}" if "val_ua" in entry else ""
        log.info("fold %d epoch %d: train loss %.4f%s", k, entry["epoch"], entry["train_loss"], extra)

    model, history = train(model, plan, fs.volumes, fs.labels, cfg.seeds["train"], cfg.train, report)
    if cfg.arch.head == "ELM":
        model = fit_elm(model, plan.partitions["train"], fs.volumes, fs.labels, cfg.seeds["elm"],
                        cfg.elm.hidden, cfg.elm.ridge, cfg.elm.threshold)
    ckpt, hist = _fold_paths(cfg, k)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    hist.write_text(json.dumps(history, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    tmp = ckpt.with_suffix(".tmp")
    save_checkpoint(model, tmp)
    tmp.replace(ckpt)
    log.info("fold %d: best epoch %s, val UA %s -> %s", k, model.metadata["best_epoch"],
             model.metadata["best_val_ua"], ckpt)
    return ckpt


def _train_worker(cfg: ExperimentConfig, k: int) -> str:
    _setup_logging(False)
    return str(train_fold(cfg, k))


def cmd_train(args) -> int:
    cfg = _experiment(args)
    folds = _fold_indices(args.fold, cfg.n_folds)
    _setup_logging(args.verbose, cfg.out_dir / "log.txt")
    (cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "experiment.ini").write_text(format_config(cfg), encoding="utf-8")
    _fold_plans(cfg)
    todo = []
    for k in folds:
        if _completed(cfg, k):
            log.info("fold %d: checkpoint present, skipping", k)
        else:
            todo.append(k)
    if not todo:
        print("all requested folds already trained")
        return 0
    fs = _load_features(cfg)  # fills the cache before any worker starts
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(todo))) as pool:
            paths = list(pool.map(_train_worker, [cfg] * len(todo), todo))
    else:
        paths = [str(train_fold(cfg, k, fs)) for k in todo]
    for k, p in zip(todo, paths):
        print(f"fold {k}: {p}")
    return 0


def evaluate_fold(cfg: ExperimentConfig, k: int, fs: FeatureSet,
                  export: bool = False) -> FoldResult:
    ckpt, _ = _fold_paths(cfg, k)
    if not ckpt.is_file():
        raise DataError(f"fold {k}: no checkpoint at {ckpt}; run 'ser3d train' first")
    model = load_checkpoint(ckpt, expected_config=cfg.arch)
    plan = dataset.FoldPlan.load(cfg.out_dir / "folds" / f"fold{k}.json")
    ids = plan.partitions["test"]
    x, _, owner = stack_partition(ids, fs.volumes, fs.labels)
    pred = classify(model, x, owner, len(ids))
    y = np.array([fs.labels[u] for u in ids])
    cm = confusion_matrix(y, pred, cfg.arch.n_classes)
    if export:
        export_features(model, ids, fs.volumes, fs.labels, ckpt.parent / "test_features.csv")
    return FoldResult(k, unweighted_accuracy(cm), cm,
                      {u: CATEGORIES[int(p)] for u, p in zip(ids, pred)})


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    _setup_logging(args.verbose, cfg.out_dir / "log.txt")
    folds = _fold_indices(args.fold, cfg.n_folds)
    fs = _load_features(cfg)
    results = [evaluate_fold(cfg, k, fs, args.export) for k in folds]
    comparison = None
    if args.compare:
        other = {r.fold_index: r.ua for r in read_results(args.compare)}
        shared = [r for r in results if r.fold_index in other]
        name = str(Path(args.compare).parent.name or args.compare)
        try:
            comparison = (name, wilcoxon_signed_rank([r.ua for r in shared],
                                                     [other[r.fold_index] for r in shared]))
        except InsufficientDataError as exc:
            log.warning("wilcoxon test skipped: %s", exc)
            comparison = (name, str(exc))
    txt, _ = write_results(cfg.out_dir, args.name or cfg.out_dir.name, results, comparison)
    sys.stdout.write(txt.read_text(encoding="utf-8"))
    return 0


def _arch_from_args(args) -> ArchConfig:
    if args.config:
        return load_config(args.config, check_paths=False).arch
    k = tuple(int(v) for v in args.kernel.replace("x", ",").split(","))
    return ArchConfig(n_conv_layers=args.layers, kernel_resolution=k, head=args.head)


def cmd_params(args) -> int:
    arch = _arch_from_args(args)
    rows = layer_table(arch)
    w = max(len(r[0]) for r in rows)
    for name, shape, n in rows:
        print(f"{name:<{w}}  {shape:>14}  {n:>10,}")
    print(f"total parameters: {count_params(arch):,}")
    return 0


def cmd_tsne(args) -> int:
    if not (args.features and args.out):
        raise ConfigurationError("tsne needs --features and --out")
    ids, labels, x = read_features_csv(args.features)
    seed = args.seed if args.seed is not None else 0
    res = tsne_run(x, args.perplexity, seed, args.iters)
    for it, kl in res.kl_history:
        log.info("tsne iteration %d: KL %.6f", it, kl)
    write_embedding(args.out, res.embedding, labels)
    print(f"embedded {len(ids)} utterances to {args.out}")
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ser3d", description="3D-CNN speech emotion recognition")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, seed=True, fold=False, out=True):
        if config:
            sp.add_argument("--config", help="experiment INI file")
        if seed:
            sp.add_argument("--seed", type=int, help="seed (overrides every configured seed)")
        if fold:
            sp.add_argument("--fold", default="all", help="fold index 0..4 or 'all' (default)")
        if out:
            sp.add_argument("--out", help="output path")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("synth", help="generate the synthetic 4-class corpus")
    common(s, config=False)
    s.add_argument("--speakers", type=int, default=8)
    s.add_argument("--per-class", type=int, default=25, help="utterances per class per speaker")
    s.add_argument("--corpus-id", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("features", help="extract and cache feature volumes")
    common(s, seed=False)
    s.add_argument("--manifest")
    s.add_argument("--multi-segment", action="store_true", help="one volume per 2 s segment")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("folds", help="write the five speaker-independent fold plans")
    common(s)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_folds)

    s = sub.add_parser("map-labels", help="resolve trace-labelled records to categories")
    common(s, config=False, seed=False)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_map_labels)

    s = sub.add_parser("train", help="train one fold or all folds (resumable)")
    common(s, fold=True)
    s.add_argument("--jobs", type=int, default=1, help="folds trained in parallel processes")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate trained folds and write results files")
    common(s, fold=True)
    s.add_argument("--compare", help="results.json of another experiment for a Wilcoxon test")
    s.add_argument("--name", help="experiment name used in the results file")
    s.add_argument("--export", action="store_true",
                   help="also write fold<k>/test_features.csv (top fully-connected layer)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("params", help="print the layer table and parameter count")
    common(s, seed=False, out=False)
    s.add_argument("--head", default="DNN", choices=["DNN", "ELM"])
    s.add_argument("--kernel", default="2,2,32", help="kernel resolution, e.g. 2,2,128")
    s.add_argument("--layers", type=int, default=3, help="number of conv layers")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("tsne", help="embed exported features in 2-D")
    common(s, config=False)
    s.add_argument("--features", help="CSV written by 'eval --export'")
    s.add_argument("--perplexity", type=float, default=30.0)
    s.add_argument("--iters", type=int, default=1000)
    s.set_defaults(func=cmd_tsne)
    return p


def _error_line(kind: str, code: int, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if not logging.getLogger().handlers:
        _setup_logging(args.verbose)
    try:
        return args.func(args)
    except Ser3dError as exc:
        _error_line(type(exc).__name__, exc.exit_code, str(exc))
        return exc.exit_code
    except OSError as exc:
        _error_line("OSError", 3, str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
