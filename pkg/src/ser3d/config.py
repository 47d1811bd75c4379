"""Experiment configuration: INI sections of ``key = value`` pairs.

Example::

    [data]
    manifest = corpus/manifest.csv
    multi_segment = false

    [output]
    dir = runs/dnn-2x2x32

    [model]
    head = DNN
    kernel_resolution = 2,2,32

    [train]
    max_epochs = 20

    [seeds]
    folds = 0
    init = 0
    train = 0
    elm = 0

Relative paths resolve against the config file's directory.  Every key of
``[seeds]`` is mandatory; everything else falls back to the defaults below.
"""

import configparser
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import elm
from .errors import ConfigurationError
from .models.config import ArchConfig
from .models.training import TrainSettings

N_FOLDS = 5

_MODEL_KEYS = {
    "head": str, "n_conv_layers": int, "kernel_resolution": "tuple", "kernels_per_layer": int,
    "fc_width": int, "fc_layers": int, "dropout_p": float,
}
_TRAIN_KEYS = {f.name: f.type for f in fields(TrainSettings)}
_ELM_KEYS = {"hidden": int, "ridge": float, "threshold": float}
_SEED_KEYS = ("folds", "init", "train", "elm")
SCHEMA = {
    "data": {"manifest": "path", "multi_segment": "bool"},
    "output": {"dir": "path"},
    "model": _MODEL_KEYS,
    "train": _TRAIN_KEYS,
    "elm": _ELM_KEYS,
    "seeds": {k: int for k in _SEED_KEYS},
}


@dataclass(frozen=True)
class ElmSettings:
    hidden: int = elm.HIDDEN
    ridge: float = elm.RIDGE
    threshold: float = elm.THRESHOLD


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    out_dir: Path
    arch: ArchConfig
    train: TrainSettings
    elm: ElmSettings
    seeds: dict
    multi_segment: bool = False
    n_folds: int = N_FOLDS
    source: Optional[Path] = None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Every seed replaced by ``seed`` (the ``--seed`` override)."""
        return ExperimentConfig(self.manifest, self.out_dir, self.arch, self.train, self.elm,
                                {k: int(seed) for k in self.seeds}, self.multi_segment,
                                self.n_folds, self.source)


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
        elif key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return n
    return 0


def _convert(kind, raw: str, where: str, base: Path):
    try:
        if kind == "path":
            p = Path(raw).expanduser()
            return p if p.is_absolute() else base / p
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("true", "yes", "1")
        if kind == "tuple":
            return tuple(int(v) for v in raw.replace("x", ",").split(","))
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def parse_config(text: str, source: str = "<config>", base: Optional[Path] = None,
                 check_paths: bool = True) -> ExperimentConfig:
    base = base or Path(".")
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}".replace("\n", " ")) from exc
    values: dict = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"{source}:{_line_of(text, section)}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{source}:{_line_of(text, section, key)}"
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"{where}: unknown key {key!r} in [{section}]")
            values[(section, key)] = _convert(SCHEMA[section][key], raw, where, base)

    missing = [k for k in _SEED_KEYS if ("seeds", k) not in values]
    if missing:
        raise ConfigurationError(f"{source}: [seeds] must set {', '.join(missing)} "
                                 "(no implicit seeding)")
    for section, key in (("data", "manifest"), ("output", "dir")):
        if (section, key) not in values:
            raise ConfigurationError(f"{source}: [{section}] {key} is required")
    manifest = values[("data", "manifest")]
    if check_paths and not manifest.is_file():
        raise ConfigurationError(f"{source}:{_line_of(text, 'data', 'manifest')}: "
                                 f"manifest not found: {manifest}")

    def pick(section):
        return {k: v for (s, k), v in values.items() if s == section}

    try:
        arch = ArchConfig(**pick("model"))
        train = TrainSettings(**pick("train"))
        elm_settings = ElmSettings(**pick("elm"))
    except TypeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    if train.batch_size < 1 or train.micro_batch < 1 or train.max_epochs < 1 or train.patience < 1:
        raise ConfigurationError(f"{source}: [train] sizes, epochs and patience must be >= 1")
    if train.learning_rate <= 0:
        raise ConfigurationError(f"{source}: [train] learning_rate must be > 0")
    return ExperimentConfig(manifest, values[("output", "dir")], arch, train, elm_settings,
                            {k: values[("seeds", k)] for k in _SEED_KEYS},
                            bool(values.get(("data", "multi_segment"), False)),
                            source=Path(source))


def load_config(path, check_paths: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc})") from exc
    return parse_config(text, str(path), path.parent, check_paths)


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing it gives back an equal config."""
    a, t, e = cfg.arch, cfg.train, cfg.elm
    lines = ["[data]", f"manifest = {cfg.manifest}",
             f"multi_segment = {str(cfg.multi_segment).lower()}", "",
             "[output]", f"dir = {cfg.out_dir}", "", "[model]"]
    lines += [f"{k} = {','.join(map(str, getattr(a, k))) if k == 'kernel_resolution' else getattr(a, k)}"
              for k in _MODEL_KEYS]
    lines += ["", "[train]"] + [f"{k} = {getattr(t, k)}" for k in _TRAIN_KEYS]
    lines += ["", "[elm]"] + [f"{k} = {getattr(e, k)}" for k in _ELM_KEYS]
    lines += ["", "[seeds]"] + [f"{k} = {cfg.seeds[k]}" for k in _SEED_KEYS]
    return "\n".join(lines) + "\n"
