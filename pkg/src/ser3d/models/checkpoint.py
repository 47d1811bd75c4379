"""Checkpoint files: model weights, optimizer moments and an optional ELM stage.

The file is a :mod:`ser3d.container` with header keys ``kind``, ``arch``,
``seed``, ``metadata``, ``param_names``, ``adam`` and ``elm`` and sections
``PARM`` (parameters in ``param_names`` order), ``ADAM`` (all first
moments, then all second moments) and ``ELM_`` (input weights, hidden
bias, output weights).  All tensors are float32.
"""

from pathlib import Path
from typing import Optional

import numpy as np

from .. import elm
from ..container import decode, encode, read_container
from ..core.adam import AdamState
from ..errors import CheckpointError, ConfigurationError
from .config import ArchConfig
from .network import ModelParams

KIND = "ser3d-model"


def checkpoint_bytes(model: ModelParams) -> bytes:
    names = list(model.params)
    header = {
        "kind": KIND,
        "arch": model.config.to_dict(),
        "seed": int(model.seed),
        "metadata": model.metadata,
        "param_names": names,
        "adam": None,
        "elm": None,
    }
    sections = [(b"PARM", [model.params[n] for n in names])]
    if model.adam is not None:
        a = model.adam
        header["adam"] = {"step_count": a.step_count, "learning_rate": a.learning_rate,
                          "beta1": a.beta1, "beta2": a.beta2, "epsilon": a.epsilon}
        sections.append((b"ADAM", [a.first_moment[n] for n in names]
                         + [a.second_moment[n] for n in names]))
    if model.elm is not None:
        header["elm"] = {"ridge": model.elm.ridge, "threshold": model.elm.threshold}
        sections.append((b"ELM_", elm.elm_arrays(model.elm)))
    return encode(header, sections)


def save_checkpoint(model: ModelParams, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def _from_container(header: dict, sections: dict, source: str,
                    expected_config: Optional[ArchConfig]) -> ModelParams:
    if header.get("kind") != KIND:
        raise CheckpointError(f"{source}: not a model checkpoint (kind {header.get('kind')!r})")
    try:
        config = ArchConfig.from_dict({k: tuple(v) if isinstance(v, list) else v
                                       for k, v in header["arch"].items()})
    except (ConfigurationError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{source}: invalid architecture in header ({exc})") from exc
    if expected_config is not None and config != expected_config:
        diffs = [f"{k}: file {v!r} vs expected {getattr(expected_config, k)!r}"
                 for k, v in config.to_dict().items() if v != expected_config.to_dict()[k]]
        raise CheckpointError(f"{source}: checkpoint architecture does not match ({'; '.join(diffs)})")
    shapes = config.param_shapes()
    names = header.get("param_names", [])
    tensors = sections.get("PARM", [])
    if list(names) != list(shapes) or len(tensors) != len(names):
        raise CheckpointError(f"{source}: parameter list does not match the architecture")
    for n, t in zip(names, tensors):
        if t.shape != shapes[n]:
            raise CheckpointError(f"{source}: {n} has shape {t.shape}, architecture needs {shapes[n]}")
    params = dict(zip(names, tensors))
    adam = None
    if header.get("adam") is not None:
        moments = sections.get("ADAM", [])
        if len(moments) != 2 * len(names) or any(
                m.shape != shapes[n] for m, n in zip(moments, names + names)):
            raise CheckpointError(f"{source}: ADAM section does not match the parameters")
        adam = AdamState(dict(zip(names, moments[:len(names)])),
                         dict(zip(names, moments[len(names):])), **header["adam"])
    elm_model = None
    if header.get("elm") is not None:
        arrays = sections.get("ELM_", [])
        if len(arrays) != 3:
            raise CheckpointError(f"{source}: ELM_ section needs 3 tensors, found {len(arrays)}")
        elm_model = elm.elm_from_arrays(arrays, **header["elm"])
    return ModelParams(config, params, int(header.get("seed", 0)), header.get("metadata", {}),
                       adam, elm_model)


def load_checkpoint(path, expected_config: Optional[ArchConfig] = None) -> ModelParams:
    """Read a checkpoint; with ``expected_config`` a different architecture is rejected."""
    header, sections = read_container(path)
    return _from_container(header, sections, str(path), expected_config)


def checkpoint_from_bytes(data: bytes, expected_config: Optional[ArchConfig] = None) -> ModelParams:
    header, sections = decode(data)
    return _from_container(header, sections, "<bytes>", expected_config)
