"""Forward and backward passes of the 3D-CNN-DNN and 3D-CNN-DNN-ELM front half."""

from dataclasses import dataclass, field
from math import prod
from typing import Optional

import numpy as np

from ..core import ops
from ..core.adam import AdamState
from ..errors import DimensionError
from .config import ArchConfig

PREDICT_CHUNK = 64


@dataclass
class ModelParams:
    config: ArchConfig
    params: dict
    seed: int = 0
    metadata: dict = field(default_factory=dict)
    adam: Optional[AdamState] = None
    elm: Optional[object] = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype


def build(config: ArchConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases, all drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        elif name.startswith("conv"):
            receptive = prod(shape[1:4])
            params[name] = ops.glorot_uniform(shape, receptive * shape[4], receptive * shape[0],
                                              rng, dtype)
        else:
            params[name] = ops.glorot_uniform(shape, shape[1], shape[0], rng, dtype)
    return ModelParams(config, params, seed, {"epochs_run": 0, "best_val_ua": None})


def _check_input(config: ArchConfig, x: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != config.input_shape:
        raise DimensionError(f"model expects volumes of shape {config.input_shape}, got {x.shape}")
    return x


def forward(model: ModelParams, x: np.ndarray, training: bool = False,
            rng: Optional[np.random.Generator] = None):
    """Run a batch ``[B, L, T, S]`` through the network.

    Returns ``(probs, cache)``.  ``probs`` is ``[B, n_classes]`` for the DNN
    head and ``[B, steps, n_classes]`` for the ELM head.
    """
    cfg, p = model.config, model.params
    x = _check_input(cfg, x)
    if training and cfg.dropout_p > 0 and rng is None:
        raise ValueError("training forward pass with dropout needs an rng")
    h = x[..., None].astype(model.dtype, copy=False)
    B = h.shape[0]
    cache = {"conv": [], "fc": []}
    for i in range(cfg.n_conv_layers):
        c = {"input": h}
        z = ops.conv3d(h, p[f"conv{i}.kernels"], p[f"conv{i}.bias"],
                       cache=c if training else None)
        c["pre"] = z
        h = ops.relu(z)
        win = cfg.pool_window(i)
        if win is not None:
            c["pre_pool"] = h
            h = ops.maxpool3d(h, win)
        cache["conv"].append(c)
    cache["conv_out_shape"] = h.shape
    h = h.reshape(B, -1) if cfg.head == "DNN" else h.reshape(B, h.shape[1], -1)
    for j in range(cfg.fc_layers):
        c = {"input": h}
        z = ops.dense(h, p[f"fc{j}.weights"], p[f"fc{j}.bias"])
        c["pre"] = z
        h, c["mask"] = ops.dropout(ops.relu(z), cfg.dropout_p, rng, training)
        cache["fc"].append(c)
    cache["top"] = h
    logits = ops.dense(h, p["out.weights"], p["out.bias"])
    ops.check_finite(logits, "network logits")
    cache["probs"] = ops.softmax(logits)
    return cache["probs"], cache


def _targets(config: ArchConfig, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if config.head == "ELM":
        return np.broadcast_to(labels[:, None], (labels.size, config.steps))
    return labels


def loss(model: ModelParams, probs: np.ndarray, labels: np.ndarray) -> float:
    t = _targets(model.config, labels)
    picked = np.take_along_axis(probs, t[..., None], axis=-1)
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(probs.dtype).tiny))))


def backward(model: ModelParams, cache: dict, labels: np.ndarray, scale: float = 1.0) -> dict:
    """Gradients of the mean cross-entropy (times ``scale``) w.r.t. every parameter.

    The ELM head broadcasts each utterance label to all of its steps.
    """
    cfg, p = model.config, model.params
    grads = {}
    d = ops.softmax_xent_grad(cache["probs"], _targets(cfg, labels))
    if scale != 1.0:
        d = d * scale
    d = d.astype(model.dtype, copy=False)
    g = ops.dense_grad(d, cache["top"], p["out.weights"])
    grads["out.weights"], grads["out.bias"] = g.d_params
    d = g.d_input
    for j in reversed(range(cfg.fc_layers)):
        c = cache["fc"][j]
        d = ops.dropout_grad(d, c["mask"]).d_input
        d = ops.relu_grad(d, c["pre"]).d_input
        g = ops.dense_grad(d, c["input"], p[f"fc{j}.weights"])
        grads[f"fc{j}.weights"], grads[f"fc{j}.bias"] = g.d_params
        d = g.d_input
    d = d.reshape(cache["conv_out_shape"])
    for i in reversed(range(cfg.n_conv_layers)):
        c = cache["conv"][i]
        win = cfg.pool_window(i)
        if win is not None:
            d = ops.maxpool3d_grad(d, c["pre_pool"], win).d_input
        d = ops.relu_grad(d, c["pre"]).d_input
        g = ops.conv3d_grad(d, c["input"], p[f"conv{i}.kernels"], cache=c, need_input=i > 0)
        grads[f"conv{i}.kernels"], grads[f"conv{i}.bias"] = g.d_params
        d = g.d_input
    return {name: grads[name] for name in p}


def loss_and_grads(model: ModelParams, x: np.ndarray, labels: np.ndarray,
                   rng: Optional[np.random.Generator] = None, training: bool = True,
                   scale: float = 1.0) -> tuple[float, dict]:
    probs, cache = forward(model, x, training=training, rng=rng)
    return loss(model, probs, labels), backward(model, cache, labels, scale)


def predict(model: ModelParams, volumes: np.ndarray) -> np.ndarray:
    """Inference-mode probabilities; accepts one volume or a batch."""
    single = volumes.ndim == 3
    x = _check_input(model.config, volumes)
    out = [forward(model, x[i:i + PREDICT_CHUNK])[0] for i in range(0, x.shape[0], PREDICT_CHUNK)]
    probs = np.concatenate(out, axis=0)
    return probs[0] if single else probs


def top_activations(model: ModelParams, volumes: np.ndarray) -> np.ndarray:
    """Top fully-connected activations (before the softmax), ``[B, fc_width]``.

    For the ELM head the per-step activations are averaged over steps.
    """
    x = _check_input(model.config, volumes)
    out = []
    for i in range(0, x.shape[0], PREDICT_CHUNK):
        _, cache = forward(model, x[i:i + PREDICT_CHUNK])
        top = cache["top"]
        out.append(top if model.config.head == "DNN" else top.mean(axis=1))
    return np.concatenate(out, axis=0)


def utterance_scores(model: ModelParams, probs: np.ndarray) -> np.ndarray:
    """Collapse ELM-head per-step probabilities to one distribution per utterance."""
    return probs if model.config.head == "DNN" else probs.mean(axis=-2)
