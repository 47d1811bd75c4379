"""Layer primitives with paired analytic gradients.

Volumetric ops take ``[L, T, S, C]`` or a batch ``[B, L, T, S, C]``; dense
takes ``[..., N]``.  Every forward op has a ``*_grad`` partner that maps an
upstream gradient to a :class:`LayerGrad`.

The 3D convolution is a cross-correlation with stride 1 and zero
same-padding.  For even kernel extents the extra zero goes after the data
(``before = (k - 1) // 2``).  It is evaluated through real FFTs, which keeps
wide spectral kernels (``kS`` = 32 or 128) affordable on a CPU.
"""

from typing import NamedTuple, Optional

import numpy as np
import scipy.fft as sfft

from ..errors import DimensionError, NumericError, ParameterError


class LayerGrad(NamedTuple):
    d_input: np.ndarray
    d_params: list


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def same_padding(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def _batched(x: np.ndarray, rank: int, name: str) -> tuple[np.ndarray, bool]:
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise DimensionError(f"{name}: expected rank {rank} or {rank + 1}, got shape {x.shape}")


# ---------------------------------------------------------------------------
# conv3d


def _conv_setup(x5: np.ndarray, kernels: np.ndarray, bias: Optional[np.ndarray]):
    if kernels.ndim != 5:
        raise DimensionError(f"conv3d: kernels must be [K,kL,kT,kS,Cin], got {kernels.shape}")
    _, L, T, S, cin = x5.shape
    K, kL, kT, kS, kc = kernels.shape
    if kc != cin:
        raise DimensionError(f"conv3d: kernel expects {kc} input channels, input has {cin}")
    if kL > L or kT > T or kS > S:
        raise DimensionError(
            f"conv3d: kernel {(kL, kT, kS)} larger than input extents {(L, T, S)}")
    if bias is not None and bias.shape != (K,):
        raise DimensionError(f"conv3d: bias must have shape ({K},), got {bias.shape}")
    pads = [same_padding(k) for k in (kL, kT, kS)]
    fft_shape = tuple(sfft.next_fast_len(n + k - 1, real=True)
                      for n, k in zip((L, T, S), (kL, kT, kS)))
    return pads, fft_shape


def _pad(x5: np.ndarray, pads) -> np.ndarray:
    return np.pad(x5, ((0, 0), *pads, (0, 0)))


def _spectrum(a: np.ndarray, fft_shape) -> np.ndarray:
    """rFFT over the three volume axes, laid out frequency-major ``[M, B, C]``."""
    spec = sfft.rfftn(a, s=fft_shape, axes=(1, 2, 3), workers=1)
    B, C = a.shape[0], a.shape[4]
    return np.ascontiguousarray(spec.transpose(1, 2, 3, 0, 4)).reshape(-1, B, C)


def _inverse(spec: np.ndarray, fft_shape, extents) -> np.ndarray:
    M, B, C = spec.shape
    half = fft_shape[:2] + (fft_shape[2] // 2 + 1,)
    vol = spec.reshape(*half, B, C).transpose(3, 0, 1, 2, 4)
    out = sfft.irfftn(vol, s=fft_shape, axes=(1, 2, 3), workers=1)
    return out[:, :extents[0], :extents[1], :extents[2]]


def conv3d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
           cache: Optional[dict] = None) -> np.ndarray:
    """Same-padded, stride-1 3D cross-correlation.

    Parameters
    ----------
    x : ndarray, shape ``[L, T, S, Cin]`` or ``[B, L, T, S, Cin]``
    kernels : ndarray, shape ``[K, kL, kT, kS, Cin]``
    bias : ndarray, shape ``[K]``
    cache : dict, optional
        If given, receives the input spectrum so :func:`conv3d_grad` can
        skip recomputing it.

    Returns
    -------
    ndarray with the spatial extents of ``x`` and ``K`` channels.
    """
    x5, squeeze = _batched(x, 4, "conv3d")
    check_finite(x5, "conv3d input")
    pads, fft_shape = _conv_setup(x5, kernels, bias)
    xf = _spectrum(_pad(x5, pads), fft_shape)
    wf = _spectrum(kernels, fft_shape)
    yf = np.matmul(xf, np.conj(wf).transpose(0, 2, 1))
    y = _inverse(yf, fft_shape, x5.shape[1:4]).astype(x5.dtype, copy=False)
    y = y + bias.astype(x5.dtype, copy=False)
    if cache is not None:
        cache["xf"] = xf
        cache["wf"] = wf
    return y[0] if squeeze else y


def conv3d_grad(d_out: np.ndarray, x: np.ndarray, kernels: np.ndarray,
                cache: Optional[dict] = None, need_input: bool = True) -> LayerGrad:
    """Gradients of :func:`conv3d` w.r.t. input, kernels and bias.

    With ``need_input=False`` the input gradient is skipped and returned as
    ``None`` (first layer of a network).
    """
    x5, squeeze = _batched(x, 4, "conv3d_grad")
    d5, _ = _batched(d_out, 4, "conv3d_grad")
    pads, fft_shape = _conv_setup(x5, kernels, None)
    if d5.shape != x5.shape[:4] + (kernels.shape[0],):
        raise DimensionError(f"conv3d_grad: upstream gradient has shape {d5.shape}")
    if cache and "xf" in cache:
        xf, wf = cache["xf"], cache["wf"]
    else:
        xf = _spectrum(_pad(x5, pads), fft_shape)
        wf = _spectrum(kernels, fft_shape)
    df = _spectrum(d5, fft_shape)

    dx = None
    if need_input:
        L, T, S = x5.shape[1:4]
        full = (L + kernels.shape[1] - 1, T + kernels.shape[2] - 1, S + kernels.shape[3] - 1)
        dx_pad = _inverse(np.matmul(df, wf), fft_shape, full)
        (bl, _), (bt, _), (bs, _) = pads
        dx = dx_pad[:, bl:bl + L, bt:bt + T, bs:bs + S].astype(x5.dtype, copy=False)
        if squeeze:
            dx = dx[0]

    dwf = np.matmul(np.conj(df).transpose(0, 2, 1), xf)
    dw = _inverse(dwf, fft_shape, kernels.shape[1:4]).astype(kernels.dtype, copy=False)
    db = d5.sum(axis=(0, 1, 2, 3))
    return LayerGrad(dx, [np.ascontiguousarray(dw), db])


# ---------------------------------------------------------------------------
# maxpool3d


def _pool_view(x5: np.ndarray, window):
    if len(window) != 3 or any(int(w) < 1 for w in window):
        raise DimensionError(f"maxpool3d: window extents must be >= 1, got {window}")
    B, L, T, S, C = x5.shape
    pL, pT, pS = (int(w) for w in window)
    if pL > L or pT > T or pS > S:
        raise DimensionError(f"maxpool3d: window {window} larger than input {(L, T, S)}")
    Lo, To, So = L // pL, T // pT, S // pS
    v = x5[:, :Lo * pL, :To * pT, :So * pS].reshape(B, Lo, pL, To, pT, So, pS, C)
    return v, (Lo, To, So)


def _window_slices(window):
    pL, pT, pS = (int(w) for w in window)
    for i, j, k in np.ndindex(pL, pT, pS):
        yield (slice(None), slice(None), i, slice(None), j, slice(None), k, slice(None))


def maxpool3d(x: np.ndarray, window) -> np.ndarray:
    """Non-overlapping max pooling; trailing remainders are dropped."""
    x5, squeeze = _batched(x, 4, "maxpool3d")
    v, _ = _pool_view(x5, window)
    # elementwise maximum over window offsets is far faster than a strided multi-axis reduce
    slices = _window_slices(window)
    out = v[next(slices)].copy()
    for sl in slices:
        np.maximum(out, v[sl], out=out)
    return out[0] if squeeze else out


def maxpool3d_grad(d_out: np.ndarray, x: np.ndarray, window) -> LayerGrad:
    """Route each upstream value to the first (row-major) maximum of its window."""
    x5, squeeze = _batched(x, 4, "maxpool3d_grad")
    d5, _ = _batched(d_out, 4, "maxpool3d_grad")
    v, (Lo, To, So) = _pool_view(x5, window)
    B, C = x5.shape[0], x5.shape[4]
    if d5.shape != (B, Lo, To, So, C):
        raise DimensionError(f"maxpool3d_grad: upstream gradient has shape {d5.shape}")
    peak = maxpool3d(x5, window)
    routed = np.zeros(v.shape, dtype=np.result_type(x5, d5))
    unclaimed = np.ones(peak.shape, dtype=bool)
    for sl in _window_slices(window):
        hit = (v[sl] == peak) & unclaimed
        routed[sl] = np.where(hit, d5, 0)
        unclaimed &= ~hit
    dx = np.zeros(x5.shape, dtype=routed.dtype)
    pL, pT, pS = (int(w) for w in window)
    dx[:, :Lo * pL, :To * pT, :So * pS] = routed.reshape(B, Lo * pL, To * pT, So * pS, C)
    return LayerGrad(dx[0] if squeeze else dx, [])


# ---------------------------------------------------------------------------
# dense / relu


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``W x + b`` applied over the last axis of ``x``."""
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise DimensionError(
            f"dense: input length {x.shape[-1]} does not match weights {weights.shape}")
    if bias.shape != (weights.shape[0],):
        raise DimensionError(f"dense: bias shape {bias.shape} vs weights {weights.shape}")
    return x @ weights.T + bias


def dense_grad(d_out: np.ndarray, x: np.ndarray, weights: np.ndarray) -> LayerGrad:
    dx = d_out @ weights
    d2 = d_out.reshape(-1, weights.shape[0])
    x2 = x.reshape(-1, weights.shape[1])
    return LayerGrad(dx, [d2.T @ x2, d2.sum(axis=0)])


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_grad(d_out: np.ndarray, x: np.ndarray) -> LayerGrad:
    # strict inequality: the subgradient at exactly 0 is taken as 0
    return LayerGrad(d_out * (x > 0), [])


# ---------------------------------------------------------------------------
# softmax + cross-entropy


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _targets(target, lead_shape, k: int) -> np.ndarray:
    t = np.asarray(target)
    if not np.issubdtype(t.dtype, np.integer):
        raise IndexError(f"class targets must be integers, got dtype {t.dtype}")
    t = np.broadcast_to(t, lead_shape)
    if t.size and (t.min() < 0 or t.max() >= k):
        raise IndexError(f"class target out of range [0, {k})")
    return t


def softmax_xent(logits: np.ndarray, target) -> tuple[np.ndarray, float]:
    """Softmax probabilities and mean categorical cross-entropy.

    ``logits`` is ``[..., K]``; ``target`` holds class indices broadcastable to
    the leading shape.  The loss is averaged over all leading positions.
    """
    k = logits.shape[-1]
    if k < 2:
        raise DimensionError(f"softmax_xent: need at least 2 classes, got {k}")
    t = _targets(target, logits.shape[:-1], k)
    z = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_probs = z - log_norm
    picked = np.take_along_axis(log_probs, t[..., None], axis=-1)
    loss = float(-picked.mean())
    return np.exp(log_probs), loss


def softmax_xent_grad(probs: np.ndarray, target) -> np.ndarray:
    """Gradient of the mean loss w.r.t. logits: ``(p - onehot) / count``."""
    k = probs.shape[-1]
    t = _targets(target, probs.shape[:-1], k)
    g = probs.copy()
    np.put_along_axis(g, t[..., None], np.take_along_axis(g, t[..., None], axis=-1) - 1, axis=-1)
    count = max(1, int(np.prod(probs.shape[:-1])))
    return g / count


# ---------------------------------------------------------------------------
# dropout


def dropout(x: np.ndarray, p: float, rng: np.random.Generator,
            training: bool) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout.

    Returns the output and the scaled keep-mask that :func:`dropout_grad`
    reuses; the mask is ``None`` when the op is the identity.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    return x * mask, mask


def dropout_grad(d_out: np.ndarray, mask: Optional[np.ndarray]) -> LayerGrad:
    return LayerGrad(d_out if mask is None else d_out * mask, [])


# ---------------------------------------------------------------------------
# initialisation


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                   dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
