"""Central finite-difference checks for the layer primitives."""

from typing import Callable, Sequence

import numpy as np

from . import ops

REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """Worst elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is zero (dead ReLUs,
    non-maximal pool inputs) from dividing finite-difference noise by zero.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``f`` w.r.t. every entry of ``x`` (mutated in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return grad


def check_arrays(forward: Callable[..., np.ndarray],
                 backward: Callable[..., Sequence[np.ndarray]],
                 arrays: Sequence[np.ndarray], seed: int = 0, h: float = 1e-5) -> float:
    """Compare ``backward`` with finite differences of a random projection of ``forward``.

    ``forward(*arrays)`` returns any array; the scalar probed is
    ``sum(forward(*arrays) * R)`` for a fixed random ``R``.  ``backward(R, *arrays)``
    must return one gradient per array, in order.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal(np.shape(forward(*arrays)))

    def scalar() -> float:
        return float(np.sum(forward(*arrays) * probe))

    analytic = backward(probe, *arrays)
    worst = 0.0
    for a, g in zip(arrays, analytic):
        worst = max(worst, relative_error(g, numeric_gradient(scalar, a, h)))
    return worst


def gradient_check(layer: str, sizes: dict | None = None, seed: int = 0) -> float:
    """Worst relative error of a named primitive's analytic gradient.

    ``layer`` is one of ``conv3d``, ``maxpool3d``, ``dense``, ``relu``,
    ``softmax_xent``, ``dropout``.  ``sizes`` overrides the default shapes.
    """
    sizes = dict(sizes or {})
    rng = np.random.default_rng(seed)
    if layer == "conv3d":
        shape = sizes.get("input", (4, 4, 5, 2))
        kshape = sizes.get("kernels", (3, 2, 2, 3, shape[-1]))
        arrays = [rng.standard_normal(shape), rng.standard_normal(kshape),
                  rng.standard_normal(kshape[0])]

        def fwd(x, k, b):
            return ops.conv3d(x, k, b)

        def bwd(d, x, k, b):
            g = ops.conv3d_grad(d, x, k)
            return [g.d_input, *g.d_params]
    elif layer == "maxpool3d":
        shape = sizes.get("input", (4, 4, 6, 2))
        window = sizes.get("window", (2, 2, 2))
        arrays = [rng.standard_normal(shape)]

        def fwd(x):
            return ops.maxpool3d(x, window)

        def bwd(d, x):
            return [ops.maxpool3d_grad(d, x, window).d_input]
    elif layer == "dense":
        n, m = sizes.get("n", 5), sizes.get("m", 3)
        arrays = [rng.standard_normal(sizes.get("batch", (2,)) + (n,)),
                  rng.standard_normal((m, n)), rng.standard_normal(m)]

        def fwd(x, w, b):
            return ops.dense(x, w, b)

        def bwd(d, x, w, b):
            g = ops.dense_grad(d, x, w)
            return [g.d_input, *g.d_params]
    elif layer == "relu":
        x = rng.standard_normal(sizes.get("input", (3, 7)))
        # finite differences are meaningless within h of the kink
        x[np.abs(x) < 1e-3] += 1e-2
        arrays = [x]

        def fwd(x):
            return ops.relu(x)

        def bwd(d, x):
            return [ops.relu_grad(d, x).d_input]
    elif layer == "softmax_xent":
        k = sizes.get("classes", 4)
        lead = sizes.get("batch", (3,))
        target = rng.integers(0, k, size=lead)
        arrays = [rng.standard_normal(lead + (k,))]

        def fwd(z):
            return np.asarray(ops.softmax_xent(z, target)[1])

        def bwd(d, z):
            probs, _ = ops.softmax_xent(z, target)
            return [float(d) * ops.softmax_xent_grad(probs, target)]
    elif layer == "dropout":
        shape = sizes.get("input", (4, 6))
        p = sizes.get("p", 0.5)
        arrays = [rng.standard_normal(shape)]
        mask_seed = seed + 1

        def fwd(x):
            return ops.dropout(x, p, np.random.default_rng(mask_seed), True)[0]

        def bwd(d, x):
            _, mask = ops.dropout(x, p, np.random.default_rng(mask_seed), True)
            return [ops.dropout_grad(d, mask).d_input]
    else:
        raise ValueError(f"unknown layer {layer!r}")
    return check_arrays(fwd, bwd, arrays, seed=seed + 7)
