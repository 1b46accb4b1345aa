"""NumPy implementations of the hot kernels.

Same signatures and results as the compiled ``_speedups`` module; used when
the extension is not built or ``LPFIELD_PURE_PYTHON`` is set.
"""

import numpy as np

NAME = "python"


def peetre_sup(absu, weight):
    """``out[x] = max_y absu[x + y] * weight[y]`` with periodic indexing.

    Offsets are visited by decreasing weight and the scan stops once no
    remaining offset can raise the running minimum, so the result is exact.
    """
    absu = np.ascontiguousarray(absu, dtype=float)
    weight = np.ascontiguousarray(weight, dtype=float)
    d = absu.ndim
    order = np.argsort(-weight, axis=None, kind="stable")
    offsets = np.unravel_index(order, weight.shape)
    wflat = weight.reshape(-1)[order]
    top = absu.max()
    out = np.zeros_like(absu)
    for n in range(order.size):
        w = wflat[n]
        if w * top <= out.min():
            break
        shift = tuple(-int(offsets[a][n]) for a in range(d))
        np.maximum(out, np.roll(absu, shift, axis=tuple(range(d))) * w, out=out)
    return out


def _box_sum_axis(vals, width, axis):
    n = vals.shape[axis]
    half = width // 2
    ext = np.concatenate(
        [np.take(vals, range(n - half, n), axis=axis), vals,
         np.take(vals, range(0, half), axis=axis)],
        axis=axis,
    )
    cs = np.cumsum(ext, axis=axis)
    zero = np.zeros_like(np.take(cs, [0], axis=axis))
    cs = np.concatenate([zero, cs], axis=axis)
    hi = np.take(cs, range(width, width + n), axis=axis)
    lo = np.take(cs, range(0, n), axis=axis)
    return hi - lo


def box_max(vals):
    """Maximum over odd widths ``w = 1, 3, ..., N-1`` of the periodic cube mean."""
    vals = np.ascontiguousarray(vals, dtype=float)
    n = vals.shape[0]
    out = vals.copy()
    for j in range(1, n // 2):
        width = 2 * j + 1
        s = vals
        for axis in range(vals.ndim):
            s = _box_sum_axis(s, width, axis)
        np.maximum(out, s / width**vals.ndim, out=out)
    return out


def gather_diag(C, R, G):
    """``out[i] = sum_j G[i, j] * C[R[i, j], j]``."""
    cols = np.arange(C.shape[1])
    return (G * C[R, cols[None, :]]).sum(axis=1)
