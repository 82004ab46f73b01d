"""Finite-difference stencils and trapezoidal quadrature on tensor grids.

Every operator acts on the trailing ``n`` axes of its input, so leading batch
or time axes pass through untouched.
"""

from __future__ import annotations

import numpy as np


def _axis(f: np.ndarray, n: int, k: int) -> int:
    return f.ndim - n + k


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def first_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered in the interior, second-order one-sided at both ends."""
    return np.gradient(f, h, axis=axis, edge_order=2)


def second_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second derivative along ``axis``.

    Interior nodes use the 3-point centered stencil; end nodes use the
    second-order one-sided 4-point stencil (2, -5, 4, -1) / h^2. With only
    three samples the ends copy the single interior value (first order).
    """
    nd = f.ndim

    def take(s):
        return f[_sl(nd, axis, s)]

    out = np.empty(f.shape, dtype=float)
    out[_sl(nd, axis, slice(1, -1))] = (
        take(slice(2, None)) - 2.0 * take(slice(1, -1)) + take(slice(None, -2))
    ) / h**2
    if f.shape[axis] >= 4:
        lo = 2.0 * take(slice(0, 1)) - 5.0 * take(slice(1, 2)) + 4.0 * take(slice(2, 3)) - take(slice(3, 4))
        hi = (2.0 * take(slice(-1, None)) - 5.0 * take(slice(-2, -1))
              + 4.0 * take(slice(-3, -2)) - take(slice(-4, -3)))
        out[_sl(nd, axis, slice(0, 1))] = lo / h**2
        out[_sl(nd, axis, slice(-1, None))] = hi / h**2
    else:
        out[_sl(nd, axis, slice(0, 1))] = out[_sl(nd, axis, slice(1, 2))]
        out[_sl(nd, axis, slice(-1, None))] = out[_sl(nd, axis, slice(-2, -1))]
    return out


def gradient(f: np.ndarray, h, n: int) -> list[np.ndarray]:
    """Full-grid gradient over the trailing ``n`` axes."""
    return [first_derivative(f, h[k], _axis(f, n, k)) for k in range(n)]


def laplacian(f: np.ndarray, h, n: int) -> np.ndarray:
    """Full-grid Laplacian over the trailing ``n`` axes (one-sided at edges)."""
    out = second_derivative(f, h[0], _axis(f, n, 0))
    for k in range(1, n):
        out += second_derivative(f, h[k], _axis(f, n, k))
    return out


def interior(n: int) -> tuple:
    """Index selecting interior nodes of the trailing ``n`` axes."""
    return (Ellipsis,) + (slice(1, -1),) * n


def interior_laplacian(f: np.ndarray, h, n: int) -> np.ndarray:
    """Centered Laplacian evaluated on interior nodes only.

    Returns an array shaped like ``f[interior(n)]``; this is the stencil the
    time stepper uses.
    """
    core = f[interior(n)]
    out = np.zeros_like(core, dtype=float)
    for k in range(n):
        idx_p = [Ellipsis] + [slice(1, -1)] * n
        idx_m = [Ellipsis] + [slice(1, -1)] * n
        idx_p[1 + k] = slice(2, None)
        idx_m[1 + k] = slice(None, -2)
        out += (f[tuple(idx_p)] - 2.0 * core + f[tuple(idx_m)]) / h[k] ** 2
    return out


def interior_gradient(f: np.ndarray, h, n: int) -> list[np.ndarray]:
    """Centered first differences on interior nodes only."""
    out = []
    for k in range(n):
        idx_p = [Ellipsis] + [slice(1, -1)] * n
        idx_m = [Ellipsis] + [slice(1, -1)] * n
        idx_p[1 + k] = slice(2, None)
        idx_m[1 + k] = slice(None, -2)
        out.append((f[tuple(idx_p)] - f[tuple(idx_m)]) / (2.0 * h[k]))
    return out


def trapezoid_weights_1d(m: int, h: float) -> np.ndarray:
    w = np.full(m, h)
    w[0] = w[-1] = 0.5 * h
    return w


def trapezoid_weights_nonuniform(x: np.ndarray) -> np.ndarray:
    """Trapezoid weights for an arbitrary increasing 1-D abscissa."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def tensor_weights(shape, h) -> np.ndarray:
    """Tensor-product trapezoid weights on a uniform box grid."""
    w = np.ones(())
    for m, hk in zip(shape, h):
        w = np.multiply.outer(w, trapezoid_weights_1d(m, hk))
    return w


def integrate(f: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum over the trailing ``weights.ndim`` axes in fixed order."""
    axes = tuple(range(f.ndim - weights.ndim, f.ndim))
    return np.sum(f * weights, axis=axes)
