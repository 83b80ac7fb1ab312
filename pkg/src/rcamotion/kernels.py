"""Fixed kernels and the local filters the automaton is built from.

All filters pad with edge replication and apply kernels in correlation
orientation (no flip). Taps are accumulated in row-major offset order
starting from zero (Sobel excepted, see below); keeping that order fixed
is what makes outputs reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ParameterError

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


def _offsets(size: int) -> np.ndarray:
    r = (size - 1) // 2
    return np.arange(-r, r + 1, dtype=np.float64)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Sum-normalized ``size x size`` Gaussian on integer offsets."""
    if size < 1 or size % 2 != 1:
        raise ParameterError(f"gaussian kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise ParameterError(f"gaussian sigma must be > 0, got {sigma}")
    x = _offsets(size)
    r2 = x[None, :] ** 2 + x[:, None] ** 2
    w = np.exp(-r2 / (2.0 * sigma * sigma))
    return w / w.sum()


def mexican_hat_raw(size_param: int, sigma1: float, sigma2: float, w_surr: float) -> np.ndarray:
    """Un-normalized difference of Gaussians (centre minus weighted surround).

    An even ``size_param`` n spans offsets [-n/2, n/2], i.e. (n+1)x(n+1);
    an odd one is rounded up to the next odd support.
    """
    if size_param < 1:
        raise ParameterError(f"mexican-hat size parameter must be >= 1, got {size_param}")
    if not (sigma1 > 0 and sigma2 > 0):
        raise ParameterError(f"mexican-hat sigmas must be > 0, got {sigma1}, {sigma2}")
    size = size_param + 1 if size_param % 2 == 0 else size_param + 2
    x = _offsets(size)
    r2 = x[None, :] ** 2 + x[:, None] ** 2
    return np.exp(-r2 / (2.0 * sigma1 * sigma1)) - w_surr * np.exp(-r2 / (2.0 * sigma2 * sigma2))


def mexican_hat_kernel(size_param: int, sigma1: float, sigma2: float, w_surr: float) -> np.ndarray:
    """Difference-of-Gaussians kernel scaled to unit L1 norm."""
    w = mexican_hat_raw(size_param, sigma1, sigma2, w_surr)
    l1 = np.abs(w).sum()
    if l1 == 0:
        raise ParameterError("mexican-hat kernel is identically zero")
    return w / l1


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 != 1:
        raise ParameterError(f"kernel must be square with odd size, got {k.shape}")
    return k


# Rows per block; keeps the working set of each tap pass cache-resident.
STRIP_ROWS = 32


def convolve(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size correlation of ``grid`` with ``kernel``, replicate borders.

    ``scipy.ndimage.correlate`` accumulates taps per pixel in row-major order
    from 0.0, which is exactly the canonical order (see the module docstring).
    """
    k = _check_kernel(kernel)
    return ndimage.correlate(np.asarray(grid, dtype=np.float64), k, mode="nearest")


def sobel_gradient_magnitude(grid: np.ndarray) -> np.ndarray:
    """Euclidean norm of the unscaled 3x3 Sobel responses.

    Each response is taken as the difference of two weighted edge sums,
    ``(a + 2b + c) - (d + 2e + f)``, rather than tap by tap, so a constant
    neighbourhood gives exactly zero.
    """
    x = np.pad(np.asarray(grid, dtype=np.float64), 1, mode="edge")
    h, w = x.shape[0] - 2, x.shape[1] - 2

    gx = (x[0:h, 2:w + 2] + 2.0 * x[1:h + 1, 2:w + 2] + x[2:h + 2, 2:w + 2]) - \
         (x[0:h, 0:w] + 2.0 * x[1:h + 1, 0:w] + x[2:h + 2, 0:w])
    gy = (x[2:h + 2, 0:w] + 2.0 * x[2:h + 2, 1:w + 1] + x[2:h + 2, 2:w + 2]) - \
         (x[0:h, 0:w] + 2.0 * x[0:h, 1:w + 1] + x[0:h, 2:w + 2])
    return np.sqrt(gx * gx + gy * gy)


def bilateral_filter(grid: np.ndarray, d: int, sigma_color: float, sigma_space: float) -> np.ndarray:
    """Edge-preserving average over a ``d x d`` window.

    Spatial distance is in pixels and the centre pixel is part of its own
    window, so the denominator is never below the centre weight of 1.
    """
    if d < 1 or d % 2 != 1:
        raise ParameterError(f"bilateral diameter must be odd and positive, got {d}")
    if not (sigma_color > 0 and sigma_space > 0):
        raise ParameterError("bilateral sigmas must be > 0")
    h, w = grid.shape
    r = d // 2
    padded = np.pad(grid, r, mode="edge")
    neg_inv_c = -1.0 / (2.0 * sigma_color * sigma_color)
    inv_s = 1.0 / (2.0 * sigma_space * sigma_space)
    out = np.empty((h, w), dtype=np.float64)
    # Range weights are symmetric, w(p, p+o) == w(p+o, p), so each weight map
    # is evaluated once per offset pair on a slightly enlarged window and read
    # back shifted for the mirrored tap. (a - b)^2 == (b - a)^2 exactly, so
    # this matches a direct per-tap evaluation bit for bit.
    forward = [(dy, dx) for dy in range(0, r + 1) for dx in range(-r, r + 1)
               if dy > 0 or dx > 0]
    for y0 in range(0, h, STRIP_ROWS):
        y1 = min(h, y0 + STRIP_ROWS)
        n = y1 - y0
        weights = {}
        for dy, dx in forward:
            ay0, ax0 = y0 + r - dy, r - max(dx, 0)
            ay1, ax1 = y1 + r, w + r + max(-dx, 0)
            e = padded[ay0 + dy:ay1 + dy, ax0 + dx:ax1 + dx] - padded[ay0:ay1, ax0:ax1]
            np.multiply(e, e, out=e)
            np.multiply(e, neg_inv_c, out=e)
            np.exp(e, out=e)
            np.multiply(e, np.exp(-float(dy * dy + dx * dx) * inv_s), out=e)
            weights[(dy, dx)] = (e, ay0, ax0)
        num = np.zeros((n, w))
        den = np.zeros((n, w))
        tmp = np.empty((n, w))
        for i in range(d):
            for j in range(d):
                dy, dx = i - r, j - r
                nb = padded[y0 + i:y1 + i, j:j + w]
                if dy == 0 and dx == 0:
                    # exp(0) * exp(0) == 1
                    den += 1.0
                    num += nb
                    continue
                if (dy, dx) in weights:
                    e, ay0, ax0 = weights[(dy, dx)]
                    oy, ox = y0 + r - ay0, r - ax0
                else:
                    e, ay0, ax0 = weights[(-dy, -dx)]
                    oy, ox = y0 + r + dy - ay0, r + dx - ax0
                wt = e[oy:oy + n, ox:ox + w]
                den += wt
                np.multiply(wt, nb, out=tmp)
                num += tmp
        np.divide(num, den, out=out[y0:y1])
    return out
