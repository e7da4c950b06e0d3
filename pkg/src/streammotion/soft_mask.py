"""Soft confidence masks: dilate a binary human mask, blur it, max-normalize."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from streammotion.errors import ValidationError
from streammotion.motion_model import ScalarGrid


@dataclass(frozen=True)
class MaskParams:
    kernel_size: int = 5
    dilation_iterations: int = 2
    sigma: float = 3.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if int(self.kernel_size) != self.kernel_size or self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValidationError(f"kernel_size must be an odd integer >= 1, got {self.kernel_size}")
        if int(self.dilation_iterations) != self.dilation_iterations or self.dilation_iterations < 0:
            raise ValidationError("dilation_iterations must be an integer >= 0")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")


def _values(grid):
    return np.asarray(grid.values if isinstance(grid, ScalarGrid) else grid, dtype=float)


def _binary(grid):
    v = _values(grid)
    if not np.all((v == 0) | (v == 1)):
        raise ValidationError("mask must be binary (values 0 or 1)")
    return v


def dilate(mask, kernel_size, iterations):
    """``iterations`` passes of max-filtering with a square ``kernel_size`` element."""
    v = _binary(mask)
    r = (kernel_size - 1) // 2
    for _ in range(iterations):
        if r == 0:
            break
        padded = np.pad(v, r, mode="edge")
        v = sliding_window_view(padded, (kernel_size, kernel_size)).max(axis=(2, 3))
    return ScalarGrid(v)


def gaussian_kernel(sigma):
    """Normalized 1-D Gaussian truncated at radius ``ceil(3 sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(v, kernel, axis):
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(v, pad, mode="edge")
    n = v.shape[axis]
    out = np.zeros_like(v)
    # fixed accumulation order: identical summation for every pixel
    for i, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out = out + w * padded[tuple(sl)]
    return out


def gaussian_blur(grid, sigma):
    """Separable Gaussian blur with replicate-edge padding."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    k = gaussian_kernel(sigma)
    v = _convolve_axis(_values(grid), k, axis=1)
    return ScalarGrid(_convolve_axis(v, k, axis=0))


def soft_mask(mask, params=None, normalize=True):
    """Dilated, blurred, max-normalized mask in [0, 1].

    An empty mask yields all zeros instead of dividing by zero.
    """
    params = params or MaskParams()
    dilated = dilate(mask, params.kernel_size, params.dilation_iterations)
    blurred = gaussian_blur(dilated, params.sigma).values
    if not normalize:
        return ScalarGrid(blurred)
    peak = blurred.max()
    if peak <= params.epsilon:
        return ScalarGrid(np.zeros_like(blurred))
    return ScalarGrid(np.clip(blurred / peak, 0.0, 1.0))
