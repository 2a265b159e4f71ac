"""3x3 convolution primitives with explicit forward and adjoint passes.

Everything operates on (batch, channels, rows, cols) float64 arrays with a
one-cell zero pad, so a stride-1 convolution preserves the grid size. On
the (2^m + 1)-point grids used here, a stride-2 convolution lands exactly
on the even-index coarse grid of size (n-1)/2 + 1, and the transposed
stride-2 convolution maps back; the pairs below are exact adjoints of each
other, which the gradient tests rely on.

Kernels are stored as (in_ch, out_ch, 3, 3).
"""

from __future__ import annotations

import numpy as np


def _padded(x):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2, W + 2))
    xp[:, :, 1:-1, 1:-1] = x
    return xp


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """y[b,o,i,j] = sum_{c,di,dj} x[b,c, s*i-1+di, s*j-1+dj] * w[c,o,di,dj]."""
    B, Ci, H, W = x.shape
    Ho = (H - 1) // stride + 1
    Wo = (W - 1) // stride + 1
    xp = _padded(x)
    out = np.zeros((B, w.shape[1], Ho, Wo))
    single = Ci == 1 and w.shape[1] == 1
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di:di + stride * (Ho - 1) + 1:stride,
                    dj:dj + stride * (Wo - 1) + 1:stride]
            if single:
                out += w[0, 0, di, dj] * xs
            else:
                out += np.einsum("bcij,co->boij", xs, w[:, :, di, dj])
    return out


def conv2d_input_grad(gy: np.ndarray, w: np.ndarray,
                      stride: int, in_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of conv2d in its input: scatter gy back through the kernel."""
    H, W = in_hw
    B, Co, Ho, Wo = gy.shape
    Ci = w.shape[0]
    gxp = np.zeros((B, Ci, H + 2, W + 2))
    single = Ci == 1 and Co == 1
    for di in range(3):
        for dj in range(3):
            g = w[0, 0, di, dj] * gy if single else np.einsum(
                "boij,co->bcij", gy, w[:, :, di, dj])
            gxp[:, :, di:di + stride * (Ho - 1) + 1:stride,
                dj:dj + stride * (Wo - 1) + 1:stride] += g
    return gxp[:, :, 1:-1, 1:-1]


def conv2d_weight_grad(x: np.ndarray, gy: np.ndarray, stride: int) -> np.ndarray:
    """d(loss)/d(kernel) for conv2d given the saved input and output adjoint."""
    B, Ci, H, W = x.shape
    _, Co, Ho, Wo = gy.shape
    xp = _padded(x)
    gw = np.zeros((Ci, Co, 3, 3))
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di:di + stride * (Ho - 1) + 1:stride,
                    dj:dj + stride * (Wo - 1) + 1:stride]
            gw[:, :, di, dj] = np.einsum("bcij,boij->co", xs, gy)
    return gw


def transposed_conv2d(x: np.ndarray, w: np.ndarray, stride: int = 2) -> np.ndarray:
    """Adjoint-shaped upsampling conv: (m, m) -> (stride*(m-1)+1, ...)."""
    H, W = x.shape[2], x.shape[3]
    out_hw = (stride * (H - 1) + 1, stride * (W - 1) + 1)
    return conv2d_input_grad(x, np.ascontiguousarray(w.transpose(1, 0, 2, 3)),
                             stride, out_hw)


def transposed_conv2d_input_grad(gy: np.ndarray, w: np.ndarray,
                                 stride: int) -> np.ndarray:
    return conv2d(gy, np.ascontiguousarray(w.transpose(1, 0, 2, 3)), stride)


def transposed_conv2d_weight_grad(x: np.ndarray, gy: np.ndarray,
                                  stride: int) -> np.ndarray:
    return conv2d_weight_grad(gy, x, stride).transpose(1, 0, 2, 3)
