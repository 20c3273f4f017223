"""Image quality metrics: PSNR, SSIM, MAE.

Inputs are float arrays in [0, 1] (uint8 images are converted).  SSIM uses
the standard 11-tap gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
valid-region convolution, averaged over channels.
"""

from __future__ import annotations

import numpy as np


def _as_float(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return a.astype(np.float64) / 255.0
    return a.astype(np.float64)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    x, y = _as_float(a), _as_float(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    m = mse(a, b)
    if m == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


def mae(a: np.ndarray, b: np.ndarray) -> float:
    x, y = _as_float(a), _as_float(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean(np.abs(x - y)))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def _sep_filter_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    n = len(k)
    h, w = a.shape
    rows = np.zeros((h, w - n + 1))
    for i, kv in enumerate(k):
        rows += kv * a[:, i:w - n + 1 + i]
    out = np.zeros((h - n + 1, rows.shape[1]))
    for i, kv in enumerate(k):
        out += kv * rows[i:h - n + 1 + i, :]
    return out


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    x, y = _as_float(a), _as_float(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[:, :, None], y[:, :, None]
    if min(x.shape[0], x.shape[1]) < window:
        raise ValueError("image smaller than the SSIM window")
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    k = _gaussian_kernel(window, sigma)
    vals = []
    for ch in range(x.shape[2]):
        xc, yc = x[:, :, ch], y[:, :, ch]
        mx = _sep_filter_valid(xc, k)
        my = _sep_filter_valid(yc, k)
        mxx = _sep_filter_valid(xc * xc, k)
        myy = _sep_filter_valid(yc * yc, k)
        mxy = _sep_filter_valid(xc * yc, k)
        vx = mxx - mx * mx
        vy = myy - my * my
        cxy = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
