"""Sinusoidal positional encoding with an exact reverse-mode jacobian product.

A d-dimensional input x maps, component by component, to

    [x_c, sin(2^0 pi x_c), cos(2^0 pi x_c), ..., sin(2^{L-1} pi x_c), cos(2^{L-1} pi x_c)]

for c = 1..d, concatenated in component-major order.  The optional leading
x_c passthrough is controlled by include_input.
"""

from __future__ import annotations

import numpy as np


def encoded_width(dim: int, num_frequencies: int, include_input: bool = True) -> int:
    return dim * ((1 if include_input else 0) + 2 * num_frequencies)


def _frequencies(num_frequencies: int, dtype) -> np.ndarray:
    k = np.arange(num_frequencies, dtype=np.float64)
    return (np.pi * np.exp2(k)).astype(dtype)


def positional_encode(x: np.ndarray, num_frequencies: int, include_input: bool = True) -> np.ndarray:
    """Encode (n, d) inputs to (n, encoded_width) features."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected (n, d) input, got shape {x.shape}")
    if num_frequencies < 0:
        raise ValueError("num_frequencies must be >= 0")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in encoding input")
    n, d = x.shape
    inc = 1 if include_input else 0
    per = inc + 2 * num_frequencies
    out = np.empty((n, d, per), dtype=x.dtype)
    if include_input:
        out[:, :, 0] = x
    if num_frequencies > 0:
        ang = x[:, :, None] * _frequencies(num_frequencies, x.dtype)
        out[:, :, inc::2] = np.sin(ang)
        out[:, :, inc + 1::2] = np.cos(ang)
    return out.reshape(n, d * per)


def positional_encode_backward(
    x: np.ndarray, d_out: np.ndarray, num_frequencies: int, include_input: bool = True
) -> np.ndarray:
    """Pull a gradient on the encoding back to a gradient on x."""
    x = np.asarray(x)
    n, d = x.shape
    inc = 1 if include_input else 0
    per = inc + 2 * num_frequencies
    g = d_out.reshape(n, d, per)
    dx = np.zeros_like(x)
    if include_input:
        dx += g[:, :, 0]
    if num_frequencies > 0:
        freqs = _frequencies(num_frequencies, x.dtype)
        ang = x[:, :, None] * freqs
        dx += np.sum(g[:, :, inc::2] * np.cos(ang) * freqs, axis=2)
        dx -= np.sum(g[:, :, inc + 1::2] * np.sin(ang) * freqs, axis=2)
    return dx
