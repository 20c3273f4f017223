"""Sinusoidal coordinate features: fixed values, layout, widths, gradients."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerfield.encoding import (
    encoded_width,
    positional_encode,
    positional_encode_backward,
)


def test_zero_input_two_frequencies_with_input():
    out = positional_encode(np.array([[0.0]]), 2, include_input=True)
    assert np.allclose(out, [[0.0, 0.0, 1.0, 0.0, 1.0]], atol=1e-12)


def test_one_single_frequency_without_input():
    out = positional_encode(np.array([[1.0]]), 1, include_input=False)
    assert np.allclose(out, [[0.0, -1.0]], atol=1e-12)


def test_half_two_frequencies_without_input():
    out = positional_encode(np.array([[0.5]]), 2, include_input=False)
    assert np.allclose(out, [[1.0, 0.0, 0.0, -1.0]], atol=1e-12)


def test_components_are_interleaved_per_input_dimension():
    x = np.array([[0.3, -0.7]])
    out = positional_encode(x, 2, include_input=True)
    for c in range(2):
        v = x[0, c]
        expect = [v, np.sin(np.pi * v), np.cos(np.pi * v),
                  np.sin(2 * np.pi * v), np.cos(2 * np.pi * v)]
        assert np.allclose(out[0, c * 5:(c + 1) * 5], expect, atol=1e-12)


@given(st.integers(1, 4), st.integers(0, 8), st.booleans())
def test_encoded_width_matches_output_shape(dim, L, include):
    x = np.zeros((3, dim))
    out = positional_encode(x, L, include_input=include)
    assert out.shape == (3, encoded_width(dim, L, include))


def test_rows_encode_independently():
    x = np.random.default_rng(0).normal(size=(6, 3))
    full = positional_encode(x, 4, include_input=True)
    for i in range(6):
        row = positional_encode(x[i:i + 1], 4, include_input=True)
        assert np.array_equal(full[i:i + 1], row)


@pytest.mark.parametrize("include", [True, False])
def test_backward_matches_finite_differences(include):
    gen = np.random.default_rng(7)
    x = gen.normal(size=(4, 3))
    d_out = gen.normal(size=(4, encoded_width(3, 3, include)))
    grad = positional_encode_backward(x, d_out, 3, include_input=include)
    eps = 1e-6
    for i in range(4):
        for c in range(3):
            xp = x.copy()
            xm = x.copy()
            xp[i, c] += eps
            xm[i, c] -= eps
            fd = np.sum((positional_encode(xp, 3, include_input=include)
                         - positional_encode(xm, 3, include_input=include)) * d_out)
            fd /= 2 * eps
            assert abs(fd - grad[i, c]) <= 1e-6 * max(1.0, abs(fd))


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        positional_encode(np.zeros(3), 2, include_input=True)  # not 2D
    with pytest.raises(ValueError, match="num_frequencies"):
        positional_encode(np.zeros((1, 3)), -1, include_input=True)
    with pytest.raises(ValueError, match="non-finite"):
        positional_encode(np.array([[np.nan, 0.0, 0.0]]), 2, include_input=True)
