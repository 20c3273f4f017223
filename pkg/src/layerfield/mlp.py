"""Plain fully connected networks with explicit forward tapes and backprop.

Hidden layers are ReLU, the output layer is linear.  Layers listed in
``skips`` receive the network input concatenated onto the previous hidden
activation, NeRF style.  Parameters are float32; passing float64 inputs with
float64 parameter copies (see params_astype) gives a float64 reference path
for finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    weights: list  # each (out_width, in_width)
    biases: list   # each (out_width,)
    skips: tuple = ()

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[0]

    def param_list(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def num_params(self) -> int:
        return sum(p.size for p in self.param_list())


def init_mlp(
    in_width: int,
    hidden: tuple,
    out_width: int,
    skips: tuple = (),
    seed: int = 0,
    zero_final: bool = False,
    dtype=np.float32,
) -> Mlp:
    """Kaiming-uniform fan-in init (bound sqrt(6/fan_in)), zero biases.

    zero_final zeroes the output layer so the network starts as the zero
    function, used for deformation heads.
    """
    for s in skips:
        if s <= 0 or s > len(hidden):
            raise ValueError(f"skip index {s} out of range")
    widths = [in_width] + list(hidden) + [out_width]
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for k in range(len(widths) - 1):
        fan_in = widths[k] + (in_width if k in skips else 0)
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(widths[k + 1], fan_in)).astype(dtype)
        if zero_final and k == len(widths) - 2:
            w[:] = 0
        weights.append(w)
        biases.append(np.zeros(widths[k + 1], dtype=dtype))
    return Mlp(weights=weights, biases=biases, skips=tuple(skips))


def params_astype(mlp: Mlp, dtype) -> Mlp:
    return Mlp(
        weights=[w.astype(dtype) for w in mlp.weights],
        biases=[b.astype(dtype) for b in mlp.biases],
        skips=mlp.skips,
    )


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Returns (y, tape).  tape holds each layer's input for the backward pass."""
    if x.ndim != 2 or x.shape[1] != mlp.in_width:
        raise ValueError(
            f"input shape {x.shape} does not match network input width {mlp.in_width}"
        )
    tape = []
    h = x
    last = mlp.num_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        if k in mlp.skips:
            h = np.concatenate([h, x], axis=1)
        if h.shape[1] != w.shape[1]:
            raise ValueError(
                f"layer {k} input width {h.shape[1]} does not match weight shape {w.shape}"
            )
        tape.append(h)
        z = h @ w.T + b
        h = np.maximum(z, 0) if k < last else z
    return h, tape


def mlp_backward(mlp: Mlp, tape: list, d_out: np.ndarray):
    """Reverse pass. Returns (grads, d_x).

    grads matches param_list order: [dW0, db0, dW1, db1, ...].
    d_x is the gradient on the network input, including skip contributions.
    """
    last = mlp.num_layers - 1
    in_width = mlp.in_width
    d_x = None
    dz = d_out
    grads = [None] * (2 * mlp.num_layers)
    for k in range(last, -1, -1):
        inp = tape[k]
        grads[2 * k] = dz.T @ inp
        grads[2 * k + 1] = dz.sum(axis=0)
        d_inp = dz @ mlp.weights[k]
        if k in mlp.skips:
            d_inp, d_skip = d_inp[:, :-in_width], d_inp[:, -in_width:]
            d_x = d_skip if d_x is None else d_x + d_skip
            inp = inp[:, :-in_width]
        if k == 0:
            d_x = d_inp if d_x is None else d_x + d_inp
        else:
            # inp is the post-ReLU activation of layer k-1
            dz = d_inp * (inp > 0)
    return grads, d_x
