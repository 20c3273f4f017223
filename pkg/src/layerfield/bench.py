"""Benchmark the compiled kernels against their numpy fallbacks.

Runs each hot kernel on a rendering-shaped workload in both modes, checks
the two implementations agree, and reports wall times.  When the process
was started with LAYERFIELD_NUMBA=0 (or numba is missing) only the numpy
side can run; the report says so instead of guessing.

Run via `layerfield bench` or `python -m layerfield.bench`.
"""

from __future__ import annotations

import json
import time

import numpy as np

from . import accel, kernels


def _workloads(seed=0):
    g = np.random.default_rng(seed)
    r, L = 4096, 3
    origins = g.normal(0, 0.1, (r, 3)) + (0, 0, -4.0)
    dirs = g.normal(0, 0.15, (r, 3)) + (0, 0, 1.0)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    boxes = np.stack([
        np.stack([c - (0.5 + 0.2 * i) for i, c in enumerate(centers)]) for centers in
        [[g.uniform(-0.4, 0.4, 3) + (0, 0, 2 * i) for i in range(L)]]
    ][0])  # (L, 3) lower corners
    boxes = np.stack([boxes, boxes + 1.3], axis=1)  # (L, 2, 3)

    s, n, nf = 8192, 16, 16
    edges = np.sort(g.uniform(0, 4, (s, n + 1)), axis=1)
    weights = g.uniform(0, 1, (s, n))
    weights[:: 7] = 0.0  # exercise the degenerate-row path
    u = g.uniform(0, 1, (s, nf))

    m_rays, per = 4096, 32
    m = m_rays * per
    starts = np.arange(m_rays + 1, dtype=np.int64) * per
    ray_of = np.repeat(np.arange(m_rays, dtype=np.int64), per)
    depth = np.sort(g.uniform(0.5, 5.0, (m_rays, per)), axis=1).reshape(-1)
    exit_s = depth + g.uniform(0.01, 0.2, m)
    sigma = g.uniform(0, 8, m)
    rgb = g.uniform(0, 1, (m, 3))
    bg = np.array([0.1, 0.2, 0.3])
    d_pix = g.normal(0, 1, (m_rays, 3))

    return {
        "ray_box_segments": (origins, dirs, boxes, 1e-4, np.inf),
        "sample_pdf": (edges, weights, u),
        "composite": (starts, ray_of, depth, exit_s, sigma, rgb, bg),
        "composite_backward": (starts, ray_of, depth, exit_s, sigma, rgb, bg, d_pix),
    }


def _time(fn, args, repeats):
    fn(*args)  # warm up (and compile, on the numba side)
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best.append(time.perf_counter() - t0)
    return float(np.median(best) * 1e3), out


def _flatten(out):
    if isinstance(out, tuple):
        return np.concatenate([np.asarray(o, dtype=np.float64).ravel() for o in out])
    return np.asarray(out, dtype=np.float64).ravel()


def run_benchmark(repeats: int = 5) -> dict:
    loads = _workloads()
    report = {
        "numba_compiled": accel.NUMBA_ENABLED,
        "repeats": repeats,
        "kernels": {},
    }
    was = accel.NUMBA_ENABLED
    try:
        for name, args in loads.items():
            fn = getattr(kernels, name)
            entry = {}
            accel.NUMBA_ENABLED = False
            entry["numpy_ms"], out_np = _time(fn, args, repeats)
            if was:
                accel.NUMBA_ENABLED = True
                entry["numba_ms"], out_nb = _time(fn, args, repeats)
                entry["speedup"] = round(entry["numpy_ms"] / entry["numba_ms"], 2)
                entry["max_abs_diff"] = float(
                    np.max(np.abs(_flatten(out_np) - _flatten(out_nb)))
                )
            else:
                entry["numba_ms"] = None
                entry["note"] = "numba disabled or unavailable in this process"
            report["kernels"][name] = entry
    finally:
        accel.NUMBA_ENABLED = was
    return report


if __name__ == "__main__":
    print(json.dumps(run_benchmark(), indent=1))
