"""Hot per-ray kernels, each with a numba-compiled loop and a vectorized
numpy fallback.

The two implementations of every kernel follow identical arithmetic, so they
agree to floating-point roundoff (the benchmark in layerfield.bench checks
this).  Within one path results are bit-reproducible: no atomics, no
parallel reductions, fixed iteration order.

Merged compositing uses the quadrature step

    delta_j = min(next merged depth on the ray, owning segment exit) - depth_j

with the segment exit standing in for the next depth on the last sample.
Clipping at the owning exit keeps density from acting outside its layer's
box, which makes disjoint layers composite exactly like the over operator
and keeps far-away duplicates from perturbing pixels they do not cover.
"""

from __future__ import annotations

import numpy as np

from . import accel
from .accel import njit

# ---------------------------------------------------------------- ray/box

_BIG = 1e30


def _ray_box_np(origins, dirs, boxes, near, far):
    d = dirs[:, None, :]
    d_safe = np.where(np.abs(d) < 1e-15, np.where(d < 0, -1e-15, 1e-15), d)
    inv = 1.0 / d_safe
    t1 = (boxes[None, :, 0, :] - origins[:, None, :]) * inv
    t2 = (boxes[None, :, 1, :] - origins[:, None, :]) * inv
    lo = np.minimum(t1, t2).max(axis=2)
    hi = np.maximum(t1, t2).min(axis=2)
    s0 = np.maximum(lo, near)
    s1 = np.minimum(hi, far)
    valid = s1 > s0
    seg_ray, seg_layer = np.nonzero(valid)
    return (
        seg_ray.astype(np.int64),
        seg_layer.astype(np.int64),
        s0[valid],
        s1[valid],
    )


@njit(error_model="numpy")
def _ray_box_nb(origins, dirs, boxes, near, far, seg_ray, seg_layer, s0_out, s1_out):
    n = 0
    for r in range(origins.shape[0]):
        for l in range(boxes.shape[0]):
            lo = -_BIG
            hi = _BIG
            for a in range(3):
                d = dirs[r, a]
                if abs(d) < 1e-15:
                    d = -1e-15 if d < 0 else 1e-15
                inv = 1.0 / d
                t1 = (boxes[l, 0, a] - origins[r, a]) * inv
                t2 = (boxes[l, 1, a] - origins[r, a]) * inv
                tlo = min(t1, t2)
                thi = max(t1, t2)
                if tlo > lo:
                    lo = tlo
                if thi < hi:
                    hi = thi
            s0 = max(lo, near)
            s1 = min(hi, far)
            if s1 > s0:
                seg_ray[n] = r
                seg_layer[n] = l
                s0_out[n] = s0
                s1_out[n] = s1
                n += 1
    return n


def ray_box_segments(origins, dirs, boxes, near=1e-4, far=np.inf):
    """Intersect every ray with every layer box.

    Returns (seg_ray, seg_layer, s_enter, s_exit) for the ray/box pairs with
    a nonempty intersection beyond near, ray-major order.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    if not accel.NUMBA_ENABLED:
        return _ray_box_np(origins, dirs, boxes, near, far)
    cap = origins.shape[0] * boxes.shape[0]
    seg_ray = np.empty(cap, dtype=np.int64)
    seg_layer = np.empty(cap, dtype=np.int64)
    s0 = np.empty(cap, dtype=np.float64)
    s1 = np.empty(cap, dtype=np.float64)
    n = _ray_box_nb(origins, dirs, boxes, float(near), float(far), seg_ray, seg_layer, s0, s1)
    return seg_ray[:n].copy(), seg_layer[:n].copy(), s0[:n].copy(), s1[:n].copy()


# ------------------------------------------------------------- sample_pdf

def _sample_pdf_np(edges, weights, u):
    s, nf = u.shape
    n = weights.shape[1]
    cdf = np.cumsum(weights, axis=1)
    total = cdf[:, -1]  # sequential sum, matches the loop path exactly
    out = np.empty((s, nf))
    degenerate = total <= 0.0
    if degenerate.any():
        lo = edges[degenerate, :1]
        hi = edges[degenerate, -1:]
        out[degenerate] = lo + u[degenerate] * (hi - lo)
    ok = ~degenerate
    if ok.any():
        cdf_ok = cdf[ok] / total[ok, None]
        cdf_ok[:, -1] = 1.0
        u_ok = u[ok]
        # index of first cdf entry strictly greater than u
        idx = np.minimum((cdf_ok[:, None, :] <= u_ok[:, :, None]).sum(axis=2), n - 1)
        rows = np.arange(idx.shape[0])[:, None]
        hi_c = cdf_ok[rows, idx]
        lo_c = np.where(idx > 0, cdf_ok[rows, np.maximum(idx - 1, 0)], 0.0)
        e = edges[ok]
        lo_e = e[rows, idx]
        hi_e = e[rows, idx + 1]
        frac = (u_ok - lo_c) / (hi_c - lo_c)
        out[ok] = lo_e + frac * (hi_e - lo_e)
    return out


@njit(error_model="numpy")
def _sample_pdf_nb(edges, weights, u, out):
    s, n = weights.shape
    nf = u.shape[1]
    for i in range(s):
        total = 0.0
        for j in range(n):
            total += weights[i, j]
        if total <= 0.0:
            lo = edges[i, 0]
            hi = edges[i, n]
            for k in range(nf):
                out[i, k] = lo + u[i, k] * (hi - lo)
            continue
        for k in range(nf):
            uk = u[i, k]
            acc = 0.0
            idx = n - 1
            lo_c = 0.0
            hi_c = 1.0
            for j in range(n):
                c = acc + weights[i, j]
                # normalized cdf value after bin j; exact 1.0 on the last bin
                cn = c / total if j < n - 1 else 1.0
                if uk < cn:
                    idx = j
                    lo_c = acc / total
                    hi_c = cn
                    break
                acc = c
            frac = (uk - lo_c) / (hi_c - lo_c)
            out[i, k] = edges[i, idx] + frac * (edges[i, idx + 1] - edges[i, idx])
    return


def sample_pdf(edges, weights, u):
    """Inverse-CDF draws from a piecewise-constant density per row.

    edges: (s, n+1) ascending bin edges; weights: (s, n) nonnegative;
    u: (s, nf) uniforms in [0, 1).  Rows whose weights sum to zero fall back
    to uniform sampling over [edges[0], edges[n]].
    """
    edges = np.ascontiguousarray(edges, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if edges.shape[1] != weights.shape[1] + 1:
        raise ValueError("edges must have one more column than weights")
    if not accel.NUMBA_ENABLED:
        return _sample_pdf_np(edges, weights, u)
    out = np.empty_like(u)
    _sample_pdf_nb(edges, weights, u, out)
    return out


# ------------------------------------------------------------- compositing

def _composite_np(starts, ray_of, depth, exit_s, sigma, rgb, bg):
    m = depth.shape[0]
    r = len(starts) - 1
    nxt = np.empty(m)
    if m:
        nxt[:-1] = np.where(ray_of[1:] == ray_of[:-1], depth[1:], _BIG)
        nxt[-1] = _BIG
    delta = np.minimum(nxt, exit_s) - depth
    tau = sigma * delta
    ccs = np.cumsum(tau)
    exc = ccs - tau
    offs = np.zeros(r)
    counts = np.diff(starts)
    nonempty = counts > 0
    if m:
        offs[nonempty] = exc[starts[:-1][nonempty]]
    base = offs[ray_of]
    t_in = np.exp(-(exc - base))
    w = t_in * (1.0 - np.exp(-tau))
    pix = np.zeros((r, 3))
    np.add.at(pix, ray_of, w[:, None] * rgb)
    tau_tot = np.zeros(r)
    np.add.at(tau_tot, ray_of, tau)
    t_end = np.exp(-tau_tot)
    alpha = 1.0 - t_end
    pix += t_end[:, None] * bg
    return pix, alpha


@njit(error_model="numpy")
def _composite_nb(starts, depth, exit_s, sigma, rgb, bg, pix, alpha):
    r = len(starts) - 1
    for i in range(r):
        a = starts[i]
        b = starts[i + 1]
        acc = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for j in range(a, b):
            nxt = depth[j + 1] if j + 1 < b else _BIG
            if exit_s[j] < nxt:
                nxt = exit_s[j]
            delta = nxt - depth[j]
            tau = sigma[j] * delta
            t_in = np.exp(-acc)
            w = t_in * (1.0 - np.exp(-tau))
            c0 += w * rgb[j, 0]
            c1 += w * rgb[j, 1]
            c2 += w * rgb[j, 2]
            acc += tau
        t_end = np.exp(-acc)
        pix[i, 0] = c0 + t_end * bg[0]
        pix[i, 1] = c1 + t_end * bg[1]
        pix[i, 2] = c2 + t_end * bg[2]
        alpha[i] = 1.0 - t_end
    return


def composite(starts, ray_of, depth, exit_s, sigma, rgb, bg):
    """Front-to-back emission-absorption over merged, depth-sorted samples.

    starts: (r+1,) int64 sample ranges per ray; depth ascending within each
    ray; exit_s is each sample's owning segment exit.  Returns
    (pix (r,3), alpha (r,)) in float64; pix includes the background color
    weighted by the remaining transmittance.
    """
    if not accel.NUMBA_ENABLED:
        return _composite_np(starts, ray_of, depth, exit_s, sigma, rgb, bg)
    r = len(starts) - 1
    pix = np.zeros((r, 3))
    alpha = np.zeros(r)
    _composite_nb(starts, depth, exit_s, sigma, rgb, bg, pix, alpha)
    return pix, alpha


def _composite_bwd_np(starts, ray_of, depth, exit_s, sigma, rgb, bg, d_pix):
    m = depth.shape[0]
    r = len(starts) - 1
    nxt = np.empty(m)
    if m:
        nxt[:-1] = np.where(ray_of[1:] == ray_of[:-1], depth[1:], _BIG)
        nxt[-1] = _BIG
    delta = np.minimum(nxt, exit_s) - depth
    tau = sigma * delta
    ccs = np.cumsum(tau)
    exc = ccs - tau
    counts = np.diff(starts)
    offs = np.zeros(r)
    nonempty = counts > 0
    if m:
        offs[nonempty] = exc[starts[:-1][nonempty]]
    base = offs[ray_of] if m else np.zeros(0)
    t_in = np.exp(-(exc - base))
    t_out = np.exp(-(ccs - base))
    w = t_in - t_out
    wc = w[:, None] * rgb
    pref = np.cumsum(wc, axis=0)
    ray_tot = np.zeros((r, 3))
    np.add.at(ray_tot, ray_of, wc)
    pref_base = np.zeros((r, 3))
    if m:
        pref_base[nonempty] = pref[starts[:-1][nonempty]] - wc[starts[:-1][nonempty]]
    tau_tot = np.zeros(r)
    np.add.at(tau_tot, ray_of, tau)
    t_end = np.exp(-tau_tot)
    # suffix sum of downstream contributions seen by sample j, plus background
    suffix = (ray_tot[ray_of] - (pref - pref_base[ray_of])) + t_end[ray_of, None] * bg
    dp = d_pix[ray_of]
    d_rgb = w[:, None] * dp
    d_sigma = delta * np.sum(dp * (t_out[:, None] * rgb - suffix), axis=1)
    return d_sigma, d_rgb


@njit(error_model="numpy")
def _composite_bwd_nb(starts, depth, exit_s, sigma, rgb, bg, d_pix, d_sigma, d_rgb):
    r = len(starts) - 1
    for i in range(r):
        a = starts[i]
        b = starts[i + 1]
        # forward sweep for transmittances
        acc = 0.0
        for j in range(a, b):
            nxt = depth[j + 1] if j + 1 < b else _BIG
            if exit_s[j] < nxt:
                nxt = exit_s[j]
            acc += sigma[j] * (nxt - depth[j])
        t_end = np.exp(-acc)
        s0 = t_end * bg[0]
        s1 = t_end * bg[1]
        s2 = t_end * bg[2]
        # backward sweep accumulating the suffix of downstream radiance
        acc2 = acc
        for j in range(b - 1, a - 1, -1):
            nxt = depth[j + 1] if j + 1 < b else _BIG
            if exit_s[j] < nxt:
                nxt = exit_s[j]
            delta = nxt - depth[j]
            tau = sigma[j] * delta
            acc2 -= tau
            t_in = np.exp(-acc2)
            t_out = np.exp(-(acc2 + tau))
            w = t_in - t_out
            d_rgb[j, 0] = w * d_pix[i, 0]
            d_rgb[j, 1] = w * d_pix[i, 1]
            d_rgb[j, 2] = w * d_pix[i, 2]
            g = (
                d_pix[i, 0] * (t_out * rgb[j, 0] - s0)
                + d_pix[i, 1] * (t_out * rgb[j, 1] - s1)
                + d_pix[i, 2] * (t_out * rgb[j, 2] - s2)
            )
            d_sigma[j] = delta * g
            s0 += w * rgb[j, 0]
            s1 += w * rgb[j, 1]
            s2 += w * rgb[j, 2]
    return


def composite_backward(starts, ray_of, depth, exit_s, sigma, rgb, bg, d_pix):
    """Gradients of composite() w.r.t. per-sample sigma and rgb.

    Given dL/dpix, returns (d_sigma (m,), d_rgb (m,3)).  The background is
    constant and absorbs no gradient.
    """
    if not accel.NUMBA_ENABLED:
        return _composite_bwd_np(starts, ray_of, depth, exit_s, sigma, rgb, bg, d_pix)
    m = depth.shape[0]
    d_sigma = np.zeros(m)
    d_rgb = np.zeros((m, 3))
    _composite_bwd_nb(starts, depth, exit_s, sigma, rgb, bg, d_pix, d_sigma, d_rgb)
    return d_sigma, d_rgb
