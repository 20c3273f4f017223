"""Object-aware layered volume rendering.

Each renderable layer is one entity instance: its networks, its world AABB
at the output frame (segmentation volume), the source-frame AABB used to
normalize query points, an evaluation frame (retiming), an optional inverse
affine (editing pullback), and a density scale (transparency).

Per ray the pipeline is: intersect against every layer box, draw stratified
coarse depths inside each segment, evaluate each layer's field in its own
normalized frame, merge all samples along the ray by depth, and composite
front to back.  A second, importance-sampled fine pass reuses the coarse
weights per segment.  Sample placement is driven by counter-based streams
keyed on (pixel, layer, evaluation frame), so renders are bit-reproducible
for any tile size or worker count, and retimed layers reuse exactly the
draws of the frame they evaluate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels, rng
from .field import EntityField, field_backward, field_forward


@dataclass
class RenderConfig:
    coarse_samples: int = 64
    fine_samples: int = 64
    background: tuple = (0.0, 0.0, 0.0)
    near: float = 0.05
    far: float = float("inf")
    tile: int = 2048
    workers: int = 1
    eval_chunk: int = 32768
    support_slack: float = 1e-4


def desk_render_config(**kw) -> RenderConfig:
    return RenderConfig(coarse_samples=16, fine_samples=16, **kw)


@dataclass
class LayerInstance:
    key: int
    entity: int
    field: EntityField
    box_world: np.ndarray   # (2,3) segmentation AABB at the output frame
    box_source: np.ndarray  # (2,3) normalization AABB at t_eval
    t_eval: int
    t01: float
    affine_inv_lin: np.ndarray = None
    affine_inv_trans: np.ndarray = None
    density_scale: float = 1.0


def layers_at_frame(fields: dict, boxes: dict, t: int, n_t: int) -> list:
    """Unedited layer set for output frame t (background included)."""
    out = []
    denom = max(n_t - 1, 1)
    for ent in sorted(fields):
        box = np.asarray(boxes[ent][t], dtype=np.float64)
        out.append(
            LayerInstance(
                key=ent, entity=ent, field=fields[ent],
                box_world=box, box_source=box,
                t_eval=t, t01=t / denom,
            )
        )
    return out


@dataclass
class StageData:
    name: str
    depths: np.ndarray      # (S, n) float64
    sigma: np.ndarray       # (S, n) float32, already masked and scaled
    rgb: np.ndarray         # (S, n, 3) float32
    seg_ray: np.ndarray
    seg_layer: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    pix: np.ndarray         # (R, 3) float64, background included
    alpha: np.ndarray       # (R,) float64
    seg_alpha: np.ndarray   # (S,) float64, per-segment layer opacity
    seg_deltas: np.ndarray  # (S, n) float64, within-segment quadrature steps


@dataclass
class RaysResult:
    coarse: StageData
    fine: StageData
    seg_ray: np.ndarray
    seg_layer: np.ndarray

    @property
    def rgb(self) -> np.ndarray:
        return self.fine.pix

    def layer_alpha(self, num_rays: int, layer_index: int, stage: str = "fine") -> np.ndarray:
        st = self.fine if stage == "fine" else self.coarse
        out = np.zeros(num_rays)
        rows = st.seg_layer == layer_index
        out[st.seg_ray[rows]] = st.seg_alpha[rows]
        return out


def _segment_alphas(depths: np.ndarray, sigma: np.ndarray, s1: np.ndarray):
    """Opacity each segment would have on its own, plus its quadrature steps."""
    deltas = np.empty_like(depths)
    deltas[:, :-1] = np.diff(depths, axis=1)
    deltas[:, -1] = s1 - depths[:, -1]
    a = (sigma.astype(np.float64) * deltas).sum(axis=1)
    return 1.0 - np.exp(-a), deltas


def _layer_points(layer: LayerInstance, origins, dirs, seg_ray, rows, depths):
    """World samples of one layer pulled into its normalized box frame."""
    o = origins[seg_ray[rows]]
    d = dirs[seg_ray[rows]]
    pts = o[:, None, :] + depths[rows][:, :, None] * d[:, None, :]
    if layer.affine_inv_lin is not None:
        pts = pts @ layer.affine_inv_lin.T + layer.affine_inv_trans
        d = d @ layer.affine_inv_lin.T
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    mn = layer.box_source[0]
    ext = np.maximum(layer.box_source[1] - mn, 1e-9)
    p_box = 2.0 * (pts - mn) / ext - 1.0
    return p_box, d


def _field_dtype(layers) -> np.dtype:
    if not layers:
        return np.dtype(np.float32)
    return layers[0].field.stages["coarse"].trunk.weights[0].dtype


def _eval_stage(stage_name, layers, origins, dirs, seg_ray, seg_layer, depths, cfg):
    s, n = depths.shape
    dt = _field_dtype(layers)
    sigma = np.zeros((s, n), dtype=dt)
    rgb = np.zeros((s, n, 3), dtype=dt)
    groups = []
    for li, layer in enumerate(layers):
        rows = np.nonzero(seg_layer == li)[0]
        if len(rows) == 0:
            continue
        groups.append((li, rows))
        p_box, d_unit = _layer_points(layer, origins, dirs, seg_ray, rows, depths)
        inside = (np.abs(p_box) <= 1.0 + cfg.support_slack).all(axis=2)
        flat_p = p_box.reshape(-1, 3).astype(dt)
        flat_d = np.repeat(d_unit, n, axis=0).astype(dt)
        t01 = np.full(len(flat_p), layer.t01, dtype=dt)
        nets = layer.field.stages[stage_name]
        fcfg = layer.field.config
        sig_flat = np.empty(len(flat_p), dtype=dt)
        rgb_flat = np.empty((len(flat_p), 3), dtype=dt)
        for c0 in range(0, len(flat_p), cfg.eval_chunk):
            sl = slice(c0, min(c0 + cfg.eval_chunk, len(flat_p)))
            ev = field_forward(nets, fcfg, flat_p[sl], flat_d[sl], t01[sl])
            sig_flat[sl] = ev.sigma
            rgb_flat[sl] = ev.rgb
        sig = sig_flat.reshape(len(rows), n)
        sig = sig * inside * dt.type(layer.density_scale)
        sigma[rows] = sig
        rgb[rows] = rgb_flat.reshape(len(rows), n, 3)
    return sigma, rgb, groups


def _composite_stage(name, num_rays, layers, origins, dirs, seg_ray, seg_layer,
                     s0, s1, depths, cfg):
    sigma, rgb, _ = _eval_stage(name, layers, origins, dirs, seg_ray, seg_layer, depths, cfg)
    s, n = depths.shape
    ray_of = np.repeat(seg_ray, n)
    flat_d = depths.reshape(-1)
    exit_s = np.repeat(s1, n)
    order = np.lexsort((flat_d, ray_of))
    counts = np.bincount(seg_ray, minlength=num_rays) * n
    starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    bg = np.asarray(cfg.background, dtype=np.float64)
    pix, alpha = kernels.composite(
        starts, ray_of[order], flat_d[order], exit_s[order],
        sigma.reshape(-1)[order].astype(np.float64),
        rgb.reshape(-1, 3)[order].astype(np.float64), bg,
    )
    seg_alpha, seg_deltas = _segment_alphas(depths, sigma, s1)
    return StageData(
        name=name, depths=depths, sigma=sigma, rgb=rgb,
        seg_ray=seg_ray, seg_layer=seg_layer, s0=s0, s1=s1,
        order=order, starts=starts, pix=pix, alpha=alpha,
        seg_alpha=seg_alpha, seg_deltas=seg_deltas,
    )


def render_rays(origins, dirs, pixel_keys, layers, cfg: RenderConfig) -> RaysResult:
    """Render a batch of rays through the layered scene.

    pixel_keys: (R,) uint64 stream keys, one per ray; all random draws are
    pure functions of these keys and the layers' own stream identities.
    """
    num_rays = len(origins)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    if layers:
        boxes = np.stack([l.box_world for l in layers])
    else:
        boxes = np.zeros((0, 2, 3))
    seg_ray, seg_layer, s0, s1 = kernels.ray_box_segments(
        origins, dirs, boxes, cfg.near, cfg.far
    )
    n = cfg.coarse_samples
    nf = cfg.fine_samples
    stream_ids = np.array(
        [rng.key_from(l.key, l.t_eval) for l in layers], dtype=np.uint64
    ) if layers else np.zeros(0, dtype=np.uint64)
    seg_keys = rng.key_array(0, pixel_keys[seg_ray] ^ stream_ids[seg_layer]) \
        if len(seg_ray) else np.zeros(0, dtype=np.uint64)

    u_c = rng.uniforms_keys(seg_keys[:, None], np.arange(n)[None, :])
    width = (s1 - s0)[:, None]
    j = np.arange(n, dtype=np.float64)[None, :]
    depths_c = s0[:, None] + width * ((j + u_c) / n)

    coarse = _composite_stage(
        "coarse", num_rays, layers, origins, dirs, seg_ray, seg_layer, s0, s1, depths_c, cfg
    )

    # fine sampling from per-segment coarse weights (stop-gradient placement)
    w = _segment_cdf_weights(depths_c, coarse.sigma, s1)
    edges = np.concatenate([depths_c, s1[:, None]], axis=1)
    u_f = rng.uniforms_keys(seg_keys[:, None], np.arange(n, n + nf)[None, :])
    new_d = kernels.sample_pdf(edges, w, u_f)
    depths_f = np.sort(np.concatenate([depths_c, new_d], axis=1), axis=1)

    fine = _composite_stage(
        "fine", num_rays, layers, origins, dirs, seg_ray, seg_layer, s0, s1, depths_f, cfg
    )
    return RaysResult(coarse=coarse, fine=fine, seg_ray=seg_ray, seg_layer=seg_layer)


def _segment_cdf_weights(depths, sigma, s1):
    """Per-segment compositing weights with segment-local transmittance."""
    sig = sigma.astype(np.float64)
    deltas = np.empty_like(depths)
    deltas[:, :-1] = np.diff(depths, axis=1)
    deltas[:, -1] = s1 - depths[:, -1]
    tau = sig * deltas
    t_in = np.exp(-(np.cumsum(tau, axis=1) - tau))
    return t_in * (1.0 - np.exp(-tau))


def stage_backward(stage: StageData, layers, origins, dirs, cfg: RenderConfig,
                   d_pix, d_seg_alpha, accum: dict) -> None:
    """Backpropagate pixel and per-layer-alpha gradients into field params.

    Forward activations are recomputed chunk by chunk rather than stored,
    trading one extra forward pass for bounded memory.  accum maps
    (entity_id, stage_name) -> StageGrads and is updated in place.
    """
    s, n = stage.depths.shape
    ray_of = np.repeat(stage.seg_ray, n)
    flat_d = stage.depths.reshape(-1)
    exit_s = np.repeat(stage.s1, n)
    order = stage.order
    bg = np.asarray(cfg.background, dtype=np.float64)
    d_sig_sorted, d_rgb_sorted = kernels.composite_backward(
        stage.starts, ray_of[order], flat_d[order], exit_s[order],
        stage.sigma.reshape(-1)[order].astype(np.float64),
        stage.rgb.reshape(-1, 3)[order].astype(np.float64), bg,
        np.ascontiguousarray(d_pix, dtype=np.float64),
    )
    d_sigma = np.empty(s * n)
    d_sigma[order] = d_sig_sorted
    d_rgb = np.empty((s * n, 3))
    d_rgb[order] = d_rgb_sorted
    d_sigma = d_sigma.reshape(s, n)
    d_rgb = d_rgb.reshape(s, n, 3)
    if d_seg_alpha is not None:
        d_sigma = d_sigma + (d_seg_alpha * (1.0 - stage.seg_alpha))[:, None] * stage.seg_deltas

    dt = _field_dtype(layers)
    for li, layer in enumerate(layers):
        rows = np.nonzero(stage.seg_layer == li)[0]
        if len(rows) == 0:
            continue
        p_box, d_unit = _layer_points(layer, origins, dirs, stage.seg_ray, rows, stage.depths)
        inside = (np.abs(p_box) <= 1.0 + cfg.support_slack).all(axis=2)
        flat_p = p_box.reshape(-1, 3).astype(dt)
        flat_dirs = np.repeat(d_unit, n, axis=0).astype(dt)
        t01 = np.full(len(flat_p), layer.t01, dtype=dt)
        gain = (inside * dt.type(layer.density_scale)).reshape(-1)
        d_sig_l = (d_sigma[rows].reshape(-1) * gain).astype(dt)
        d_rgb_l = d_rgb[rows].reshape(-1, 3).astype(dt)
        nets = layer.field.stages[stage.name]
        fcfg = layer.field.config
        key = (layer.entity, stage.name)
        for c0 in range(0, len(flat_p), cfg.eval_chunk):
            sl = slice(c0, min(c0 + cfg.eval_chunk, len(flat_p)))
            ev = field_forward(nets, fcfg, flat_p[sl], flat_dirs[sl], t01[sl])
            g = field_backward(nets, fcfg, ev, d_rgb_l[sl], d_sig_l[sl])
            _accum_into(accum, key, g)


def _accum_into(accum, key, grads) -> None:
    if key not in accum:
        accum[key] = grads
        return
    tot = accum[key]
    if tot.deform is not None:
        for a, b in zip(tot.deform, grads.deform):
            a += b
    for a, b in zip(tot.trunk, grads.trunk):
        a += b
    for a, b in zip(tot.color, grads.color):
        a += b


def render_pixel_keys(seed: int, camera_tag: int, pixel_indices: np.ndarray) -> np.ndarray:
    """Stream keys for rendering; domain-separated from training batches."""
    return rng.key_array(rng.key_from(seed, 0, camera_tag), pixel_indices)


def render_image(camera, layers, cfg: RenderConfig, seed: int = 0, camera_tag: int = 0,
                 collect_alpha: bool = False, progress=None):
    """Render a full image.  Returns (img (H,W,3) float32, alpha maps dict).

    Work is split into fixed-size pixel tiles; the tile partition does not
    depend on the worker count, so outputs are identical for any workers.
    progress, if given, is called as progress(done_tiles, total_tiles).
    """
    h, w = camera.height, camera.width
    total = h * w
    keys = render_pixel_keys(seed, camera_tag, np.arange(total))
    img = np.zeros((total, 3), dtype=np.float32)
    amaps = {l.key: np.zeros(total, dtype=np.float32) for l in layers} if collect_alpha else {}

    spans = [(i, min(i + cfg.tile, total)) for i in range(0, total, cfg.tile)]

    def run(span):
        a, b = span
        idx = np.arange(a, b)
        px = np.stack([idx % w, idx // w], axis=1).astype(np.float64)
        origins, dirs = camera.rays(px)
        res = render_rays(origins, dirs, keys[a:b], layers, cfg)
        alphas = {}
        if collect_alpha:
            for li, layer in enumerate(layers):
                alphas[layer.key] = res.layer_alpha(b - a, li)
        return a, b, res.fine.pix.astype(np.float32), alphas

    done = 0

    def note(res):
        nonlocal done
        done += 1
        if progress:
            progress(done, len(spans))
        return res

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = [note(r) for r in pool.map(run, spans)]
    else:
        results = [note(run(sp)) for sp in spans]
    for a, b, pix, alphas in results:
        img[a:b] = pix
        for k, v in alphas.items():
            amaps[k][a:b] = v
    img = img.reshape(h, w, 3)
    return img, {k: v.reshape(h, w) for k, v in amaps.items()}
