"""Held-out evaluation: render views against ground truth frames."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .metrics import mae, psnr, ssim
from .rendering import RenderConfig, layers_at_frame, render_image


def render_view(ds: Dataset, fields: dict, boxes: dict, cam_id: int, t: int,
                rcfg: RenderConfig, seed: int = 0, collect_alpha: bool = False):
    cam = ds.camera(cam_id)
    layers = layers_at_frame(fields, boxes, t, ds.n_t)
    return render_image(cam, layers, rcfg, seed=seed, camera_tag=cam_id,
                        collect_alpha=collect_alpha)


def evaluate(ds: Dataset, fields: dict, boxes: dict, cam_ids, frames,
             rcfg: RenderConfig, seed: int = 0) -> dict:
    """Mean PSNR/SSIM/MAE across the given views, plus per-view records."""
    views = []
    for c in cam_ids:
        for t in frames:
            img, _ = render_view(ds, fields, boxes, c, t, rcfg, seed)
            gt = ds.images[c][t].astype(np.float64) / 255.0
            views.append({
                "camera": int(c), "frame": int(t),
                "psnr": psnr(img, gt), "ssim": ssim(img, gt), "mae": mae(img, gt),
            })
    return {
        "psnr": float(np.mean([v["psnr"] for v in views])),
        "ssim": float(np.mean([v["ssim"] for v in views])),
        "mae": float(np.mean([v["mae"] for v in views])),
        "views": views,
    }


def alpha_label_iou(ds: Dataset, fields: dict, boxes: dict, cam_ids, frames,
                    rcfg: RenderConfig, seed: int = 0, threshold: float = 0.5) -> float:
    """Mean IoU between thresholded entity alpha maps and label masks."""
    scores = []
    for c in cam_ids:
        for t in frames:
            _, amaps = render_view(ds, fields, boxes, c, t, rcfg, seed,
                                   collect_alpha=True)
            lab = ds.labels[c][t]
            for e in ds.entity_ids():
                if e not in amaps:
                    continue
                pred = amaps[e] > threshold
                gt = lab == e
                union = np.logical_or(pred, gt).sum()
                if union == 0:
                    continue
                inter = np.logical_and(pred, gt).sum()
                scores.append(inter / union)
    return float(np.mean(scores)) if scores else 0.0
