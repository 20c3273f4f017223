"""Scene parsing: multi-view track fusion, depth-statistics mask
refinement, and silhouette carving into per-frame 3D boxes.

Tracking networks are out of scope.  This module consumes per-camera 2D
tracklets (derived from label maps, or degraded ones in tests) plus depth
maps and turns them into the per-entity boxes and clean label maps the
renderer trains on:

  * fuse_tracking blends a low-confidence center with predictions driven
    by higher-confidence peer cameras, confidence weighted.
  * refine_mask keeps only candidate pixels whose depth sits near the
    entity's running mean depth, cutting off identity swaps at crossings.
  * space_carve intersects silhouette cones on a voxel grid.
  * parse_scene runs the pipeline over a dataset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset


class FusionError(ValueError):
    """No usable source for a fused center (all peers below threshold)."""


class ParseError(ValueError):
    """Parsing failed for a specific entity/frame; message carries context."""


@dataclass
class Tracklet2D:
    """One entity's track in one camera: per-frame box, center, confidence."""
    entity: int
    camera: int
    boxes: np.ndarray       # (n_t, 4) [x0, y0, x1, y1] pixels, NaN when unseen
    centers: np.ndarray     # (n_t, 2), NaN when unseen
    confidence: np.ndarray  # (n_t,) in [0, 1]


def tracklets_from_labels(ds: Dataset, entity: int) -> dict:
    """Full-confidence tracklets read straight off the label maps."""
    out = {}
    for cam in ds.cameras:
        c = cam.cam_id
        boxes = np.full((ds.n_t, 4), np.nan)
        centers = np.full((ds.n_t, 2), np.nan)
        conf = np.zeros(ds.n_t)
        for t in range(ds.n_t):
            ys, xs = np.nonzero(ds.labels[c][t] == entity)
            if len(xs) == 0:
                continue
            boxes[t] = (xs.min(), ys.min(), xs.max(), ys.max())
            centers[t] = (xs.mean(), ys.mean())
            conf[t] = 1.0
        out[c] = Tracklet2D(entity=entity, camera=c, boxes=boxes,
                            centers=centers, confidence=conf)
    return out


def constant_velocity_predictor(reference: Tracklet2D, query: Tracklet2D, t: int):
    """Default trajectory predictor: linear extrapolation of the query
    camera's own confident history (the reference peer only vouches for
    the frame).  Returns None without usable history."""
    del reference
    seen = [s for s in range(t)
            if query.confidence[s] > 0 and np.isfinite(query.centers[s]).all()]
    if not seen:
        return None
    if len(seen) == 1:
        return query.centers[seen[-1]].copy()
    a, b = seen[-2], seen[-1]
    step = (query.centers[b] - query.centers[a]) / (b - a)
    return query.centers[b] + step * (t - b)


def make_oracle_predictor(clean: dict):
    """Predictor that returns the uncorrupted center (synthetic tests)."""
    def predict(reference: Tracklet2D, query: Tracklet2D, t: int):
        tr = clean[query.camera]
        c = tr.centers[t]
        return c.copy() if np.isfinite(c).all() else None
    return predict


def fuse_tracking(center, q: float, peers, predictor, tau: float = 0.5,
                  query: Tracklet2D = None, t: int = None) -> np.ndarray:
    """Confidence-weighted correction of a 2D center.

    peers: list of (peer tracklet, peer confidence); peers below tau are
    ignored, the rest contribute predictor(peer, query, t).  The result

        g' = q * g + (1 - q) / w * sum_c q_c * pred_c,   w = sum_c q_c

    is a convex combination of g and the passing predictions.  Raises
    FusionError when q < 1 and no passing peer yields a prediction.
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"confidence {q} outside [0, 1]")
    center = np.asarray(center, dtype=np.float64)
    if q >= 1.0:
        return center.copy()
    preds = []
    for tr, qc in peers:
        if qc < tau:
            continue
        p = predictor(tr, query, t)
        if p is not None and np.isfinite(np.asarray(p, dtype=np.float64)).all():
            preds.append((np.asarray(p, dtype=np.float64), float(qc)))
    w = sum(qc for _, qc in preds)
    if w == 0.0:
        raise FusionError(
            f"no peer with confidence >= {tau} usable and own confidence {q} < 1"
        )
    acc = np.zeros_like(center)
    for p, qc in preds:
        acc += qc * p
    return q * center + (1.0 - q) / w * acc


def fuse_tracklets(tracklets: dict, predictor, tau: float = 0.5):
    """Correct every low-confidence frame of per-camera tracklets.

    tracklets: cam_id -> Tracklet2D for one entity.  Frames where fusion
    is impossible keep the raw center and are reported in the returned
    {cam_id: [frames]} flag dict.
    """
    fused = {}
    flagged = {}
    for c, tr in tracklets.items():
        centers = tr.centers.copy()
        n_t = len(centers)
        for t in range(n_t):
            if tr.confidence[t] >= 1.0 and np.isfinite(centers[t]).all():
                continue
            has = np.isfinite(centers[t]).all()
            q = float(tr.confidence[t]) if has else 0.0
            base = centers[t] if has else np.zeros(2)
            peers = [(tr2, float(tr2.confidence[t]))
                     for c2, tr2 in tracklets.items() if c2 != c]
            try:
                centers[t] = fuse_tracking(base, q, peers, predictor, tau,
                                           query=tr, t=t)
            except FusionError:
                flagged.setdefault(c, []).append(t)
        fused[c] = Tracklet2D(entity=tr.entity, camera=c, boxes=tr.boxes.copy(),
                              centers=centers, confidence=tr.confidence.copy())
    return fused, flagged


def _pixel_depths(ys, xs, depth, mask_shape):
    """Candidate depth samples under each pixel's footprint, (k, n).

    The depth map may be at a coarser resolution (the dataset stores it
    at half size); a pixel that straddles sample cells gets every sample
    it touches, which keeps boundary pixels from inheriting a neighbor
    surface's depth.
    """
    s = max(int(round(mask_shape[0] / depth.shape[0])), 1)
    h, w = depth.shape
    rows = (np.minimum(ys // s, h - 1), np.minimum((ys + s - 1) // s, h - 1))
    cols = (np.minimum(xs // s, w - 1), np.minimum((xs + s - 1) // s, w - 1))
    return np.stack([depth[r, c] for r in rows for c in cols])


def refine_mask(mask: np.ndarray, depth: np.ndarray, prev_mean_depth: float,
                deviation: float = 0.5):
    """Keep mask pixels whose depth sits within deviation of the mean.

    mask: (h, w) bool; depth: a depth map at the same or half resolution.
    Returns (refined mask, mean depth over kept pixels).  prev_mean_depth
    NaN seeds from the raw mask (frame 0).  If every pixel is discarded
    the previous statistics carry forward with a warning.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return mask.copy(), prev_mean_depth
    cand = _pixel_depths(ys, xs, depth, mask.shape)
    evidence = np.isfinite(cand).any(axis=0)
    if np.isnan(prev_mean_depth):
        keep = np.ones(len(xs), dtype=bool)
        prim = cand[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
            val = np.where(np.isfinite(prim), prim,
                           np.nanmin(np.where(np.isfinite(cand), cand, np.nan), axis=0))
    else:
        gap = np.where(np.isfinite(cand), np.abs(cand - prev_mean_depth), np.inf)
        best = gap.min(axis=0)
        # the depth veto needs depth: footprints without a finite sample pass
        keep = (best <= deviation) | ~evidence
        val = np.take_along_axis(cand, gap.argmin(axis=0)[None], axis=0)[0]
    if not keep.any():
        warnings.warn("mask refinement discarded every pixel; keeping statistics")
        return np.zeros_like(mask), prev_mean_depth
    refined = np.zeros_like(mask)
    refined[ys[keep], xs[keep]] = True
    stats = val[keep & evidence & np.isfinite(val)]
    mean = float(stats.mean()) if len(stats) else prev_mean_depth
    return refined, mean


@dataclass
class VoxelGrid:
    bounds: np.ndarray      # (2, 3) world AABB
    resolution: tuple       # voxels per axis

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        if np.isscalar(self.resolution):
            self.resolution = (int(self.resolution),) * 3
        if min(self.resolution) < 1:
            raise ValueError("voxel resolution must be >= 1 per axis")

    def centers(self) -> np.ndarray:
        mn, mx = self.bounds
        axes = [mn[a] + (mx[a] - mn[a]) * (np.arange(r) + 0.5) / r
                for a, r in enumerate(self.resolution)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([x.ravel() for x in g], axis=1)

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bounds[1] - self.bounds[0]) / np.asarray(self.resolution)


def space_carve(masks: dict, cameras: dict, grid: VoxelGrid):
    """Intersect per-camera silhouettes on a voxel grid.

    A voxel survives if every camera that sees it (projects it inside the
    image, in front of the camera) lands on a silhouette pixel.  Returns
    (occupancy bool array, AABB (2,3) over the surviving voxels' extent).
    Raises ParseError when nothing survives.
    """
    if len(masks) < 2:
        raise ParseError(f"space carving needs >= 2 cameras, got {len(masks)}")
    pts = grid.centers()
    alive = np.ones(len(pts), dtype=bool)
    for c, mask in masks.items():
        cam = cameras[c]
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        px, z = cam.project(pts[idx])
        u = np.rint(px[:, 0]).astype(np.int64)
        v = np.rint(px[:, 1]).astype(np.int64)
        sees = (z > 0) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
        hit = ~sees  # unseen voxels are not carved by this camera
        hit[sees] = mask[v[sees], u[sees]]
        alive[idx[~hit]] = False
    occ = alive.reshape(grid.resolution)
    if not alive.any():
        raise ParseError("empty hull: no voxel projects inside every silhouette")
    kept = pts[alive]
    vx = grid.voxel_size
    # box over the surviving voxels' faces (centers +- half a voxel),
    # clipped to the grid (the hull is a subset of the grid)
    aabb = np.stack([
        np.maximum(kept.min(axis=0) - vx / 2, grid.bounds[0]),
        np.minimum(kept.max(axis=0) + vx / 2, grid.bounds[1]),
    ])
    return occ, aabb


@dataclass
class ParsedScene:
    boxes: dict    # entity -> (n_t, 2, 3); id 0 is the static background
    labels: dict   # cam_id -> (n_t, h, w) refined label maps
    tracks: dict   # entity -> {cam_id -> Tracklet2D} fused 2D tracks
    flags: dict    # entity -> {cam_id: [frames]} where fusion was impossible


def _scene_point_bounds(ds: Dataset, margin: float = 0.05):
    """World extent of all unprojected depth samples."""
    mins = np.full(3, np.inf)
    maxs = np.full(3, -np.inf)
    for cam in ds.cameras:
        half = cam.scaled(0.5)
        o, d = half.all_rays()
        for t in range(ds.n_t):
            dep = ds.depths[cam.cam_id][t].reshape(-1)
            sel = np.isfinite(dep)
            if not sel.any():
                continue
            pts = o[sel] + dep[sel, None] * d[sel]
            mins = np.minimum(mins, pts.min(axis=0))
            maxs = np.maximum(maxs, pts.max(axis=0))
    if not np.isfinite(mins).all():
        return None
    return np.stack([mins - margin, maxs + margin])


def _candidate_mask(ds: Dataset, cam, track: Tracklet2D, t: int):
    """Foreground pixels inside the tracked 2D box (the raw detector-style
    mask the depth statistics then clean up)."""
    box = track.boxes[t]
    if not np.isfinite(box).all():
        known = [s for s in range(ds.n_t) if np.isfinite(track.boxes[s]).all()]
        if not known or not np.isfinite(track.centers[t]).all():
            return None
        ref = track.boxes[known[-1]]
        half_w = (ref[2] - ref[0]) / 2
        half_h = (ref[3] - ref[1]) / 2
        cx, cy = track.centers[t]
        box = np.array([cx - half_w, cy - half_h, cx + half_w, cy + half_h])
    x0, y0, x1, y1 = np.rint(box).astype(int)
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    x1 = min(x1, cam.width - 1)
    y1 = min(y1, cam.height - 1)
    if x1 < x0 or y1 < y0:
        return None
    out = np.zeros((cam.height, cam.width), dtype=bool)
    out[y0:y1 + 1, x0:x1 + 1] = ds.labels[cam.cam_id][t][y0:y1 + 1, x0:x1 + 1] > 0
    return out


def _dilate(mask: np.ndarray) -> np.ndarray:
    """3x3 binary dilation; carve silhouettes get one conservative pixel."""
    v = mask.copy()
    v[1:, :] |= mask[:-1, :]
    v[:-1, :] |= mask[1:, :]
    out = v.copy()
    out[:, 1:] |= v[:, :-1]
    out[:, :-1] |= v[:, 1:]
    return out


def parse_scene(ds: Dataset, predictor=None, tau: float = 0.5,
                deviation: float = 0.5, grid_resolution: int = 64,
                tracklets: dict = None) -> ParsedScene:
    """Full parsing pipeline: tracks -> refined masks -> carved boxes.

    tracklets optionally overrides the label-derived per-entity tracklets
    ({entity: {cam_id: Tracklet2D}}); tests feed degraded tracks through
    it.  The background (id 0) gets one static box covering the extent of
    every unprojected depth sample.
    """
    if predictor is None:
        predictor = constant_velocity_predictor
    entities = ds.entity_ids()
    cam_map = {c.cam_id: c for c in ds.cameras}

    tracks = {}
    flags = {}
    for e in entities:
        tr = (tracklets or {}).get(e) or tracklets_from_labels(ds, e)
        if any(tr[c].confidence[t] < 1.0 for c in tr for t in range(ds.n_t)):
            tr, flagged = fuse_tracklets(tr, predictor, tau)
        else:
            flagged = {}
        tracks[e] = tr
        flags[e] = flagged

    bg = _scene_point_bounds(ds)
    if bg is None:
        raise ParseError("no finite depth samples; cannot bound the scene")
    grid = VoxelGrid(bounds=bg, resolution=grid_resolution)

    refined_labels = {c.cam_id: np.zeros_like(ds.labels[c.cam_id]) for c in ds.cameras}
    boxes = {0: np.tile(bg, (ds.n_t, 1, 1))}
    mean_depth = {(e, c.cam_id): float("nan") for e in entities for c in ds.cameras}

    for e in entities:
        ent_boxes = np.zeros((ds.n_t, 2, 3))
        for t in range(ds.n_t):
            masks = {}
            for cam in ds.cameras:
                c = cam.cam_id
                cand = _candidate_mask(ds, cam, tracks[e][c], t)
                if cand is None:
                    continue
                refined, mean_depth[(e, c)] = refine_mask(
                    cand, ds.depths[c][t], mean_depth[(e, c)], deviation
                )
                if refined.any():
                    masks[c] = _dilate(refined)
                    refined_labels[c][t][refined] = e
            try:
                _, aabb = space_carve(masks, cam_map, grid)
            except ParseError as err:
                raise ParseError(f"entity {e} frame {t}: {err}") from err
            ent_boxes[t] = aabb
        boxes[e] = ent_boxes

    return ParsedScene(boxes=boxes, labels=refined_labels, tracks=tracks, flags=flags)
