"""Analytic multi-view scene synthesis.

Scenes are unions of rigid primitives (boxes, spheres) with known per-frame
poses.  Rendering is exact ray tracing, so frames, label maps, half-res depth
maps, and per-frame tight AABBs are mutually consistent by construction and
serve as oracles for the rest of the pipeline.

Primitives are opaque by default (nearest hit wins).  A finite density turns
a primitive into a homogeneous emissive volume, integrated in closed form,
which the quadrature tests compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cameras import CameraModel, look_at
from .data import Dataset


@dataclass
class Primitive:
    entity: int
    kind: str                 # "box" or "sphere"
    size: np.ndarray          # box half extents (3,); sphere [r, r, r]
    color: np.ndarray         # base RGB at local coord -1 on the gradient axis
    color_to: np.ndarray = None   # RGB at +1; None for constant color
    gradient_axis: int = 0
    density: float = None     # None = opaque surface
    positions: np.ndarray = None  # (n_t, 3) centers
    rotations: np.ndarray = None  # (n_t, 3, 3) local-to-world
    brightness: np.ndarray = None  # (n_t,) multiplier on the color

    def at(self, t: int):
        return self.positions[t], self.rotations[t], self.brightness[t]


@dataclass
class SceneSpec:
    name: str
    n_t: int
    fps: float
    width: int
    height: int
    cameras: list
    primitives: list
    ambient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    box_margin: float = 0.02
    box_slop: float = 0.0


def linear_path(p0, p1, n_t: int) -> np.ndarray:
    a = np.linspace(0.0, 1.0, n_t)[:, None]
    return (1 - a) * np.asarray(p0, float) + a * np.asarray(p1, float)


def static_path(p, n_t: int) -> np.ndarray:
    return np.tile(np.asarray(p, float), (n_t, 1))


def axis_rotations(axis, degrees_total: float, n_t: int) -> np.ndarray:
    """Rigid spin about a fixed axis, degrees_total over the whole sequence."""
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    out = np.empty((n_t, 3, 3))
    for t in range(n_t):
        ang = math.radians(degrees_total) * (t / max(n_t - 1, 1))
        c, s = math.cos(ang), math.sin(ang)
        x, y, z = axis
        k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
        out[t] = np.eye(3) + s * k + (1 - c) * (k @ k)
    return out


def identity_rotations(n_t: int) -> np.ndarray:
    return np.tile(np.eye(3), (n_t, 1, 1))


def triangle_pulse(lo: float, hi: float, n_t: int) -> np.ndarray:
    """Ramp lo -> hi -> lo across the sequence (brightness schedules)."""
    t = np.linspace(0.0, 1.0, n_t)
    return lo + (hi - lo) * (1.0 - np.abs(2 * t - 1.0))


def make_primitive(entity, kind, size, color, positions, rotations=None,
                   color_to=None, gradient_axis=0, density=None, brightness=None):
    n_t = len(positions)
    size = np.asarray(size, float) if kind == "box" else np.full(3, float(size))
    return Primitive(
        entity=entity,
        kind=kind,
        size=size,
        color=np.asarray(color, float),
        color_to=None if color_to is None else np.asarray(color_to, float),
        gradient_axis=gradient_axis,
        density=density,
        positions=np.asarray(positions, float),
        rotations=identity_rotations(n_t) if rotations is None else np.asarray(rotations, float),
        brightness=np.ones(n_t) if brightness is None else np.asarray(brightness, float),
    )


def world_aabb(prim: Primitive, t: int) -> np.ndarray:
    """Tight world AABB of the primitive at frame t."""
    c, r, _ = prim.at(t)
    if prim.kind == "sphere":
        ext = np.full(3, prim.size[0])
    else:
        ext = np.abs(r) @ prim.size
    return np.stack([c - ext, c + ext])


def _intersect_local(prim: Primitive, o: np.ndarray, d: np.ndarray):
    """Entry/exit distances for rays already in the primitive's local frame.

    Returns (t0, t1, hit).  Rays starting inside report t0 clamped to 0.
    """
    if prim.kind == "sphere":
        rr = prim.size[0] ** 2
        b = np.sum(o * d, axis=1)
        c = np.sum(o * o, axis=1) - rr
        disc = b * b - c
        ok = disc >= 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0, t1 = -b - sq, -b + sq
    else:
        h = prim.size
        d_safe = np.where(np.abs(d) < 1e-12, 1e-12, d)
        inv = 1.0 / d_safe
        ta = (-h - o) * inv
        tb = (h - o) * inv
        t0 = np.minimum(ta, tb).max(axis=1)
        t1 = np.maximum(ta, tb).min(axis=1)
        ok = t1 >= t0
    t0c = np.maximum(t0, 0.0)
    hit = ok & (t1 > 1e-9) & (t1 > t0c)
    return t0c, t1, hit


def _local_rays(prim, t, origins, dirs):
    c, r, _ = prim.at(t)
    o = (origins - c) @ r
    d = dirs @ r
    return o, d


def _surface_color(prim: Primitive, t: int, points_local: np.ndarray) -> np.ndarray:
    bright = prim.brightness[t]
    if prim.color_to is None:
        col = np.tile(prim.color, (len(points_local), 1))
    else:
        ax = prim.gradient_axis
        denom = prim.size[ax]
        a = np.clip((points_local[:, ax] / denom + 1.0) * 0.5, 0.0, 1.0)[:, None]
        col = (1 - a) * prim.color + a * prim.color_to
    return np.clip(col * bright, 0.0, 1.0)


def trace_rays(spec: SceneSpec, t: int, origins: np.ndarray, dirs: np.ndarray):
    """Trace rays against the scene at frame t.

    Returns (color (n,3) float, label (n,) uint8, depth (n,) float with +inf
    misses).  Opaque primitives use nearest-hit shading; finite-density
    primitives are integrated in closed form per ray.
    """
    n = len(origins)
    opaque = [p for p in spec.primitives if p.density is None]
    volumetric = [p for p in spec.primitives if p.density is not None]

    entry = np.full((n, max(len(opaque), 1)), np.inf)
    for j, prim in enumerate(opaque):
        o, d = _local_rays(prim, t, origins, dirs)
        t0, _, hit = _intersect_local(prim, o, d)
        entry[:, j] = np.where(hit, t0, np.inf)
    nearest = entry.argmin(axis=1) if opaque else np.zeros(n, dtype=int)
    opaque_t = entry[np.arange(n), nearest] if opaque else np.full(n, np.inf)

    color = np.tile(spec.ambient, (n, 1)).astype(np.float64)
    label = np.zeros(n, dtype=np.uint8)
    depth = np.full(n, np.inf)

    if opaque:
        hit_mask = np.isfinite(opaque_t)
        for j, prim in enumerate(opaque):
            sel = hit_mask & (nearest == j)
            if not sel.any():
                continue
            o, d = _local_rays(prim, t, origins[sel], dirs[sel])
            pts = o + opaque_t[sel][:, None] * d
            color[sel] = _surface_color(prim, t, pts)
            label[sel] = prim.entity
            depth[sel] = opaque_t[sel]

    if volumetric:
        _integrate_volumes(spec, t, origins, dirs, volumetric, opaque_t, color, label, depth)
    return color, label, depth


def _integrate_volumes(spec, t, origins, dirs, volumetric, opaque_t, color, label, depth):
    """Closed-form emission-absorption through homogeneous intervals.

    Slow per-ray loop; only used by small oracle scenes, never by the
    opaque presets that generate training data.
    """
    n = len(origins)
    ivals = []
    for prim in volumetric:
        o, d = _local_rays(prim, t, origins, dirs)
        t0, t1, hit = _intersect_local(prim, o, d)
        ivals.append((t0, t1, hit, prim, o, d))
    for i in range(n):
        stop = opaque_t[i]
        spans = []
        for t0, t1, hit, prim, o, d in ivals:
            if hit[i] and t0[i] < stop:
                spans.append((t0[i], min(t1[i], stop), prim, o[i], d[i]))
        if not spans:
            continue
        events = sorted({s for a, b, *_ in spans for s in (a, b)})
        trans = 1.0
        acc = np.zeros(3)
        contrib = {}
        for a, b in zip(events[:-1], events[1:]):
            seg = b - a
            if seg <= 0:
                continue
            mid = 0.5 * (a + b)
            sig = 0.0
            emit = np.zeros(3)
            for a2, b2, prim, o_l, d_l in spans:
                if a2 <= mid < b2:
                    pt = o_l + mid * d_l
                    c_here = _surface_color(prim, t, pt[None, :])[0]
                    sig += prim.density
                    emit += prim.density * c_here
            if sig <= 0:
                continue
            w = trans * (1.0 - math.exp(-sig * seg))
            acc += w * (emit / sig)
            for a2, b2, prim, _, _ in spans:
                if a2 <= mid < b2:
                    contrib[prim.entity] = contrib.get(prim.entity, 0.0) + w * prim.density / sig
            trans *= math.exp(-sig * seg)
        tail = color[i].copy() if np.isfinite(stop) else spec.ambient
        color[i] = acc + trans * tail
        first = min(a for a, *_ in spans)
        if first < depth[i]:
            depth[i] = first
        if contrib:
            best, share = max(contrib.items(), key=lambda kv: kv[1])
            if share > (1.0 - sum(contrib.values())):
                label[i] = best


def synthesize_scene(spec: SceneSpec, seed: int = 0) -> Dataset:
    """Render the scene from every camera at every frame.

    seed is accepted for interface stability; synthesis is deterministic.
    """
    del seed
    images, labels, depths = {}, {}, {}
    for cam in spec.cameras:
        half = cam.scaled(0.5)
        o_full, d_full = cam.all_rays()
        o_half, d_half = half.all_rays()
        imgs, labs, deps = [], [], []
        for t in range(spec.n_t):
            col, lab, _ = trace_rays(spec, t, o_full, d_full)
            _, _, dep = trace_rays(spec, t, o_half, d_half)
            imgs.append(
                np.clip(np.rint(col.reshape(cam.height, cam.width, 3) * 255), 0, 255).astype(np.uint8)
            )
            labs.append(lab.reshape(cam.height, cam.width))
            deps.append(dep.reshape(half.height, half.width).astype(np.float32))
        images[cam.cam_id] = np.stack(imgs)
        labels[cam.cam_id] = np.stack(labs)
        depths[cam.cam_id] = np.stack(deps)

    n_i = max((p.entity for p in spec.primitives), default=0)
    boxes = {}
    for prim in spec.primitives:
        track = np.stack([world_aabb(prim, t) for t in range(spec.n_t)])
        if prim.entity in boxes:
            boxes[prim.entity][:, 0] = np.minimum(boxes[prim.entity][:, 0], track[:, 0])
            boxes[prim.entity][:, 1] = np.maximum(boxes[prim.entity][:, 1], track[:, 1])
        else:
            boxes[prim.entity] = track
    for ent in boxes:
        boxes[ent][:, 0] -= spec.box_margin
        boxes[ent][:, 1] += spec.box_margin
        if ent > 0 and spec.box_slop > 0:
            # deterministic tracker lag: wobble the box track, not the
            # geometry, so the entity moves within its (still containing)
            # box instead of being cancelled by it
            ph = 2 * np.pi * ent * np.array([0.13, 0.47, 0.81])
            arg = 1.5 * np.pi * np.arange(spec.n_t)[:, None] / max(spec.n_t - 1, 1)
            boxes[ent] += (spec.box_slop * np.sin(arg + ph))[:, None, :]
    if 0 in boxes:
        # background box is static: union over time
        bg = boxes[0]
        bg[:, 0] = bg[:, 0].min(axis=0)
        bg[:, 1] = bg[:, 1].max(axis=0)

    ds = Dataset(
        cameras=spec.cameras,
        n_t=spec.n_t,
        n_i=n_i,
        fps=spec.fps,
        images=images,
        labels=labels,
        depths=depths,
        boxes=boxes,
        scene={"name": spec.name, "n_t": spec.n_t, "n_i": n_i},
    )
    ds.validate()
    return ds


def arc_cameras(count, radius, span_deg, target, height, width, height_px, focal, start_id=0):
    """Cameras on a horizontal arc facing the target, ids start_id..start_id+count-1."""
    cams = []
    target = np.asarray(target, float)
    if count == 1:
        angles = [0.0]
    else:
        angles = np.linspace(-span_deg / 2, span_deg / 2, count)
    for k, ang in enumerate(angles):
        a = math.radians(ang)
        pos = target + np.array([radius * math.sin(a), height, -radius * math.cos(a)])
        rot = look_at(pos, target)
        cams.append(
            CameraModel(
                cam_id=start_id + k,
                width=width,
                height=height_px,
                fx=focal,
                fy=focal,
                cx=(width - 1) / 2,
                cy=(height_px - 1) / 2,
                rotation=rot,
                position=pos,
            )
        )
    return cams


def desk_scene(n_train_cams=8, n_frames=8, size=64, with_holdout=True, name="desk",
               box_margin=0.25, box_slop=0.1) -> SceneSpec:
    """The standard tabletop test scene.

    A static gradient wall (background, entity 0), a spinning gradient box
    (entity 1) and a translating box with a brightness pulse (entity 2).
    Camera ids 0..n_train_cams-1 are the training arc; when with_holdout is
    set one extra camera (id n_train_cams) sits between the middle two.

    box_margin and box_slop keep the per-frame entity boxes deliberately
    loose and lagged, the way tracked boxes on real footage are: fields are
    evaluated in box-normalized coordinates, and a box that tracked the
    entity perfectly would cancel its motion, so the wobble guarantees real
    residual motion inside each box for the deformation model to absorb.
    box_slop must stay below box_margin to keep the entity inside its box.
    """
    n_t = n_frames
    target = np.array([0.0, 0.0, 0.5])
    focal = size * 1.4
    cams = arc_cameras(
        n_train_cams, radius=4.7, span_deg=76.0, target=target,
        height=0.25, width=size, height_px=size, focal=focal,
    )
    if with_holdout:
        a = math.radians(76.0 / (n_train_cams - 1) * 0.5) if n_train_cams > 1 else 0.12
        pos = target + np.array([4.7 * math.sin(a), 0.32, -4.7 * math.cos(a)])
        cams.append(
            CameraModel(
                cam_id=n_train_cams, width=size, height=size,
                fx=focal, fy=focal, cx=(size - 1) / 2, cy=(size - 1) / 2,
                rotation=look_at(pos, target), position=pos,
            )
        )

    wall = make_primitive(
        entity=0, kind="box", size=(2.4, 1.6, 0.06),
        color=(0.13, 0.17, 0.32), color_to=(0.55, 0.62, 0.78), gradient_axis=0,
        positions=static_path((0.0, 0.0, 2.1), n_t),
    )
    spinner = make_primitive(
        entity=1, kind="box", size=(0.38, 0.26, 0.3),
        color=(0.82, 0.16, 0.1), color_to=(0.95, 0.85, 0.2), gradient_axis=0,
        positions=linear_path((-0.85, -0.28, 0.45), (0.45, 0.02, 0.7), n_t),
        rotations=axis_rotations((0.0, 1.0, 0.0), 110.0, n_t),
    )
    pulser = make_primitive(
        entity=2, kind="box", size=(0.3, 0.34, 0.24),
        color=(0.1, 0.6, 0.25), color_to=(0.2, 0.75, 0.8), gradient_axis=1,
        positions=linear_path((0.95, 0.38, 0.95), (-0.35, 0.1, 0.7), n_t),
        brightness=triangle_pulse(0.35, 1.2, n_t),  # peak keeps colors below 1
    )
    return SceneSpec(
        name=name, n_t=n_t, fps=12.0, width=size, height=size,
        cameras=cams, primitives=[wall, spinner, pulser],
        box_margin=box_margin, box_slop=box_slop,
    )


def carve_scene(n_cams=12, size=64) -> SceneSpec:
    """A lone sphere orbited by a full ring of cameras, for hull tests."""
    n_t = 2
    sphere = make_primitive(
        entity=1, kind="sphere", size=0.5, color=(0.8, 0.3, 0.3),
        positions=static_path((0.0, 0.0, 0.0), n_t),
    )
    cams = []
    focal = size * 1.2
    for k in range(n_cams):
        a = 2 * math.pi * k / n_cams
        pos = np.array([3.0 * math.sin(a), 0.4 if k % 2 else -0.3, -3.0 * math.cos(a)])
        cams.append(
            CameraModel(
                cam_id=k, width=size, height=size, fx=focal, fy=focal,
                cx=(size - 1) / 2, cy=(size - 1) / 2,
                rotation=look_at(pos, (0.0, 0.0, 0.0)), position=pos,
            )
        )
    return SceneSpec(
        name="carve", n_t=n_t, fps=10.0, width=size, height=size,
        cameras=cams, primitives=[sphere],
    )


def crossing_scene(size=72, n_t=9) -> SceneSpec:
    """Two boxes at different depths whose projections cross mid-sequence."""
    target = np.array([0.0, 0.0, 0.6])
    focal = size * 1.3
    cams = arc_cameras(3, radius=4.0, span_deg=30.0, target=target,
                       height=0.0, width=size, height_px=size, focal=focal)
    near_box = make_primitive(
        entity=1, kind="box", size=(0.3, 0.3, 0.2),
        color=(0.85, 0.25, 0.2),
        positions=linear_path((-0.8, 0.0, 0.2), (0.8, 0.0, 0.2), n_t),
    )
    far_box = make_primitive(
        entity=2, kind="box", size=(0.42, 0.42, 0.2),
        color=(0.2, 0.4, 0.85),
        positions=linear_path((0.9, 0.05, 1.4), (-0.9, 0.05, 1.4), n_t),
    )
    return SceneSpec(
        name="crossing", n_t=n_t, fps=10.0, width=size, height=size,
        cameras=cams, primitives=[near_box, far_box],
    )
