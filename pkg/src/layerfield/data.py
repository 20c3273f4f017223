"""Multi-view video dataset container and on-disk layout.

Layout under a dataset root:

    meta.json                  n_t, n_i, fps
    cameras.json               list of camera dicts
    boxes.json                 per-entity per-frame AABB corners; id 0 is the
                               static background extent
    frames/cam_<c>/<t>.png     RGB frames
    labels/cam_<c>/<t>.png     entity label maps, palette PNG, 0 = background
    depth/cam_<c>/<t>.f32      half-resolution depth along the ray, raw tensor
    scene.json                 optional synthetic scene descriptor
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .cameras import CameraModel, camera_from_dict, camera_to_dict
from . import tensorio


@dataclass
class Dataset:
    cameras: list
    n_t: int
    n_i: int
    fps: float
    images: dict   # cam_id -> (n_t, h, w, 3) uint8
    labels: dict   # cam_id -> (n_t, h, w) uint8
    depths: dict   # cam_id -> (n_t, h//2, w//2) float32, +inf where no hit
    boxes: dict    # entity id -> (n_t, 2, 3) float64 AABB (min, max) corners
    scene: dict = field(default_factory=dict)

    def camera(self, cam_id: int) -> CameraModel:
        for c in self.cameras:
            if c.cam_id == cam_id:
                return c
        raise KeyError(f"no camera with id {cam_id}")

    def entity_ids(self) -> list:
        return sorted(i for i in self.boxes if i != 0)

    def validate(self) -> None:
        for cam in self.cameras:
            cam.validate()
            for name, store in (("frames", self.images), ("labels", self.labels)):
                if cam.cam_id not in store:
                    raise ValueError(f"camera {cam.cam_id} missing {name}")
                if store[cam.cam_id].shape[0] != self.n_t:
                    raise ValueError(
                        f"frame count mismatch for camera {cam.cam_id} {name}: "
                        f"{store[cam.cam_id].shape[0]} != {self.n_t}"
                    )
            lab = self.labels[cam.cam_id]
            if lab.max(initial=0) > self.n_i:
                raise ValueError(
                    f"label map for camera {cam.cam_id} references undeclared "
                    f"entity {int(lab.max())} (n_i={self.n_i})"
                )
        for ent, track in self.boxes.items():
            track = np.asarray(track)
            if track.shape != (self.n_t, 2, 3):
                raise ValueError(f"box track for entity {ent} has shape {track.shape}")
            if (track[:, 0] > track[:, 1]).any():
                raise ValueError(f"box track for entity {ent} has min > max")
        for ent in range(1, self.n_i + 1):
            if ent not in self.boxes:
                raise ValueError(f"missing box track for entity {ent}")


def save_dataset(ds: Dataset, root) -> None:
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "meta.json"), "w") as f:
        json.dump({"n_t": ds.n_t, "n_i": ds.n_i, "fps": ds.fps}, f, indent=1)
    with open(os.path.join(root, "cameras.json"), "w") as f:
        json.dump([camera_to_dict(c) for c in ds.cameras], f, indent=1)
    with open(os.path.join(root, "boxes.json"), "w") as f:
        json.dump(
            {str(k): np.asarray(v, dtype=np.float64).tolist() for k, v in ds.boxes.items()},
            f,
        )
    if ds.scene:
        with open(os.path.join(root, "scene.json"), "w") as f:
            json.dump(ds.scene, f, indent=1)
    for cam in ds.cameras:
        c = cam.cam_id
        fdir = os.path.join(root, "frames", f"cam_{c}")
        ldir = os.path.join(root, "labels", f"cam_{c}")
        ddir = os.path.join(root, "depth", f"cam_{c}")
        for d in (fdir, ldir, ddir):
            os.makedirs(d, exist_ok=True)
        for t in range(ds.n_t):
            tensorio.save_png_rgb(os.path.join(fdir, f"{t}.png"), ds.images[c][t])
            tensorio.save_png_label(os.path.join(ldir, f"{t}.png"), ds.labels[c][t])
            tensorio.write_tensor(os.path.join(ddir, f"{t}.f32"), ds.depths[c][t])


def load_dataset(root) -> Dataset:
    meta_path = os.path.join(root, "meta.json")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(f"not a dataset directory (no meta.json): {root}")
    with open(meta_path) as f:
        meta = json.load(f)
    with open(os.path.join(root, "cameras.json")) as f:
        cameras = [camera_from_dict(d) for d in json.load(f)]
    with open(os.path.join(root, "boxes.json")) as f:
        boxes = {int(k): np.array(v, dtype=np.float64) for k, v in json.load(f).items()}
    scene = {}
    scene_path = os.path.join(root, "scene.json")
    if os.path.isfile(scene_path):
        with open(scene_path) as f:
            scene = json.load(f)
    n_t = int(meta["n_t"])
    images, labels, depths = {}, {}, {}
    for cam in cameras:
        c = cam.cam_id
        imgs, labs, deps = [], [], []
        for t in range(n_t):
            fp = os.path.join(root, "frames", f"cam_{c}", f"{t}.png")
            if not os.path.isfile(fp):
                raise FileNotFoundError(
                    f"frame count mismatch: missing frame {t} for camera {c}"
                )
            imgs.append(tensorio.load_png_rgb(fp))
            labs.append(tensorio.load_png_label(os.path.join(root, "labels", f"cam_{c}", f"{t}.png")))
            deps.append(tensorio.read_tensor(os.path.join(root, "depth", f"cam_{c}", f"{t}.f32")))
        images[c] = np.stack(imgs)
        labels[c] = np.stack(labs)
        depths[c] = np.stack(deps)
    ds = Dataset(
        cameras=cameras,
        n_t=n_t,
        n_i=int(meta["n_i"]),
        fps=float(meta["fps"]),
        images=images,
        labels=labels,
        depths=depths,
        boxes=boxes,
        scene=scene,
    )
    ds.validate()
    return ds


def load_cameras(root) -> list:
    """Just the camera models of a dataset directory (no frame data)."""
    path = os.path.join(root, "cameras.json")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"not a dataset directory (no cameras.json): {root}")
    with open(path) as f:
        return [camera_from_dict(d) for d in json.load(f)]


def scene_bounds(ds: Dataset) -> np.ndarray:
    """Union AABB over all entity tracks and the background box."""
    mins = np.full(3, np.inf)
    maxs = np.full(3, -np.inf)
    for track in ds.boxes.values():
        t = np.asarray(track)
        mins = np.minimum(mins, t[:, 0].min(axis=0))
        maxs = np.maximum(maxs, t[:, 1].max(axis=0))
    return np.stack([mins, maxs])
