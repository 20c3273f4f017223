"""Calibrated pinhole cameras and ray generation.

Conventions: x right, y down, z forward in camera space.  ``rotation`` maps
camera coordinates to world coordinates and ``position`` is the camera
center in world space, so a world point p has camera coordinates
R.T @ (p - position).  Pixel (u, v) casts through camera direction
((u - cx)/fx, (v - cy)/fy, 1), so with an identity pose and cx = cy = 0,
pixel (0, 0) looks straight down +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CameraModel:
    cam_id: int
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3,3) camera-to-world
    position: np.ndarray  # (3,) camera center in world

    def validate(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise ValueError(f"camera {self.cam_id}: rotation is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"camera {self.cam_id}: focal lengths must be positive")
        if not (0 <= self.cx <= self.width - 1 and 0 <= self.cy <= self.height - 1):
            raise ValueError(f"camera {self.cam_id}: principal point outside image")

    def rays(self, pixels: np.ndarray):
        """Rays through the given (u, v) pixel positions.

        Returns (origins (n,3), directions (n,3)) with unit directions.
        Rejects pixels outside the image bounds.
        """
        px = np.asarray(pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[1] != 2:
            raise ValueError("pixels must be (n, 2)")
        if (px[:, 0] < 0).any() or (px[:, 0] > self.width - 1).any() \
                or (px[:, 1] < 0).any() or (px[:, 1] > self.height - 1).any():
            raise ValueError("pixel coordinates outside image bounds")
        d_cam = np.stack(
            [
                (px[:, 0] - self.cx) / self.fx,
                (px[:, 1] - self.cy) / self.fy,
                np.ones(len(px)),
            ],
            axis=1,
        )
        d_world = d_cam @ np.asarray(self.rotation, dtype=np.float64).T
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        origins = np.broadcast_to(
            np.asarray(self.position, dtype=np.float64), d_world.shape
        ).copy()
        return origins, d_world

    def all_rays(self):
        """Rays for the full pixel grid, row-major (v outer, u inner)."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        px = np.stack([u.ravel(), v.ravel()], axis=1).astype(np.float64)
        return self.rays(px)

    def project(self, points: np.ndarray):
        """World points to (pixels (n,2), camera-space depth (n,))."""
        p = np.asarray(points, dtype=np.float64)
        r = np.asarray(self.rotation, dtype=np.float64)
        cam = (p - np.asarray(self.position, dtype=np.float64)) @ r
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam[:, 0] / z * self.fx + self.cx
            v = cam[:, 1] / z * self.fy + self.cy
        return np.stack([u, v], axis=1), z

    def scaled(self, factor: float) -> "CameraModel":
        """Same pose, resolution scaled by factor (used for half-res depth)."""
        return CameraModel(
            cam_id=self.cam_id,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            rotation=self.rotation,
            position=self.position,
        )


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "id": cam.cam_id,
        "width": cam.width,
        "height": cam.height,
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "rotation": np.asarray(cam.rotation, dtype=np.float64).ravel().tolist(),
        "position": np.asarray(cam.position, dtype=np.float64).tolist(),
    }


def camera_from_dict(d: dict) -> CameraModel:
    cam = CameraModel(
        cam_id=int(d["id"]),
        width=int(d["width"]),
        height=int(d["height"]),
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
        position=np.array(d["position"], dtype=np.float64),
    )
    cam.validate()
    return cam


def look_at(position, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation looking from position toward target.

    up is the world up direction; image down ends up opposite it, matching
    the y-down camera convention.
    """
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    n = np.linalg.norm(right)
    if n < 1e-9:
        upv = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, upv)
        n = np.linalg.norm(right)
    right /= n
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)
