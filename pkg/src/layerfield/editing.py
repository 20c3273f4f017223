"""Space-time edit scripts applied at render time.

An edit script is declarative: per layer an optional world-frame affine,
an optional retiming map (sparse keyframes, nearest-frame), a transparency
scale, a visibility flag, and duplication.  compose_scene turns the script
plus a checkpoint's layers into render-ready layer instances for one
output frame; nothing about the fields themselves changes, so a script is
fully determined by (checkpoint, script, frame).

Composition laws (tested):
  * affine: editing an already-edited layer composes linearly, later edit
    outermost.
  * retime: later retime is applied to the frame index first, so two
    passes equal the composed discrete map.
  * transparency: scales multiply.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cameras import CameraModel, camera_from_dict
from .rendering import LayerInstance


@dataclass
class LayerEdit:
    entity: int
    frames: tuple = None        # (a, b) inclusive output-frame range, None = all
    affine: tuple = None        # (linear (3,3), translation (3,)) world frame
    retime: tuple = None        # ((t_out, t_in), ...) keyframes
    transparency: float = None  # density scale s >= 0
    visible: bool = True
    duplicate_of: int = None    # source layer id for an inserted copy


@dataclass
class EditScript:
    output_frames: int
    edits: list = dc_field(default_factory=list)
    camera_path: list = None    # per-frame pose dicts, len 1 or output_frames
    version: int = 1


# affine constructors; every gesture desugars to a world-frame (lin, trans)

def translation(u) -> tuple:
    return np.eye(3), np.asarray(u, dtype=np.float64)


def scale_about(factors, pivot=(0.0, 0.0, 0.0)) -> tuple:
    f = np.asarray(factors, dtype=np.float64)
    if f.ndim == 0:
        f = np.full(3, float(f))
    lin = np.diag(f)
    pivot = np.asarray(pivot, dtype=np.float64)
    return lin, pivot - lin @ pivot


def rotation_about(axis, degrees: float, pivot=(0.0, 0.0, 0.0)) -> tuple:
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    th = np.deg2rad(degrees)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    lin = np.eye(3) + np.sin(th) * k + (1 - np.cos(th)) * (k @ k)
    pivot = np.asarray(pivot, dtype=np.float64)
    return lin, pivot - lin @ pivot


def compose_affine(outer: tuple, inner: tuple) -> tuple:
    """outer applied after inner: x -> L2 (L1 x + t1) + t2."""
    l2, t2 = outer
    l1, t1 = inner
    return np.asarray(l2) @ np.asarray(l1), np.asarray(l2) @ np.asarray(t1) + np.asarray(t2)


def affine_aabb(lin, trans, box) -> np.ndarray:
    """Axis-aligned bounds of the transformed box corners."""
    mn, mx = np.asarray(box, dtype=np.float64)
    corners = np.stack(np.meshgrid(*zip(mn, mx), indexing="ij"), axis=-1).reshape(-1, 3)
    moved = corners @ np.asarray(lin, dtype=np.float64).T + np.asarray(trans, dtype=np.float64)
    return np.stack([moved.min(axis=0), moved.max(axis=0)])


def eval_retime(keys, t: float) -> int:
    """Nearest trained frame for output frame t under sparse keyframes."""
    ks = sorted((float(a), float(b)) for a, b in keys)
    xs = [a for a, _ in ks]
    vs = [b for _, b in ks]
    return int(np.rint(np.interp(float(t), xs, vs)))


def retime_map(keys, n_out: int, n_t: int) -> np.ndarray:
    """Dense map over the whole output timeline, clamped into [0, n_t-1]."""
    vals = np.array([eval_retime(keys, t) for t in range(n_out)])
    return np.clip(vals, 0, n_t - 1)


def validate_script(script: EditScript, n_t: int, entity_ids) -> list:
    """All violations in a script; empty list means it is usable.  Pure."""
    bad = []
    if script.output_frames < 1:
        bad.append("output_frames must be >= 1")
    if script.version != 1:
        bad.append(f"unknown script version {script.version}")
    if script.camera_path is not None:
        n = len(script.camera_path)
        if n not in (1, script.output_frames):
            bad.append(f"camera_path length {n} is neither 1 nor output_frames")
    known = set(entity_ids)
    for i, e in enumerate(script.edits):
        tag = f"edit {i}"
        if e.duplicate_of is not None:
            if e.duplicate_of not in known:
                bad.append(f"{tag}: duplicate source {e.duplicate_of} unknown")
            if e.entity in known:
                bad.append(f"{tag}: duplicate id {e.entity} already exists")
            known.add(e.entity)
        elif e.entity not in known:
            bad.append(f"{tag}: references unknown layer {e.entity}")
        if e.affine is not None:
            lin = np.asarray(e.affine[0], dtype=np.float64)
            if lin.shape != (3, 3) or abs(np.linalg.det(lin)) <= 1e-9:
                bad.append(f"{tag}: non-invertible affine, layer {e.entity}")
        if e.retime is not None:
            for t_out, t_in in e.retime:
                if not (np.isfinite(t_out) and np.isfinite(t_in)):
                    bad.append(f"{tag}: non-finite retime key")
                elif not (0 <= t_in <= n_t - 1):
                    bad.append(
                        f"{tag}: retime target {t_in} outside [0, {n_t - 1}],"
                        f" would clamp"
                    )
        if e.transparency is not None and not (e.transparency >= 0):
            bad.append(f"{tag}: transparency {e.transparency} < 0")
        if e.frames is not None:
            a, b = e.frames
            if a > b or a < 0 or b > script.output_frames - 1:
                bad.append(f"{tag}: frame range [{a}, {b}] outside output timeline")
    return bad


class _State:
    __slots__ = ("source", "lin", "trans", "chain", "s", "visible")

    def __init__(self, source):
        self.source = source
        self.lin = None
        self.trans = None
        self.chain = []      # retime keyframe sets, script order
        self.s = 1.0
        self.visible = True

    def copy_as(self):
        c = _State(self.source)
        c.lin = None if self.lin is None else self.lin.copy()
        c.trans = None if self.trans is None else self.trans.copy()
        c.chain = list(self.chain)
        c.s = self.s
        c.visible = self.visible
        return c


def _active(e: LayerEdit, t_out: int) -> bool:
    return e.frames is None or (e.frames[0] <= t_out <= e.frames[1])


def compose_scene(fields: dict, boxes: dict, script: EditScript, t_out: int,
                  n_t: int) -> list:
    """Render-ready layer list for output frame t_out.

    Hidden or fully transparent layers are left out entirely, so removal
    and s=0 give the exact same sample set.  Duplicates start from the
    source's state as edited so far, then apply their own fields.
    """
    states = {ent: _State(ent) for ent in fields}
    for e in script.edits:
        if not _active(e, t_out):
            continue
        if e.duplicate_of is not None:
            if e.duplicate_of not in states:
                raise ValueError(f"duplicate source {e.duplicate_of} unknown")
            st = states[e.duplicate_of].copy_as()
            states[e.entity] = st
        else:
            if e.entity not in states:
                raise ValueError(f"edit references unknown layer {e.entity}")
            st = states[e.entity]
        if e.affine is not None:
            lin = np.asarray(e.affine[0], dtype=np.float64)
            trans = np.asarray(e.affine[1], dtype=np.float64)
            if st.lin is None:
                st.lin, st.trans = lin.copy(), trans.copy()
            else:
                st.lin, st.trans = compose_affine((lin, trans), (st.lin, st.trans))
        if e.retime is not None:
            st.chain.append(e.retime)
        if e.transparency is not None:
            st.s *= float(e.transparency)
        st.visible = st.visible and e.visible

    denom = max(n_t - 1, 1)
    n_out = script.output_frames
    out = []
    for lid in sorted(states):
        st = states[lid]
        if not st.visible or st.s == 0.0:
            continue
        # later retimes remap the frame index first (two passes == one)
        t_cur = min(int(t_out), n_t - 1) if not st.chain else int(t_out)
        for j, keys in enumerate(reversed(st.chain)):
            v = eval_retime(keys, t_cur)
            hi = n_t - 1 if j == len(st.chain) - 1 else n_out - 1
            if v < 0 or v > hi:
                warnings.warn(f"retime target {v} clamped into [0, {hi}]")
                v = min(max(v, 0), hi)
            t_cur = v
        t_in = int(t_cur)
        box_src = np.asarray(boxes[st.source][t_in], dtype=np.float64)
        inv_lin = inv_trans = None
        box_world = box_src
        if st.lin is not None:
            box_world = affine_aabb(st.lin, st.trans, box_src)
            inv_lin = np.linalg.inv(st.lin)
            inv_trans = -inv_lin @ st.trans
        out.append(
            LayerInstance(
                key=lid, entity=st.source, field=fields[st.source],
                box_world=box_world, box_source=box_src,
                t_eval=t_in, t01=t_in / denom,
                affine_inv_lin=inv_lin, affine_inv_trans=inv_trans,
                density_scale=st.s,
            )
        )
    return out


def pose_to_camera(pose: dict, like: CameraModel = None, cam_id: int = -1) -> CameraModel:
    """Camera for one camera_path entry.

    Entry forms: {"camera": id} resolved by the caller, or a full camera
    dict, or {"position", "rotation"} inheriting intrinsics from `like`.
    """
    if "fx" in pose:
        return camera_from_dict(pose)
    if like is None:
        raise ValueError("pose without intrinsics needs a reference camera")
    rot = np.asarray(pose["rotation"], dtype=np.float64).reshape(3, 3)
    return CameraModel(
        cam_id=cam_id, width=like.width, height=like.height,
        fx=like.fx, fy=like.fy, cx=like.cx, cy=like.cy,
        rotation=rot, position=np.asarray(pose["position"], dtype=np.float64),
    )


# script (de)serialization; the file format is JSON

def _edit_to_dict(e: LayerEdit) -> dict:
    d = {"entity": int(e.entity), "visible": bool(e.visible)}
    if e.frames is not None:
        d["frames"] = [int(e.frames[0]), int(e.frames[1])]
    if e.affine is not None:
        d["affine"] = {
            "linear": np.asarray(e.affine[0], dtype=np.float64).reshape(9).tolist(),
            "translation": np.asarray(e.affine[1], dtype=np.float64).tolist(),
        }
    if e.retime is not None:
        d["retime"] = {"keys": [[float(a), float(b)] for a, b in e.retime]}
    if e.transparency is not None:
        d["transparency"] = float(e.transparency)
    if e.duplicate_of is not None:
        d["duplicate_of"] = int(e.duplicate_of)
    return d


def _edit_from_dict(d: dict) -> LayerEdit:
    affine = None
    if d.get("affine") is not None:
        affine = (
            np.asarray(d["affine"]["linear"], dtype=np.float64).reshape(3, 3),
            np.asarray(d["affine"]["translation"], dtype=np.float64),
        )
    retime = None
    if d.get("retime") is not None:
        retime = tuple((k[0], k[1]) for k in d["retime"]["keys"])
    frames = tuple(d["frames"]) if d.get("frames") is not None else None
    return LayerEdit(
        entity=int(d["entity"]), frames=frames, affine=affine, retime=retime,
        transparency=d.get("transparency"), visible=bool(d.get("visible", True)),
        duplicate_of=d.get("duplicate_of"),
    )


def script_to_dict(script: EditScript) -> dict:
    return {
        "version": script.version,
        "output_frames": int(script.output_frames),
        "camera_path": script.camera_path,
        "edits": [_edit_to_dict(e) for e in script.edits],
    }


def script_from_dict(d: dict) -> EditScript:
    return EditScript(
        output_frames=int(d["output_frames"]),
        edits=[_edit_from_dict(x) for x in d.get("edits", [])],
        camera_path=d.get("camera_path"),
        version=int(d.get("version", 1)),
    )


def save_script(path, script: EditScript) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(script_to_dict(script), f, indent=1)


def load_script(path) -> EditScript:
    with open(path, encoding="utf-8") as f:
        return script_from_dict(json.load(f))
