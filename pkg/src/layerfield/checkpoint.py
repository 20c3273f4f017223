"""Versioned binary checkpoints.

Layout: magic b"LFCK", u32 version, u32 header length, header JSON (scene
metadata, per-entity field configs and box tracks, tensor manifest), then
raw float32 little-endian parameter blobs in manifest order, then a CRC32
of everything before it.  Loading validates magic, version, sizes, and CRC.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .field import (EntityField, StageNets, build_stage, config_from_dict,
                    config_to_dict)

MAGIC = b"LFCK"
VERSION = 1


def _stage_order(ef: EntityField):
    yield "coarse", ef.stages["coarse"]
    if not ef.shared_stages:
        yield "fine", ef.stages["fine"]


def save_checkpoint(path, fields: dict, boxes: dict, n_t: int, fps: float,
                    train_meta: dict = None) -> None:
    entities = []
    blobs = []
    for ent in sorted(fields):
        ef = fields[ent]
        entities.append({
            "id": ent,
            "config": config_to_dict(ef.config),
            "shared_stages": ef.shared_stages,
            "box_track": np.asarray(boxes[ent], dtype=np.float64).tolist(),
        })
        for _, nets in _stage_order(ef):
            for p in nets.param_list():
                blobs.append(np.ascontiguousarray(p, dtype="<f4"))
    header = {
        "format": "layerfield-checkpoint",
        "version": VERSION,
        "n_t": int(n_t),
        "fps": float(fps),
        "train_meta": train_meta or {},
        "entities": entities,
    }
    hj = json.dumps(header).encode()
    body = bytearray()
    body += MAGIC
    body += struct.pack("<II", VERSION, len(hj))
    body += hj
    for b in blobs:
        body += b.tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    body += struct.pack("<I", crc)
    with open(path, "wb") as f:
        f.write(bytes(body))


def load_checkpoint(path):
    """Returns (fields dict, boxes dict, meta dict)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ValueError(f"corrupt checkpoint: bad magic in {path}")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    crc_stored = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc_stored:
        raise ValueError("corrupt checkpoint: crc mismatch")
    header = json.loads(raw[12:12 + hlen].decode())
    off = 12 + hlen
    fields = {}
    boxes = {}
    for ent_rec in header["entities"]:
        ent = int(ent_rec["id"])
        cfg = config_from_dict(ent_rec["config"])
        stages = {}
        names = ["coarse"] if ent_rec["shared_stages"] else ["coarse", "fine"]
        for name in names:
            nets = build_stage(cfg, seed=0)
            for p in nets.param_list():
                nbytes = p.size * 4
                if off + nbytes > len(raw) - 4:
                    raise ValueError("corrupt checkpoint: truncated parameter blob")
                p[:] = np.frombuffer(raw[off:off + nbytes], dtype="<f4").reshape(p.shape)
                off += nbytes
            stages[name] = nets
        if ent_rec["shared_stages"]:
            stages["fine"] = stages["coarse"]
        fields[ent] = EntityField(entity_id=ent, config=cfg, stages=stages)
        boxes[ent] = np.array(ent_rec["box_track"], dtype=np.float64)
    if off != len(raw) - 4:
        raise ValueError("corrupt checkpoint: trailing bytes after parameters")
    meta = {
        "n_t": int(header["n_t"]),
        "fps": float(header["fps"]),
        "train_meta": header.get("train_meta", {}),
    }
    return fields, boxes, meta
