"""Checkpoint serialization: round-trips and corruption detection."""

import struct
import zlib

import numpy as np
import pytest

from layerfield.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from layerfield.field import (EncodingConfig, FieldConfig, build_entity_field,
                              config_to_dict)
from layerfield.rendering import RenderConfig, layers_at_frame, render_rays


def _tiny_config(**kw):
    base = dict(
        encoding=EncodingConfig(position=2, direction=1, time=1),
        deform_hidden=(8, 8), deform_skips=(),
        trunk_hidden=(8, 8), trunk_skips=(),
        color_hidden=(8,),
    )
    base.update(kw)
    return FieldConfig(**base)


def _scene(share_stages=False):
    bg_cfg = _tiny_config(use_deform=False, use_time_color=False)
    fields = {
        0: build_entity_field(0, bg_cfg, seed=0, share_stages=share_stages),
        1: build_entity_field(1, _tiny_config(), seed=0, share_stages=share_stages),
    }
    boxes = {
        0: np.tile(np.array([[-3.0, -3.0, -3.0], [3.0, 3.0, 3.0]]), (2, 1, 1)),
        1: np.array([[[-0.5, -0.5, -0.3], [0.5, 0.5, 0.7]],
                     [[-0.4, -0.5, -0.3], [0.6, 0.5, 0.7]]]),
    }
    return fields, boxes


def _params(fields):
    out = []
    for ent in sorted(fields):
        for name in ("coarse", "fine"):
            out.extend(fields[ent].stages[name].param_list())
    return out


def test_round_trip_preserves_everything_bitwise(tmp_path):
    fields, boxes = _scene()
    path = tmp_path / "f.ckpt"
    save_checkpoint(path, fields, boxes, n_t=2, fps=12.5,
                    train_meta={"epochs": 3, "note": "probe"})
    got_fields, got_boxes, meta = load_checkpoint(path)
    assert sorted(got_fields) == [0, 1]
    for a, b in zip(_params(fields), _params(got_fields)):
        assert np.array_equal(a, b)
        assert b.dtype == np.float32
    for ent in boxes:
        assert np.array_equal(got_boxes[ent], boxes[ent])
        assert got_boxes[ent].dtype == np.float64
    for ent in fields:
        assert config_to_dict(got_fields[ent].config) == config_to_dict(fields[ent].config)
    assert got_fields[0].stages["coarse"].deform is None
    assert meta["n_t"] == 2
    assert meta["fps"] == 12.5
    assert meta["train_meta"] == {"epochs": 3, "note": "probe"}


def test_loaded_fields_render_identically(tmp_path):
    fields, boxes = _scene()
    path = tmp_path / "f.ckpt"
    save_checkpoint(path, fields, boxes, n_t=2, fps=10.0)
    got_fields, got_boxes, _ = load_checkpoint(path)
    origins = np.array([[0.0, 0.0, -2.5], [0.2, 0.1, -2.5]])
    dirs = np.tile(np.array([[0.0, 0.0, 1.0]]), (2, 1))
    keys = np.array([3, 8], dtype=np.uint64)
    cfg = RenderConfig(coarse_samples=4, fine_samples=4)
    a = render_rays(origins, dirs, keys, layers_at_frame(fields, boxes, 1, 2), cfg)
    b = render_rays(origins, dirs, keys, layers_at_frame(got_fields, got_boxes, 1, 2), cfg)
    assert np.array_equal(a.rgb, b.rgb)


def test_shared_stages_round_trip(tmp_path):
    fields, boxes = _scene(share_stages=True)
    path = tmp_path / "s.ckpt"
    save_checkpoint(path, fields, boxes, n_t=2, fps=10.0)
    got_fields, _, _ = load_checkpoint(path)
    for ent in got_fields:
        assert got_fields[ent].stages["coarse"] is got_fields[ent].stages["fine"]
    for a, b in zip(_params(fields), _params(got_fields)):
        assert np.array_equal(a, b)


def _saved_bytes(tmp_path):
    fields, boxes = _scene()
    path = tmp_path / "base.ckpt"
    save_checkpoint(path, fields, boxes, n_t=2, fps=10.0)
    return path.read_bytes()


def test_bad_magic_is_rejected(tmp_path):
    raw = bytearray(_saved_bytes(tmp_path))
    raw[0] ^= 0xFF
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(bad)


def test_unsupported_version_is_rejected(tmp_path):
    raw = bytearray(_saved_bytes(tmp_path))
    raw[4:8] = struct.pack("<I", 99)
    bad = tmp_path / "ver.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version 99"):
        load_checkpoint(bad)


def test_payload_corruption_fails_the_checksum(tmp_path):
    raw = bytearray(_saved_bytes(tmp_path))
    raw[len(raw) // 2] ^= 0x01
    bad = tmp_path / "crc.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="crc mismatch"):
        load_checkpoint(bad)


def _with_fresh_crc(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def test_truncated_parameter_blob_is_rejected(tmp_path):
    raw = _saved_bytes(tmp_path)
    # drop the last 8 parameter bytes but keep the checksum valid, so the
    # manifest length check is what has to catch it
    bad = tmp_path / "trunc.ckpt"
    bad.write_bytes(_with_fresh_crc(raw[:-12]))
    with pytest.raises(ValueError, match="truncated parameter blob"):
        load_checkpoint(bad)


def test_trailing_bytes_are_rejected(tmp_path):
    raw = _saved_bytes(tmp_path)
    bad = tmp_path / "trail.ckpt"
    bad.write_bytes(_with_fresh_crc(raw[:-4] + b"\x00" * 8))
    with pytest.raises(ValueError, match="trailing bytes"):
        load_checkpoint(bad)


def test_empty_file_is_rejected(tmp_path):
    bad = tmp_path / "empty.ckpt"
    bad.write_bytes(b"")
    with pytest.raises(ValueError, match="bad magic"):
        load_checkpoint(bad)
