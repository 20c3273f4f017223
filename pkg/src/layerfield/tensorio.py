"""Raw tensor files and PNG helpers.

Tensor format: magic b"RTEN", u8 version, u8 dtype code, u8 rank, then rank
u32 little-endian dims, then the payload little-endian, row-major.  Used for
depth maps (.f32) where PNG quantization would be lossy.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

_MAGIC = b"RTEN"
_VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64, 2: np.uint8, 3: np.int32}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def write_tensor(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array)
    code = _CODES.get(a.dtype)
    if code is None:
        raise ValueError(f"unsupported tensor dtype {a.dtype}")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<BBB", _VERSION, code, a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(7)
        if len(head) != 7 or head[:4] != _MAGIC:
            raise ValueError(f"not a tensor file: {path}")
        version, code, rank = struct.unpack("<BBB", head[4:])
        if version != _VERSION:
            raise ValueError(f"unsupported tensor version {version}")
        if code not in _DTYPES:
            raise ValueError(f"unknown tensor dtype code {code}")
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        dtype = np.dtype(_DTYPES[code]).newbyteorder("<")
        data = np.frombuffer(f.read(), dtype=dtype)
    expected = int(np.prod(dims)) if rank else 1
    if data.size != expected:
        raise ValueError(f"tensor payload truncated in {path}")
    return data.reshape(dims).astype(_DTYPES[code])


# fixed palette for label PNGs; colors only matter for human inspection
_PALETTE = [
    (0, 0, 0), (230, 80, 60), (70, 160, 230), (90, 200, 110), (240, 200, 70),
    (180, 110, 220), (240, 140, 60), (100, 220, 220), (220, 100, 170),
    (150, 150, 150), (120, 90, 60), (60, 110, 60), (60, 60, 140),
    (200, 220, 250), (250, 220, 200), (140, 30, 30),
]


def save_png_rgb(path, img: np.ndarray) -> None:
    """img: (h, w, 3) uint8, or float in [0, 1] which gets rounded."""
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(a, mode="RGB").save(path, format="PNG", compress_level=6)


def load_png_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png_label(path, labels: np.ndarray) -> None:
    """labels: (h, w) small nonnegative ints, stored as a paletted PNG."""
    a = np.asarray(labels)
    if a.min() < 0 or a.max() > 255:
        raise ValueError("label values must fit in uint8")
    im = Image.fromarray(a.astype(np.uint8), mode="P")
    flat = []
    for i in range(256):
        flat.extend(_PALETTE[i % len(_PALETTE)] if i < len(_PALETTE) else (i, i, i))
    im.putpalette(flat)
    im.save(path, format="PNG", compress_level=6)


def load_png_label(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "P":
            raise ValueError(f"label map {path} is not palette-indexed")
        return np.asarray(im, dtype=np.uint8)
