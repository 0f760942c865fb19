"""Tensor and image file formats.

NT1 is the exact interchange format: magic "NT1\\0", three little-endian
uint32 dims (K, I, J), then K*I*J little-endian float64 samples in
channel-major order. PNG import/export uses the 8-bit /255 convention.

Model files are an NT1-style container: magic "NT1D", a uint32-length JSON
manifest describing each parameter, then one NT1 block per parameter
(flattened to (1, 1, n); true shapes live in the manifest).
"""

import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .errors import ConfigError, DimensionError
from .tensor import ImageTensor

NT1_MAGIC = b"NT1\x00"
MODEL_MAGIC = b"NT1D"

__all__ = [
    "read_nt1",
    "write_nt1",
    "read_png",
    "write_png",
    "read_model",
    "write_model",
    "atomic_write_bytes",
]


def atomic_write_bytes(path, payload: bytes):
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def nt1_bytes(img: ImageTensor) -> bytes:
    header = NT1_MAGIC + struct.pack("<III", img.channels, img.height, img.width)
    return header + np.ascontiguousarray(img.data, dtype="<f8").tobytes()


def parse_nt1(blob: bytes, offset: int = 0):
    """Decode one NT1 record, returning (ImageTensor, next_offset)."""
    if blob[offset : offset + 4] != NT1_MAGIC:
        raise ConfigError("not an NT1 tensor (bad magic)")
    k, i, j = struct.unpack_from("<III", blob, offset + 4)
    count = k * i * j
    start = offset + 16
    end = start + 8 * count
    if end > len(blob):
        raise ConfigError("truncated NT1 tensor")
    data = np.frombuffer(blob[start:end], dtype="<f8").reshape(k, i, j)
    return ImageTensor(data.astype(np.float64)), end


def write_nt1(img: ImageTensor, path):
    atomic_write_bytes(path, nt1_bytes(img))


def read_nt1(path) -> ImageTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    img, end = parse_nt1(blob)
    if end != len(blob):
        raise ConfigError("trailing bytes after NT1 tensor")
    return img


def read_png(path) -> ImageTensor:
    """Load an 8-bit grayscale or RGB PNG as samples in [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        return ImageTensor(arr)
    return ImageTensor(np.moveaxis(arr, 2, 0))


def write_png(img: ImageTensor, path, scale255: bool = True):
    """Save as 8-bit PNG; values are scaled by 255 and rounded by default."""
    data = img.data
    if scale255:
        data = np.clip(np.rint(data * 255.0), 0, 255)
    else:
        data = np.clip(np.rint(data), 0, 255)
    data = data.astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(data[0], mode="L")
    elif img.channels == 3:
        pil = Image.fromarray(np.moveaxis(data, 0, 2), mode="RGB")
    else:
        raise DimensionError(f"PNG export needs 1 or 3 channels, got {img.channels}")
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        pil.save(tmp, format="PNG")
        os.replace(tmp, os.fspath(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_image(path) -> ImageTensor:
    """Dispatch on extension: .nt1 for exact tensors, anything else as PNG."""
    if os.fspath(path).lower().endswith(".nt1"):
        return read_nt1(path)
    return read_png(path)


def model_bytes(named_params, meta=None) -> bytes:
    """Serialize an ordered {name: ndarray} mapping plus metadata."""
    manifest = {
        "format": "sasr-model-v1",
        "meta": meta or {},
        "tensors": [
            {"name": name, "shape": list(np.asarray(arr).shape)}
            for name, arr in named_params.items()
        ],
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<I", len(head)), head]
    for _, arr in named_params.items():
        flat = np.ascontiguousarray(arr, dtype=np.float64).reshape(1, 1, -1)
        parts.append(nt1_bytes(ImageTensor(flat)))
    return b"".join(parts)


def write_model(named_params, path, meta=None):
    atomic_write_bytes(path, model_bytes(named_params, meta))


def read_model(path):
    """Return ({name: ndarray}, meta) from a model container file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ConfigError("not a model container (bad magic)")
    (head_len,) = struct.unpack_from("<I", blob, 4)
    manifest = json.loads(blob[8 : 8 + head_len].decode("utf-8"))
    if manifest.get("format") != "sasr-model-v1":
        raise ConfigError("unsupported model container format")
    offset = 8 + head_len
    params = {}
    for entry in manifest["tensors"]:
        tensor, offset = parse_nt1(blob, offset)
        params[entry["name"]] = tensor.data.reshape(entry["shape"]).copy()
    if offset != len(blob):
        raise ConfigError("trailing bytes after model container")
    return params, manifest.get("meta", {})
