"""Binary file formats and PGM export.

All integers are little-endian. Images ("CIMG"): magic, u32 rows, u32 cols,
u8 flag (0 = real float32, 1 = complex interleaved float32), row-major
payload. Masks ("CMSK"): magic, u32 rows, u32 cols, bits packed row-major
MSB-first. Multi-coil stacks ("CPIM"): magic, u32 coils, then that many
complete CIMG records back to back. The mask format does not persist the
generator kind; loaded masks report 'full' or 'custom'.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionError, ParameterError
from .transforms import SamplingMask

_IMG_MAGIC = b"CIMG"
_MASK_MAGIC = b"CMSK"
_STACK_MAGIC = b"CPIM"


def _image_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DimensionError(f"expected 2-D image, got shape {arr.shape}")
    rows, cols = arr.shape
    header = struct.pack("<4sIIB", _IMG_MAGIC, rows, cols,
                         1 if np.iscomplexobj(arr) else 0)
    if np.iscomplexobj(arr):
        payload = np.empty((rows, cols, 2), dtype="<f4")
        payload[..., 0] = arr.real
        payload[..., 1] = arr.imag
    else:
        payload = arr.astype("<f4")
    return header + payload.tobytes()


def write_image(path, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(_image_bytes(arr))


def _parse_image(buf: bytes, offset: int = 0):
    magic, rows, cols, flag = struct.unpack_from("<4sIIB", buf, offset)
    if magic != _IMG_MAGIC:
        raise ParameterError("not a CIMG record")
    offset += struct.calcsize("<4sIIB")
    count = rows * cols * (2 if flag else 1)
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    offset += 4 * count
    if flag:
        data = data.reshape(rows, cols, 2)
        img = data[..., 0].astype(np.float64) + 1j * data[..., 1].astype(np.float64)
    else:
        img = data.reshape(rows, cols).astype(np.float64)
    return img, offset


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        img, _ = _parse_image(fh.read())
    return img


def write_mask(path, mask: SamplingMask) -> None:
    rows, cols = mask.shape
    header = struct.pack("<4sII", _MASK_MAGIC, rows, cols)
    bits = np.packbits(mask.keep.ravel())
    with open(path, "wb") as fh:
        fh.write(header + bits.tobytes())


def read_mask(path) -> SamplingMask:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, rows, cols = struct.unpack_from("<4sII", buf)
    if magic != _MASK_MAGIC:
        raise ParameterError("not a CMSK file")
    offset = struct.calcsize("<4sII")
    bits = np.frombuffer(buf, dtype=np.uint8, offset=offset)
    keep = np.unpackbits(bits, count=rows * cols).reshape(rows, cols).astype(bool)
    kind = "full" if keep.all() else "custom"
    return SamplingMask(keep, kind)


def write_stack(path, stack) -> None:
    """Write a (coils, rows, cols) array as a CPIM container."""
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise DimensionError(f"expected (coils, rows, cols), got {stack.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", _STACK_MAGIC, stack.shape[0]))
        for coil in stack:
            fh.write(_image_bytes(coil))


def read_stack(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, coils = struct.unpack_from("<4sI", buf)
    if magic != _STACK_MAGIC:
        raise ParameterError("not a CPIM file")
    offset = struct.calcsize("<4sI")
    images = []
    for _ in range(coils):
        img, offset = _parse_image(buf, offset)
        images.append(img)
    return np.stack(images)


def write_pgm(path, arr) -> None:
    """8-bit PGM of the magnitude image, linearly scaled by its maximum."""
    mag = np.abs(np.asarray(arr))
    if mag.ndim != 2:
        raise DimensionError(f"expected 2-D image, got shape {mag.shape}")
    peak = mag.max()
    scaled = np.zeros(mag.shape, dtype=np.uint8) if peak == 0 else \
        np.round(255.0 * mag / peak).astype(np.uint8)
    rows, cols = mag.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
