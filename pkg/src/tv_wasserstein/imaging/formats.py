"""
Grayscale image I/O: Netpbm PGM (P2 ASCII / P5 binary) and the lossless
"TVWF" float container.

PGM
---
- maxval 255 (one byte per sample) or 65535 (two bytes, big-endian) only.
- Reading maps a sample s to s / maxval; writing clamps to [0, 1] and rounds
  to the nearest level.
- Header comments ("#" to end of line) are accepted anywhere whitespace is.

TVWF
----
16-byte little-endian header followed by float64 samples in row-major order:

    offset 0   4 bytes  magic b"TVWF"
    offset 4   u32      width
    offset 8   u32      height
    offset 12  u32      reserved (0)
    offset 16  float64 * width * height

Parse failures raise ImageFormatError with the byte offset where reading
stopped.

Conventions: ImageBuffer.pixels has shape (height, width); converting to a
ScalarField puts rows on the first grid axis (nx = height, ny = width).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..grid_ops import Grid, ScalarField

__all__ = [
    "ImageBuffer",
    "ImageFormatError",
    "TVWF_MAGIC",
    "read_image",
    "write_image",
    "read_field",
    "write_field",
    "preview_buffer",
]

PathLike = Union[str, Path]

TVWF_MAGIC = b"TVWF"
_TVWF_HEADER = struct.Struct("<4sIII")
_SUPPORTED_MAXVAL = (255, 65535)
_P2_VALUES_PER_LINE = 16


class ImageFormatError(ValueError):
    """Malformed or unsupported image file."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """
    Grayscale image.

    Attributes:
        width, height: Pixel dimensions.
        pixels: float64 array of shape (height, width); nominally in [0, 1],
            clamped only when written to PGM.
    """

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.shape != (self.height, self.width):
            raise ValueError(
                f"pixels shape {arr.shape} does not match {self.height}x{self.width}"
            )
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_field(cls, u: ScalarField) -> "ImageBuffer":
        return cls(width=u.grid.ny, height=u.grid.nx, pixels=u.values.copy())

    def to_field(self, h: float = 1.0) -> ScalarField:
        return ScalarField(Grid(nx=self.height, ny=self.width, h=h), self.pixels.copy())


# -----------------
# PGM parsing
# -----------------


def _skip_space(data: bytes, pos: int) -> int:
    while pos < len(data):
        c = data[pos : pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, what: str) -> Tuple[int, int]:
    pos = _skip_space(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        if start >= len(data):
            raise ImageFormatError(f"unexpected end of file reading {what}", start)
        raise ImageFormatError(f"expected an integer for {what}", start)
    return int(data[start:pos]), pos


def _parse_pgm(data: bytes) -> ImageBuffer:
    magic = data[:2]
    pos = 2
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval, pos = _read_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}", pos)
    if maxval not in _SUPPORTED_MAXVAL:
        raise ImageFormatError(f"unsupported maxval {maxval}", pos)

    count = width * height
    if magic == b"P5":
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise ImageFormatError("missing whitespace after maxval", pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise ImageFormatError(
                f"truncated payload: need {need} bytes, found {len(data) - pos}",
                len(data),
            )
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        samples = raw.astype(np.float64)
    else:
        values: List[int] = []
        for _ in range(count):
            if _skip_space(data, pos) >= len(data):
                raise ImageFormatError(
                    f"truncated payload: {len(values)} of {count} samples", len(data)
                )
            value, pos = _read_int(data, pos, "sample")
            values.append(value)
        samples = np.asarray(values, dtype=np.float64)

    if samples.size and samples.max() > maxval:
        raise ImageFormatError(f"sample exceeds maxval {maxval}", pos)
    return ImageBuffer(width, height, (samples / maxval).reshape(height, width))


def _parse_tvwf(data: bytes) -> ImageBuffer:
    if len(data) < _TVWF_HEADER.size:
        raise ImageFormatError("truncated TVWF header", len(data))
    _, width, height, _ = _TVWF_HEADER.unpack_from(data, 0)
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}", 4)
    need = width * height * 8
    have = len(data) - _TVWF_HEADER.size
    if have < need:
        raise ImageFormatError(
            f"truncated payload: need {need} bytes, found {have}", len(data)
        )
    if have > need:
        raise ImageFormatError("trailing bytes after payload", _TVWF_HEADER.size + need)
    pixels = np.frombuffer(
        data, dtype="<f8", count=width * height, offset=_TVWF_HEADER.size
    )
    return ImageBuffer(width, height, pixels.astype(np.float64).reshape(height, width))


def read_image(path: PathLike) -> ImageBuffer:
    """
    Read a P2/P5 PGM or TVWF file, dispatching on the leading magic bytes.

    Raises:
        OSError: if the file cannot be read.
        ImageFormatError: on malformed content.
    """
    data = Path(path).read_bytes()
    if data[:4] == TVWF_MAGIC:
        return _parse_tvwf(data)
    if data[:2] in (b"P2", b"P5"):
        return _parse_pgm(data)
    raise ImageFormatError("unknown magic; expected P2, P5 or TVWF", 0)


# -----------------
# Writing
# -----------------


def _quantize(pixels: np.ndarray, maxval: int) -> np.ndarray:
    return np.rint(np.clip(pixels, 0.0, 1.0) * maxval).astype(np.int64)


def _encode_pgm(buf: ImageBuffer, ascii_mode: bool, maxval: int) -> bytes:
    if maxval not in _SUPPORTED_MAXVAL:
        raise ValueError(f"maxval must be one of {_SUPPORTED_MAXVAL}; got {maxval}")
    levels = _quantize(buf.pixels, maxval)
    magic = "P2" if ascii_mode else "P5"
    header = f"{magic}\n{buf.width} {buf.height}\n{maxval}\n".encode("ascii")
    if not ascii_mode:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + levels.astype(dtype).tobytes()
    flat = levels.ravel()
    lines = [
        " ".join(str(v) for v in flat[i : i + _P2_VALUES_PER_LINE])
        for i in range(0, flat.size, _P2_VALUES_PER_LINE)
    ]
    return header + ("\n".join(lines) + "\n").encode("ascii")


def _encode_tvwf(buf: ImageBuffer) -> bytes:
    header = _TVWF_HEADER.pack(TVWF_MAGIC, buf.width, buf.height, 0)
    return header + np.ascontiguousarray(buf.pixels, dtype="<f8").tobytes()


def write_image(
    buf: ImageBuffer,
    path: PathLike,
    fmt: Optional[str] = None,
    maxval: int = 255,
) -> Path:
    """
    Write `buf` as "P5", "P2" or "tvwf".

    The format defaults from the suffix: ".tvwf" -> tvwf, anything else -> P5.
    """
    path = Path(path)
    fmt = (fmt or ("tvwf" if path.suffix.lower() == ".tvwf" else "P5")).upper()
    if fmt == "TVWF":
        payload = _encode_tvwf(buf)
    elif fmt in ("P2", "P5"):
        payload = _encode_pgm(buf, ascii_mode=fmt == "P2", maxval=maxval)
    else:
        raise ValueError(f"unsupported image format {fmt!r}")
    path.write_bytes(payload)
    return path


def read_field(path: PathLike, h: float = 1.0) -> ScalarField:
    return read_image(path).to_field(h)


def write_field(u: ScalarField, path: PathLike, fmt: Optional[str] = None) -> Path:
    return write_image(ImageBuffer.from_field(u), path, fmt=fmt)


def preview_buffer(u: ScalarField) -> ImageBuffer:
    """Min-max scaled copy of u for PGM previews."""
    lo = float(u.values.min())
    hi = float(u.values.max())
    scaled = (u.values - lo) / (hi - lo) if hi > lo else np.zeros_like(u.values)
    return ImageBuffer(width=u.grid.ny, height=u.grid.nx, pixels=scaled)
