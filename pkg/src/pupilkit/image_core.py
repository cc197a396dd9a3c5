"""Raster types, binary PNM (P5/P6) I/O and RGB to gray conversion.

All images are row-major numpy arrays with the origin at the top-left,
x to the right and y downward.  Arrays are frozen (read-only) once wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class DimensionError(ValueError):
    """Image is too small (or malformed) for the requested operation."""


class PnmError(ValueError):
    """Base class for PNM decoding failures; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PnmHeaderError(PnmError):
    pass


class PnmTruncatedError(PnmError):
    pass


class PnmUnsupportedError(PnmError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.uint8, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    data: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"gray image must be a non-empty 2-D array, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ValueError("gray values must lie in [0, 255]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class RgbImage:
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"rgb image must have shape (h, w, 3), got {data.shape}")
        if data.dtype != np.uint8:
            if data.min() < 0 or data.max() > 255:
                raise ValueError("channel values must lie in [0, 255]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Thresholded image; foreground is 255, background 0."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"binary image must be a non-empty 2-D array, got shape {data.shape}")
        if data.dtype == bool:
            data = data.astype(np.uint8) * 255
        elif not np.isin(data, (0, 255)).all():
            raise ValueError("binary image values must be 0 or 255")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_mask(cls, mask) -> "BinaryImage":
        return cls(np.asarray(mask, dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self.data > 0

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.data, other.data)


Image = Union[GrayImage, RgbImage]


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, token_start, position after token), skipping whitespace and comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c == 0x23:  # '#': comment runs to end of line
            while pos < n and buf[pos] not in (0x0A, 0x0D):
                pos += 1
        elif c in b" \t\r\n\v\f":
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in b" \t\r\n\v\f#":
        pos += 1
    if start == pos:
        raise PnmHeaderError("unexpected end of header", start)
    return buf[start:pos], start, pos


def _read_int(buf: bytes, pos: int, what: str) -> tuple[int, int, int]:
    """Return (value, token_start, position after token)."""
    tok, start, pos = _read_token(buf, pos)
    if not tok.isdigit():
        raise PnmHeaderError(f"expected {what}, got {tok[:16]!r}", start)
    return int(tok), start, pos


def decode_pnm(buf: bytes) -> Image:
    """Decode a binary P5 (graymap) or P6 (pixmap) file with maxval 255."""
    buf = bytes(buf)
    if len(buf) < 2:
        raise PnmHeaderError("file too short for magic number", 0)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmUnsupportedError(f"unsupported magic {magic!r}", 0)
    pos = 2
    if pos < len(buf) and buf[pos] not in b" \t\r\n\v\f#":
        raise PnmHeaderError("missing whitespace after magic", pos)
    width, width_start, pos = _read_int(buf, pos, "width")
    height, _, pos = _read_int(buf, pos, "height")
    maxval, maxval_start, pos = _read_int(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmHeaderError(f"invalid dimensions {width}x{height}", width_start)
    if maxval != 255:
        raise PnmUnsupportedError(f"maxval {maxval} is not supported (only 255)", maxval_start)
    if pos >= len(buf) or buf[pos] not in b" \t\r\n\v\f":
        raise PnmHeaderError("missing single whitespace before raster", pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = buf[pos:pos + expected]
    if len(payload) < expected:
        raise PnmTruncatedError(
            f"raster truncated: expected {expected} bytes, found {len(payload)}", pos + len(payload)
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return RgbImage(arr.reshape(height, width, 3))
    return GrayImage(arr.reshape(height, width))


def encode_pnm(image: Image) -> bytes:
    if isinstance(image, RgbImage):
        magic = b"P6"
    elif isinstance(image, (GrayImage, BinaryImage)):
        magic = b"P5"
    else:
        raise TypeError(f"cannot encode {type(image).__name__} as PNM")
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    return header + image.data.tobytes()


def read_pnm(path) -> Image:
    with open(path, "rb") as f:
        return decode_pnm(f.read())


def write_pnm(path, image: Image) -> None:
    with open(path, "wb") as f:
        f.write(encode_pnm(image))


def to_grayscale(image: RgbImage) -> GrayImage:
    """Rec. 601 luma, rounded half away from zero and clamped to [0, 255]."""
    rgb = image.data.astype(np.float64)
    luma = rgb @ np.array(LUMA_WEIGHTS)
    # values are nonnegative, so floor(x + 0.5) is round-half-up
    return GrayImage(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8))


def as_gray(image: Image) -> GrayImage:
    if isinstance(image, GrayImage):
        return image
    if isinstance(image, RgbImage):
        return to_grayscale(image)
    raise TypeError(f"expected GrayImage or RgbImage, got {type(image).__name__}")
