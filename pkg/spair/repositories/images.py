"""Binary PPM (P6, RGB) and PGM (P5, masks and probability maps) with 8-bit samples."""
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from spair.core.errors import ConfigError, FormatError, ShapeError

PathLike = Union[str, Path]
MAXVAL = 255


def _header(data: bytes) -> Tuple[str, int, int, int, int]:
    """Parse magic, width, height, maxval; returns them with the payload offset."""
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= len(data):
            raise FormatError("truncated header", offset=pos)
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        fields.append((data[start:pos], start))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("header must end with a single whitespace byte", offset=pos)

    (magic, _), *numbers = fields
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}; expected P5 or P6", offset=0)
    values = []
    for token, offset in numbers:
        if not token.isdigit():
            raise FormatError(f"expected a decimal number, got {token!r}", offset=offset)
        values.append(int(token))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError(f"invalid image size {width}x{height}", offset=numbers[0][1])
    if maxval != MAXVAL:
        raise FormatError(f"only maxval {MAXVAL} is supported, got {maxval}", offset=numbers[2][1])
    return magic.decode(), width, height, maxval, pos + 1


def decode(data: bytes) -> np.ndarray:
    """PPM -> (1, 3, h, w), PGM -> (1, h, w); float32 in [0, 1]."""
    magic, width, height, _, start = _header(data)
    channels = 3 if magic == "P6" else 1
    expected = width * height * channels
    payload = data[start:start + expected]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload: need {expected} bytes, have {len(payload)}", offset=start + len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float32) / MAXVAL
    if channels == 3:
        return pixels.reshape(height, width, 3).transpose(2, 0, 1)[None].copy()
    return pixels.reshape(1, height, width)


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.round(values.astype(np.float64) * MAXVAL), 0, MAXVAL).astype(np.uint8)


def encode_ppm(image: np.ndarray) -> bytes:
    arr = np.asarray(image)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ShapeError(f"PPM holds one image, got batch of {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"PPM needs a (3, h, w) image, got {arr.shape}")
    _, h, w = arr.shape
    body = _quantize(arr).transpose(1, 2, 0).tobytes()
    return f"P6\n{w} {h}\n{MAXVAL}\n".encode("ascii") + body


def encode_pgm(mask: np.ndarray) -> bytes:
    arr = np.asarray(mask)
    while arr.ndim > 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"PGM needs a single (h, w) plane, got {np.asarray(mask).shape}")
    h, w = arr.shape
    return f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii") + _quantize(arr).tobytes()


def read_image(path: PathLike) -> np.ndarray:
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"image not found: {file}")
    return decode(file.read_bytes())


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(image))


def write_pgm(path: PathLike, mask: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(mask))
