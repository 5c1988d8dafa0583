"""SPTN checkpoint container.

Layout (little-endian throughout): magic ``SPTN``, u16 version, u32 tensor count, then per
tensor a u16 path length, UTF-8 path, u8 dtype code (1=f32, 2=f64), u8 ndim, ndim x u32 dims
and the raw scalar data. A JSON sidecar next to the file records the network spec so a model
can be rebuilt from the checkpoint alone.
"""
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from spair.core.errors import ConfigError, FormatError, ShapeError
from spair.core.logging import get_logger
from spair.schemas.net import NetSpec
from spair.services.optim import AdamState

logger = get_logger(__name__)

PathLike = Union[str, Path]
MAGIC = b"SPTN"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


class CheckpointMeta(BaseModel):
    role: str
    spec: NetSpec
    iteration: int = 0
    loc_channels: Optional[List[int]] = None  # restorers only


def encode(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for path, value in tensors.items():
        arr = np.asarray(value)
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in DTYPE_CODES:
            raise ShapeError(f"{path}: only float32/float64 tensors can be stored, got {arr.dtype}")
        name = path.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", DTYPE_CODES[dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data: bytes) -> Dict[str, np.ndarray]:
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("not an SPTN checkpoint", offset=0)
    version, count = reader.unpack("<HI", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (length,) = reader.unpack("<H", "path length")
        start = reader.pos
        try:
            path = reader.take(length, "path").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor path is not valid UTF-8", offset=start) from None
        code_at = reader.pos
        code, ndim = reader.unpack("<BB", "dtype/ndim")
        if code not in CODE_DTYPES:
            raise FormatError(f"unknown dtype code {code}", offset=code_at)
        shape = reader.unpack(f"<{ndim}I", "dims")
        dtype = CODE_DTYPES[code]
        size = int(np.prod(shape)) * dtype.itemsize
        raw = reader.take(size, f"data of {path}")
        tensors[path] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if reader.pos != len(data):
        raise FormatError("trailing bytes after last tensor", offset=reader.pos)
    return tensors


def save(path: PathLike, tensors: Dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def load(path: PathLike) -> Dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def _sidecar(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def adam_tensors(state: AdamState) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {}
    for key, m in state.m.items():
        tensors[f"opt.m.{key}"] = m
        tensors[f"opt.v.{key}"] = state.v[key]
    tensors["opt.step"] = np.array(float(state.step))
    return tensors


def adam_from_tensors(tensors: Dict[str, np.ndarray]) -> Optional[AdamState]:
    if "opt.step" not in tensors:
        return None
    state = AdamState(step=int(tensors["opt.step"]))
    for key, value in tensors.items():
        if key.startswith("opt.m."):
            path = key[len("opt.m."):]
            state.m[path] = value.copy()
            state.v[path] = tensors[f"opt.v.{path}"].copy()
    return state


def save_model(path: PathLike, params: Dict[str, np.ndarray], meta: CheckpointMeta,
               adam: Optional[AdamState] = None) -> None:
    """Parameters (and optionally the optimizer state) plus the spec sidecar."""
    tensors = dict(params)
    if adam is not None:
        tensors.update(adam_tensors(adam))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save(path, tensors)
    _sidecar(path).write_text(meta.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("checkpoint.saved", path=str(path), tensors=len(tensors), role=meta.role)


def load_model(path: PathLike) -> Tuple[Dict[str, np.ndarray], CheckpointMeta, Optional[AdamState]]:
    """Returns (parameters, meta, optimizer state or None)."""
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"checkpoint not found: {file}")
    sidecar = _sidecar(file)
    if not sidecar.is_file():
        raise ConfigError(f"checkpoint metadata not found: {sidecar}")
    tensors = load(file)
    meta = CheckpointMeta.model_validate_json(sidecar.read_text(encoding="utf-8"))
    params = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    return params, meta, adam_from_tensors(tensors)
