"""
On-disk formats

TRT1   binary tensor: b"TRT1", uint32 LE order d, d x uint64 LE dims,
       prod(dims) float64 LE values in first-index-fastest order.
TRC1   tensor-ring cores: text line "TRC1 d=<d>\\n" followed by d TRT1 blobs.
P6     binary PPM, maxval 255.
kv     flat "key = value" text; repeated keys form lists, "#" starts a comment.
"""
import io
import math
import re
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import structlog

from .errors import FormatError, ShapeError
from .tensor import DenseTensor

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

TRT_MAGIC = b"TRT1"
TRC_MAGIC = "TRC1"
_HEADER = struct.Struct("<4sI")
_FLOAT_LE = np.dtype("<f8")


# ---------------------------------------------------------------------------
# TRT1
# ---------------------------------------------------------------------------


def encode_tensor(X: DenseTensor) -> bytes:
    header = _HEADER.pack(TRT_MAGIC, X.order)
    dims = struct.pack(f"<{X.order}Q", *X.dims)
    return header + dims + X.flat.astype(_FLOAT_LE).tobytes()


def _read_exact(stream: BinaryIO, count: int, what: str) -> bytes:
    try:
        payload = stream.read(count)
    except (OverflowError, MemoryError) as e:
        raise FormatError(f"{what} of {count} bytes cannot be read: {e}") from e
    if len(payload) != count:
        raise FormatError(f"truncated {what}: expected {count} bytes, got {len(payload)}")
    return payload


def _remaining_bytes(stream: BinaryIO) -> Optional[int]:
    """Bytes between the current position and the end, None for unseekable streams"""
    try:
        if not stream.seekable():
            return None
        here = stream.tell()
        end = stream.seek(0, io.SEEK_END)
        stream.seek(here)
    except (AttributeError, OSError):
        return None
    return end - here


def read_tensor_stream(stream: BinaryIO) -> DenseTensor:
    magic, order = _HEADER.unpack(_read_exact(stream, _HEADER.size, "TRT1 header"))
    if magic != TRT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TRT_MAGIC!r}")
    if order < 1:
        raise FormatError("TRT1 order must be >= 1")
    dims = struct.unpack(f"<{order}Q", _read_exact(stream, 8 * order, "TRT1 dims"))
    count = math.prod(dims)
    remaining = _remaining_bytes(stream)
    if remaining is not None and 8 * count > remaining:
        raise FormatError(
            f"truncated TRT1 payload: dims {dims} need {8 * count} bytes, {remaining} left"
        )
    values = np.frombuffer(_read_exact(stream, 8 * count, "TRT1 payload"), dtype=_FLOAT_LE)
    try:
        return DenseTensor.from_flat(dims, values.astype(np.float64))
    except ShapeError as e:
        raise FormatError(str(e)) from e


def save_tensor(X: DenseTensor, path: PathLike):
    Path(path).write_bytes(encode_tensor(X))
    logger.debug("tensor_saved", path=str(path), dims=X.dims)


def load_tensor(path: PathLike) -> DenseTensor:
    with open(path, "rb") as stream:
        X = read_tensor_stream(stream)
        if stream.read(1):
            raise FormatError(f"{path}: trailing bytes after TRT1 payload")
    return X


# ---------------------------------------------------------------------------
# TRC1
# ---------------------------------------------------------------------------


def save_cores(cores: Sequence[DenseTensor], path: PathLike):
    with open(path, "wb") as stream:
        stream.write(f"{TRC_MAGIC} d={len(cores)}\n".encode("ascii"))
        for core in cores:
            stream.write(encode_tensor(core))


def load_cores(path: PathLike) -> List[DenseTensor]:
    with open(path, "rb") as stream:
        header = stream.readline().decode("ascii", errors="replace").strip()
        match = re.fullmatch(rf"{TRC_MAGIC} d=(\d+)", header)
        if not match:
            raise FormatError(f"bad cores header {header!r}")
        return [read_tensor_stream(stream) for _ in range(int(match.group(1)))]


# ---------------------------------------------------------------------------
# PPM (P6)
# ---------------------------------------------------------------------------


def _ppm_tokens(payload: bytes, count: int):
    """First ``count`` header tokens and the offset just past the single whitespace"""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(payload) and payload[pos : pos + 1].isspace():
            pos += 1
        if payload[pos : pos + 1] == b"#":
            while pos < len(payload) and payload[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(payload[start:pos])
    return tokens, pos + 1


def decode_ppm(payload: bytes) -> DenseTensor:
    """Binary PPM to an M x N x 3 tensor of reals in [0, 255]"""
    if payload[:2] != b"P6":
        raise FormatError(f"not a binary PPM (magic {payload[:2]!r})")
    tokens, offset = _ppm_tokens(payload, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"malformed PPM header: {e}") from e
    if width < 1 or height < 1:
        raise FormatError(f"invalid PPM size {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval} (only 255)")
    count = width * height * 3
    raster = payload[offset : offset + count]
    if len(raster) != count:
        raise FormatError(f"truncated PPM raster: expected {count} bytes, got {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return DenseTensor(pixels.astype(np.float64))


def encode_ppm(image: DenseTensor) -> bytes:
    """Clamp to [0, 255], round half away from zero, write P6"""
    if image.order != 3 or image.dims[2] != 3:
        raise ShapeError(f"PPM needs an M x N x 3 tensor, got {image.dims}")
    clamped = np.clip(image.data, 0.0, 255.0)
    rounded = np.floor(clamped + 0.5).astype(np.uint8)
    height, width, _ = image.dims
    return f"P6\n{width} {height}\n255\n".encode("ascii") + rounded.tobytes()


def load_ppm(path: PathLike) -> DenseTensor:
    return decode_ppm(Path(path).read_bytes())


def save_ppm(image: DenseTensor, path: PathLike):
    Path(path).write_bytes(encode_ppm(image))


def load_ppm_sequence(paths: Iterable[PathLike]) -> DenseTensor:
    """Stack same-sized frames into an M x N x 3 x F tensor"""
    frames = [load_ppm(p).data for p in paths]
    if not frames:
        raise FormatError("empty frame sequence")
    if any(f.shape != frames[0].shape for f in frames):
        raise ShapeError("frames differ in size")
    return DenseTensor(np.stack(frames, axis=-1))


# ---------------------------------------------------------------------------
# Flat key/value documents
# ---------------------------------------------------------------------------


def parse_kv_document(text: str) -> Dict[str, List[str]]:
    """Parse ``key = value`` lines; every key maps to the list of its values"""
    document: Dict[str, List[str]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {number}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FormatError(f"line {number}: empty key")
        document.setdefault(key, []).append(value)
    return document


def format_kv_record(record: Dict[str, object]) -> str:
    """One flat record per line: ``k1=v1 k2=v2 ...``"""
    return " ".join(f"{key}={value}" for key, value in record.items())


def _kv_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def format_kv_document(document: Dict[str, object]) -> str:
    """Inverse of ``parse_kv_document``: lists repeat the key, tuples join with commas"""
    lines = []
    for key, value in document.items():
        if value is None:
            continue
        values = value if isinstance(value, list) else [value]
        lines.extend(f"{key} = {_kv_value(v)}" for v in values)
    return "\n".join(lines) + "\n"
