"""Flat binary tensors: a text header ``dims: d1 d2 ... dk\\n`` then little-endian float32 data."""

import numpy as np
import numpy.typing as npt

from src.errors import MalformedFile
from src.utils.file_utils import PathLike, read_bytes, write_bytes

_HEADER_PREFIX = b"dims:"


def parse_tensor(data: bytes, source: str = "<tensor>") -> np.ndarray:
    newline = data.find(b"\n")
    if newline < 0:
        raise MalformedFile(source, "missing header line")
    header = data[:newline]
    if not header.startswith(_HEADER_PREFIX):
        raise MalformedFile(source, "header must start with 'dims:'", line=1)

    try:
        dims = tuple(int(token) for token in header[len(_HEADER_PREFIX) :].split())
    except ValueError:
        raise MalformedFile(source, "non-integer dimension in header", line=1)
    if not dims or any(d < 1 for d in dims):
        raise MalformedFile(source, f"dimensions must be positive, got {dims}", line=1)

    payload = data[newline + 1 :]
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise MalformedFile(source, f"expected {expected} data bytes, got {len(payload)}")

    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if not np.all(np.isfinite(values)):
        raise MalformedFile(source, "tensor holds non-finite values")
    return values


def format_tensor(values: npt.ArrayLike) -> bytes:
    array = np.asarray(values, dtype="<f4")
    header = "dims: " + " ".join(str(d) for d in array.shape) + "\n"
    return header.encode("ascii") + array.tobytes(order="C")


def read_tensor(path: PathLike) -> np.ndarray:
    return parse_tensor(read_bytes(path), source=str(path))


def write_tensor(path: PathLike, values: npt.ArrayLike) -> None:
    write_bytes(path, format_tensor(values))
