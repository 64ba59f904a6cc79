"""Foreground masks as PGM images with a disparity side file (PGM or PFM)."""

import numpy as np
import numpy.typing as npt

from src.errors import MalformedFile
from src.instance import ForegroundMask
from src.utils.file_utils import PathLike, read_bytes, write_bytes

_WHITESPACE = b" \t\r\n"


def _header_tokens(data: bytes, count: int, source: str) -> tuple[list[bytes], bytes]:
    """Split off `count` whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise MalformedFile(source, "truncated header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1] not in _WHITESPACE:
            pos += 1
        tokens.append(data[start:pos])
    if pos >= len(data):
        raise MalformedFile(source, "header is not followed by data")
    # exactly one whitespace byte separates the header from the raster
    return tokens, data[pos + 1 :]


def parse_pgm(data: bytes, source: str = "<pgm>") -> np.ndarray:
    """Binary (P5) or ASCII (P2) graymap, returned as an (H, W) integer array."""
    if data[:2] not in (b"P2", b"P5"):
        raise MalformedFile(source, "not a P2/P5 graymap header")
    tokens, body = _header_tokens(data, 4, source)
    magic = tokens[0]
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise MalformedFile(source, "graymap size and maxval must be integers")
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise MalformedFile(source, f"invalid size {width}x{height} or maxval {maxval}")

    if magic == b"P5":
        dtype = ">u1" if maxval < 256 else ">u2"
        expected = width * height * np.dtype(dtype).itemsize
        if len(body) != expected:
            raise MalformedFile(source, f"expected {expected} pixel bytes, got {len(body)}")
        image = np.frombuffer(body, dtype=dtype).reshape(height, width)
    else:
        try:
            values = [int(token) for token in body.split()]
        except ValueError:
            raise MalformedFile(source, "non-integer pixel value")
        if len(values) != width * height:
            raise MalformedFile(source, f"expected {width * height} pixels, got {len(values)}")
        image = np.array(values, dtype=np.int64).reshape(height, width)

    if image.max() > maxval:
        raise MalformedFile(source, f"pixel value above maxval {maxval}")
    return image.astype(np.int64)


def format_pgm(image: npt.ArrayLike) -> bytes:
    pixels = np.asarray(image)
    if pixels.ndim != 2 or pixels.min() < 0 or pixels.max() > 65535:
        raise ValueError("A graymap needs a 2-d array of values in 0..65535")
    maxval = 255 if pixels.max() < 256 else 65535
    dtype = ">u1" if maxval == 255 else ">u2"
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n{maxval}\n".encode("ascii")
    return header + pixels.astype(dtype).tobytes()


def parse_pfm(data: bytes, source: str = "<pfm>") -> np.ndarray:
    """Single-channel float map; rows are stored bottom to top."""
    tokens, body = _header_tokens(data, 4, source)
    if tokens[0] != b"Pf":
        raise MalformedFile(source, "not a single-channel 'Pf' float map header")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError:
        raise MalformedFile(source, "float map size and scale must be numbers")
    if width < 1 or height < 1 or scale == 0:
        raise MalformedFile(source, f"invalid size {width}x{height} or scale {scale}")
    if len(body) != width * height * 4:
        raise MalformedFile(source, f"expected {width * height * 4} data bytes, got {len(body)}")
    dtype = "<f4" if scale < 0 else ">f4"
    image = np.frombuffer(body, dtype=dtype).reshape(height, width)[::-1]
    return image.astype(np.float64)


def format_pfm(image: npt.ArrayLike) -> bytes:
    values = np.asarray(image, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("A float map needs a 2-d array")
    header = f"Pf\n{values.shape[1]} {values.shape[0]}\n-1.0\n".encode("ascii")
    return header + values[::-1].astype("<f4").tobytes()


def _read_disparity(path: PathLike) -> np.ndarray:
    data = read_bytes(path)
    if data.startswith(b"Pf"):
        return parse_pfm(data, source=str(path))
    return parse_pgm(data, source=str(path)).astype(np.float64)


def read_mask(
    mask_path: PathLike, disparity_path: PathLike, origin: tuple[float, float] = (0.0, 0.0)
) -> ForegroundMask:
    """Foreground pixels (value 255) of a RoI mask with their disparities."""
    mask = parse_pgm(read_bytes(mask_path), source=str(mask_path))
    if not np.all(np.isin(mask, (0, 255))):
        raise MalformedFile(str(mask_path), "mask pixels must be 0 (background) or 255")
    disparity = _read_disparity(disparity_path)
    if disparity.shape != mask.shape:
        raise MalformedFile(
            str(disparity_path), f"disparity size {disparity.shape} differs from mask {mask.shape}"
        )

    rows, cols = np.nonzero(mask == 255)
    return ForegroundMask(
        width=mask.shape[1],
        height=mask.shape[0],
        pixels=np.stack([cols, rows], axis=1).astype(np.float64),
        disparities=disparity[rows, cols],
        origin=origin,
    )


def write_mask(mask_path: PathLike, disparity_path: PathLike, mask: ForegroundMask) -> None:
    """Mask as P5 graymap and disparities as a PFM float map; background disparity is 0."""
    image = np.zeros((mask.height, mask.width), dtype=np.int64)
    disparity = np.zeros((mask.height, mask.width), dtype=np.float64)
    cols, rows = mask.pixels[:, 0].astype(np.int64), mask.pixels[:, 1].astype(np.int64)
    image[rows, cols] = 255
    disparity[rows, cols] = mask.disparities
    write_bytes(mask_path, format_pgm(image))
    write_bytes(disparity_path, format_pfm(disparity))
