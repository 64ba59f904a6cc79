import struct

import numpy as np
import numpy.typing as npt
from loguru import logger

from src.errors import MalformedFile, MalformedLine
from src.occupancy.marching_cubes import TriangleMesh
from src.utils.file_utils import (
    PathLike,
    format_row,
    read_bytes,
    read_text,
    write_bytes,
    write_text,
)

# OBJ records that carry nothing a triangle mesh keeps.
_OBJ_IGNORED = {"vn", "vt", "o", "g", "s", "usemtl", "mtllib"}

_STL_HEADER_BYTES = 80
_STL_TRIANGLE = struct.Struct("<12fH")


def _floats(tokens: list[str], source: str, line: int, count: int) -> list[float]:
    if len(tokens) != count:
        raise MalformedLine(source, line, f"expected {count} numbers, got {len(tokens)}")
    try:
        values = [float(token) for token in tokens]
    except ValueError:
        raise MalformedLine(source, line, f"non-numeric value in {' '.join(tokens)!r}")
    if not all(np.isfinite(values)):
        raise MalformedLine(source, line, "non-finite value")
    return values


def format_obj(mesh: TriangleMesh) -> str:
    lines = [f"v {format_row(vertex)}" for vertex in mesh.vertices]
    lines += ["f " + " ".join(str(index + 1) for index in tri) for tri in mesh.triangles]
    return "".join(line + "\n" for line in lines)


def parse_obj(text: str, source: str = "<obj>") -> TriangleMesh:
    vertices: list[list[float]] = []
    faces: list[tuple[int, list[str]]] = []

    for number, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        record, fields = tokens[0], tokens[1:]
        if record == "v":
            vertices.append(_floats(fields, source, number, 3))
        elif record == "f":
            if len(fields) < 3:
                raise MalformedLine(source, number, "a face needs at least 3 vertices")
            faces.append((number, fields))
        elif record not in _OBJ_IGNORED:
            raise MalformedLine(source, number, f"unknown record {record!r}")

    triangles: list[list[int]] = []
    for number, fields in faces:
        try:
            indices = [int(field.split("/")[0]) - 1 for field in fields]
        except ValueError:
            raise MalformedLine(source, number, "face indices must be integers")
        if any(not 0 <= index < len(vertices) for index in indices):
            raise MalformedLine(source, number, f"face index outside 1..{len(vertices)}")
        # polygons are fanned around their first vertex
        triangles.extend([indices[0], a, b] for a, b in zip(indices[1:-1], indices[2:]))

    return TriangleMesh(
        vertices=np.array(vertices, dtype=np.float64).reshape(-1, 3),
        triangles=np.array(triangles, dtype=np.int64).reshape(-1, 3),
    )


def format_stl(mesh: TriangleMesh) -> bytes:
    header = b"binary stl".ljust(_STL_HEADER_BYTES, b"\0")
    corners = mesh.corners().astype(np.float32)
    a, b, c = np.moveaxis(corners.astype(np.float64), 1, 0)
    normals = np.cross(b - a, c - a)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)

    body = b"".join(
        _STL_TRIANGLE.pack(*normal.astype(np.float32), *tri.reshape(-1), 0)
        for normal, tri in zip(normals, corners)
    )
    return header + struct.pack("<I", len(mesh)) + body


def parse_stl(data: bytes, source: str = "<stl>") -> TriangleMesh:
    """Binary STL; identical corner coordinates are welded into one vertex."""
    if len(data) < _STL_HEADER_BYTES + 4:
        raise MalformedFile(source, "shorter than the binary STL header")
    (count,) = struct.unpack_from("<I", data, _STL_HEADER_BYTES)
    expected = _STL_HEADER_BYTES + 4 + count * _STL_TRIANGLE.size
    if len(data) != expected:
        raise MalformedFile(source, f"{count} triangles need {expected} bytes, got {len(data)}")
    if count == 0:
        return TriangleMesh.empty()

    records = np.frombuffer(
        data,
        dtype=np.dtype([("normal", "<f4", 3), ("corners", "<f4", (3, 3)), ("attr", "<u2")]),
        offset=_STL_HEADER_BYTES + 4,
    )
    corners = records["corners"].astype(np.float64).reshape(-1, 3)
    vertices, inverse = np.unique(corners, axis=0, return_inverse=True)
    return TriangleMesh(vertices=vertices, triangles=inverse.reshape(-1, 3))


def format_ply(points: npt.ArrayLike) -> str:
    cloud = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {cloud.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    return "".join(line + "\n" for line in header + [format_row(p) for p in cloud])


def parse_ply(text: str, source: str = "<ply>") -> np.ndarray:
    """ASCII PLY with a single vertex element whose first properties are x, y, z."""
    lines = text.split("\n")
    if not lines or lines[0].strip() != "ply":
        raise MalformedLine(source, 1, "missing 'ply' magic")

    count = None
    properties: list[str] = []
    body_start = None
    for number, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1:2] != ["ascii"]:
                raise MalformedLine(source, number, "only ASCII PLY is supported")
        elif tokens[0] == "element":
            if len(tokens) != 3 or tokens[1] != "vertex" or count is not None:
                raise MalformedLine(source, number, f"unsupported element {' '.join(tokens[1:])!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise MalformedLine(source, number, "vertex count must be an integer")
        elif tokens[0] == "property":
            if len(tokens) != 3 or tokens[1] not in ("float", "double", "float32", "float64"):
                raise MalformedLine(source, number, "vertex properties must be scalar floats")
            properties.append(tokens[2])
        elif tokens[0] == "end_header":
            body_start = number
            break
        else:
            raise MalformedLine(source, number, f"unknown header record {tokens[0]!r}")

    if body_start is None:
        raise MalformedFile(source, "missing end_header")
    if count is None:
        raise MalformedFile(source, "missing vertex element")
    if properties[:3] != ["x", "y", "z"]:
        raise MalformedFile(source, "vertex properties must start with x, y, z")

    body = [(n, raw.split()) for n, raw in enumerate(lines[body_start:], start=body_start + 1)]
    body = [(n, tokens) for n, tokens in body if tokens]
    if len(body) != count:
        raise MalformedFile(source, f"header declares {count} vertices, body has {len(body)}")
    points = [_floats(tokens, source, n, len(properties))[:3] for n, tokens in body]
    return np.array(points, dtype=np.float64).reshape(-1, 3)


def format_xyz(points: npt.ArrayLike) -> str:
    cloud = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return "".join(format_row(p) + "\n" for p in cloud)


def parse_xyz(text: str, source: str = "<xyz>") -> np.ndarray:
    points = [
        _floats(raw.split(), source, number, 3)
        for number, raw in enumerate(text.split("\n"), start=1)
        if raw.strip() and not raw.lstrip().startswith("#")
    ]
    return np.array(points, dtype=np.float64).reshape(-1, 3)


def read_cloud(path: PathLike) -> np.ndarray:
    """Load a PLY or XYZ cloud, chosen by file suffix."""
    text = read_text(path)
    if str(path).lower().endswith(".ply"):
        return parse_ply(text, source=str(path))
    if str(path).lower().endswith(".xyz"):
        return parse_xyz(text, source=str(path))
    raise MalformedFile(str(path), "cloud files must end in .ply or .xyz")


def write_cloud(path: PathLike, points: npt.ArrayLike) -> None:
    if str(path).lower().endswith(".xyz"):
        write_text(path, format_xyz(points))
    else:
        write_text(path, format_ply(points))


def read_mesh(path: PathLike) -> TriangleMesh:
    if str(path).lower().endswith(".stl"):
        return parse_stl(read_bytes(path), source=str(path))
    return parse_obj(read_text(path), source=str(path))


def write_mesh(path: PathLike, mesh: TriangleMesh) -> None:
    """OBJ unless the path ends in .stl."""
    if str(path).lower().endswith(".stl"):
        write_bytes(path, format_stl(mesh))
    else:
        write_text(path, format_obj(mesh))
    logger.info(f"Mesh with {len(mesh)} triangles written to {path}")
