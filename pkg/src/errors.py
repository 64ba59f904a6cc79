from typing import Optional


class StereoShapeError(Exception):
    pass


class GeometryError(StereoShapeError, ValueError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class NonPositiveDisparity(GeometryError):
    pass


class IndexOutOfGrid(GeometryError, IndexError):
    pass


class IndexOutOfRange(GeometryError, IndexError):
    pass


class DegenerateBox(GeometryError):
    pass


class EmptyMask(GeometryError):
    pass


class EmptyCloud(GeometryError):
    pass


class EmptyLibrary(GeometryError):
    pass


class EmptyMesh(GeometryError):
    pass


class InvalidPartition(GeometryError):
    pass


class MissingCloud(GeometryError):
    pass


class UnknownShape(GeometryError):
    pass


class ConfigError(StereoShapeError):
    pass


class IoFailure(StereoShapeError, OSError):
    pass


class ParseError(StereoShapeError):
    def __init__(self, source: str, reason: str, line: Optional[int] = None) -> None:
        self.source = source
        self.reason = reason
        self.line = line
        location = f"{source}:{line}" if line is not None else source
        super().__init__(f"{location}: {reason}")


class MalformedLine(ParseError):
    def __init__(self, source: str, line: int, reason: str) -> None:
        super().__init__(source, reason, line)


class MissingKey(ParseError):
    def __init__(self, source: str, key: str) -> None:
        self.key = key
        super().__init__(source, f"missing key {key!r}")


class MalformedMatrix(ParseError):
    def __init__(self, source: str, key: str, reason: str, line: Optional[int] = None) -> None:
        self.key = key
        super().__init__(source, f"{key}: {reason}", line)


class MalformedFile(ParseError):
    pass
