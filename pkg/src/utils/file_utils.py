from pathlib import Path
from typing import Iterable, Union

from loguru import logger

from src.errors import IoFailure

PathLike = Union[Path, str]


def format_float(value: float) -> str:
    """Six significant digits; negative zero prints as 0."""
    text = f"{float(value):.6g}"
    return "0" if text == "-0" else text


def format_row(values: Iterable[float]) -> str:
    return " ".join(format_float(value) for value in values)


def read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Could not read {path}: {e}") from e


def read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"Could not read {path}: {e}") from e


def write_text(path: PathLike, text: str) -> None:
    """Write with "\\n" terminators whatever the platform."""
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"Could not write {path}: {e}") from e
    logger.debug(f"Wrote {len(text)} characters to {path}")


def write_bytes(path: PathLike, data: bytes) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(data)
    except OSError as e:
        raise IoFailure(f"Could not write {path}: {e}") from e
    logger.debug(f"Wrote {len(data)} bytes to {path}")


def list_files(directory: PathLike, suffixes: tuple[str, ...]) -> list[Path]:
    """Files in ``directory`` with one of ``suffixes``, sorted by name."""
    if not Path(directory).is_dir():
        raise IoFailure(f"The directory {directory} does not exist.")
    return sorted(
        path for path in Path(directory).iterdir() if path.is_file() and path.suffix in suffixes
    )
