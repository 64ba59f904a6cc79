from .file_utils import (
    format_float,
    format_row,
    list_files,
    read_bytes,
    read_text,
    write_bytes,
    write_text,
)
from .tensor_io import format_tensor, parse_tensor, read_tensor, write_tensor

__all__ = [
    "format_float",
    "format_row",
    "format_tensor",
    "list_files",
    "parse_tensor",
    "read_bytes",
    "read_tensor",
    "read_text",
    "write_bytes",
    "write_tensor",
    "write_text",
]
