from .fields import (
    AnalyticField,
    OccupancyField,
    SampleGrid,
    TabulatedField,
    UniformGridSpec,
    field_gradient,
    query_field,
)
from .marching_cubes import (
    TriangleMesh,
    concatenate_meshes,
    estimate_normals,
    extract_regions,
    marching_cubes,
    mixed_resolution_extract,
    validate_partition,
)

__all__ = [
    "AnalyticField",
    "OccupancyField",
    "SampleGrid",
    "TabulatedField",
    "TriangleMesh",
    "UniformGridSpec",
    "concatenate_meshes",
    "estimate_normals",
    "extract_regions",
    "field_gradient",
    "marching_cubes",
    "mixed_resolution_extract",
    "query_field",
    "validate_partition",
]
