import numpy as np
import pytest
from loguru import logger
from scipy.spatial import KDTree

from src.enums import ShapeKind
from src.errors import EmptyMesh, GeometryError, InvalidPartition, MalformedFile, UnknownShape
from src.occupancy import (
    AnalyticField,
    SampleGrid,
    TabulatedField,
    TriangleMesh,
    UniformGridSpec,
    estimate_normals,
    extract_regions,
    field_gradient,
    marching_cubes,
    mixed_resolution_extract,
    query_field,
    validate_partition,
)


def _cube(nodes: int) -> UniformGridSpec:
    return UniformGridSpec.cube(0.5, nodes)


def _nodes(x_nodes: int) -> tuple[int, int, int]:
    return (x_nodes, 2 * x_nodes - 1, 2 * x_nodes - 1)


def _sphere(radius: float = 0.4) -> AnalyticField:
    return AnalyticField(kind=ShapeKind.sphere, radius=radius)


def _edge_counts(mesh: TriangleMesh) -> np.ndarray:
    edges = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


def _enclosed_volume(mesh: TriangleMesh) -> float:
    a, b, c = np.moveaxis(mesh.corners(), 1, 0)
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _radial_error(mesh: TriangleMesh, radius: float) -> float:
    return float(np.abs(np.linalg.norm(mesh.vertices, axis=1) - radius).max())


def _hausdorff_to_sphere(mesh: TriangleMesh, radius: float, samples: int = 20000) -> float:
    """Symmetric Hausdorff distance, with the mesh represented by its vertices and centroids."""
    mesh_points = np.concatenate([mesh.vertices, mesh.centroids()])
    to_surface = np.abs(np.linalg.norm(mesh_points, axis=1) - radius).max()
    directions = np.random.default_rng(0).normal(size=(samples, 3))
    surface = radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    to_mesh = KDTree(mesh_points).query(surface)[0].max()
    return float(max(to_surface, to_mesh))


def _assert_same_vertices(first: TriangleMesh, second: TriangleMesh) -> None:
    assert KDTree(first.vertices).query(second.vertices)[0].max() < 1e-9
    assert KDTree(second.vertices).query(first.vertices)[0].max() < 1e-9


class TestFields:
    def test_sphere_is_half_on_surface(self):
        values = _sphere().query([[0.4, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.9, 0.0]])
        assert values[0] == pytest.approx(0.5)
        assert values[1] > 0.99
        assert values[2] < 0.01

    def test_box_distance_is_exact(self):
        box = AnalyticField(kind=ShapeKind.axis_box, half_extents=(0.3, 0.2, 0.1))
        distances = box.signed_inside_distance([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.3, 0.2, 0.1]])
        np.testing.assert_allclose(distances, [0.1, -0.2, 0.0], atol=1e-15)

    def test_superellipsoid_surface(self):
        field = AnalyticField(kind=ShapeKind.superellipsoid, radii=(0.4, 0.3, 0.2))
        surface = [[0.4, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.2]]
        distances = field.signed_inside_distance(surface)
        np.testing.assert_allclose(distances, 0.0, atol=1e-12)

    def test_from_spec(self):
        field = AnalyticField.from_spec("sphere:radius=0.3;center=0.1,0,0", softness=0.01)
        assert field == AnalyticField(
            kind=ShapeKind.sphere, radius=0.3, center=(0.1, 0.0, 0.0), softness=0.01
        )
        box = AnalyticField.from_spec("axis-box:half=0.1,0.2,0.3")
        assert box.half_extents == (0.1, 0.2, 0.3)

    @pytest.mark.parametrize(
        "text, error",
        [
            ("cone:radius=1", UnknownShape),
            ("sphere:size=1", MalformedFile),
            ("sphere:radius=a", MalformedFile),
            ("sphere:center=1,2", MalformedFile),
            ("sphere:radius", MalformedFile),
        ],
    )
    def test_bad_spec(self, text, error):
        with pytest.raises(error):
            AnalyticField.from_spec(text)

    def test_tabulated_is_exact_on_lattice_and_clamped(self, rng):
        values = rng.uniform(size=(3, 4, 5))
        field = TabulatedField(values=values)
        spec = UniformGridSpec(lower=(-0.5,) * 3, upper=(0.5,) * 3, counts=(3, 4, 5))
        np.testing.assert_allclose(
            query_field(field, SampleGrid.from_uniform(spec)), values.reshape(-1), atol=1e-12
        )
        assert field.query([[-9.0, -9.0, -9.0]])[0] == pytest.approx(values[0, 0, 0])

    def test_tabulated_rejects_bad_values(self):
        with pytest.raises(GeometryError):
            TabulatedField(values=np.full((2, 2, 2), 1.5))
        with pytest.raises(GeometryError):
            TabulatedField(values=np.zeros((1, 2, 2)))

    def test_gradient_points_inwards(self):
        gradient = field_gradient(_sphere(), [[0.4, 0.0, 0.0]])
        assert gradient[0, 0] < 0
        np.testing.assert_allclose(gradient[0, 1:], 0.0, atol=1e-9)

    def test_grid_validation(self):
        with pytest.raises(GeometryError):
            UniformGridSpec(lower=(0.0,) * 3, upper=(1.0,) * 3, counts=(1, 2, 2))
        with pytest.raises(GeometryError):
            UniformGridSpec(lower=(0.0,) * 3, upper=(0.0, 1.0, 1.0), counts=(2, 2, 2))
        with pytest.raises(GeometryError):
            SampleGrid(points=np.zeros((0, 3)))


class TestMarchingCubes:
    def test_single_corner_case(self):
        values = np.zeros((2, 2, 2))
        values[0, 0, 0] = 1.0
        spec = UniformGridSpec(lower=(-0.5,) * 3, upper=(0.5,) * 3, counts=(2, 2, 2))
        mesh = marching_cubes(TabulatedField(values=values), spec)
        assert len(mesh) == 1
        expected = {(0.0, -0.5, -0.5), (-0.5, 0.0, -0.5), (-0.5, -0.5, 0.0)}
        assert {tuple(v) for v in np.round(mesh.vertices, 12)} == expected
        a, b, c = mesh.corners()[0]
        assert np.dot(np.cross(b - a, c - a), [1.0, 1.0, 1.0]) > 0

    def test_sphere_is_closed_manifold(self):
        spec = _cube(32)
        mesh = marching_cubes(_sphere(0.4), spec)
        assert not mesh.is_empty
        assert np.all(_edge_counts(mesh) == 2)
        assert np.unique(mesh.vertices, axis=0).shape[0] == mesh.vertices.shape[0]
        assert _radial_error(mesh, 0.4) <= 1.5 * np.linalg.norm(spec.cell_size)
        assert mesh.surface_area() == pytest.approx(4.0 * np.pi * 0.4**2, rel=0.1)

    @pytest.mark.parametrize("nodes", [7, 15, 24])
    def test_any_number_of_active_cells(self, nodes):
        mesh = marching_cubes(_sphere(0.4), _cube(nodes))
        assert len(mesh) > 0
        assert np.all(_edge_counts(mesh) == 2)

    def test_refinement_does_not_increase_hausdorff_distance(self):
        coarse = marching_cubes(_sphere(0.4), _cube(32))
        fine = marching_cubes(_sphere(0.4), _cube(64))
        assert _hausdorff_to_sphere(fine, 0.4) <= _hausdorff_to_sphere(coarse, 0.4)

    def test_triangles_face_outwards(self):
        mesh = marching_cubes(_sphere(0.3), _cube(32))
        a, b, c = np.moveaxis(mesh.corners(), 1, 0)
        assert np.all(np.einsum("ij,ij->i", np.cross(b - a, c - a), mesh.centroids()) > 0)
        assert _enclosed_volume(mesh) == pytest.approx(4.0 / 3.0 * np.pi * 0.3**3, rel=0.05)

    def test_box_volume(self):
        field = AnalyticField(kind=ShapeKind.axis_box, half_extents=(0.3, 0.3, 0.3))
        mesh = marching_cubes(field, _cube(32))
        assert _enclosed_volume(mesh) == pytest.approx(0.216, rel=0.05)

    def test_box_extents_and_face_normals(self):
        field = AnalyticField(kind=ShapeKind.axis_box, half_extents=(0.3, 0.2, 0.1))
        spec = _cube(32)
        mesh = marching_cubes(field, spec)
        low, high = mesh.bounds()
        np.testing.assert_allclose(high, [0.3, 0.2, 0.1], atol=float(spec.cell_size.max()))
        np.testing.assert_allclose(low, [-0.3, -0.2, -0.1], atol=float(spec.cell_size.max()))

        centroids = mesh.centroids()
        face = (centroids[:, 0] > 0.25) & (np.abs(centroids[:, 1:]) < [0.12, 0.03]).all(axis=1)
        assert face.any()
        normals = estimate_normals(mesh, field)[face]
        np.testing.assert_allclose(normals, [[1.0, 0.0, 0.0]] * len(normals), atol=1e-6)

    def test_constant_field_gives_empty_mesh_and_warning(self):
        messages = []
        handler = logger.add(messages.append, level="WARNING")
        try:
            mesh = marching_cubes(TabulatedField(values=np.ones((3, 3, 3))), _cube(8))
        finally:
            logger.remove(handler)
        assert mesh.is_empty
        assert any("empty mesh" in str(message) for message in messages)
        with pytest.raises(EmptyMesh):
            mesh.bounds()

    def test_estimated_normals_point_outwards(self):
        mesh = marching_cubes(_sphere(0.3), _cube(16))
        normals = estimate_normals(mesh, _sphere(0.3))
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        centroids = mesh.centroids()
        cosines = np.einsum("ij,ij->i", normals, centroids) / np.linalg.norm(centroids, axis=1)
        assert cosines.min() > 0

    def test_normals_of_empty_mesh(self):
        with pytest.raises(EmptyMesh):
            estimate_normals(TriangleMesh.empty(), _sphere())


class TestRegions:
    def _halves(self, coarse: int, fine: int) -> list[UniformGridSpec]:
        """Left and right halves of the unit cube at two node densities."""
        return [
            UniformGridSpec(lower=(-0.5, -0.5, -0.5), upper=(0.0, 0.5, 0.5), counts=_nodes(coarse)),
            UniformGridSpec(lower=(0.0, -0.5, -0.5), upper=(0.5, 0.5, 0.5), counts=_nodes(fine)),
        ]

    def test_partition_accepts_halves(self):
        validate_partition(self._halves(9, 17))

    def test_partition_rejects_overlap(self):
        regions = [_cube(4), UniformGridSpec.cube(0.25, 4)]
        with pytest.raises(InvalidPartition):
            validate_partition(regions)

    def test_partition_rejects_gap(self):
        regions = [
            UniformGridSpec(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), counts=(2, 2, 2)),
            UniformGridSpec(lower=(2.0, 0.0, 0.0), upper=(3.0, 1.0, 1.0), counts=(2, 2, 2)),
        ]
        with pytest.raises(InvalidPartition):
            validate_partition(regions)

    def test_mixed_resolution_counts(self):
        regions = self._halves(9, 17)
        meshes = extract_regions(_sphere(0.4), regions)
        assert all(len(mesh) > 0 for mesh in meshes)
        assert len(meshes[1]) > len(meshes[0])
        combined = mixed_resolution_extract(_sphere(0.4), regions)
        assert len(combined) == sum(len(mesh) for mesh in meshes)
        assert combined.vertices.shape[0] == sum(mesh.vertices.shape[0] for mesh in meshes)

    def test_equal_resolution_halves_match_single_grid(self):
        single = marching_cubes(_sphere(0.4), UniformGridSpec.cube(0.5, 33))
        combined = mixed_resolution_extract(_sphere(0.4), self._halves(17, 17))
        assert len(combined) == len(single)
        assert combined.surface_area() == pytest.approx(single.surface_area(), rel=1e-9)
        _assert_same_vertices(single, combined)
