import numpy as np
import pytest

from conftest import make_box
from src.enums import Frame, TemplateShape
from src.errors import GeometryError, IndexOutOfRange, MalformedFile, UnknownShape
from src.instance import PointCloud, extract_visible
from src.pipeline import InstancePipeline
from src.selftest import _completion_mmds, box_noise_study
from src.synth import (
    BOX_HALF_EXTENTS,
    SynthObject,
    SynthScene,
    broadside_scene,
    format_scene,
    load_scene,
    perturb_box,
    render_instance,
    template_cloud,
)


class TestTemplates:
    def test_sphere_radius(self):
        cloud = template_cloud(TemplateShape.sphere, 500, seed=3)
        np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 0.5)
        assert cloud.frame == Frame.ocs

    def test_box_shell_points_lie_on_faces(self):
        points = template_cloud(TemplateShape.box_shell, 500, seed=3).points
        ratio = np.abs(points) / np.asarray(BOX_HALF_EXTENTS)
        assert ratio.max() <= 1.0 + 1e-12
        np.testing.assert_allclose(ratio.max(axis=1), 1.0)

    def test_toy_car_has_unit_length(self):
        points = template_cloud("toy-car", 2000, seed=3).points
        assert points[:, 0].min() == pytest.approx(-0.5, abs=0.01)
        assert points[:, 0].max() == pytest.approx(0.5, abs=0.01)

    def test_same_seed_same_cloud(self):
        first = template_cloud(TemplateShape.toy_car, 100, seed=9).points
        np.testing.assert_array_equal(first, template_cloud(TemplateShape.toy_car, 100, 9).points)

    def test_unknown_shape(self):
        with pytest.raises(UnknownShape):
            template_cloud("bicycle", 10, seed=0)
        with pytest.raises(ValueError):
            template_cloud(TemplateShape.sphere, 0, seed=0)


class TestRendering:
    def test_disparities_match_visible_depths(self):
        scene = broadside_scene(TemplateShape.toy_car, seed=2)
        rendered = render_instance(scene, 0)
        mask = rendered.mask
        assert len(mask) == len(rendered.partial)
        visible = extract_visible(mask, scene.rig, scene.rig.left, len(mask), seed=0)
        np.testing.assert_allclose(
            np.sort(visible.points[:, 2]), np.sort(rendered.partial.points[:, 2]), rtol=1e-12
        )

    def test_only_the_near_side_is_visible(self):
        scene = broadside_scene(TemplateShape.box_shell, depth=12.0, seed=2)
        partial = render_instance(scene, 0).partial.points
        box = scene.objects[0].box
        assert partial[:, 2].max() < box.z
        assert partial[:, 2].min() == pytest.approx(box.z - box.w / 2.0, abs=1e-9)

    def test_rendering_is_deterministic(self):
        scene = broadside_scene(TemplateShape.sphere, seed=4)
        first, second = render_instance(scene, 0), render_instance(scene, 0)
        np.testing.assert_array_equal(first.mask.pixels, second.mask.pixels)
        np.testing.assert_array_equal(first.partial.points, second.partial.points)

    def test_background_fills_the_roi(self):
        scene = broadside_scene(TemplateShape.sphere, seed=4)
        mask = render_instance(scene, 0, include_background=True).mask
        assert len(mask) == mask.width * mask.height
        assert mask.disparities.min() == pytest.approx(
            scene.rig.left.fx * scene.rig.baseline_m / 20.0
        )

    def test_bad_index(self):
        with pytest.raises(IndexOutOfRange):
            render_instance(broadside_scene(TemplateShape.sphere), 1)

    def test_object_behind_camera(self, rig):
        with pytest.raises(GeometryError):
            SynthScene(rig=rig, objects=(SynthObject(make_box(z=0.5), TemplateShape.sphere),))


class TestSceneFiles:
    def test_format_then_load(self, tmp_path, rig):
        scene = SynthScene(
            rig=rig,
            objects=(
                SynthObject(make_box(x=-2.0, z=15.0, yaw=0.3), TemplateShape.toy_car),
                SynthObject(make_box(x=3.0, z=25.0), TemplateShape.box_shell),
            ),
            seed=7,
            background_depth=40.0,
        )
        (tmp_path / "scene.env").write_text(format_scene(scene), encoding="utf-8")
        assert load_scene(tmp_path / "scene.env") == scene

    @pytest.mark.parametrize(
        "text, error",
        [
            ("object_0=sphere 0 0 10 1 1 1\n", MalformedFile),
            ("object_0=sphere 0 0 ten 1 1 1 0\n", MalformedFile),
            ("object_0=cone 0 0 10 1 1 1 0\n", UnknownShape),
            ("fx=-1\nobject_0=sphere 0 0 10 1 1 1 0\n", MalformedFile),
            ("\n", MalformedFile),
        ],
    )
    def test_bad_scene(self, tmp_path, text, error):
        (tmp_path / "scene.env").write_text(text, encoding="utf-8")
        with pytest.raises(error):
            load_scene(tmp_path / "scene.env")


class TestBoxNoise:
    def test_zero_noise_keeps_box(self):
        box = make_box(yaw=0.5, score=0.3)
        assert perturb_box(box, 0.0, seed=1) == box

    def test_noise_moves_only_the_center(self):
        box = make_box(yaw=0.5)
        moved = perturb_box(box, 0.1, seed=1)
        assert moved == perturb_box(box, 0.1, seed=1)
        assert moved.center.tolist() != box.center.tolist()
        assert (moved.h, moved.w, moved.l, moved.yaw) == (box.h, box.w, box.l, box.yaw)


class TestPipeline:
    def test_run(self):
        scene = broadside_scene(TemplateShape.toy_car, seed=1)
        mask = render_instance(scene, 0).mask
        pipeline = InstancePipeline(rig=scene.rig, e=256, n_c=512, seed=1)
        result = pipeline.run(mask, scene.objects[0].box)
        assert result.visible.real_count == min(256, len(mask))
        assert result.normalized.frame == Frame.ocs
        assert len(result.completed) == 512
        assert result.code.values.shape == (3 * 512,)
        assert np.abs(result.normalized.real_points).max() < 0.6

    def test_run_needs_a_rig(self):
        scene = broadside_scene(TemplateShape.sphere)
        with pytest.raises(GeometryError):
            InstancePipeline().run(render_instance(scene, 0).mask, scene.objects[0].box)

    def test_complete_cloud_from_settings(self, settings):
        box = make_box(z=12.0)
        cloud = PointCloud(points=box.corners()[:4], frame=Frame.ccs)
        completed = InstancePipeline.from_settings(settings).complete_cloud(cloud, box)
        assert len(completed) == settings.completion_points
        assert completed.frame == Frame.ocs

    def test_completion_follows_a_shared_translation(self):
        rng = np.random.default_rng(3)
        box = make_box(x=1.0, z=12.0, yaw=0.4)
        points = box.center + rng.uniform(-0.8, 0.8, size=(300, 3))
        shift = np.array([3.0, -0.5, 7.0])
        moved_box = make_box(x=4.0, y=-0.5, z=19.0, yaw=0.4)
        pipeline = InstancePipeline(n_c=512)
        here = pipeline.complete_cloud(PointCloud(points=points, frame=Frame.ccs), box)
        there = pipeline.complete_cloud(
            PointCloud(points=points + shift, frame=Frame.ccs), moved_box
        )
        np.testing.assert_allclose(there.points, here.points, atol=1e-9)

    @pytest.mark.parametrize("shape", list(TemplateShape))
    def test_completion_lowers_mmd(self, shape):
        partial, completed = _completion_mmds(shape, seed=0)
        assert completed < partial

    def test_box_noise_raises_mmd(self):
        study = box_noise_study(seed=0)
        assert [sigma for sigma, _ in study] == [0.0, 0.05, 0.1, 0.2]
        assert study[-1][1] > study[0][1]
