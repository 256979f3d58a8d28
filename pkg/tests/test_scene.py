import math

import numpy as np
import pytest

from tactnav.geometry import CameraModel, Category, HandKind, PixelBox
from tactnav.scene import (
    CameraPose,
    FrameBundle,
    NoiseConfig,
    ReplayError,
    Scene,
    SceneObject,
    load_replay,
    load_scene,
    pixel_ray,
    project,
    project_object_box,
    render_depth,
    render_frame,
    save_replay,
    save_scene,
)

CAM = CameraModel()
STRAIGHT = CameraPose(position=(0, 0, 0), look_at=(0, 0, 100))


def simple_scene(objects=(), hand_pos=(20.0, 4.0, 18.0)) -> Scene:
    hand = SceneObject(
        "hand", Category("hand", HandKind.MY_RIGHT), hand_pos, (9.0, 8.0, 12.0)
    )
    return Scene(
        objects=tuple(objects),
        hand=hand,
        camera_pose=CameraPose(position=(0, 45, -25), look_at=(0, 8, 45)),
    )


class TestProjection:
    def test_optical_axis_maps_to_center(self):
        assert project((0, 0, 80), STRAIGHT, CAM) == pytest.approx((320, 240))

    def test_half_fov_maps_to_image_edge(self):
        x = 80 * math.tan(math.radians(44.0))
        px, py = project((x, 0, 80), STRAIGHT, CAM)
        assert px == pytest.approx(640, abs=1e-6)
        assert py == pytest.approx(240, abs=1e-6)

    def test_22_degrees_closed_form(self):
        # closed-form pinhole oracle
        expected = 320 + 320 * math.tan(math.radians(22)) / math.tan(math.radians(44))
        x = 60 * math.tan(math.radians(22.0))
        px, _ = project((x, 0, 60), STRAIGHT, CAM)
        assert px == pytest.approx(expected, abs=1e-9)

    def test_beyond_fov_and_behind_camera(self):
        x = 80 * math.tan(math.radians(45.0))
        assert project((x, 0, 80), STRAIGHT, CAM) is None
        assert project((0, 0, -10), STRAIGHT, CAM) is None

    def test_image_axes_orientation(self):
        # +x world is image right; +y world is image up (smaller py)
        px_r, _ = project((10, 0, 80), STRAIGHT, CAM)
        assert px_r > 320
        _, py_u = project((0, 10, 80), STRAIGHT, CAM)
        assert py_u < 240

    def test_round_trip_through_pixel_ray(self):
        pose = CameraPose(position=(3, 45, -25), look_at=(-4, 8, 45))
        rng = np.random.default_rng(11)
        for _ in range(50):
            point = np.array(
                [rng.uniform(-25, 25), rng.uniform(0, 30), rng.uniform(20, 60)]
            )
            proj = project(tuple(point), pose, CAM)
            if proj is None:
                continue
            origin, direction = pixel_ray(proj[0], proj[1], pose, CAM)
            depth = np.linalg.norm(point - origin)
            recovered = origin + direction * depth
            assert np.allclose(recovered, point, atol=1e-6)


def make_object(oid, x, z=40.0, cat="bottle", extent=(7.0, 25.0, 7.0)):
    return SceneObject(oid, Category(cat), (x, extent[1] / 2.0, z), extent)


class TestRenderFrame:
    def test_noise_free_detection_count(self):
        objs = [make_object(f"b{i}", x) for i, x in enumerate((-30, -15, 0, 15, 30))]
        scene = simple_scene(objs)
        rng = np.random.default_rng(0)
        bundle = render_frame(scene, NoiseConfig(), rng)
        labels = sorted(d.category.label for d in bundle.detections)
        assert labels == ["bottle"] * 5 + ["hand"]

    def test_full_dropout_keeps_hand_only(self):
        objs = [make_object("b0", 0.0)]
        scene = simple_scene(objs)
        bundle = render_frame(scene, NoiseConfig(dropout_prob=1.0), np.random.default_rng(0))
        assert [d.category.label for d in bundle.detections] == ["hand"]

    def test_hand_occlusion_suppresses_target(self):
        target = make_object("b0", 0.0)
        other = make_object("b1", 30.0)
        scene = simple_scene([target, other], hand_pos=(0.0, 12.0, 38.0))
        # hand sits directly in front of the target: projected boxes overlap
        noise = NoiseConfig(occlusion_drop_prob=1.0, occlusion_overlap_threshold=0.3)
        bundle = render_frame(scene, noise, np.random.default_rng(0))
        labels = [d.category.label for d in bundle.detections]
        assert "hand" in labels
        assert labels.count("bottle") == 1  # only the non-occluded bottle

    def test_jitter_moves_centers_not_sizes(self):
        objs = [make_object("b0", 0.0)]
        scene = simple_scene(objs)
        clean = render_frame(scene, NoiseConfig(), np.random.default_rng(0))
        noisy = render_frame(
            scene, NoiseConfig(jitter_sigma_px=3.0, seed=1), np.random.default_rng(1)
        )
        box_c = next(d.box for d in clean.detections if d.category.label == "bottle")
        box_n = next(d.box for d in noisy.detections if d.category.label == "bottle")
        assert (box_c.cx, box_c.cy) != (box_n.cx, box_n.cy)
        assert box_c.w == box_n.w and box_c.h == box_n.h

    def test_features_are_stable_unit_vectors(self):
        objs = [make_object("b0", 0.0)]
        scene = simple_scene(objs)
        noise = NoiseConfig(feature_noise_sigma=0.0)
        f1 = render_frame(scene, noise, np.random.default_rng(0)).detections[-1].feature
        f2 = render_frame(scene, noise, np.random.default_rng(9)).detections[-1].feature
        assert np.allclose(f1, f2)
        assert np.linalg.norm(f1) == pytest.approx(1.0)

    def test_determinism_byte_identical_stream(self, tmp_path):
        objs = [make_object(f"b{i}", x) for i, x in enumerate((-15, 0, 15))]
        scene = simple_scene(objs)
        noise = NoiseConfig(dropout_prob=0.2, jitter_sigma_px=2.0, camera_jitter_sigma_deg=0.3)

        def run(path):
            rng = np.random.default_rng(42)
            frames = [
                render_frame(scene, noise, rng, frame_index=i) for i in range(20)
            ]
            save_replay(frames, path)
            return path.read_bytes()

        assert run(tmp_path / "a.jsonl") == run(tmp_path / "b.jsonl")


class TestRenderDepth:
    def test_empty_scene_is_background(self):
        scene = Scene(
            objects=(),
            hand=SceneObject(
                "hand", Category("hand", HandKind.MY_RIGHT), (0, 4, 20), (9, 8, 12)
            ),
            camera_pose=STRAIGHT,
        )
        depth = render_depth(scene, CAM, include_hand=False, background_m=3.0)
        assert np.all(depth.values == pytest.approx(3.0))

    def test_box_on_axis_at_half_meter(self):
        # ray-box oracle: the front face of a box centered 50 cm out
        obj = SceneObject("cube", Category("box"), (0.0, 0.0, 50.0), (20.0, 20.0, 10.0))
        scene = Scene(
            objects=(obj,),
            hand=SceneObject(
                "hand", Category("hand", HandKind.MY_RIGHT), (0, -40, 20), (9, 8, 12)
            ),
            camera_pose=STRAIGHT,
        )
        depth = render_depth(scene, CAM, include_hand=False)
        assert depth.at(320, 240) == pytest.approx(0.45, abs=1e-3)

    def test_obstacle_corridor_strictly_nearer(self):
        target = SceneObject("t", Category("bottle"), (0.0, 0.0, 60.0), (7, 25, 7))
        obstacle = SceneObject(
            "ob", Category("box"), (0.0, 0.0, 35.0), (30, 30, 6), is_obstacle=True
        )
        scene = Scene(
            objects=(target, obstacle),
            hand=SceneObject(
                "hand", Category("hand", HandKind.MY_RIGHT), (0, -40, 20), (9, 8, 12)
            ),
            camera_pose=STRAIGHT,
        )
        depth = render_depth(scene, CAM, include_hand=False)
        target_depth = 60.0 - 3.5
        assert depth.at(320, 240) < target_depth / 100.0

    def test_surface_nearer_than_center(self):
        objs = [make_object("b0", 0.0)]
        scene = simple_scene(objs)
        box = project_object_box(objs[0], scene.camera_pose, CAM)
        depth = render_depth(scene, CAM, include_hand=False)
        center_dist = np.linalg.norm(
            np.asarray(objs[0].position) - np.asarray(scene.camera_pose.position)
        )
        assert depth.at(box.cx, box.cy) <= center_dist / 100.0 + 1e-9


class TestSceneFiles:
    def test_round_trip(self, tmp_path):
        objs = [
            make_object("b0", -15.0),
            SceneObject("ob", Category("box"), (5, 10, 30), (10, 20, 6), is_obstacle=True),
        ]
        scene = simple_scene(objs)
        path = tmp_path / "scene.yaml"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded == scene

    def test_rejects_unknown_schema(self, tmp_path):
        path = tmp_path / "scene.yaml"
        save_scene(simple_scene(), path)
        text = path.read_text().replace("schema_version: 1", "schema_version: 99")
        path.write_text(text)
        with pytest.raises(ValueError, match="schema_version"):
            load_scene(path)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            simple_scene([make_object("hand", 0.0)])


class TestReplay:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert list(load_replay(path)) == []

    def test_three_frames_round_trip(self, tmp_path):
        scene = simple_scene([make_object("b0", 0.0)])
        rng = np.random.default_rng(5)
        frames = [render_frame(scene, NoiseConfig(), rng, frame_index=i) for i in range(3)]
        frames[1] = FrameBundle(
            frame_index=1,
            detections=frames[1].detections,
            depth=render_depth(scene, CAM, frame_index=1),
            wall_dt=frames[1].wall_dt,
        )
        path = tmp_path / "stream.jsonl"
        save_replay(frames, path)
        loaded = list(load_replay(path))
        assert [f.frame_index for f in loaded] == [0, 1, 2]
        assert loaded[1].depth is not None
        assert np.allclose(loaded[1].depth.values, frames[1].depth.values)
        for orig, back in zip(frames, loaded):
            assert len(orig.detections) == len(back.detections)
            for a, b in zip(orig.detections, back.detections):
                assert a.box == b.box
                assert a.category == b.category

    def test_inline_depth_round_trip(self, tmp_path):
        scene = simple_scene([])
        small_cam = CameraModel(width_px=8, height_px=6)
        frame = FrameBundle(
            frame_index=0,
            detections=(),
            depth=render_depth(scene, small_cam),
        )
        path = tmp_path / "inline.jsonl"
        save_replay([frame], path, depth_sidecar=False)
        loaded = list(load_replay(path))
        assert np.allclose(loaded[0].depth.values, frame.depth.values)

    def test_bad_confidence_rejected_with_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = (
            '{"frame_index": 0, "wall_dt": 0.03, "detections": '
            '[{"category": "bottle", "cx": 1, "cy": 1, "w": 2, "h": 2, "confidence": 0.9}]}'
        )
        bad = good.replace('"confidence": 0.9', '"confidence": 1.2').replace(
            '"frame_index": 0', '"frame_index": 1'
        )
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(ReplayError, match="line 2"):
            list(load_replay(path))

    def test_non_monotonic_frames_rejected(self, tmp_path):
        path = tmp_path / "order.jsonl"
        rec = '{"frame_index": %d, "wall_dt": 0.03, "detections": []}'
        path.write_text((rec % 3) + "\n" + (rec % 3) + "\n")
        with pytest.raises(ReplayError, match="not after"):
            list(load_replay(path))

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "garbled.jsonl"
        path.write_text('{"frame_index": 0, "detections": []}\n{oops\n')
        with pytest.raises(ReplayError, match="line 2"):
            list(load_replay(path))
