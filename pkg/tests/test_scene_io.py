"""File-format round trips and invariant enforcement."""

import json

import numpy as np
import pytest
from PIL import Image

from splatseg.scene_io import (
    Camera,
    DataError,
    FormatError,
    GaussianScene,
    LabelMap,
    label_colors,
    load_cameras,
    load_gaussian_ply,
    load_label_maps,
    save_cameras,
    save_colorized,
    save_gaussian_ply,
    save_label_maps,
    sigmoid,
)


def random_scene(n=100, seed=0) -> GaussianScene:
    rng = np.random.default_rng(seed)
    quats = rng.normal(0, 1, (n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianScene(
        positions=rng.normal(0, 2, (n, 3)),
        rotations=quats,
        scales=np.exp(rng.normal(-1, 0.3, (n, 3))),
        opacities=rng.uniform(0.05, 0.95, n),
        sh_dc=rng.normal(0, 1, (n, 3)),
        sh_rest=rng.normal(0, 0.05, (n, 45)),
    ).validate()


def write_minimal_ply(path, opacity=0.0, scale=(0.0, 0.0, 0.0)):
    """One-vertex splat PLY with raw (pre-activation) values."""
    scene = GaussianScene(
        positions=np.zeros((1, 3)),
        rotations=np.array([[1.0, 0, 0, 0]]),
        scales=np.exp(np.asarray(scale, dtype=np.float64))[None, :],
        opacities=sigmoid(np.array([opacity])),
        sh_dc=np.zeros((1, 3)),
        sh_rest=np.zeros((1, 45)),
    )
    save_gaussian_ply(scene, path)


class TestGaussianPly:
    def test_opacity_zero_logit_loads_as_half(self, tmp_path):
        path = tmp_path / "one.ply"
        write_minimal_ply(path, opacity=0.0)
        scene = load_gaussian_ply(path)
        assert scene.opacities[0] == pytest.approx(0.5)

    def test_zero_log_scale_loads_as_one(self, tmp_path):
        path = tmp_path / "one.ply"
        write_minimal_ply(path, scale=(0.0, 0.0, 0.0))
        scene = load_gaussian_ply(path)
        np.testing.assert_allclose(scene.scales[0], 1.0)

    def test_round_trip_fields_close(self, tmp_path):
        scene = random_scene(100)
        path = tmp_path / "scene.ply"
        save_gaussian_ply(scene, path)
        back = load_gaussian_ply(path)
        for name in ("positions", "rotations", "scales", "opacities", "sh_dc", "sh_rest"):
            np.testing.assert_allclose(
                getattr(back, name), getattr(scene, name), atol=1e-6, rtol=1e-5
            )

    def test_save_load_save_byte_stable(self, tmp_path):
        scene = random_scene(64, seed=3)
        first = tmp_path / "a.ply"
        second = tmp_path / "b.ply"
        save_gaussian_ply(scene, first)
        save_gaussian_ply(load_gaussian_ply(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_full_opacity_clamps_to_logit_16(self, tmp_path):
        scene = random_scene(1)
        scene.opacities[:] = 1.0
        path = tmp_path / "opaque.ply"
        save_gaussian_ply(scene, path)
        back = load_gaussian_ply(path)
        assert back.opacities[0] == pytest.approx(sigmoid(np.array([16.0]))[0])

    def test_empty_scene_round_trip(self, tmp_path):
        empty = GaussianScene(
            positions=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            scales=np.zeros((0, 3)),
            opacities=np.zeros(0),
            sh_dc=np.zeros((0, 3)),
            sh_rest=np.zeros((0, 45)),
        )
        path = tmp_path / "empty.ply"
        save_gaussian_ply(empty, path)
        assert load_gaussian_ply(path).count == 0

    def test_missing_property_names_it(self, tmp_path):
        path = tmp_path / "broken.ply"
        props = "".join(
            f"property float {p}\n"
            for p in ("x", "y", "z", "nx", "ny", "nz")
        )
        header = (
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
            + props
            + "end_header\n"
        )
        path.write_bytes(header.encode())
        with pytest.raises(FormatError, match="f_dc_0"):
            load_gaussian_ply(path)

    def test_non_finite_value_reports_index(self, tmp_path):
        scene = random_scene(5)
        path = tmp_path / "nan.ply"
        save_gaussian_ply(scene, path)
        raw = bytearray(path.read_bytes())
        header_end = raw.index(b"end_header\n") + len(b"end_header\n")
        # first float of vertex 2 (x coordinate)
        offset = header_end + 2 * 62 * 4
        raw[offset : offset + 4] = np.float32("nan").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="index 2"):
            load_gaussian_ply(path)

    def test_bad_quaternion_norm_rejected(self):
        scene = random_scene(3)
        scene.rotations[1] *= 2.0
        with pytest.raises(DataError, match="quaternion 1"):
            scene.validate()

    def test_loaded_ranges(self, tmp_path):
        scene = random_scene(50, seed=7)
        path = tmp_path / "r.ply"
        save_gaussian_ply(scene, path)
        back = load_gaussian_ply(path)
        assert np.all(back.opacities > 0) and np.all(back.opacities < 1)
        assert np.all(back.scales > 0)
        np.testing.assert_allclose(
            np.linalg.norm(back.rotations, axis=1), 1.0, atol=1e-6
        )


def make_camera(cid=0, width=100, height=100):
    return Camera(
        id=cid,
        width=width,
        height=height,
        fx=100.0,
        fy=100.0,
        cx=50.0,
        cy=50.0,
        rotation=np.eye(3),
        translation=np.zeros(3),
    )


class TestCameras:
    def test_identity_camera_is_world_frame(self):
        cam = make_camera().validate()
        pts = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(cam.world_to_camera(pts), pts)
        np.testing.assert_allclose(cam.center, np.zeros(3))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        cams = []
        for i in range(4):
            q = rng.normal(0, 1, 4)
            q /= np.linalg.norm(q)
            w, x, y, z = q
            rot = np.array(
                [
                    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
                ]
            )
            cams.append(
                Camera(
                    id=3 - i,
                    width=64,
                    height=48,
                    fx=80.0,
                    fy=82.0,
                    cx=32.0,
                    cy=24.0,
                    rotation=rot,
                    translation=rng.normal(0, 1, 3),
                ).validate()
            )
        path = tmp_path / "cams.json"
        save_cameras(cams, path)
        back = load_cameras(path)
        assert [c.id for c in back] == [0, 1, 2, 3]
        orig = {c.id: c for c in cams}
        for cam in back:
            np.testing.assert_allclose(cam.rotation, orig[cam.id].rotation, atol=1e-12)
            np.testing.assert_allclose(
                cam.translation, orig[cam.id].translation, atol=1e-12
            )

    def test_duplicate_ids_rejected(self, tmp_path):
        cams = [make_camera(1), make_camera(1)]
        path = tmp_path / "dup.json"
        save_cameras(cams, path)
        with pytest.raises(DataError, match="duplicate"):
            load_cameras(path)

    def test_non_orthonormal_rotation_names_camera(self, tmp_path):
        path = tmp_path / "bad.json"
        rec = {
            "id": 7,
            "width": 10,
            "height": 10,
            "fx": 5.0,
            "fy": 5.0,
            "cx": 5.0,
            "cy": 5.0,
            "rotation": [1, 0.1, 0, 0, 1, 0, 0, 0, 1],
            "translation": [0, 0, 0],
        }
        path.write_text(json.dumps([rec]))
        with pytest.raises(DataError, match="camera 7"):
            load_cameras(path)


class TestLabelMaps:
    def test_round_trip(self, tmp_path):
        cams = [make_camera(0, 8, 6), make_camera(1, 8, 6)]
        rng = np.random.default_rng(1)
        maps = [
            LabelMap.from_array(rng.integers(0, 5, (6, 8)).astype(np.int32))
            for _ in cams
        ]
        save_label_maps(maps, tmp_path, [c.id for c in cams])
        back = load_label_maps(tmp_path, cams)
        for a, b in zip(maps, back):
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_all_zero_has_no_masks(self, tmp_path):
        cam = make_camera(0, 4, 4)
        save_label_maps(
            [LabelMap.from_array(np.zeros((4, 4), dtype=np.int32))], tmp_path, [0]
        )
        (lm,) = load_label_maps(tmp_path, [cam])
        assert len(lm.labels_present()) == 0

    def test_values_become_labels(self):
        lm = LabelMap.from_array(np.array([[0, 1], [2, 1]], dtype=np.int32))
        assert lm.labels_present().tolist() == [1, 2]

    def test_missing_view_file(self, tmp_path):
        with pytest.raises(FormatError, match="camera 0"):
            load_label_maps(tmp_path, [make_camera(0, 4, 4)])

    def test_dimension_mismatch(self, tmp_path):
        Image.fromarray(np.zeros((5, 4), dtype=np.uint16)).save(tmp_path / "0.png")
        with pytest.raises(DataError, match="label map"):
            load_label_maps(tmp_path, [make_camera(0, 4, 4)])

    def test_16bit_values_survive(self, tmp_path):
        arr = np.array([[0, 40000], [65535, 7]], dtype=np.int32)
        save_label_maps([LabelMap.from_array(arr)], tmp_path, [0])
        (lm,) = load_label_maps(tmp_path, [make_camera(0, 2, 2)])
        np.testing.assert_array_equal(lm.labels, arr)


class TestColorized:
    def test_label_zero_is_black(self):
        rgb = label_colors(np.array([[0, 3]]), palette_seed=5)
        assert rgb[0, 0].tolist() == [0, 0, 0]
        assert rgb[0, 1].tolist() != [0, 0, 0]

    def test_same_label_same_color_across_views(self, tmp_path):
        maps = [
            LabelMap.from_array(np.full((3, 3), 9, dtype=np.int32)),
            LabelMap.from_array(np.full((3, 3), 9, dtype=np.int32)),
        ]
        save_colorized(maps, tmp_path, [0, 1], palette_seed=2)
        a = np.asarray(Image.open(tmp_path / "0.png"))
        b = np.asarray(Image.open(tmp_path / "1.png"))
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_colors_not_partition(self):
        labels = np.array([[1, 1, 2], [2, 3, 3]])
        a = label_colors(labels, palette_seed=0)
        b = label_colors(labels, palette_seed=1)
        assert not np.array_equal(a, b)

        def partition(rgb):
            flat = [tuple(v) for v in rgb.reshape(-1, 3)]
            groups = {}
            for i, v in enumerate(flat):
                groups.setdefault(v, set()).add(i)
            return sorted(frozenset(g) for g in groups.values())

        assert partition(a) == partition(b)
