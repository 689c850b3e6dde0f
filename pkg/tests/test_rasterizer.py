"""Blending math: footprints, compositing weights, feature gradients."""

import numpy as np
import pytest

from splatseg.rasterizer import (
    backward_identity,
    evaluate_sh_colors,
    project_footprint,
    render,
)
from splatseg.scene_io import SH_C0, Camera, GaussianScene


def make_camera(width=16, height=16, f=16.0):
    return Camera(
        id=0,
        width=width,
        height=height,
        fx=f,
        fy=f,
        cx=width / 2.0,
        cy=height / 2.0,
        rotation=np.eye(3),
        translation=np.zeros(3),
    ).validate()


def build_scene(positions, scales, opacities, colors, quats=None):
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    if quats is None:
        quats = np.zeros((n, 4))
        quats[:, 0] = 1.0
    return GaussianScene(
        positions=positions,
        rotations=np.asarray(quats, dtype=np.float64),
        scales=np.asarray(scales, dtype=np.float64),
        opacities=np.asarray(opacities, dtype=np.float64),
        sh_dc=(np.asarray(colors, dtype=np.float64) - 0.5) / SH_C0,
        sh_rest=np.zeros((n, 45)),
    ).validate()


def random_scene(n, seed, depth_range=(1.5, 4.0)):
    rng = np.random.default_rng(seed)
    quats = rng.normal(0, 1, (n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return build_scene(
        positions=np.column_stack(
            [rng.uniform(-0.8, 0.8, (n, 2)), rng.uniform(*depth_range, (n, 1))]
        ),
        scales=rng.uniform(0.02, 0.15, (n, 3)),
        opacities=rng.uniform(0.1, 1.0, n),
        colors=rng.uniform(0, 1, (n, 3)),
        quats=quats,
    )


class TestFootprint:
    def test_isotropic_on_axis_closed_form(self):
        s, z, f = 0.2, 2.0, 16.0
        scene = build_scene([[0, 0, z]], [[s, s, s]], [0.9], [[1, 0, 0]])
        fp = project_footprint(scene, make_camera(f=f))
        expect = np.diag([(f * s / z) ** 2 + 0.3, (f * s / z) ** 2 + 0.3])
        np.testing.assert_allclose(fp.cov[0], expect, rtol=1e-9, atol=1e-12)
        assert not fp.culled[0]

    def test_behind_camera_culled(self):
        scene = build_scene([[0, 0, -1.0]], [[0.1] * 3], [0.9], [[1, 0, 0]])
        fp = project_footprint(scene, make_camera())
        assert fp.culled[0]

    def test_far_off_screen_culled(self):
        scene = build_scene([[50.0, 0, 2.0]], [[0.01] * 3], [0.9], [[1, 0, 0]])
        fp = project_footprint(scene, make_camera())
        assert fp.culled[0]

    def test_covariance_symmetric_psd_random(self):
        scene = random_scene(1000, seed=3)
        fp = project_footprint(scene, make_camera())
        np.testing.assert_allclose(fp.cov[:, 0, 1], fp.cov[:, 1, 0], atol=1e-12)
        eig = np.linalg.eigvalsh(fp.cov)
        assert np.all(eig > 0)


class TestRender:
    def test_single_opaque_gaussian_center_pixel(self):
        color = np.array([0.8, 0.2, 0.1])
        # center at pixel (8, 8): x = f*x/z + 8 = 8
        scene = build_scene([[0, 0, 2.0]], [[0.3] * 3], [1.0], [color])
        rend = render(scene, make_camera(), train_mode=True)
        np.testing.assert_allclose(rend.color[8, 8], 0.99 * color, atol=1e-3)
        contribs = rend.contribs_at(8, 8)
        assert len(contribs) == 1
        assert contribs[0][1] == pytest.approx(0.99, abs=1e-6)

    def test_two_gaussian_hand_blend(self):
        red, blue = np.array([1.0, 0, 0]), np.array([0, 0, 1.0])
        scene = build_scene(
            [[0, 0, 2.0], [0, 0, 3.0]],
            [[0.3] * 3, [0.45] * 3],
            [0.6, 1.0],
            [red, blue],
        )
        rend = render(scene, make_camera())
        expect = 0.6 * red + (1 - 0.6) * 0.99 * blue
        np.testing.assert_allclose(rend.color[8, 8], expect, atol=1e-3)
        # matches the ideal unclamped blend within the clamping tolerance
        np.testing.assert_allclose(rend.color[8, 8], 0.6 * red + 0.4 * blue, atol=5e-3)

    def test_empty_scene_black(self):
        scene = build_scene(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3))
        )
        rend, labels = render(
            scene,
            make_camera(),
            identities=np.zeros((0, 16)),
            classifier=(np.zeros((3, 16)), np.zeros(3)),
        )
        assert rend.color.max() == 0
        assert rend.alpha_acc.max() == 0
        assert labels.labels.max() == 0

    def test_weights_sum_below_one(self):
        scene = random_scene(200, seed=5)
        rend = render(scene, make_camera(), train_mode=True)
        total = np.zeros(16 * 16)
        np.add.at(total, rend.contrib_pixel, rend.contrib_weight)
        assert np.all(total <= 1.0 + 1e-12)
        np.testing.assert_allclose(total, rend.alpha_acc.reshape(-1), atol=1e-12)

    def test_transparent_gaussian_changes_nothing(self):
        scene = random_scene(50, seed=8)
        base = render(scene, make_camera())
        extra = GaussianScene(
            positions=np.vstack([scene.positions, [[0, 0, 2.0]]]),
            rotations=np.vstack([scene.rotations, [[1.0, 0, 0, 0]]]),
            scales=np.vstack([scene.scales, [[0.3] * 3]]),
            opacities=np.append(scene.opacities, 0.0),
            sh_dc=np.vstack([scene.sh_dc, [[1.0, 1.0, 1.0]]]),
            sh_rest=np.vstack([scene.sh_rest, np.zeros((1, 45))]),
        )
        out = render(extra, make_camera())
        np.testing.assert_allclose(out.color, base.color, atol=1e-12)
        np.testing.assert_allclose(out.alpha_acc, base.alpha_acc, atol=1e-12)

    def test_storage_order_invariance(self):
        scene = random_scene(80, seed=2)
        rng = np.random.default_rng(0)
        perm = rng.permutation(80)
        permuted = GaussianScene(
            positions=scene.positions[perm],
            rotations=scene.rotations[perm],
            scales=scene.scales[perm],
            opacities=scene.opacities[perm],
            sh_dc=scene.sh_dc[perm],
            sh_rest=scene.sh_rest[perm],
        )
        a = render(scene, make_camera())
        b = render(permuted, make_camera())
        np.testing.assert_allclose(a.color, b.color, atol=1e-9)
        np.testing.assert_allclose(a.alpha_acc, b.alpha_acc, atol=1e-9)

    def test_feature_rendering_linear_in_identities(self):
        scene = random_scene(40, seed=6)
        rng = np.random.default_rng(1)
        e1 = rng.normal(0, 1, (40, 16))
        e2 = rng.normal(0, 1, (40, 16))
        cam = make_camera()
        fa = render(scene, cam, identities=e1).feature
        fb = render(scene, cam, identities=e2).feature
        fc = render(scene, cam, identities=2.5 * e1 - 0.5 * e2).feature
        np.testing.assert_allclose(fc, 2.5 * fa - 0.5 * fb, atol=1e-9)

    def test_contributors_sorted_by_depth(self):
        scene = build_scene(
            [[0, 0, 3.0], [0, 0, 1.5], [0, 0, 2.2]],
            [[0.2] * 3] * 3,
            [0.5, 0.5, 0.5],
            [[1, 0, 0]] * 3,
        )
        rend = render(scene, make_camera(), train_mode=True)
        order = [g for g, _ in rend.contribs_at(8, 8)]
        assert order == [1, 2, 0]

    def test_label_map_from_classifier(self):
        scene = build_scene([[0, 0, 2.0]], [[0.3] * 3], [1.0], [[1, 0, 0]])
        ident = np.zeros((1, 16))
        ident[0, 3] = 1.0
        weights = np.zeros((3, 16))
        weights[2, 3] = 5.0  # feature channel 3 votes for class 2
        rend, labels = render(
            scene, make_camera(), identities=ident, classifier=(weights, np.zeros(3))
        )
        assert labels.labels[8, 8] == 2
        assert labels.labels[0, 0] == 0  # empty background stays 0

    def test_sh_rest_changes_color_with_view(self):
        scene = build_scene([[0, 1.0, 2.0]], [[0.3] * 3], [1.0], [[0.5, 0.5, 0.5]])
        scene.sh_rest[0, 0] = 0.8  # degree-1 red coefficient (y basis)
        cam_a = make_camera()  # center (0, 0, 0): view dir has y > 0
        cam_b = Camera(
            id=1,
            width=16,
            height=16,
            fx=16.0,
            fy=16.0,
            cx=8.0,
            cy=8.0,
            rotation=np.eye(3),
            translation=np.array([0.0, -2.0, 0.0]),
        ).validate()  # center (0, 2, 0): view dir has y < 0
        a = evaluate_sh_colors(scene, cam_a)
        b = evaluate_sh_colors(scene, cam_b)
        assert not np.allclose(a, b)
        scene.sh_rest[:] = 0.0
        np.testing.assert_allclose(
            evaluate_sh_colors(scene, cam_a), evaluate_sh_colors(scene, cam_b)
        )


class TestBackwardIdentity:
    def test_single_contributor_linearity(self):
        scene = build_scene([[0, 0, 2.0]], [[0.002] * 3], [0.8], [[1, 0, 0]])
        rend = render(scene, make_camera(), train_mode=True)
        g = np.zeros((16, 16, 16))
        grad_dir = np.arange(16.0)
        # every touched pixel gets the same upstream gradient
        g[:, :] = grad_dir
        grads = backward_identity(rend, g)
        total_w = rend.contrib_weight.sum()
        np.testing.assert_allclose(grads[0], total_w * grad_dir, atol=1e-12)

    def test_zero_grads(self):
        scene = random_scene(5, seed=1)
        rend = render(scene, make_camera(), train_mode=True)
        grads = backward_identity(rend, np.zeros((16, 16, 16)))
        assert np.all(grads == 0)

    def test_requires_train_mode(self):
        scene = random_scene(5, seed=1)
        rend = render(scene, make_camera())
        with pytest.raises(ValueError, match="train"):
            backward_identity(rend, np.zeros((16, 16, 16)))

    def test_finite_difference_match(self):
        scene = random_scene(5, seed=4)
        cam = make_camera()
        rng = np.random.default_rng(9)
        identities = rng.normal(0, 1, (5, 16))
        pixel_grads = rng.normal(0, 1, (16, 16, 16))

        def objective(e):
            feat = render(scene, cam, identities=e).feature
            return float((feat * pixel_grads).sum())

        rend = render(scene, cam, identities=identities, train_mode=True)
        analytic = backward_identity(rend, pixel_grads)
        eps = 1e-3
        worst = 0.0
        for i in range(5):
            for c in range(0, 16, 5):
                bump = identities.copy()
                bump[i, c] += eps
                dip = identities.copy()
                dip[i, c] -= eps
                numeric = (objective(bump) - objective(dip)) / (2 * eps)
                denom = max(abs(numeric), abs(analytic[i, c]), 1e-12)
                worst = max(worst, abs(numeric - analytic[i, c]) / denom)
        assert worst < 1e-4
