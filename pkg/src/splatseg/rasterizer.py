"""Depth-sorted alpha blending of colors and per-Gaussian feature vectors.

Per pixel, contributors are the non-culled Gaussians whose elliptical
footprint covers the pixel within 3 sigma, blended front to back:
``out = sum_i v_i * alpha_i * prod_{j<i} (1 - alpha_j)`` where
``alpha_i = opacity_i * exp(-0.5 d^T Sigma'^-1 d)``. The same blend
weights drive the color image, the feature image, and (in train mode)
the recorded per-pixel contributor lists, so feature gradients are exact
by linearity.

Footprints come from the standard EWA projection ``Sigma' = J W Sigma
W^T J^T`` with 0.3 px^2 added to the diagonal; footprint cutoff is the
3-sigma ellipse. Both values follow common splatting practice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import DEFAULT_NEAR
from .scene_io import Camera, GaussianScene, LabelMap

ALPHA_CLAMP = 0.99
TRANSMITTANCE_FLOOR = 1e-4
BACKGROUND_ALPHA = 0.5
COV_DILATION = 0.3

_SH_C0 = 0.28209479177387814
_SH_C1 = 0.4886025119029199
_SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
          -1.0925484305920792, 0.5462742152960396)
_SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
          0.3731763325901154, -0.4570457994644658, 1.445305721320277,
          -0.5900435899266435)


@dataclass
class Footprints:
    """Projected 2D Gaussians for one view."""

    mean_xy: np.ndarray  # (N, 2)
    cov: np.ndarray  # (N, 2, 2) positive definite
    depth: np.ndarray  # (N,)
    culled: np.ndarray  # (N,) bool


@dataclass
class Render2D:
    """One rendered view plus optional training-time contributor lists."""

    color: np.ndarray  # (H, W, 3) in [0, 1]
    alpha_acc: np.ndarray  # (H, W) accumulated blend weight
    feature: np.ndarray | None  # (H, W, F) when identities were given
    width: int
    height: int
    n_gaussians: int
    contrib_gaussian: np.ndarray | None = None  # (M,) Gaussian index
    contrib_pixel: np.ndarray | None = None  # (M,) row * width + col
    contrib_weight: np.ndarray | None = None  # (M,) blend weight

    @property
    def has_contribs(self) -> bool:
        return self.contrib_gaussian is not None

    def contribs_at(self, col: int, row: int) -> list[tuple[int, float]]:
        """Ordered (gaussian index, weight) contributors of one pixel."""
        if not self.has_contribs:
            raise ValueError("render was not produced in train mode")
        sel = self.contrib_pixel == row * self.width + col
        return list(
            zip(
                self.contrib_gaussian[sel].tolist(),
                self.contrib_weight[sel].tolist(),
            )
        )


def quaternion_rotation_matrices(q: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions (w, x, y, z) to (N, 3, 3) matrices."""
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((len(q), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def evaluate_sh_colors(scene: GaussianScene, camera: Camera) -> np.ndarray:
    """Per-Gaussian RGB along the ray from the camera center, in [0, 1].

    sh_rest is channel-major: columns 0..14 are the red coefficients for
    degrees 1..3, then green, then blue. All-zero rest degenerates to
    the DC term.
    """
    rgb = _SH_C0 * scene.sh_dc + 0.5
    if scene.count and np.any(scene.sh_rest):
        d = scene.positions - camera.center
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
        x, y, z = d[:, 0], d[:, 1], d[:, 2]
        xx, yy, zz = x * x, y * y, z * z
        basis = np.stack(
            [
                -_SH_C1 * y,
                _SH_C1 * z,
                -_SH_C1 * x,
                _SH_C2[0] * x * y,
                _SH_C2[1] * y * z,
                _SH_C2[2] * (2 * zz - xx - yy),
                _SH_C2[3] * x * z,
                _SH_C2[4] * (xx - yy),
                _SH_C3[0] * y * (3 * xx - yy),
                _SH_C3[1] * x * y * z,
                _SH_C3[2] * y * (4 * zz - xx - yy),
                _SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                _SH_C3[4] * x * (4 * zz - xx - yy),
                _SH_C3[5] * z * (xx - yy),
                _SH_C3[6] * x * (xx - 3 * yy),
            ],
            axis=1,
        )  # (N, 15)
        rest = scene.sh_rest.reshape(scene.count, 3, 15)
        rgb = rgb + np.einsum("nk,nck->nc", basis, rest)
    return np.clip(rgb, 0.0, 1.0)


def project_footprint(
    scene: GaussianScene, camera: Camera, near: float = DEFAULT_NEAR
) -> Footprints:
    """EWA-project 3D covariances to screen-space 2x2 covariances."""
    n = scene.count
    if n == 0:
        return Footprints(
            mean_xy=np.empty((0, 2)),
            cov=np.empty((0, 2, 2)),
            depth=np.empty(0),
            culled=np.empty(0, dtype=bool),
        )
    R = quaternion_rotation_matrices(scene.rotations)
    M = R * scene.scales[:, None, :]
    cov3d = M @ np.transpose(M, (0, 2, 1))
    W = camera.rotation
    cov_cam = np.einsum("ij,njk,lk->nil", W, cov3d, W)
    p = camera.world_to_camera(scene.positions)
    depth = p[:, 2]
    safe_z = np.where(depth > near, depth, 1.0)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = camera.fx / safe_z
    J[:, 0, 2] = -camera.fx * p[:, 0] / safe_z**2
    J[:, 1, 1] = camera.fy / safe_z
    J[:, 1, 2] = -camera.fy * p[:, 1] / safe_z**2
    cov2d = np.einsum("nij,njk,nlk->nil", J, cov_cam, J)
    cov2d[:, 0, 0] += COV_DILATION
    cov2d[:, 1, 1] += COV_DILATION
    mean_xy = np.stack(
        [camera.fx * p[:, 0] / safe_z + camera.cx,
         camera.fy * p[:, 1] / safe_z + camera.cy],
        axis=1,
    )
    rx = 3.0 * np.sqrt(cov2d[:, 0, 0])
    ry = 3.0 * np.sqrt(cov2d[:, 1, 1])
    culled = (
        (depth <= near)
        | (mean_xy[:, 0] + rx < 0)
        | (mean_xy[:, 0] - rx > camera.width - 1)
        | (mean_xy[:, 1] + ry < 0)
        | (mean_xy[:, 1] - ry > camera.height - 1)
    )
    return Footprints(mean_xy=mean_xy, cov=cov2d, depth=depth, culled=culled)


def render(
    scene: GaussianScene,
    camera: Camera,
    identities: np.ndarray | None = None,
    classifier: tuple[np.ndarray, np.ndarray] | None = None,
    train_mode: bool = False,
    near: float = DEFAULT_NEAR,
    alpha_clamp: float = ALPHA_CLAMP,
    transmittance_floor: float = TRANSMITTANCE_FLOOR,
    background_alpha: float = BACKGROUND_ALPHA,
):
    """Render one view front to back.

    Returns a Render2D, or (Render2D, LabelMap) when a classifier
    (weights of shape (C, F), bias of shape (C,)) is given: the label is
    the argmax class of the blended feature, forced to 0 wherever the
    accumulated alpha stays below ``background_alpha``.
    """
    h, w = camera.height, camera.width
    n = scene.count
    feat_dim = 0
    if identities is not None:
        identities = np.asarray(identities, dtype=np.float64)
        if len(identities) != n:
            raise ValueError("identities length does not match scene")
        feat_dim = identities.shape[1]
    if classifier is not None:
        if identities is None:
            raise ValueError("classifier requires identities")
        cw, cb = classifier
        if cw.shape[1] != feat_dim or cw.shape[0] != len(cb):
            raise ValueError("classifier shape does not match identities")

    color = np.zeros((h, w, 3))
    alpha_acc = np.zeros((h, w))
    feature = np.zeros((h, w, feat_dim)) if identities is not None else None
    transmittance = np.ones((h, w))
    contrib_g: list[np.ndarray] = []
    contrib_p: list[np.ndarray] = []
    contrib_w: list[np.ndarray] = []

    fp = project_footprint(scene, camera, near=near)
    live = np.flatnonzero(~fp.culled)
    if len(live):
        order = live[np.lexsort((live, fp.depth[live]))]
        colors = evaluate_sh_colors(scene, camera)
        det = (
            fp.cov[:, 0, 0] * fp.cov[:, 1, 1] - fp.cov[:, 0, 1] * fp.cov[:, 1, 0]
        )
        for gi in order:
            mx, my = fp.mean_xy[gi]
            rx = 3.0 * np.sqrt(fp.cov[gi, 0, 0])
            ry = 3.0 * np.sqrt(fp.cov[gi, 1, 1])
            x0 = max(0, int(np.floor(mx - rx)))
            x1 = min(w - 1, int(np.ceil(mx + rx)))
            y0 = max(0, int(np.floor(my - ry)))
            y1 = min(h - 1, int(np.ceil(my + ry)))
            if x0 > x1 or y0 > y1:
                continue
            ia = fp.cov[gi, 1, 1] / det[gi]
            ib = -fp.cov[gi, 0, 1] / det[gi]
            ic = fp.cov[gi, 0, 0] / det[gi]
            dx = np.arange(x0, x1 + 1) - mx
            dy = np.arange(y0, y1 + 1) - my
            maha = (
                ia * dx[None, :] ** 2
                + 2.0 * ib * dy[:, None] * dx[None, :]
                + ic * dy[:, None] ** 2
            )
            patch_t = transmittance[y0 : y1 + 1, x0 : x1 + 1]
            alpha = np.where(
                maha <= 9.0,
                np.minimum(scene.opacities[gi] * np.exp(-0.5 * maha), alpha_clamp),
                0.0,
            )
            weight = np.where(patch_t >= transmittance_floor, patch_t * alpha, 0.0)
            if not weight.any():
                continue
            color[y0 : y1 + 1, x0 : x1 + 1] += weight[:, :, None] * colors[gi]
            if feature is not None:
                feature[y0 : y1 + 1, x0 : x1 + 1] += (
                    weight[:, :, None] * identities[gi]
                )
            alpha_acc[y0 : y1 + 1, x0 : x1 + 1] += weight
            transmittance[y0 : y1 + 1, x0 : x1 + 1] = np.where(
                weight > 0, patch_t * (1.0 - alpha), patch_t
            )
            if train_mode:
                yy, xx = np.nonzero(weight)
                contrib_g.append(np.full(len(yy), gi, dtype=np.int64))
                contrib_p.append((yy + y0) * w + (xx + x0))
                contrib_w.append(weight[yy, xx])

    out = Render2D(
        color=color,
        alpha_acc=alpha_acc,
        feature=feature,
        width=w,
        height=h,
        n_gaussians=n,
    )
    if train_mode:
        out.contrib_gaussian = (
            np.concatenate(contrib_g) if contrib_g else np.empty(0, dtype=np.int64)
        )
        out.contrib_pixel = (
            np.concatenate(contrib_p) if contrib_p else np.empty(0, dtype=np.int64)
        )
        out.contrib_weight = (
            np.concatenate(contrib_w) if contrib_w else np.empty(0)
        )
    if classifier is None:
        return out
    logits = feature @ cw.T + cb
    labels = np.argmax(logits, axis=-1).astype(np.int32)
    labels[alpha_acc < background_alpha] = 0
    return out, LabelMap.from_array(labels)


def backward_identity(rend: Render2D, pixel_grads: np.ndarray) -> np.ndarray:
    """Exact feature gradients: grad(e_i) = sum_pixels w_i(p) * g(p).

    Valid because the blended feature is linear in each identity vector.
    """
    if not rend.has_contribs:
        raise ValueError("backward requires a train-mode render")
    h, w = rend.height, rend.width
    if pixel_grads.shape[:2] != (h, w):
        raise ValueError("pixel_grads shape does not match render")
    feat_dim = pixel_grads.shape[2]
    flat = pixel_grads.reshape(h * w, feat_dim)
    grads = np.zeros((rend.n_gaussians, feat_dim))
    np.add.at(
        grads,
        rend.contrib_gaussian,
        rend.contrib_weight[:, None] * flat[rend.contrib_pixel],
    )
    return grads
