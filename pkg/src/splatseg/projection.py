"""Project Gaussian centers into a view and find the Gaussians behind a mask.

A mask's 3D proxy is built per image patch: within each cell of a grid
(default 32x32) the visible in-mask Gaussians are depth-sorted and only
the front fraction is kept, so the selection follows the mask's shape
instead of collapsing onto its nearest region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene_io import Camera, GaussianScene, LabelMap

DEFAULT_FRONT_PCT = 20.0
DEFAULT_GRID = (32, 32)
DEFAULT_OPACITY_FLOOR = 0.1
DEFAULT_NEAR = 0.01


@dataclass
class ProjectedGaussians:
    """Per-Gaussian projection into one view."""

    pixel_xy: np.ndarray  # (N, 2) continuous pixel coordinates
    depth: np.ndarray  # (N,) camera-space z
    visible: np.ndarray  # (N,) bool

    @property
    def pixel_ij(self) -> np.ndarray:
        """Rounded (col, row) integer pixel per Gaussian."""
        return np.rint(self.pixel_xy).astype(np.int64)


@dataclass(frozen=True)
class PatchGrid:
    """Grid of image cells; cells tile the image exactly."""

    rows: int = DEFAULT_GRID[0]
    cols: int = DEFAULT_GRID[1]

    def cell_of(self, col: np.ndarray, row: np.ndarray, width: int, height: int):
        """Flat cell index for integer pixel coordinates."""
        cw = math.ceil(width / self.cols)
        ch = math.ceil(height / self.rows)
        ci = np.minimum(np.asarray(col) // cw, self.cols - 1)
        ri = np.minimum(np.asarray(row) // ch, self.rows - 1)
        return ri * self.cols + ci


@dataclass
class CorrespondingSet:
    """Sorted, duplicate-free Gaussian indices standing in for one mask."""

    indices: np.ndarray  # (M,) int64, sorted ascending

    def __len__(self) -> int:
        return len(self.indices)

    def as_set(self) -> set[int]:
        return set(int(i) for i in self.indices)


def project(
    scene: GaussianScene,
    camera: Camera,
    near: float = DEFAULT_NEAR,
    opacity_floor: float = DEFAULT_OPACITY_FLOOR,
) -> ProjectedGaussians:
    """Pinhole-project all Gaussian centers into a camera.

    Visible means: depth > near, opacity >= opacity_floor, and both the
    continuous and the rounded pixel fall inside the image.
    """
    cam_pts = camera.world_to_camera(scene.positions)
    depth = cam_pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = camera.fx * cam_pts[:, 0] / depth + camera.cx
        y = camera.fy * cam_pts[:, 1] / depth + camera.cy
    pixel_xy = np.stack([x, y], axis=1)
    ij = np.rint(pixel_xy)
    visible = (
        (depth > near)
        & (scene.opacities >= opacity_floor)
        & (x >= 0)
        & (x < camera.width)
        & (y >= 0)
        & (y < camera.height)
        & (ij[:, 0] >= 0)
        & (ij[:, 0] < camera.width)
        & (ij[:, 1] >= 0)
        & (ij[:, 1] < camera.height)
    )
    pixel_xy[~np.isfinite(pixel_xy)] = -1.0
    return ProjectedGaussians(pixel_xy=pixel_xy, depth=depth, visible=visible)


def corresponding_gaussians(
    mask_label: int,
    label_map: LabelMap,
    proj: ProjectedGaussians,
    grid: PatchGrid = PatchGrid(),
    front_pct: float = DEFAULT_FRONT_PCT,
) -> CorrespondingSet:
    """Front-fraction depth selection of in-mask Gaussians, per grid cell.

    Within each cell the visible Gaussians whose rounded pixel carries
    ``mask_label`` are sorted by (depth, index) and the first
    ceil(front_pct/100 * n) survive; the union over cells is returned.
    An unknown label yields an empty set.
    """
    if not (0 < front_pct <= 100):
        raise ValueError("front_pct must be in (0, 100]")
    if mask_label <= 0:
        raise ValueError("mask_label must be positive")
    cand = np.flatnonzero(proj.visible)
    if len(cand) == 0:
        return CorrespondingSet(indices=np.empty(0, dtype=np.int64))
    ij = proj.pixel_ij[cand]
    in_mask = label_map.labels[ij[:, 1], ij[:, 0]] == mask_label
    cand = cand[in_mask]
    if len(cand) == 0:
        return CorrespondingSet(indices=np.empty(0, dtype=np.int64))
    ij = ij[in_mask]
    cells = grid.cell_of(ij[:, 0], ij[:, 1], label_map.width, label_map.height)
    depth = proj.depth[cand]
    # Sort by (cell, depth, index); within each cell run, keep the front
    # ceil-fraction so a non-empty cell always contributes.
    order = np.lexsort((cand, depth, cells))
    cells_sorted = cells[order]
    cand_sorted = cand[order]
    starts = np.flatnonzero(np.r_[True, cells_sorted[1:] != cells_sorted[:-1]])
    ends = np.r_[starts[1:], len(cells_sorted)]
    keep_counts = np.ceil(front_pct / 100.0 * (ends - starts)).astype(np.int64)
    pick = np.concatenate(
        [cand_sorted[s : s + k] for s, k in zip(starts, keep_counts)]
    )
    return CorrespondingSet(indices=np.sort(pick))
