"""Desk-scale scenes with known instances, plus controlled mask corruption.

Generated scenes stand in for real captures: K colored Gaussian clusters
(or a bumpy ground plane with objects on it), orbit cameras, and
ground-truth instance labels per Gaussian. Consistent masks are rendered
from the scene itself; corruption then permutes (and optionally splits
or drops) labels per view so the association stage has something real to
repair, while the recorded permutations keep scoring exact.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np

from .rasterizer import BACKGROUND_ALPHA, render
from .scene_io import SH_C0, Camera, GaussianScene, LabelMap

GOLDEN_FRACTION = 0.6180339887498949


@dataclass
class SyntheticSpec:
    n_instances: int = 8
    gaussians_per_instance: int = 250
    layout: str = "random_spheres"  # grid | random_spheres | ground_plane
    spread: float = 4.0  # characteristic distance between cluster centers
    opacity_range: tuple[float, float] = (0.95, 0.99)
    orbit_radius: float = 10.0
    orbit_height: float = 12.0
    n_views: int = 24
    image_width: int = 96
    image_height: int = 96
    seed: int = 0
    corruption: str = "permute"  # permute | permute+split | permute+drop
    corruption_prob: float = 0.0
    camera_order: str = "orbit"  # orbit | interleaved

    def validate(self) -> "SyntheticSpec":
        problems = []
        if self.n_instances < 1:
            problems.append("n_instances must be >= 1")
        if self.n_views < 1:
            problems.append("n_views must be >= 1")
        if self.gaussians_per_instance < 1:
            problems.append("gaussians_per_instance must be >= 1")
        if self.layout not in ("grid", "random_spheres", "ground_plane"):
            problems.append(f"unknown layout {self.layout!r}")
        if self.corruption not in ("permute", "permute+split", "permute+drop"):
            problems.append(f"unknown corruption {self.corruption!r}")
        if not (0 <= self.corruption_prob <= 1):
            problems.append("corruption_prob must be in [0, 1]")
        if self.camera_order not in ("orbit", "interleaved"):
            problems.append(f"unknown camera_order {self.camera_order!r}")
        if not (0 < self.opacity_range[0] <= self.opacity_range[1] <= 1):
            problems.append("opacity_range must satisfy 0 < lo <= hi <= 1")
        if self.spread == 0 and self.n_instances > 1:
            problems.append("spread 0 with more than one instance is degenerate")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def _instance_colors(k: int) -> np.ndarray:
    rgb = [
        colorsys.hsv_to_rgb((i / k + 0.03) % 1.0, 0.75, 0.95) for i in range(k)
    ]
    return np.asarray(rgb)


def _sample_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    k = spec.n_instances
    if spec.layout == "grid":
        side = math.ceil(math.sqrt(k))
        ij = np.array([(i % side, i // side) for i in range(k)], dtype=np.float64)
        centers = np.zeros((k, 3))
        centers[:, :2] = (ij - (side - 1) / 2.0) * spec.spread
        return centers
    # random_spheres: rejection-sample with a minimum pairwise distance,
    # inside a flat pancake that stays well inside the camera orbit
    radius = spec.spread * max(1.0, 0.65 * k ** (1 / 3))
    centers: list[np.ndarray] = []
    for _ in range(50000):
        c = rng.uniform(-radius, radius, 3) * np.array([1.0, 1.0, 0.25])
        if all(np.linalg.norm(c - p) >= spec.spread for p in centers):
            centers.append(c)
            if len(centers) == k:
                return np.asarray(centers)
    raise ValueError("could not place cluster centers; lower n_instances or spread")


def _cluster(
    center: np.ndarray,
    n: int,
    radius: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Positions and scales for one blob of n Gaussians."""
    pos = center + rng.normal(0.0, radius / 2.2, (n, 3))
    base = 1.3 * radius / max(n ** (1 / 3), 1.0)
    scales = base * rng.uniform(0.7, 1.3, (n, 3))
    return pos, scales


def generate(
    spec: SyntheticSpec,
) -> tuple[GaussianScene, np.ndarray, list[Camera]]:
    """Build (scene, per-Gaussian instance label, cameras), seeded."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k, per = spec.n_instances, spec.gaussians_per_instance
    colors = _instance_colors(k)
    positions, scales, gt = [], [], []

    if spec.layout == "ground_plane":
        # Instance 1 is a large bumpy plane, the rest sit on top of it.
        # Dense enough that a grazing view of an object mask sweeps many
        # plane Gaussians behind the object.
        half = 1.6 * spec.spread
        n_plane = per * 6
        pos = np.column_stack(
            [
                rng.uniform(-half, half, n_plane),
                rng.uniform(-half, half, n_plane),
                rng.normal(0.0, 0.05 * spec.spread, n_plane),
            ]
        )
        base = 2.4 * half / math.sqrt(n_plane)
        positions.append(pos)
        scales.append(base * rng.uniform(0.7, 1.3, (n_plane, 3)))
        gt.append(np.full(n_plane, 1, dtype=np.int64))
        blob_r = spec.spread / 3.5
        centers: list[np.ndarray] = []
        for i in range(1, k):
            for _ in range(20000):
                c = np.array(
                    [
                        rng.uniform(-half + blob_r, half - blob_r),
                        rng.uniform(-half + blob_r, half - blob_r),
                        blob_r * 1.2,
                    ]
                )
                if all(
                    np.linalg.norm(c[:2] - p[:2]) >= spec.spread
                    for p in centers
                ):
                    break
            else:
                raise ValueError("could not place objects on the plane")
            centers.append(c)
            pos, sc = _cluster(c, per, blob_r, rng)
            positions.append(pos)
            scales.append(sc)
            gt.append(np.full(per, i + 1, dtype=np.int64))
    else:
        centers = _sample_centers(spec, rng)
        blob_r = spec.spread / 4.0
        for i in range(k):
            pos, sc = _cluster(centers[i], per, blob_r, rng)
            positions.append(pos)
            scales.append(sc)
            gt.append(np.full(per, i + 1, dtype=np.int64))

    positions = np.concatenate(positions)
    scales = np.concatenate(scales)
    gt = np.concatenate(gt)
    n = len(positions)
    quats = rng.normal(0.0, 1.0, (n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacities = rng.uniform(*spec.opacity_range, n)
    sh_dc = (colors[gt - 1] - 0.5) / SH_C0
    scene = GaussianScene(
        positions=positions,
        rotations=quats,
        scales=scales,
        opacities=opacities,
        sh_dc=sh_dc,
        sh_rest=np.zeros((n, 45)),
    ).validate()
    cameras = _orbit_cameras(spec, positions)
    return scene, gt, cameras


def _look_at(eye: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-8:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ eye


def _orbit_cameras(spec: SyntheticSpec, positions: np.ndarray) -> list[Camera]:
    target = positions.mean(axis=0)
    extent = float(np.linalg.norm(positions - target, axis=1).max()) * 1.1
    dist = math.hypot(spec.orbit_radius, spec.orbit_height)
    f = 0.46 * min(spec.image_width, spec.image_height) * dist / max(extent, 1e-6)
    cameras = []
    for v in range(spec.n_views):
        if spec.camera_order == "interleaved":
            theta = 2.0 * math.pi * ((v * GOLDEN_FRACTION) % 1.0)
        else:
            theta = 2.0 * math.pi * v / spec.n_views
        eye = target + np.array(
            [
                spec.orbit_radius * math.cos(theta),
                spec.orbit_radius * math.sin(theta),
                spec.orbit_height,
            ]
        )
        rotation, translation = _look_at(eye, target)
        cameras.append(
            Camera(
                id=v,
                width=spec.image_width,
                height=spec.image_height,
                fx=f,
                fy=f,
                cx=spec.image_width / 2.0,
                cy=spec.image_height / 2.0,
                rotation=rotation,
                translation=translation,
            ).validate()
        )
    return cameras


def render_gt_masks(
    scene: GaussianScene,
    gt_instance: np.ndarray,
    cameras: list[Camera],
) -> list[LabelMap]:
    """Multi-view consistent masks: each pixel takes the instance of its
    highest-blend-weight contributor, 0 where accumulated alpha is low."""
    maps = []
    for cam in cameras:
        rend = render(scene, cam, train_mode=True)
        flat = np.zeros(cam.height * cam.width, dtype=np.int32)
        if len(rend.contrib_pixel):
            order = np.lexsort((rend.contrib_weight, rend.contrib_pixel))
            pix = rend.contrib_pixel[order]
            gidx = rend.contrib_gaussian[order]
            last = np.flatnonzero(np.r_[pix[1:] != pix[:-1], True])
            flat[pix[last]] = gt_instance[gidx[last]]
        flat[rend.alpha_acc.reshape(-1) < BACKGROUND_ALPHA] = 0
        maps.append(LabelMap.from_array(flat.reshape(cam.height, cam.width)))
    return maps


def corrupt(
    maps: list[LabelMap], spec: SyntheticSpec
) -> tuple[list[LabelMap], list[dict[int, int]]]:
    """Per-view label permutation, optionally with mask splits or drops.

    Returns the corrupted maps and, per view, the record mapping each
    corrupted label back to its ground-truth instance.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, 1])
    k = spec.n_instances
    out_maps: list[LabelMap] = []
    records: list[dict[int, int]] = []
    for lm in maps:
        perm = rng.permutation(k) + 1
        out = np.zeros_like(lm.labels)
        rec: dict[int, int] = {}
        for g in lm.labels_present().tolist():
            new = int(perm[g - 1])
            out[lm.labels == g] = new
            rec[new] = g
        fresh = k + 1
        for lab in sorted(rec):
            if spec.corruption == "permute+split" and rng.random() < spec.corruption_prob:
                rows, cols = np.nonzero(out == lab)
                if len(rows) < 2:
                    continue
                angle = rng.uniform(0.0, math.pi)
                side = (cols - cols.mean()) * math.cos(angle) + (
                    rows - rows.mean()
                ) * math.sin(angle) > 0
                if side.any() and (~side).any():
                    out[rows[side], cols[side]] = fresh
                    rec[fresh] = rec[lab]
                    fresh += 1
            elif spec.corruption == "permute+drop" and rng.random() < spec.corruption_prob:
                out[out == lab] = 0
                del rec[lab]
        out_maps.append(LabelMap.from_array(out))
        records.append(rec)
    return out_maps, records


def association_accuracy(log, records: list[dict[int, int]]) -> float:
    """Fraction of masks assigned the majority group of their instance.

    Each ground-truth instance is mapped to the group that received most
    of its masks (ties to the smaller group id); a mask counts as correct
    when its assigned group matches that majority group. Views are keyed
    by camera id, matching the generated cameras.
    """
    entries = [e for e in log if e.label > 0]
    if not entries:
        return 0.0
    counts: dict[int, dict[int, int]] = {}
    gts = []
    for e in entries:
        t = records[e.view].get(e.label)
        gts.append(t)
        if t is None:
            continue
        counts.setdefault(t, {})
        counts[t][e.group] = counts[t].get(e.group, 0) + 1
    majority = {
        t: min((g for g in by if by[g] == max(by.values())))
        for t, by in counts.items()
    }
    correct = sum(
        1
        for e, t in zip(entries, gts)
        if t is not None and e.group > 0 and majority.get(t) == e.group
    )
    return correct / len(entries)
