"""File formats for Gaussian splat scenes, pinhole cameras, and label maps.

Scenes travel as binary little-endian splat PLY (the de-facto layout:
x, y, z, nx, ny, nz, f_dc_0..2, f_rest_0..44, opacity, scale_0..2,
rot_0..3, all float32). Opacity is stored as a logit and scale as a
natural log; both are activated on load and inverted on save. Cameras
travel as a JSON array of pinhole records, label maps as 16-bit
single-channel PNGs named ``<camera_id>.png``.

Camera convention: camera-space point = R @ p + t, +z is the viewing
direction, pixel = (fx*x/z + cx, fy*y/z + cy).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """A file does not conform to the expected layout."""


class DataError(ValueError):
    """A file parses but carries invalid values."""


_LOGIT_CLAMP = 16.0  # sigmoid(16) ~ 1 - 1.1e-7, keeps round-trips finite

SH_C0 = 0.28209479177387814

PLY_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        z = np.log(p) - np.log1p(-p)
    return np.clip(z, -_LOGIT_CLAMP, _LOGIT_CLAMP)


@dataclass
class GaussianScene:
    """A pre-trained splat scene: one row per Gaussian, activated values."""

    positions: np.ndarray  # (N, 3) world units
    rotations: np.ndarray  # (N, 4) unit quaternions, (w, x, y, z)
    scales: np.ndarray  # (N, 3) > 0, world units
    opacities: np.ndarray  # (N,) in [0, 1]
    sh_dc: np.ndarray  # (N, 3) DC spherical-harmonic term
    sh_rest: np.ndarray  # (N, 45) degree-1..3 coefficients, may be zero

    @property
    def count(self) -> int:
        return len(self.positions)

    def validate(self) -> "GaussianScene":
        n = self.count
        shapes = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "scales": (n, 3),
            "opacities": (n,),
            "sh_dc": (n, 3),
            "sh_rest": (n, 45),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DataError(f"{name} has shape {arr.shape}, expected {shape}")
            bad = ~np.isfinite(arr)
            if bad.any():
                idx = int(np.argwhere(bad)[0][0])
                raise DataError(f"non-finite value in {name} at index {idx}")
        if n:
            norms = np.linalg.norm(self.rotations, axis=1)
            off = np.abs(norms - 1.0)
            if (off > 1e-3).any():
                idx = int(np.argmax(off))
                raise DataError(
                    f"quaternion {idx} has norm {norms[idx]:.6f}, not unit within 1e-3"
                )
            # Renormalize only past float32 storage noise so that a
            # load/save cycle is byte-stable.
            fix = off > 1e-6
            if fix.any():
                self.rotations = self.rotations.copy()
                self.rotations[fix] /= norms[fix, None]
            if (self.opacities < 0).any() or (self.opacities > 1).any():
                idx = int(np.argmax((self.opacities < 0) | (self.opacities > 1)))
                raise DataError(f"opacity {idx} outside [0, 1]")
            if (self.scales <= 0).any():
                idx = int(np.argwhere(self.scales <= 0)[0][0])
                raise DataError(f"scale {idx} not positive")
        return self

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.positions.copy(),
            self.rotations.copy(),
            self.scales.copy(),
            self.opacities.copy(),
            self.sh_dc.copy(),
            self.sh_rest.copy(),
        )


@dataclass
class Camera:
    """Pinhole camera, world-to-camera extrinsics."""

    id: int
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world-to-camera
    translation: np.ndarray  # (3,) world-to-camera

    def validate(self) -> "Camera":
        if not (self.fx > 0 and self.fy > 0):
            raise DataError(f"camera {self.id}: focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DataError(f"camera {self.id}: principal point outside image")
        R = np.asarray(self.rotation, dtype=np.float64)
        if R.shape != (3, 3):
            raise DataError(f"camera {self.id}: rotation must be 3x3")
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-5:
            raise DataError(
                f"camera {self.id}: rotation not orthonormal (deviation {err:.2e})"
            )
        return self

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space."""
        return -self.rotation.T @ self.translation


@dataclass
class LabelMap:
    """Integer instance map; 0 means unlabeled."""

    width: int
    height: int
    labels: np.ndarray  # (H, W) non-negative int32

    @classmethod
    def from_array(cls, labels: np.ndarray) -> "LabelMap":
        labels = np.asarray(labels, dtype=np.int32)
        if labels.ndim != 2:
            raise DataError("label array must be 2-D")
        if (labels < 0).any():
            raise DataError("label values must be non-negative")
        h, w = labels.shape
        return cls(width=w, height=h, labels=labels)

    def labels_present(self) -> np.ndarray:
        """Sorted distinct nonzero labels."""
        vals = np.unique(self.labels)
        return vals[vals > 0]


# ---------------------------------------------------------------------------
# Splat PLY
# ---------------------------------------------------------------------------


def _read_ply_header(f) -> tuple[list[str], int]:
    magic = f.readline().strip()
    if magic != b"ply":
        raise FormatError("not a PLY file")
    fmt = f.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise FormatError("only binary_little_endian 1.0 PLY is supported")
    names: list[str] = []
    count = None
    while True:
        line = f.readline()
        if not line:
            raise FormatError("unexpected end of header")
        line = line.strip()
        if line == b"end_header":
            break
        parts = line.decode("ascii").split()
        if parts[0] == "comment":
            continue
        if parts[0] == "element":
            if parts[1] == "vertex":
                count = int(parts[2])
            elif count is not None:
                raise FormatError("unsupported element after vertex")
            continue
        if parts[0] == "property":
            if parts[1] != "float":
                raise FormatError(f"property {parts[-1]} is not float")
            names.append(parts[2])
    if count is None:
        raise FormatError("missing vertex element")
    return names, count


def load_gaussian_ply(path: str | os.PathLike) -> GaussianScene:
    """Load a splat PLY; applies sigmoid to opacity and exp to scales."""
    with open(path, "rb") as f:
        names, count = _read_ply_header(f)
        for required in PLY_PROPERTIES:
            if required not in names:
                raise FormatError(f"missing property {required}")
        dtype = np.dtype([(n, "<f4") for n in names])
        raw = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype, count=count)

    def cols(prefix, k):
        return np.stack(
            [raw[f"{prefix}_{i}"].astype(np.float64) for i in range(k)], axis=1
        )

    positions = np.stack(
        [raw[n].astype(np.float64) for n in ("x", "y", "z")], axis=1
    )
    scene = GaussianScene(
        positions=positions,
        rotations=cols("rot", 4),
        scales=np.exp(cols("scale", 3)),
        opacities=sigmoid(raw["opacity"].astype(np.float64)),
        sh_dc=cols("f_dc", 3),
        sh_rest=cols("f_rest", 45),
    )
    for name in ("positions", "rotations", "scales", "opacities", "sh_dc", "sh_rest"):
        arr = getattr(scene, name)
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad)[0][0])
            raise DataError(f"non-finite value in {name} at index {idx}")
    return scene.validate()


def save_gaussian_ply(scene: GaussianScene, path: str | os.PathLike) -> None:
    """Write a splat PLY, inverting the load-time activations."""
    scene.validate()
    n = scene.count
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        + "".join(f"property float {name}\n" for name in PLY_PROPERTIES)
        + "end_header\n"
    )
    data = np.zeros(n, dtype=np.dtype([(name, "<f4") for name in PLY_PROPERTIES]))
    for i, axis in enumerate(("x", "y", "z")):
        data[axis] = scene.positions[:, i]
    for i in range(3):
        data[f"f_dc_{i}"] = scene.sh_dc[:, i]
    for i in range(45):
        data[f"f_rest_{i}"] = scene.sh_rest[:, i]
    data["opacity"] = logit(scene.opacities) if n else 0
    for i in range(3):
        data[f"scale_{i}"] = np.log(scene.scales[:, i]) if n else 0
    for i in range(4):
        data[f"rot_{i}"] = scene.rotations[:, i]
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------


def load_cameras(path: str | os.PathLike) -> list[Camera]:
    """Load a JSON camera list, sorted by id."""
    with open(path, "r", encoding="utf-8") as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise FormatError("camera file must hold a JSON array")
    cameras = []
    for rec in records:
        try:
            cam = Camera(
                id=int(rec["id"]),
                width=int(rec["width"]),
                height=int(rec["height"]),
                fx=float(rec["fx"]),
                fy=float(rec["fy"]),
                cx=float(rec["cx"]),
                cy=float(rec["cy"]),
                rotation=np.asarray(rec["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(rec["translation"], dtype=np.float64).reshape(3),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"camera record missing field: {exc}") from exc
        cameras.append(cam.validate())
    ids = [c.id for c in cameras]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate camera ids: {dupes}")
    return sorted(cameras, key=lambda c: c.id)


def save_cameras(cameras: list[Camera], path: str | os.PathLike) -> None:
    records = [
        {
            "id": c.id,
            "width": c.width,
            "height": c.height,
            "fx": c.fx,
            "fy": c.fy,
            "cx": c.cx,
            "cy": c.cy,
            "rotation": [float(v) for v in np.asarray(c.rotation).reshape(-1)],
            "translation": [float(v) for v in np.asarray(c.translation).reshape(-1)],
        }
        for c in cameras
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(records, f, indent=1)
        f.write("\n")


# ---------------------------------------------------------------------------
# Label maps
# ---------------------------------------------------------------------------


def load_label_maps(
    directory: str | os.PathLike, cameras: list[Camera]
) -> list[LabelMap]:
    """Load ``<camera_id>.png`` for every camera, in camera order."""
    maps = []
    for cam in cameras:
        path = os.path.join(directory, f"{cam.id}.png")
        if not os.path.exists(path):
            raise FormatError(f"missing label map for camera {cam.id}: {path}")
        with Image.open(path) as img:
            arr = np.asarray(img)
        if arr.ndim != 2:
            raise FormatError(f"label map {path} is not single-channel")
        if arr.shape != (cam.height, cam.width):
            raise DataError(
                f"label map {path} is {arr.shape[1]}x{arr.shape[0]}, camera "
                f"{cam.id} expects {cam.width}x{cam.height}"
            )
        maps.append(LabelMap.from_array(arr.astype(np.int32)))
    return maps


def save_label_maps(
    maps: list[LabelMap], directory: str | os.PathLike, ids: list[int]
) -> None:
    """Write 16-bit single-channel PNGs named ``<id>.png``."""
    if len(maps) != len(ids):
        raise ValueError("maps and ids must align")
    os.makedirs(directory, exist_ok=True)
    for lm, vid in zip(maps, ids):
        if (lm.labels > 65535).any():
            raise DataError(f"label value exceeds 16-bit range in view {vid}")
        img = Image.fromarray(lm.labels.astype(np.uint16))
        img.save(os.path.join(directory, f"{vid}.png"))


def label_colors(labels: np.ndarray, palette_seed: int = 0) -> np.ndarray:
    """Deterministic RGB per label value; label 0 maps to black."""
    x = np.asarray(labels, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x * np.uint64(0x9E3779B97F4A7C15) + np.uint64(
            (palette_seed * 0xD1B54A32D192ED03) & 0xFFFFFFFFFFFFFFFF
        )
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    rgb = np.stack(
        [
            (z >> np.uint64(0)) & np.uint64(0xFF),
            (z >> np.uint64(8)) & np.uint64(0xFF),
            (z >> np.uint64(16)) & np.uint64(0xFF),
        ],
        axis=-1,
    ).astype(np.uint8)
    rgb[np.asarray(labels) == 0] = 0
    return rgb


def save_colorized(
    maps: list[LabelMap],
    directory: str | os.PathLike,
    ids: list[int],
    palette_seed: int = 0,
) -> None:
    """Write 8-bit RGB previews where color is a hash of the label."""
    if len(maps) != len(ids):
        raise ValueError("maps and ids must align")
    os.makedirs(directory, exist_ok=True)
    for lm, vid in zip(maps, ids):
        rgb = label_colors(lm.labels, palette_seed)
        Image.fromarray(rgb, mode="RGB").save(os.path.join(directory, f"{vid}.png"))
