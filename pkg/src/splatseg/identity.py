"""Per-Gaussian identity encodings and their linear softmax classifier.

Geometry stays frozen: each training step re-renders only the feature
image of one view, which is linear in the encodings, so the blend
weights can be computed once per view and reused for every step. Loss is
plain softmax cross-entropy against the associated masks; pixels with
label 0 carry no mask evidence and are excluded.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .memory_bank import AssociationResult
from .rasterizer import render
from .scene_io import Camera, GaussianScene

IDENTITY_DIM = 16


@dataclass
class IdentityField:
    encodings: np.ndarray  # (N, 16)
    classifier_weights: np.ndarray  # (K+1, 16); class index = group id
    classifier_bias: np.ndarray  # (K+1,)

    @property
    def n_classes(self) -> int:
        return len(self.classifier_bias)

    @property
    def classifier(self) -> tuple[np.ndarray, np.ndarray]:
        return self.classifier_weights, self.classifier_bias


@dataclass
class TrainConfig:
    iterations: int = 2000  # desk-scale; real captures want ~10000
    lr_encoding: float = 1.0
    lr_classifier: float = 0.2
    seed: int = 0
    loss_report_interval: int = 100
    view_order: str = "round_robin"  # round_robin | shuffle

    def validate(self) -> "TrainConfig":
        problems = []
        if self.iterations < 1:
            problems.append("iterations must be >= 1")
        if self.lr_encoding <= 0 or self.lr_classifier <= 0:
            problems.append("learning rates must be positive")
        if self.view_order not in ("round_robin", "shuffle"):
            problems.append(f"unknown view_order {self.view_order!r}")
        if problems:
            raise ValueError("; ".join(problems))
        return self


@dataclass
class _ViewCache:
    """Frozen blend geometry of one view, restricted to labeled pixels."""

    gaussian: np.ndarray  # (M,) contributor index
    pixel: np.ndarray  # (M,) index into the labeled-pixel subset
    weight: np.ndarray  # (M,)
    targets: np.ndarray  # (L,) class index per labeled pixel


def _cache_view(scene, camera, labels) -> _ViewCache | None:
    flat = labels.reshape(-1)
    labeled = np.flatnonzero(flat > 0)
    if len(labeled) == 0:
        return None
    rend = render(scene, camera, train_mode=True)
    remap = np.full(camera.height * camera.width, -1, dtype=np.int64)
    remap[labeled] = np.arange(len(labeled))
    keep = remap[rend.contrib_pixel] >= 0
    return _ViewCache(
        gaussian=rend.contrib_gaussian[keep],
        pixel=remap[rend.contrib_pixel[keep]],
        weight=rend.contrib_weight[keep],
        targets=flat[labeled],
    )


def train(
    scene: GaussianScene,
    cameras: list[Camera],
    assoc: AssociationResult,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[IdentityField, list[tuple[int, float]]]:
    """Fit encodings and classifier to the associated masks.

    One step = full softmax cross-entropy pass over one view (picked
    round-robin or by seeded shuffle). Returns the trained field and the
    mean loss per report interval as (step, loss) pairs.
    """
    cfg.validate()
    if len(cameras) != len(assoc.relabeled):
        raise ValueError("association result does not cover the cameras")
    group_ids = list(assoc.bank.groups)
    for lm in assoc.relabeled:
        group_ids.extend(lm.labels_present().tolist())
    if not group_ids:
        raise ValueError("no groups to train on")
    n_classes = max(group_ids) + 1

    caches = []
    for cam, lm in zip(cameras, assoc.relabeled):
        cache = _cache_view(scene, cam, lm.labels)
        if cache is None:
            warnings.warn(f"view {cam.id} has no labeled pixels; skipped")
            continue
        caches.append(cache)
    if not caches:
        raise ValueError("all views are unlabeled")

    rng = np.random.default_rng(cfg.seed)
    # Zero-start encodings: a Gaussian then only ever accumulates gradient
    # toward the classes its pixels vote for, so weak contributors cannot
    # be stranded in a random class basin. The classifier breaks symmetry.
    enc = np.zeros((scene.count, IDENTITY_DIM))
    cw = rng.normal(0.0, 0.5 / np.sqrt(IDENTITY_DIM), (n_classes, IDENTITY_DIM))
    cb = np.zeros(n_classes)

    schedule = np.arange(len(caches))
    curve: list[tuple[int, float]] = []
    bucket: list[float] = []
    for step in range(cfg.iterations):
        pos = step % len(caches)
        if pos == 0 and cfg.view_order == "shuffle":
            schedule = rng.permutation(len(caches))
        v = caches[schedule[pos]]
        n_labeled = len(v.targets)

        feats = np.zeros((n_labeled, IDENTITY_DIM))
        np.add.at(feats, v.pixel, v.weight[:, None] * enc[v.gaussian])
        logits = feats @ cw.T + cb
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        rows = np.arange(n_labeled)
        bucket.append(float(-np.log(p[rows, v.targets] + 1e-300).mean()))

        g_logits = p
        g_logits[rows, v.targets] -= 1.0
        g_logits /= n_labeled
        g_bias = g_logits.sum(axis=0)
        g_weights = g_logits.T @ feats
        g_feats = g_logits @ cw
        g_enc = np.zeros_like(enc)
        np.add.at(g_enc, v.gaussian, v.weight[:, None] * g_feats[v.pixel])

        enc -= cfg.lr_encoding * g_enc
        cw -= cfg.lr_classifier * g_weights
        cb -= cfg.lr_classifier * g_bias

        if (step + 1) % cfg.loss_report_interval == 0 or step + 1 == cfg.iterations:
            curve.append((step + 1, float(np.mean(bucket))))
            bucket = []

    field = IdentityField(encodings=enc, classifier_weights=cw, classifier_bias=cb)
    return field, curve


def classify_gaussians(field: IdentityField) -> np.ndarray:
    """Per-Gaussian class label, argmax of the linear classifier
    (ties resolve to the lower class index)."""
    scores = field.encodings @ field.classifier_weights.T + field.classifier_bias
    return np.argmax(scores, axis=1).astype(np.int64)


def save_identity(field: IdentityField, path: str | os.PathLike) -> None:
    """Binary sidecar: header (count, K) as little-endian uint32, then
    float32 encodings, classifier weights, and bias."""
    if field.encodings.shape[1] != IDENTITY_DIM:
        raise ValueError(f"sidecar format is fixed to {IDENTITY_DIM}-dim encodings")
    count = len(field.encodings)
    k = field.n_classes - 1
    with open(path, "wb") as f:
        f.write(struct.pack("<II", count, k))
        f.write(field.encodings.astype("<f4").tobytes())
        f.write(field.classifier_weights.astype("<f4").tobytes())
        f.write(field.classifier_bias.astype("<f4").tobytes())


def load_identity(path: str | os.PathLike) -> IdentityField:
    with open(path, "rb") as f:
        count, k = struct.unpack("<II", f.read(8))
        enc = np.frombuffer(f.read(count * IDENTITY_DIM * 4), dtype="<f4")
        cw = np.frombuffer(f.read((k + 1) * IDENTITY_DIM * 4), dtype="<f4")
        cb = np.frombuffer(f.read((k + 1) * 4), dtype="<f4")
    if len(enc) != count * IDENTITY_DIM or len(cb) != k + 1:
        raise ValueError("truncated identity sidecar")
    return IdentityField(
        encodings=enc.astype(np.float64).reshape(count, IDENTITY_DIM),
        classifier_weights=cw.astype(np.float64).reshape(k + 1, IDENTITY_DIM),
        classifier_bias=cb.astype(np.float64),
    )


def write_loss_curve(curve: list[tuple[int, float]], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,mean_loss\n")
        for step, loss in curve:
            f.write(f"{step},{loss:.8f}\n")
