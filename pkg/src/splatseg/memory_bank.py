"""Group-ID assignment across views via a bank of Gaussian index groups.

Each 2D mask is reduced to its corresponding Gaussians and compared with
every stored group by the shared-index ratio
``overlap = |G(m) & G_i| / |G(m)|``. The mask joins the best group when
the ratio exceeds the threshold, otherwise it founds a new group. A
Gaussian belongs to at most one group, so group updates only absorb
indices not owned anywhere in the bank.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .projection import (
    DEFAULT_FRONT_PCT,
    DEFAULT_GRID,
    DEFAULT_NEAR,
    DEFAULT_OPACITY_FLOOR,
    CorrespondingSet,
    PatchGrid,
    corresponding_gaussians,
    project,
)
from .scene_io import Camera, GaussianScene, LabelMap

DEFAULT_OVERLAP_THRESHOLD = 0.1


@dataclass
class MemoryBank:
    """Ordered, pairwise-disjoint groups of Gaussian indices."""

    groups: dict[int, set[int]] = field(default_factory=dict)
    owned: set[int] = field(default_factory=set)
    next_id: int = 1

    def validate(self) -> "MemoryBank":
        union: set[int] = set()
        for gid, members in self.groups.items():
            if gid <= 0:
                raise ValueError(f"group id {gid} is not positive")
            if union & members:
                raise ValueError(f"group {gid} overlaps another group")
            union |= members
        if union != self.owned:
            raise ValueError("owned set out of sync with groups")
        return self

    def sorted_group(self, gid: int) -> np.ndarray:
        return np.fromiter(sorted(self.groups[gid]), dtype=np.int64)

    def summary(self) -> dict:
        return {
            "n_groups": len(self.groups),
            "n_owned": len(self.owned),
            "sizes": {str(gid): len(m) for gid, m in sorted(self.groups.items())},
        }


@dataclass
class AssociationConfig:
    front_pct: float = DEFAULT_FRONT_PCT
    grid: tuple[int, int] = DEFAULT_GRID  # (rows, cols)
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD
    mask_order: str = "area_desc"  # area_desc | label_asc
    per_view_exclusive: bool = False
    mode: str = "memory_bank"  # memory_bank | no_association
    opacity_floor: float = DEFAULT_OPACITY_FLOOR
    near: float = DEFAULT_NEAR

    def validate(self) -> "AssociationConfig":
        problems = []
        if not (0 < self.front_pct <= 100):
            problems.append("front_pct must be in (0, 100]")
        if not (0 <= self.overlap_threshold <= 1):
            problems.append("overlap_threshold must be in [0, 1]")
        if self.mask_order not in ("area_desc", "label_asc"):
            problems.append("mask_order must be area_desc or label_asc")
        if self.mode not in ("memory_bank", "no_association"):
            problems.append("mode must be memory_bank or no_association")
        if len(self.grid) != 2 or min(self.grid) < 1:
            problems.append("grid must be two positive integers")
        if problems:
            raise ValueError("; ".join(problems))
        return self


@dataclass
class MaskLogEntry:
    """One association decision, for audit."""

    view: int
    label: int
    group: int
    ratio: float
    created_new: bool


@dataclass
class AssociationResult:
    relabeled: list[LabelMap]
    bank: MemoryBank
    log: list[MaskLogEntry]


def best_overlap(
    bank: MemoryBank,
    gm: CorrespondingSet,
    exclude: set[int] | None = None,
) -> tuple[int | None, float]:
    """Group with the largest shared-Gaussian ratio; ties pick the
    smaller id. Returns (None, 0.0) on an empty bank."""
    if len(gm) == 0:
        raise ValueError("empty corresponding set")
    members = gm.as_set()
    best_id, best_ratio = None, 0.0
    for gid in sorted(bank.groups):
        if exclude and gid in exclude:
            continue
        ratio = len(members & bank.groups[gid]) / len(members)
        if best_id is None or ratio > best_ratio:
            best_id, best_ratio = gid, ratio
    return best_id, best_ratio


def assign(
    bank: MemoryBank,
    gm: CorrespondingSet,
    config: AssociationConfig = AssociationConfig(),
    exclude: set[int] | None = None,
) -> int:
    """Attach a mask's Gaussians to the bank, returning its group id."""
    gid, _, _ = _assign(bank, gm, config, exclude)
    return gid


def _assign(bank, gm, config, exclude=None) -> tuple[int, float, bool]:
    best_id, ratio = best_overlap(bank, gm, exclude)
    fresh = gm.as_set() - bank.owned
    if best_id is not None and ratio > config.overlap_threshold:
        bank.groups[best_id] |= fresh
        bank.owned |= fresh
        return best_id, ratio, False
    gid = bank.next_id
    bank.next_id += 1
    bank.groups[gid] = fresh
    bank.owned |= fresh
    return gid, ratio, True


def associate(
    scene: GaussianScene,
    cameras: list[Camera],
    label_maps: list[LabelMap],
    config: AssociationConfig = AssociationConfig(),
) -> AssociationResult:
    """Run the full association pass over all views.

    Views are processed in camera-id order; masks within a view in
    ``config.mask_order``. Masks whose corresponding set is empty keep
    label 0 in the relabeled output. In mode ``no_association`` the
    input labels pass through unchanged.
    """
    config.validate()
    if scene.count == 0:
        raise ValueError("empty scene")
    if len(cameras) != len(label_maps):
        raise ValueError("cameras and label maps must align")
    for cam, lm in zip(cameras, label_maps):
        if (lm.height, lm.width) != (cam.height, cam.width):
            raise ValueError(f"label map size mismatch for camera {cam.id}")

    order = np.argsort([c.id for c in cameras], kind="stable")
    bank = MemoryBank()
    log: list[MaskLogEntry] = []
    relabeled: list[LabelMap | None] = [None] * len(cameras)

    if config.mode == "no_association":
        seen: set[int] = set()
        for vi in order:
            lm = label_maps[vi]
            for lab in lm.labels_present().tolist():
                log.append(
                    MaskLogEntry(
                        view=cameras[vi].id,
                        label=lab,
                        group=lab,
                        ratio=0.0,
                        created_new=lab not in seen,
                    )
                )
                if lab not in seen:
                    seen.add(lab)
                    bank.groups[lab] = set()
            relabeled[vi] = LabelMap.from_array(lm.labels.copy())
        bank.next_id = max(seen) + 1 if seen else 1
        return AssociationResult(relabeled=relabeled, bank=bank, log=log)

    grid = PatchGrid(rows=config.grid[0], cols=config.grid[1])
    for vi in order:
        cam, lm = cameras[vi], label_maps[vi]
        proj = project(
            scene, cam, near=config.near, opacity_floor=config.opacity_floor
        )
        labels = lm.labels_present()
        if config.mask_order == "area_desc":
            areas = np.array([(lm.labels == lab).sum() for lab in labels])
            labels = labels[np.lexsort((labels, -areas))]
        mapping: dict[int, int] = {}
        used_in_view: set[int] = set()
        for lab in labels.tolist():
            gm = corresponding_gaussians(lab, lm, proj, grid, config.front_pct)
            if len(gm) == 0:
                mapping[lab] = 0
                log.append(
                    MaskLogEntry(
                        view=cam.id, label=lab, group=0, ratio=0.0, created_new=False
                    )
                )
                continue
            exclude = used_in_view if config.per_view_exclusive else None
            gid, ratio, created = _assign(bank, gm, config, exclude)
            used_in_view.add(gid)
            mapping[lab] = gid
            log.append(
                MaskLogEntry(
                    view=cam.id, label=lab, group=gid, ratio=ratio, created_new=created
                )
            )
        out = np.zeros_like(lm.labels)
        for lab, gid in mapping.items():
            out[lm.labels == lab] = gid
        relabeled[vi] = LabelMap.from_array(out)
    return AssociationResult(relabeled=relabeled, bank=bank, log=log)


def write_association_log(log: list[MaskLogEntry], path: str | os.PathLike) -> None:
    """Line-delimited JSON records of every association decision."""
    with open(path, "w", encoding="utf-8") as f:
        for e in log:
            f.write(
                json.dumps(
                    {
                        "view": e.view,
                        "label": e.label,
                        "group": e.group,
                        "ratio": e.ratio,
                        "created_new": e.created_new,
                    }
                )
                + "\n"
            )
