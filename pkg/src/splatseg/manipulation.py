"""Group-level scene edits: recolor, remove, or translate the Gaussians
classified into one group, leaving everything else bit-identical."""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .identity import IdentityField, classify_gaussians
from .scene_io import SH_C0, GaussianScene

EDIT_OPS = ("recolor", "remove", "translate")


@dataclass
class Edit:
    op: str
    group_id: int
    color: tuple[float, float, float] | None = None  # recolor, RGB in [0, 1]
    offset: np.ndarray | None = None  # translate, world units

    def validate(self) -> "Edit":
        if self.op not in EDIT_OPS:
            raise ValueError(f"unknown edit op {self.op!r}")
        if self.op == "recolor":
            if self.color is None or len(self.color) != 3:
                raise ValueError("recolor needs an RGB color")
            if not all(0 <= c <= 1 for c in self.color):
                raise ValueError("recolor RGB must be in [0, 1]")
        if self.op == "translate":
            if self.offset is None or np.shape(self.offset) != (3,):
                raise ValueError("translate needs a 3-vector offset")
        return self


def load_edit_script(path: str | os.PathLike) -> list[Edit]:
    """JSON array of {op, group_id, color?, offset?} records, in order."""
    with open(path, "r", encoding="utf-8") as f:
        records = json.load(f)
    if not isinstance(records, list):
        raise ValueError("edit script must be a JSON array")
    edits = []
    for rec in records:
        edits.append(
            Edit(
                op=rec["op"],
                group_id=int(rec["group_id"]),
                color=tuple(rec["color"]) if "color" in rec else None,
                offset=np.asarray(rec["offset"], dtype=np.float64)
                if "offset" in rec
                else None,
            ).validate()
        )
    return edits


def select_group(
    scene: GaussianScene, field: IdentityField, group_id: int
) -> np.ndarray:
    """Indices of Gaussians the classifier puts in ``group_id``."""
    labels = classify_gaussians(field)
    idx = np.flatnonzero(labels == group_id)
    if len(idx) == 0:
        warnings.warn(f"group {group_id} selects no Gaussians")
    return idx


def apply(
    scene: GaussianScene, field: IdentityField, script: list[Edit]
) -> tuple[GaussianScene, IdentityField, np.ndarray]:
    """Apply edits in order.

    Returns the edited scene, the matching identity field (encodings
    compacted after removals), and a remap from original Gaussian index
    to new index (-1 for removed).
    """
    out = scene.copy()
    enc = field.encodings.copy()
    origin = np.arange(scene.count)
    for edit in script:
        edit.validate()
        cur = IdentityField(enc, field.classifier_weights, field.classifier_bias)
        sel = select_group(out, cur, edit.group_id)
        if edit.op == "recolor":
            out.sh_dc[sel] = (np.asarray(edit.color) - 0.5) / SH_C0
            out.sh_rest[sel] = 0.0
        elif edit.op == "translate":
            out.positions[sel] += np.asarray(edit.offset)
        elif edit.op == "remove":
            keep = np.ones(out.count, dtype=bool)
            keep[sel] = False
            if not keep.any():
                warnings.warn("edit removed every Gaussian")
            out = GaussianScene(
                positions=out.positions[keep],
                rotations=out.rotations[keep],
                scales=out.scales[keep],
                opacities=out.opacities[keep],
                sh_dc=out.sh_dc[keep],
                sh_rest=out.sh_rest[keep],
            )
            enc = enc[keep]
            origin = origin[keep]
    remap = np.full(scene.count, -1, dtype=np.int64)
    remap[origin] = np.arange(len(origin))
    new_field = IdentityField(
        encodings=enc,
        classifier_weights=field.classifier_weights.copy(),
        classifier_bias=field.classifier_bias.copy(),
    )
    return out, new_field, remap
