"""Command-line pipeline: synth, associate, train, render, eval, edit.

One TOML config drives a run; command-line flags override config values.
Every command writes a ``run.json`` provenance record into its output
directory and is deterministic given identical inputs and seed. The
``GAGA_THREADS`` environment variable caps worker threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .evaluation import evaluate, evaluate_boundary, format_report, iou_drop
from .identity import (
    IdentityField,
    TrainConfig,
    load_identity,
    save_identity,
    train,
    write_loss_curve,
)
from .manipulation import apply as apply_edits
from .manipulation import load_edit_script
from .memory_bank import (
    AssociationConfig,
    AssociationResult,
    MemoryBank,
    associate,
    write_association_log,
)
from .rasterizer import render
from .scene_io import (
    LabelMap,
    label_colors,
    load_cameras,
    load_gaussian_ply,
    load_label_maps,
    save_cameras,
    save_colorized,
    save_gaussian_ply,
    save_label_maps,
)
from .synthetic import SyntheticSpec, corrupt, generate, render_gt_masks

ABLATION_PRESETS = {
    "front_pct": [10.0, 20.0, 30.0, 100.0],
    "grid": [1, 16, 32, 64],
    "overlap_threshold": [0.01, 0.1, 0.2],
}


def worker_count() -> int:
    raw = os.environ.get("GAGA_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def load_config(path: str) -> dict:
    with open(path, "rb") as f:
        return tomllib.load(f)


def _config_seed(cfg: dict, override: int | None) -> int:
    if override is not None:
        return override
    return int(cfg.get("seed", 0))


def association_config(cfg: dict, args) -> AssociationConfig:
    sec = dict(cfg.get("association", {}))
    for key in (
        "front_pct",
        "overlap_threshold",
        "mask_order",
        "mode",
        "opacity_floor",
        "near",
    ):
        val = getattr(args, key, None)
        if val is not None:
            sec[key] = val
    grid = getattr(args, "grid", None) or sec.get("grid", [32, 32])
    if isinstance(grid, int):
        grid = [grid, grid]
    if len(grid) == 1:
        grid = [grid[0], grid[0]]
    per_view = sec.get("per_view_exclusive", False)
    if getattr(args, "per_view_exclusive", False):
        per_view = True
    return AssociationConfig(
        front_pct=float(sec.get("front_pct", 20.0)),
        grid=(int(grid[0]), int(grid[1])),
        overlap_threshold=float(sec.get("overlap_threshold", 0.1)),
        mask_order=sec.get("mask_order", "area_desc"),
        per_view_exclusive=bool(per_view),
        mode=sec.get("mode", "memory_bank"),
        opacity_floor=float(sec.get("opacity_floor", 0.1)),
        near=float(sec.get("near", 0.01)),
    )


def train_config(cfg: dict, args, seed: int) -> TrainConfig:
    sec = dict(cfg.get("training", {}))
    if getattr(args, "iterations", None) is not None:
        sec["iterations"] = args.iterations
    return TrainConfig(
        iterations=int(sec.get("iterations", 2000)),
        lr_encoding=float(sec.get("lr_encoding", 1.0)),
        lr_classifier=float(sec.get("lr_classifier", 0.2)),
        seed=int(sec.get("seed", seed)),
        loss_report_interval=int(sec.get("loss_report_interval", 100)),
        view_order=sec.get("view_order", "round_robin"),
    )


def synthetic_spec(cfg: dict, seed: int) -> SyntheticSpec:
    sec = dict(cfg.get("synthetic", {}))
    sec.setdefault("seed", seed)
    known = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(sec) - known
    if unknown:
        raise ValueError(f"unknown synthetic fields: {sorted(unknown)}")
    if "opacity_range" in sec:
        sec["opacity_range"] = tuple(sec["opacity_range"])
    return SyntheticSpec(**sec).validate()


def validate_paths(cfg: dict, need: list[str]) -> dict:
    paths = dict(cfg.get("paths", {}))
    problems = [f"paths.{key} is not set" for key in need if key not in paths]
    problems += [
        f"paths.{key} does not exist: {paths[key]}"
        for key in need
        if key in paths and not os.path.exists(paths[key])
    ]
    if problems:
        raise ConfigError(problems)
    return paths


class ConfigError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def write_run_record(out_dir: str, command: str, config: dict, started: float) -> None:
    os.makedirs(out_dir, exist_ok=True)
    blob = json.dumps(config, sort_keys=True, default=str)
    record = {
        "command": command,
        "config": json.loads(blob),
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "splatseg_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "duration_s": round(time.time() - started, 3),
    }
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as f:
        json.dump(record, f, indent=1)
        f.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    seed = _config_seed(cfg, args.seed)
    spec = synthetic_spec(cfg, seed)
    out = args.out
    os.makedirs(out, exist_ok=True)
    scene, gt_instance, cameras = generate(spec)
    gt_maps = render_gt_masks(scene, gt_instance, cameras)
    masks, records = corrupt(gt_maps, spec)
    ids = [c.id for c in cameras]
    save_gaussian_ply(scene, os.path.join(out, "scene.ply"))
    save_cameras(cameras, os.path.join(out, "cameras.json"))
    save_label_maps(gt_maps, os.path.join(out, "gt_masks"), ids)
    save_label_maps(masks, os.path.join(out, "masks"), ids)
    with open(os.path.join(out, "records.json"), "w", encoding="utf-8") as f:
        json.dump([{str(k): v for k, v in r.items()} for r in records], f, indent=1)
    with open(os.path.join(out, "gt_instance.json"), "w", encoding="utf-8") as f:
        json.dump([int(v) for v in gt_instance], f)
    write_run_record(out, "synth", {"seed": seed, **cfg}, started)
    print(
        f"synth: {scene.count} gaussians, {len(cameras)} views, "
        f"{spec.n_instances} instances -> {out}"
    )
    return 0


def _load_inputs(cfg: dict):
    paths = validate_paths(cfg, ["scene", "cameras", "masks"])
    scene = load_gaussian_ply(paths["scene"])
    cameras = load_cameras(paths["cameras"])
    masks = load_label_maps(paths["masks"], cameras)
    return paths, scene, cameras, masks


def _write_association(out: str, cameras, result: AssociationResult, palette_seed=0):
    ids = [c.id for c in cameras]
    save_label_maps(result.relabeled, os.path.join(out, "relabeled"), ids)
    save_colorized(
        result.relabeled, os.path.join(out, "relabeled_color"), ids, palette_seed
    )
    write_association_log(result.log, os.path.join(out, "association_log.jsonl"))
    bank = {
        "next_id": result.bank.next_id,
        "groups": {
            str(gid): sorted(int(i) for i in members)
            for gid, members in sorted(result.bank.groups.items())
        },
    }
    with open(os.path.join(out, "bank.json"), "w", encoding="utf-8") as f:
        json.dump(bank, f)
        f.write("\n")


def cmd_associate(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    paths, scene, cameras, masks = _load_inputs(cfg)
    out = args.out or paths.get("output", ".")
    os.makedirs(out, exist_ok=True)
    palette_seed = int(cfg.get("render", {}).get("palette_seed", 0))

    if args.ablation:
        name = args.ablation
        summary = {}
        for value in ABLATION_PRESETS[name]:
            acfg = association_config(cfg, args)
            if name == "grid":
                acfg.grid = (int(value), int(value))
            else:
                setattr(acfg, name, value)
            result = associate(scene, cameras, masks, acfg)
            sub = os.path.join(out, f"ablation_{name}", str(value))
            os.makedirs(sub, exist_ok=True)
            _write_association(sub, cameras, result, palette_seed)
            summary[str(value)] = result.bank.summary()
        with open(
            os.path.join(out, f"ablation_{name}", "summary.json"),
            "w",
            encoding="utf-8",
        ) as f:
            json.dump(summary, f, indent=1)
        write_run_record(out, "associate", cfg, started)
        print(f"associate: swept {name} over {ABLATION_PRESETS[name]} -> {out}")
        return 0

    acfg = association_config(cfg, args)
    result = associate(scene, cameras, masks, acfg)
    _write_association(out, cameras, result, palette_seed)
    write_run_record(out, "associate", cfg, started)
    print(
        f"associate: {len(result.log)} masks -> {len(result.bank.groups)} groups "
        f"({out})"
    )
    return 0


def _load_association(out: str, cameras) -> AssociationResult:
    relabeled = load_label_maps(os.path.join(out, "relabeled"), cameras)
    with open(os.path.join(out, "bank.json"), "r", encoding="utf-8") as f:
        raw = json.load(f)
    bank = MemoryBank(next_id=int(raw["next_id"]))
    for gid, members in raw["groups"].items():
        bank.groups[int(gid)] = set(members)
        bank.owned |= bank.groups[int(gid)]
    return AssociationResult(relabeled=relabeled, bank=bank.validate(), log=[])


def cmd_train(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    paths, scene, cameras, _ = _load_inputs(cfg)
    out = args.out or paths.get("output", ".")
    assoc = _load_association(out, cameras)
    tcfg = train_config(cfg, args, _config_seed(cfg, args.seed))
    field, curve = train(scene, cameras, assoc, tcfg)
    sidecar = os.path.join(
        out, os.path.splitext(os.path.basename(paths["scene"]))[0] + ".ids"
    )
    save_identity(field, sidecar)
    write_loss_curve(curve, os.path.join(out, "loss.csv"))
    write_run_record(out, "train", cfg, started)
    print(
        f"train: {tcfg.iterations} steps, final loss "
        f"{curve[-1][1]:.4f} -> {sidecar}"
    )
    return 0


def _render_view(scene, cam, field, background_alpha, palette_seed):
    rend, labels = render(
        scene,
        cam,
        identities=field.encodings,
        classifier=field.classifier,
        background_alpha=background_alpha,
    )
    color8 = (np.clip(rend.color, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    rgb = label_colors(labels.labels, palette_seed)
    return cam.id, color8, labels, rgb


def cmd_render(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    paths, scene, cameras, _ = _load_inputs(cfg)
    out = args.out or paths.get("output", ".")
    sidecar = os.path.join(
        out, os.path.splitext(os.path.basename(paths["scene"]))[0] + ".ids"
    )
    field = load_identity(sidecar)
    if len(field.encodings) != scene.count:
        raise ConfigError([f"identity sidecar covers {len(field.encodings)} "
                           f"gaussians, scene has {scene.count}"])
    background_alpha = float(cfg.get("render", {}).get("background_alpha", 0.5))
    palette_seed = int(cfg.get("render", {}).get("palette_seed", 0))
    if args.views:
        wanted = {int(v) for v in args.views.split(",")}
        cameras = [c for c in cameras if c.id in wanted]
    render_dir = os.path.join(out, "renders")
    os.makedirs(render_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(
            pool.map(
                lambda c: _render_view(
                    scene, c, field, background_alpha, palette_seed
                ),
                cameras,
            )
        )
    for vid, color8, labels, rgb in results:
        Image.fromarray(color8, mode="RGB").save(
            os.path.join(render_dir, f"color_{vid}.png")
        )
        Image.fromarray(labels.labels.astype(np.uint16)).save(
            os.path.join(render_dir, f"label_{vid}.png")
        )
        Image.fromarray(rgb, mode="RGB").save(
            os.path.join(render_dir, f"label_color_{vid}.png")
        )
    write_run_record(out, "render", cfg, started)
    print(f"render: {len(cameras)} views -> {render_dir}")
    return 0


def load_label_dir(directory: str) -> tuple[list[int], list[LabelMap]]:
    """Load every ``<int>.png`` in a directory, sorted by id."""
    ids = []
    for name in os.listdir(directory):
        stem, ext = os.path.splitext(name)
        if ext == ".png" and stem.lstrip("-").isdigit():
            ids.append(int(stem))
    ids.sort()
    if not ids:
        raise ConfigError([f"no label maps found in {directory}"])
    maps = []
    for vid in ids:
        with Image.open(os.path.join(directory, f"{vid}.png")) as img:
            maps.append(LabelMap.from_array(np.asarray(img).astype(np.int32)))
    return ids, maps


def cmd_eval(args) -> int:
    started = time.time()
    pred_ids, pred = load_label_dir(args.pred_dir)
    gt_ids, gt = load_label_dir(args.gt_dir)
    if pred_ids != gt_ids:
        raise ConfigError(
            [f"view ids differ between {args.pred_dir} and {args.gt_dir}"]
        )
    report = evaluate(pred, gt)
    payload = report.to_dict()
    if args.boundary:
        payload["mean_boundary_iou"] = evaluate_boundary(pred, gt)
    if args.sparse_baseline:
        with open(args.sparse_baseline, "r", encoding="utf-8") as f:
            base = json.load(f)
        payload["baseline_mean_iou"] = base["mean_iou"]
        payload["iou_drop_vs_baseline"] = iou_drop(
            base["mean_iou"], report.mean_iou
        )
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")
    write_run_record(
        out,
        "eval",
        {"pred_dir": args.pred_dir, "gt_dir": args.gt_dir},
        started,
    )
    print(format_report(report))
    if "mean_boundary_iou" in payload:
        print(f"\nmean_boundary_iou {payload['mean_boundary_iou']:.4f}")
    if "iou_drop_vs_baseline" in payload:
        print(f"iou_drop_vs_baseline {payload['iou_drop_vs_baseline']:.4%}")
    return 0


def cmd_edit(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    paths, scene, cameras, _ = _load_inputs(cfg)
    out = args.out or paths.get("output", ".")
    sidecar = os.path.join(
        out, os.path.splitext(os.path.basename(paths["scene"]))[0] + ".ids"
    )
    field = load_identity(sidecar)
    script = load_edit_script(args.script)
    edited, new_field, remap = apply_edits(scene, field, script)
    save_gaussian_ply(edited, os.path.join(out, "edited.ply"))
    save_identity(new_field, os.path.join(out, "edited.ids"))
    np.save(os.path.join(out, "edit_remap.npy"), remap)
    background_alpha = float(cfg.get("render", {}).get("background_alpha", 0.5))
    palette_seed = int(cfg.get("render", {}).get("palette_seed", 0))
    render_dir = os.path.join(out, "edited_renders")
    os.makedirs(render_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(
            pool.map(
                lambda c: _render_view(
                    edited, c, new_field, background_alpha, palette_seed
                ),
                cameras,
            )
        )
    for vid, color8, labels, rgb in results:
        Image.fromarray(color8, mode="RGB").save(
            os.path.join(render_dir, f"color_{vid}.png")
        )
        Image.fromarray(rgb, mode="RGB").save(
            os.path.join(render_dir, f"label_color_{vid}.png")
        )
    write_run_record(out, "edit", cfg, started)
    print(f"edit: {len(script)} edits, {edited.count} gaussians remain -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatseg",
        description="Multi-view consistent segmentation on Gaussian splat scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene with masks")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("associate", help="assign consistent group ids to masks")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--front-pct", dest="front_pct", type=float)
    p.add_argument("--grid", type=int, nargs="+")
    p.add_argument("--overlap-threshold", dest="overlap_threshold", type=float)
    p.add_argument("--mask-order", dest="mask_order")
    p.add_argument("--mode")
    p.add_argument("--opacity-floor", dest="opacity_floor", type=float)
    p.add_argument("--near", type=float)
    p.add_argument(
        "--per-view-exclusive", dest="per_view_exclusive", action="store_true"
    )
    p.add_argument("--ablation", choices=sorted(ABLATION_PRESETS))
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("train", help="train identity encodings")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render color and segmentation images")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--views", help="comma-separated camera ids (default all)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score predicted label maps")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out")
    p.add_argument("--boundary", action="store_true")
    p.add_argument(
        "--sparse-baseline",
        help="full-data report.json; adds iou_drop_vs_baseline",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("edit", help="apply a group-level edit script")
    p.add_argument("--config", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_edit)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(
            json.dumps({"error": "config", "problems": exc.problems}),
            file=sys.stderr,
        )
        return 2
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
