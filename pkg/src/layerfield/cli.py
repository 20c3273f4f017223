"""Command line entry points.

Subcommands cover the whole pipeline: synthesize a dataset, parse it into
boxes and refined labels, train a checkpoint, render frames, apply an
edit script, evaluate against reference views, serve the HTTP preview
service, and benchmark the compute kernels.

All errors are reported as a single `error: ...` line on stderr with exit
code 1 so scripts can parse them.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import tensorio
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_cameras, load_dataset, save_dataset
from .editing import compose_scene, load_script, pose_to_camera, validate_script
from .evaluation import evaluate
from .parsing import parse_scene
from .rendering import (RenderConfig, desk_render_config, layers_at_frame,
                        render_image)
from .synthetic import carve_scene, crossing_scene, desk_scene, synthesize_scene
from .training import TrainConfig, desk_train_config, train


class _Parser(argparse.ArgumentParser):
    # uniform one-line error contract, exit 1 instead of argparse's 2
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_frames(spec: str, n_t: int = None) -> list:
    """'3' -> [3]; '0:8' -> [0..7]; '0,3,7' -> [0, 3, 7]; 'all' -> range."""
    if spec == "all":
        if n_t is None:
            raise ValueError("frames 'all' needs a dataset")
        return list(range(n_t))
    if ":" in spec:
        a, b = spec.split(":", 1)
        return list(range(int(a), int(b)))
    return [int(x) for x in spec.split(",")]


def _parse_ids(spec: str) -> list:
    return [int(x) for x in spec.split(",")]


def _render_config(meta: dict, quality: str, workers: int) -> RenderConfig:
    if quality == "preview":
        return RenderConfig(coarse_samples=8, fine_samples=8, workers=workers)
    r = (meta.get("train_meta") or {}).get("render") or {}
    return RenderConfig(
        coarse_samples=int(r.get("coarse_samples", 16)),
        fine_samples=int(r.get("fine_samples", 16)),
        workers=workers,
    )


def _resolve_cameras(args, n_frames: int) -> list:
    """Camera model per output frame from --camera / --camera-path."""
    dataset_cams = {}
    if args.dataset:
        dataset_cams = {c.cam_id: c for c in load_cameras(args.dataset)}
    if getattr(args, "camera_path", None):
        with open(args.camera_path) as f:
            path = json.load(f)
    elif args.camera is not None:
        if args.camera not in dataset_cams:
            raise ValueError(f"camera {args.camera} not in dataset (pass --dataset)")
        return [dataset_cams[args.camera]] * n_frames
    else:
        raise ValueError("need --camera with --dataset, or --camera-path")
    if len(path) not in (1, n_frames):
        raise ValueError(f"camera path length {len(path)} is neither 1 nor {n_frames}")
    like = dataset_cams.get(min(dataset_cams)) if dataset_cams else None
    out = []
    for i in range(n_frames):
        pose = path[i if len(path) > 1 else 0]
        if "camera" in pose:
            cid = int(pose["camera"])
            if cid not in dataset_cams:
                raise ValueError(f"camera {cid} not in dataset (pass --dataset)")
            out.append(dataset_cams[cid])
        else:
            # free poses get their path index as id; the id is also the
            # per-camera noise stream tag, so a fixed pose list is stable
            out.append(pose_to_camera(pose, like=like,
                                      cam_id=i if len(path) > 1 else 0))
    return out


def _write_frames(out: str, images: list) -> list:
    if out.endswith(".png"):
        if len(images) != 1:
            raise ValueError("--out file.png only works for a single frame")
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        tensorio.save_png_rgb(out, images[0])
        return [out]
    os.makedirs(out, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = os.path.join(out, f"frame_{i:04d}.png")
        tensorio.save_png_rgb(p, img)
        paths.append(p)
    return paths


def cmd_synthesize(args) -> int:
    if args.scene == "desk":
        spec = desk_scene(n_train_cams=args.cams or 8, n_frames=args.frames or 8,
                          size=args.size or 64)
    elif args.scene == "carve":
        spec = carve_scene(n_cams=args.cams or 12, size=args.size or 64)
    elif args.scene == "crossing":
        spec = crossing_scene(size=args.size or 72, n_t=args.frames or 9)
    else:
        raise ValueError(f"unknown scene {args.scene}")
    ds = synthesize_scene(spec)
    save_dataset(ds, args.out)
    print(f"dataset: {args.out} cameras={len(ds.cameras)} frames={ds.n_t} "
          f"entities={ds.n_i}")
    return 0


def cmd_parse(args) -> int:
    ds = load_dataset(args.dataset)
    parsed = parse_scene(ds, tau=args.tau, deviation=args.deviation,
                         grid_resolution=args.grid)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "boxes.json"), "w") as f:
        json.dump({str(k): np.asarray(v).tolist() for k, v in parsed.boxes.items()}, f)
    for cam in ds.cameras:
        ldir = os.path.join(args.out, "labels", f"cam_{cam.cam_id}")
        os.makedirs(ldir, exist_ok=True)
        for t in range(ds.n_t):
            tensorio.save_png_label(os.path.join(ldir, f"{t}.png"),
                                    parsed.labels[cam.cam_id][t])
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump({"flags": {str(e): {str(c): v for c, v in fl.items()}
                             for e, fl in parsed.flags.items()}}, f, indent=1)
    print(f"parsed: {args.out} entities={len(parsed.boxes) - 1}")
    return 0


def _apply_overrides(cfg, overrides: dict):
    from dataclasses import replace
    from .field import FieldConfig
    kw = dict(overrides)
    if kw.get("field") == "full":
        kw["field"] = FieldConfig()
    if "camera_ids" in kw and kw["camera_ids"] is not None:
        kw["camera_ids"] = tuple(kw["camera_ids"])
    if "warmup_lambdas" in kw:
        kw["warmup_lambdas"] = tuple(kw["warmup_lambdas"])
    return replace(cfg, **kw)


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    if args.parsed:
        with open(os.path.join(args.parsed, "boxes.json")) as f:
            ds.boxes = {int(k): np.array(v) for k, v in json.load(f).items()}
        for cam in ds.cameras:
            ldir = os.path.join(args.parsed, "labels", f"cam_{cam.cam_id}")
            frames = [tensorio.load_png_label(os.path.join(ldir, f"{t}.png"))
                      for t in range(ds.n_t)]
            ds.labels[cam.cam_id] = np.stack(frames)
        ds.validate()
    cfg = desk_train_config()
    rcfg = desk_render_config()
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        cfg = _apply_overrides(cfg, overrides.get("train", {}))
        if overrides.get("render"):
            from dataclasses import replace
            rcfg = replace(rcfg, **overrides["render"])
    if args.seed is not None:
        cfg = _apply_overrides(cfg, {"seed": args.seed})
    if args.epochs is not None:
        cfg = _apply_overrides(cfg, {"epochs": args.epochs})
    if args.cameras is not None:
        cfg = _apply_overrides(cfg, {"camera_ids": _parse_ids(args.cameras)})
    log_path = args.log or args.out + ".log.jsonl"
    result = train(ds, cfg, rcfg, log_path=log_path, progress=_progress)
    meta = {
        "render": {"coarse_samples": rcfg.coarse_samples,
                   "fine_samples": rcfg.fine_samples},
        "train": {"epochs": cfg.epochs, "seed": cfg.seed,
                  "lr_initial": cfg.lr_initial, "lr_final": cfg.lr_final,
                  "rays_per_batch": cfg.rays_per_batch,
                  "camera_ids": list(cfg.camera_ids) if cfg.camera_ids else None},
        "interrupted": result.interrupted,
    }
    save_checkpoint(args.out, result.fields, result.boxes, ds.n_t, ds.fps,
                    train_meta=meta)
    print(f"checkpoint: {args.out} log: {log_path}"
          + (" (interrupted)" if result.interrupted else ""))
    return 0


def _progress(rec: dict) -> None:
    if rec.get("epoch_summary"):
        print(f"epoch {rec['epoch']}: loss_rgb {rec['loss_rgb']:.4f} "
              f"train_psnr {rec['train_psnr']:.2f}", flush=True)


def cmd_render(args) -> int:
    fields, boxes, meta = load_checkpoint(args.checkpoint)
    n_t = meta["n_t"]
    frames = _parse_frames(args.frames, n_t)
    cams = _resolve_cameras(args, len(frames))
    rcfg = _render_config(meta, args.quality, args.workers)
    images = []
    for cam, t in zip(cams, frames):
        if not (0 <= t < n_t):
            raise ValueError(f"frame {t} outside trained range [0, {n_t - 1}]")
        layers = layers_at_frame(fields, boxes, t, n_t)
        img, _ = render_image(cam, layers, rcfg, seed=args.seed,
                              camera_tag=cam.cam_id)
        images.append(img)
    paths = _write_frames(args.out, images)
    print(f"rendered {len(paths)} frame(s) -> {args.out}")
    return 0


def cmd_edit(args) -> int:
    fields, boxes, meta = load_checkpoint(args.checkpoint)
    n_t = meta["n_t"]
    script = load_script(args.script)
    bad = validate_script(script, n_t, sorted(fields))
    if bad:
        raise ValueError("script: " + "; ".join(bad))
    n_out = script.output_frames
    if script.camera_path:
        args.camera_path = None  # poses come from the script itself
        cams = []
        dataset_cams = {}
        if args.dataset:
            dataset_cams = {c.cam_id: c for c in load_cameras(args.dataset)}
        like = dataset_cams.get(min(dataset_cams)) if dataset_cams else None
        for i in range(n_out):
            pose = script.camera_path[i if len(script.camera_path) > 1 else 0]
            if "camera" in pose:
                cid = int(pose["camera"])
                if cid not in dataset_cams:
                    raise ValueError(f"camera {cid} not in dataset (pass --dataset)")
                cams.append(dataset_cams[cid])
            else:
                cams.append(pose_to_camera(pose, like=like,
                                           cam_id=i if len(script.camera_path) > 1 else 0))
    else:
        cams = _resolve_cameras(args, n_out)
    rcfg = _render_config(meta, args.quality, args.workers)
    images = []
    for i in range(n_out):
        layers = compose_scene(fields, boxes, script, i, n_t)
        img, _ = render_image(cams[i], layers, rcfg, seed=args.seed,
                              camera_tag=cams[i].cam_id)
        images.append(img)
    paths = _write_frames(args.out, images)
    print(f"edited {len(paths)} frame(s) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    fields, boxes, meta = load_checkpoint(args.checkpoint)
    cam_ids = _parse_ids(args.cameras) if args.cameras else \
        [c.cam_id for c in ds.cameras]
    frames = _parse_frames(args.frames, ds.n_t)
    rcfg = _render_config(meta, args.quality, args.workers)
    report = evaluate(ds, fields, boxes, cam_ids, frames, rcfg, seed=args.seed)
    print("cam\tframe\tpsnr\tssim\tmae")
    for r in report["views"]:
        print(f"{r['camera']}\t{r['frame']}\t{r['psnr']:.4f}\t"
              f"{r['ssim']:.4f}\t{r['mae']:.6f}")
    print(f"mean\t-\t{report['psnr']:.4f}\t{report['ssim']:.4f}\t"
          f"{report['mae']:.6f}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=1)
    return 0


def cmd_serve(args) -> int:
    from .service import run_service
    host, _, port = args.bind.rpartition(":")
    run_service(args.checkpoint, host or "127.0.0.1", int(port),
                dataset=args.dataset, workers=args.workers)
    return 0


def cmd_bench(args) -> int:
    from .bench import run_benchmark
    report = run_benchmark(repeats=args.repeats)
    print(json.dumps(report, indent=1))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=1)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="layerfield",
                description="layered space-time radiance fields: synthesize, "
                            "parse, train, render, edit, evaluate, serve")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="write a synthetic dataset")
    s.add_argument("--scene", default="desk", choices=["desk", "carve", "crossing"])
    s.add_argument("--out", required=True)
    s.add_argument("--cams", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--size", type=int)
    s.set_defaults(fn=cmd_synthesize)

    s = sub.add_parser("parse", help="boxes + refined labels from a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--deviation", type=float, default=0.5)
    s.add_argument("--grid", type=int, default=64)
    s.set_defaults(fn=cmd_parse)

    s = sub.add_parser("train", help="train a checkpoint on a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--parsed", help="directory from `parse` overriding boxes/labels")
    s.add_argument("--log")
    s.add_argument("--config", help="JSON with train/render field overrides")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--cameras", help="comma-separated training camera ids")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("render", help="render frames from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dataset")
    s.add_argument("--camera", type=int)
    s.add_argument("--camera-path", dest="camera_path")
    s.add_argument("--frames", default="0:1")
    s.add_argument("--quality", default="full", choices=["full", "preview"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("edit", help="render an edit script")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--script", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dataset")
    s.add_argument("--camera", type=int)
    s.add_argument("--quality", default="full", choices=["full", "preview"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_edit)

    s = sub.add_parser("eval", help="PSNR/SSIM/MAE against dataset views")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--cameras", help="comma-separated camera ids (default all)")
    s.add_argument("--frames", default="all")
    s.add_argument("--quality", default="full", choices=["full", "preview"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="also write the report as JSON")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("serve", help="HTTP preview/edit service")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--bind", default="127.0.0.1:8080")
    s.add_argument("--dataset")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_serve)

    s = sub.add_parser("bench", help="compare accelerated and plain kernels")
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as e:  # noqa: BLE001  (CLI boundary: one-line contract)
        msg = " ".join(str(e).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
