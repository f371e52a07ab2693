"""Command-line entry point.

Subcommands: warp (guidance-driven image warp), perturb (degrade a mask to a
target IoU), simulate (one click session with a trace dump), evaluate (metric
harness over a dataset), train-toy (toy model training curves with and
without the matching regularizer), gen-scenes (synthetic dataset), serve
(HTTP session service). Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

DEFAULT_SEED = 0
log = logging.getLogger("interseg")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here wants 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError as e:
        raise _UsageError(f"bad size {text!r}, expected HxW") from e
    if h < 8 or w < 8:
        raise _UsageError("size must be at least 8x8")
    return h, w


def _parse_thresholds(text: str) -> tuple[float, ...]:
    if not text.strip():
        return ()
    try:
        vals = tuple(float(p) for p in text.split(","))
    except ValueError as e:
        raise _UsageError(f"bad thresholds {text!r}") from e
    if any(not 0.0 < v <= 1.0 for v in vals):
        raise _UsageError("thresholds must lie in (0, 1]")
    return vals


def build_parser() -> _Parser:
    g = _Parser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument(
        "--verbosity", type=int, default=argparse.SUPPRESS, choices=(0, 1, 2)
    )
    g.add_argument(
        "--threads", type=int, default=argparse.SUPPRESS, help="evaluate worker count"
    )

    # the parent's actions are shared objects, so defaults are filled after
    # parsing (set_defaults would overwrite SUPPRESS on every subparser too)
    p = _Parser(prog="interseg", description=__doc__.splitlines()[0], parents=[g])
    sub = p.add_subparsers(dest="command", required=True)

    def add_parser(name: str, **kw) -> _Parser:
        return sub.add_parser(name, parents=[g], **kw)

    w = add_parser("warp", help="warp an image by a guidance map")
    w.add_argument("--image", required=True)
    w.add_argument("--guidance", required=True)
    w.add_argument("--out-size", required=True, help="HxW of the warped output")
    w.add_argument("--sigma", type=float, default=11.0)
    w.add_argument("--out", required=True, help="output PNG path")

    pe = add_parser("perturb", help="degrade a mask to a target IoU")
    pe.add_argument("--mask", required=True)
    pe.add_argument("--target", type=float, required=True)
    pe.add_argument("--tolerance", type=float, default=0.03)
    pe.add_argument("--out", required=True)

    si = add_parser("simulate", help="run one simulated click session")
    si.add_argument("--image", required=True)
    si.add_argument("--mask", required=True, help="ground-truth mask PNG")
    si.add_argument("--segmenter", default="geodesic")
    si.add_argument("--budget", type=int, default=20)
    si.add_argument("--working-size", type=int, default=256)
    si.add_argument("--thresholds", default="0.85,0.9")

    ev = add_parser("evaluate", help="run the metric harness over a dataset")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--segmenter", default="geodesic")
    ev.add_argument("--budget", type=int, default=20)
    ev.add_argument("--working-size", type=int, default=256)
    ev.add_argument("--thresholds", default="0.85,0.9")
    ev.add_argument("--out", required=True, help="report JSON path")

    tt = add_parser("train-toy", help="toy training with/without the regularizer")
    tt.add_argument("--scenes", type=int, default=200)
    tt.add_argument("--held-out", type=int, default=20)
    tt.add_argument("--size", type=int, default=32)
    tt.add_argument("--lr", type=float, default=0.1)
    tt.add_argument("--out", default="-", help="JSON path, - for stdout")

    gs = add_parser("gen-scenes", help="emit a synthetic dataset")
    gs.add_argument("--count", type=int, required=True)
    gs.add_argument("--size", required=True, help="HxW of each scene")
    gs.add_argument("--out", required=True, help="output directory")

    se = add_parser("serve", help="start the HTTP session service")
    se.add_argument("--port", type=int, default=8000)
    se.add_argument("--max-sessions", type=int, default=32)
    se.add_argument("--idle-timeout-sec", type=float, default=1800.0)
    se.add_argument("--static-dir", default=None)
    return p


def _cmd_warp(args) -> int:
    from .raster import load_image, load_mask, save_image
    from .zoom import build_axis_mapping, marginalize, warp_image

    image = load_image(args.image)
    from PIL import Image

    guidance = np.asarray(Image.open(args.guidance).convert("L"), dtype=np.float64)
    if guidance.shape != image.shape[:2]:
        raise ValueError(
            f"guidance {guidance.shape} does not match image {image.shape[:2]}"
        )
    out_h, out_w = _parse_size(args.out_size)
    s_x, s_y = marginalize(guidance)
    mx = build_axis_mapping(s_x, out_w, args.sigma)
    my = build_axis_mapping(s_y, out_h, args.sigma)
    warped = warp_image(image, mx, my)
    save_image(warped, args.out)
    sidecar = Path(args.out).with_suffix(".txt")
    with open(sidecar, "w") as f:
        f.write("# axis u source_coord\n")
        for name, m in (("x", mx), ("y", my)):
            for u, g in enumerate(m.source_coords()):
                f.write(f"{name} {u} {g:.6f}\n")
    log.info("warped %s -> %s (+ %s)", args.image, args.out, sidecar)
    return 0


def _cmd_perturb(args) -> int:
    from .clicksim import PerturbConfig, perturb_to_iou
    from .raster import iou, load_mask, save_mask

    gt = load_mask(args.mask)
    cfg = PerturbConfig(
        target_iou=args.target, tolerance=args.tolerance, seed=args.seed
    )
    m = perturb_to_iou(gt, cfg)
    save_mask(m, args.out)
    print(json.dumps({"achieved_iou": iou(m, gt)}))
    return 0


def _cmd_simulate(args) -> int:
    from .pipeline import PipelineConfig, run_session
    from .raster import load_image, load_mask
    from .segmenters import make_segmenter

    image = load_image(args.image)
    gt = load_mask(args.mask)
    seg = make_segmenter(args.segmenter, gt=gt, seed=args.seed)
    cfg = PipelineConfig(working_size=args.working_size, budget=args.budget)
    trace = run_session(
        image, gt, seg, cfg, _parse_thresholds(args.thresholds), instance=args.image
    )
    json.dump(trace.to_json(), sys.stdout, indent=2)
    print()
    return 0


def _cmd_evaluate(args) -> int:
    from .harness import DatasetIndex, EvalConfig, evaluate

    index = DatasetIndex.from_directory(args.dataset)
    cfg = EvalConfig(
        segmenter=args.segmenter,
        budget=args.budget,
        working_size=args.working_size,
        thresholds=_parse_thresholds(args.thresholds) or (0.85, 0.9),
        seed=args.seed,
        workers=args.threads,
    )
    report = evaluate(index, cfg)
    report.save(args.out)
    print(json.dumps(report.aggregates(), sort_keys=True))
    return 0


def _cmd_train_toy(args) -> int:
    from .losses import LossConfig
    from .maskmatch import generate_maskmatch_sample, prediction_gap, train_toy
    from .scenes import SceneSpec, generate_scene

    cfg = LossConfig()

    def scene_pairs(count: int, base: int):
        out = []
        for i in range(count):
            s = generate_scene(
                SceneSpec(height=args.size, width=args.size, seed=base + i)
            )
            out.append((s.image, s.mask))
        return out

    train = scene_pairs(args.scenes, 7_000_000 + args.seed * 10_000)
    held = scene_pairs(args.held_out, 9_000_000 + args.seed * 10_000)
    result = {}
    for label, use_reg in (("with", True), ("without", False)):
        res = train_toy(
            train, use_regularizer=use_reg, seed=args.seed, lr=args.lr, cfg=cfg
        )
        gaps = []
        for j, (img, gt) in enumerate(held):
            hs = 555_000_000 + args.seed * 1000 + j
            sample = generate_maskmatch_sample(img, gt, res.params, hs, cfg)
            gaps.append(prediction_gap(sample, res.params))
        result[label] = {
            "curve": [
                {
                    "step": pt.step,
                    "total": pt.total,
                    "l_sup": pt.l_sup,
                    "l_mr": pt.l_mr,
                    "gate_open": pt.gate_open,
                }
                for pt in res.curve
            ],
            "held_out_gap": float(np.mean(gaps)),
            "params": [float(v) for v in res.params.to_vector()],
        }
    base = result["without"]["held_out_gap"]
    result["relative_gap_reduction"] = (
        (base - result["with"]["held_out_gap"]) / base if base > 0 else 0.0
    )
    text = json.dumps(result, indent=2)
    if args.out == "-":
        print(text)
    else:
        Path(args.out).write_text(text + "\n")
    return 0


def _cmd_gen_scenes(args) -> int:
    from .scenes import SceneSpec, generate_scenes, write_dataset

    h, w = _parse_size(args.size)
    scenes = generate_scenes(args.count, SceneSpec(height=h, width=w, seed=args.seed))
    root = write_dataset(scenes, args.out)
    print(json.dumps({"root": str(root), "count": len(scenes)}))
    return 0


def _cmd_serve(args) -> int:
    from .server import serve

    serve(
        port=args.port,
        max_sessions=args.max_sessions,
        idle_timeout=args.idle_timeout_sec,
        static_dir=args.static_dir,
    )
    return 0


_COMMANDS = {
    "warp": _cmd_warp,
    "perturb": _cmd_perturb,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "train-toy": _cmd_train_toy,
    "gen-scenes": _cmd_gen_scenes,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    args.seed = getattr(args, "seed", DEFAULT_SEED)
    args.verbosity = getattr(args, "verbosity", 0)
    args.threads = getattr(args, "threads", None)
    logging.basicConfig(
        level={0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}[args.verbosity],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
