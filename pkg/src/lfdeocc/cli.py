"""Batch command-line front end.

Subcommands: synthesize, refocus, train, infer, evaluate, report.
The seed falls back to the LFDEOCC_SEED environment variable when a
subcommand takes a seed and none is given on the command line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io_png
from .lf_core import rectify, stack_channels
from .mask_embed import SynthesisConfig, occlusion_rate, synthesize
from .metrics import EvalReport, EvalRow, assemble_report, evaluate_scene
from .model import NetworkConfig, build, load_model
from .nn import Tensor
from .refocus import focal_stack, mean_gradient_magnitude, sa_median
from .train import AdamConfig, TrainConfig, train


def _seed_or_env(seed):
    if seed is not None:
        return seed
    env = os.environ.get("LFDEOCC_SEED")
    return int(env) if env else 0


def _source_lightfields(lf_dir):
    """A single LF directory or a directory of LF directories."""
    if os.path.exists(os.path.join(lf_dir, "manifest.json")):
        return [lf_dir]
    subs = io_png.list_sample_dirs(lf_dir)
    if not subs:
        raise FileNotFoundError(f"no manifest.json found under {lf_dir}")
    return subs


def cmd_synthesize(args):
    seed = _seed_or_env(args.seed)
    sources = _source_lightfields(args.lf_dir)
    masks = io_png.load_mask_dir(args.mask_dir)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E]))
    for i in range(args.count):
        src = sources[int(rng.integers(len(sources)))]
        lf, _ = io_png.load_lightfield(src)
        cfg = SynthesisConfig(
            layer_count=args.layers,
            channel_shuffle=args.shuffle_channels,
            rng_seed=int(rng.integers(2 ** 31)),
        )
        occluded, gt, layers = synthesize(lf, masks, cfg)
        sample_dir = os.path.join(args.out, f"sample_{i:05d}")
        io_png.save_sample(
            sample_dir, occluded, gt, layers,
            extra_manifest={
                "source": os.path.basename(src),
                "occlusion_rate": occlusion_rate(layers, (lf.h, lf.w)),
            })
    print(f"wrote {args.count} samples to {args.out}")
    return 0


def _parse_sweep(spec: str):
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sweep must be lo:hi:n, got {spec!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("sweep count must be >= 1")
    return [lo] if n == 1 else list(np.linspace(lo, hi, n))


def cmd_refocus(args):
    lf, _ = io_png.load_lightfield(args.lf_dir)
    if args.sweep is not None:
        d_list = _parse_sweep(args.sweep)
    elif args.disparity is not None:
        d_list = [args.disparity]
    else:
        raise ValueError("refocus needs --disparity or --sweep")
    os.makedirs(args.out, exist_ok=True)
    table = []
    for d in d_list:
        if args.method == "avg":
            img = focal_stack(lf, [d])[0]
        else:
            img, _ = sa_median(lf, d)
        name = f"refocus_{args.method}_d{d:+.3f}.png"
        io_png.save_image(os.path.join(args.out, name), img)
        table.append({"disparity": float(d), "file": name,
                      "sharpness": mean_gradient_magnitude(img)})
    with open(os.path.join(args.out, "sharpness.json"), "w") as f:
        json.dump(table, f, indent=2, sort_keys=True)
    print(f"wrote {len(d_list)} refocused image(s) to {args.out}")
    return 0


def _load_json_config(path):
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def cmd_train(args):
    cfg = _load_json_config(args.config)
    seed = _seed_or_env(args.seed)
    net_fields = {k: v for k, v in cfg.get("network", {}).items()}
    train_fields = {k: v for k, v in cfg.get("train", {}).items()}
    adam_fields = {k: v for k, v in cfg.get("adam", {}).items()}
    sample_dirs = io_png.list_sample_dirs(args.data)
    if not sample_dirs:
        raise FileNotFoundError(f"no samples under {args.data}")
    dataset = []
    for sub in sample_dirs:
        lf, gt, _ = io_png.load_sample(sub)
        dataset.append((lf, gt))
    u, v = dataset[0][0].u, dataset[0][0].v
    net_fields.setdefault("angular_rows", u)
    net_fields.setdefault("angular_cols", v)
    net_fields.setdefault("base_depth", 8)
    net = build(NetworkConfig.from_dict(net_fields), seed=seed)
    train_fields.setdefault("seed", seed)
    tcfg = TrainConfig(**train_fields)
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    os.makedirs(args.out, exist_ok=True)
    if tcfg.epochs == 0:
        from .model import save_weights
        save_weights(net, os.path.join(args.out, "final.docn"))
        print("0-epoch run: wrote initialization weights")
        return 0
    log = train(net, dataset, tcfg, AdamConfig(lr=tcfg.base_lr, **adam_fields),
                out_dir=args.out, resume_from=args.resume)
    print(f"trained {len(log.rows)} steps; final loss {log.rows[-1][3]:.6f}")
    return 0


def cmd_infer(args):
    net = load_model(args.weights)
    lf, manifest = io_png.load_lightfield(args.lf_dir)
    d0 = args.rectify_disparity
    if d0 is None:
        d0 = manifest.get("rectified_disparity", 0.0)
    if d0:
        lf = rectify(lf, d0)
    down = net.config.downscale
    h16 = (lf.h // down) * down
    w16 = (lf.w // down) * down
    if h16 == 0 or w16 == 0:
        raise ValueError(f"views {lf.h}x{lf.w} smaller than one downscale block")
    if (h16, w16) != (lf.h, lf.w):
        y0 = (lf.h - h16) // 2
        x0 = (lf.w - w16) // 2
        from .lf_core import LightField
        lf = LightField(lf.views[:, :, y0:y0 + h16, x0:x0 + w16, :].copy())
        print(f"center-cropped views to {h16}x{w16} (multiple of {down})")
    x = stack_channels(lf)[None].astype(np.float32)
    net.eval()
    pred = net(Tensor(x)).data[0]
    img = np.clip(np.transpose(pred, (1, 2, 0)), 0.0, 1.0)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    io_png.save_image(args.out, img)
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args):
    pred = io_png.load_image(args.pred)
    gt = io_png.load_image(args.gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and groundtruth {gt.shape} differ")
    row = evaluate_scene(pred, gt, scene=args.scene)
    with open(args.out, "w") as f:
        json.dump(row.__dict__, f, indent=2, sort_keys=True)
    print(f"{row.scene}: l1={row.l1:.4f} psnr={row.psnr:.2f} ssim={row.ssim:.4f}")
    return 0


def cmd_report(args):
    rows = []
    for path in args.rows:
        with open(path) as f:
            rows.append(EvalRow(**json.load(f)))
    report: EvalReport = assemble_report(rows)
    report.save_json(args.out + ".json")
    report.save_csv(args.out + ".csv")
    print(f"wrote {args.out}.json and {args.out}.csv "
          f"(average psnr {report.average.psnr:.2f})")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfdeocc",
        description="Light-field de-occlusion toolkit: data synthesis, "
                    "refocusing baselines, training, inference, evaluation.")
    parser.add_argument("--error-json", metavar="PATH", default=None,
                        help="on failure, also write {'error': ...} to PATH")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="embed occluder masks into clean light fields")
    p.add_argument("--lf-dir", required=True, help="LF directory or directory of LF directories")
    p.add_argument("--mask-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layers", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--shuffle-channels", action="store_true")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("refocus", help="synthetic-aperture refocusing baselines")
    p.add_argument("--lf-dir", required=True)
    p.add_argument("--disparity", type=float, default=None)
    p.add_argument("--sweep", default=None, metavar="LO:HI:N")
    p.add_argument("--method", choices=("avg", "median"), default="avg")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refocus)

    p = sub.add_parser("train", help="train a de-occlusion model on synthesized samples")
    p.add_argument("--data", required=True, help="directory of sample folders")
    p.add_argument("--config", default=None,
                   help="JSON with optional 'network'/'train'/'adam' sections")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict the occlusion-free center view")
    p.add_argument("--weights", required=True)
    p.add_argument("--lf-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rectify-disparity", type=float, default=None,
                   help="override the manifest's rectified_disparity")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score a prediction against groundtruth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scene", default="scene")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="assemble per-scene rows into a table")
    p.add_argument("--rows", nargs="+", required=True, help="evaluate output JSON files")
    p.add_argument("--out", required=True, help="output prefix (.json/.csv appended)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        if args.error_json:
            with open(args.error_json, "w") as f:
                json.dump({"error": str(exc)}, f)
        return 1


if __name__ == "__main__":
    sys.exit(main())
