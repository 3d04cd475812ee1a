"""File I/O boundary: PNG codec, light-field directory format, mask
libraries and synthesized-sample folders.

A light-field directory holds `manifest.json` with fields `angular_rows`,
`angular_cols`, `view_pattern` (default "view_{row:02}_{col:02}.png") and
optional `baseline_mm` / `rectified_disparity`, plus one PNG per view.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image as PILImage

from .lf_core import LightField
from .mask_embed import MaskAsset

DEFAULT_VIEW_PATTERN = "view_{row:02}_{col:02}.png"


def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as float32 (H, W, C) in [0, 1]."""
    with PILImage.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode in ("L", "RGB", "RGBA", "LA"):
            arr = np.asarray(im, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float32)


def save_image(path, img: np.ndarray):
    """Write an image as 8-bit PNG (values clipped to [0, 1])."""
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    data = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(path, format="PNG")


def load_manifest(lf_dir) -> dict:
    path = os.path.join(lf_dir, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing manifest.json in {lf_dir}")
    with open(path) as f:
        return json.load(f)


def load_lightfield(lf_dir) -> tuple[LightField, dict]:
    """Load a light-field directory; returns (lf, manifest)."""
    manifest = load_manifest(lf_dir)
    u = manifest["angular_rows"]
    v = manifest["angular_cols"]
    pattern = manifest.get("view_pattern", DEFAULT_VIEW_PATTERN)
    views = []
    for r in range(u):
        for c in range(v):
            path = os.path.join(lf_dir, pattern.format(row=r, col=c))
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing view image {path}")
            img = load_image(path)
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            views.append(img)
    shapes = {im.shape for im in views}
    if len(shapes) != 1:
        raise ValueError(f"views in {lf_dir} have mixed dimensions: {sorted(shapes)}")
    return LightField.from_view_list(views, u, v), manifest


def save_lightfield(lf: LightField, lf_dir, extra: dict | None = None):
    os.makedirs(lf_dir, exist_ok=True)
    manifest = {
        "angular_rows": lf.u,
        "angular_cols": lf.v,
        "view_pattern": DEFAULT_VIEW_PATTERN,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(lf_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    for (r, c), _, view in lf.iter_views():
        save_image(os.path.join(lf_dir, DEFAULT_VIEW_PATTERN.format(row=r, col=c)), view)


def load_mask_dir(mask_dir) -> list[MaskAsset]:
    """Load a mask library: RGBA PNGs, or RGB PNGs paired with
    `<name>_alpha.png`; files without any alpha source are skipped."""
    masks = []
    names = sorted(os.listdir(mask_dir))
    for name in names:
        if not name.lower().endswith(".png") or name.endswith("_alpha.png"):
            continue
        path = os.path.join(mask_dir, name)
        with PILImage.open(path) as im:
            has_alpha = im.mode in ("RGBA", "LA")
        img = load_image(path)
        stem = name[:-4]
        alpha_path = os.path.join(mask_dir, stem + "_alpha.png")
        if has_alpha:
            rgb = img[:, :, :3]
            if rgb.shape[2] == 1:
                rgb = np.repeat(rgb, 3, axis=2)
            alpha = img[:, :, -1]
        elif os.path.exists(alpha_path):
            rgb = img[:, :, :3]
            if rgb.shape[2] == 1:
                rgb = np.repeat(rgb, 3, axis=2)
            alpha = load_image(alpha_path)[:, :, 0]
        else:
            continue
        masks.append(MaskAsset(rgb=rgb, alpha=np.clip(alpha, 0.0, 1.0), id=stem))
    if not masks:
        raise ValueError(f"no usable masks (RGBA or *_alpha.png pairs) in {mask_dir}")
    return masks


def layers_to_json(layers) -> list[dict]:
    return [
        {
            "mask_id": layer.mask.id,
            "disparity": float(layer.disparity),
            "placement": [int(layer.placement[0]), int(layer.placement[1])],
            "scale": float(layer.scale),
        }
        for layer in layers
    ]


def save_sample(sample_dir, occluded: LightField, gt: np.ndarray, layers,
                extra_manifest: dict | None = None):
    """Write one synthesized sample: occluded LF + gt.png + layers.json."""
    save_lightfield(occluded, sample_dir, extra=extra_manifest)
    save_image(os.path.join(sample_dir, "gt.png"), gt)
    with open(os.path.join(sample_dir, "layers.json"), "w") as f:
        json.dump(layers_to_json(layers), f, indent=2, sort_keys=True)


def load_sample(sample_dir):
    """Load a synthesized sample; returns (occluded LF, gt, layers_meta)."""
    lf, manifest = load_lightfield(sample_dir)
    gt = load_image(os.path.join(sample_dir, "gt.png"))
    layers_path = os.path.join(sample_dir, "layers.json")
    layers_meta = []
    if os.path.exists(layers_path):
        with open(layers_path) as f:
            layers_meta = json.load(f)
    return lf, gt, layers_meta


def list_sample_dirs(data_dir) -> list[str]:
    """Sample subdirectories (those containing a manifest), sorted."""
    out = []
    for name in sorted(os.listdir(data_dir)):
        sub = os.path.join(data_dir, name)
        if os.path.isdir(sub) and os.path.exists(os.path.join(sub, "manifest.json")):
            out.append(sub)
    return out
