"""Procedural scene generators: textured planes, single-plane light
fields, occluder masks and desk-scale training corpora.

These back the verification oracles and the scaled end-to-end experiment;
backgrounds are rendered at non-positive disparity (so the light fields
are already rectified) and occluders are embedded via mask embedding.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .lf_core import LightField
from .mask_embed import MaskAsset, SynthesisConfig, synthesize


def random_texture(rng: np.random.Generator, h: int, w: int, c: int = 3,
                   smooth: float = 2.0) -> np.ndarray:
    """Random texture in [0.05, 0.95]: gaussian-filtered noise, contrast
    stretched per channel."""
    tex = rng.random((h, w, c))
    if smooth > 0:
        tex = gaussian_filter(tex, sigma=(smooth, smooth, 0))
    lo = tex.min(axis=(0, 1), keepdims=True)
    hi = tex.max(axis=(0, 1), keepdims=True)
    tex = (tex - lo) / np.maximum(hi - lo, 1e-9)
    return (0.05 + 0.9 * tex).astype(np.float32)


def smooth_background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Bright, low-frequency background: a color gradient plus soft blobs."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    base = np.empty((h, w, 3), dtype=np.float64)
    for ch in range(3):
        a, b, c0 = rng.uniform(-0.3, 0.3, size=3)
        base[:, :, ch] = 0.65 + a * yy + b * xx + c0 * yy * xx
    blobs = gaussian_filter(rng.random((h, w, 3)), sigma=(max(h, w) / 8, max(h, w) / 8, 0))
    blobs = blobs - blobs.mean(axis=(0, 1), keepdims=True)
    out = base + 1.5 * blobs
    return np.clip(out, 0.25, 1.0).astype(np.float32)


def plane_lightfield(texture: np.ndarray, u: int, v: int, d: float) -> LightField:
    """Light field of one front-parallel textured plane at disparity d.

    The texture must be oversized by at least ceil(|d| * max_offset) on
    every side; views are cropped windows so that every pixel is valid
    (integer d gives exact translations).
    """
    cr, cc = (u - 1) // 2, (v - 1) // 2
    h, w = texture.shape[:2]
    margin_r = int(np.ceil(abs(d) * cr))
    margin_c = int(np.ceil(abs(d) * cc))
    vh, vw = h - 2 * margin_r, w - 2 * margin_c
    if vh <= 0 or vw <= 0:
        raise ValueError("texture too small for the requested disparity span")
    views = np.empty((u, v, vh, vw, texture.shape[2]), dtype=texture.dtype)
    ys = np.arange(vh, dtype=np.float64) + margin_r
    xs = np.arange(vw, dtype=np.float64) + margin_c
    for r in range(u):
        for c in range(v):
            # the plane point seen at center pixel p appears at p + d*offset,
            # so view (r, c) samples the texture at p - d*offset
            sy = ys - d * (r - cr)
            sx = xs - d * (c - cc)
            views[r, c] = _sample_bilinear(texture, sy, sx)
    return LightField(views)


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 2)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 2)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    out = (img[y0][:, x0] * (1 - fy) * (1 - fx)
           + img[y0][:, x0 + 1] * (1 - fy) * fx
           + img[y0 + 1][:, x0] * fy * (1 - fx)
           + img[y0 + 1][:, x0 + 1] * fy * fx)
    return out.astype(img.dtype)


def constant_lightfield(h: int, w: int, u: int, v: int, value=0.5, c: int = 3) -> LightField:
    views = np.full((u, v, h, w, c), value, dtype=np.float32)
    return LightField(views)


def bar_mask(rng: np.random.Generator, h: int, w: int, bar_width: int = 2,
             spacing: int = 14, orientation: str = "both",
             dark: bool = True, textured: bool = True) -> MaskAsset:
    """Fence-like mask: periodic bars with binary alpha."""
    alpha = np.zeros((h, w), dtype=np.float32)
    phase_r = int(rng.integers(spacing))
    phase_c = int(rng.integers(spacing))
    if orientation in ("h", "both"):
        for r0 in range(phase_r, h, spacing):
            alpha[r0:r0 + bar_width, :] = 1.0
    if orientation in ("v", "both"):
        for c0 in range(phase_c, w, spacing):
            alpha[:, c0:c0 + bar_width] = 1.0
    base = rng.uniform(0.02, 0.25, size=3) if dark else rng.uniform(0.6, 0.95, size=3)
    rgb = np.broadcast_to(base, (h, w, 3)).astype(np.float32).copy()
    if textured:
        rgb = np.clip(rgb + random_texture(rng, h, w, smooth=1.0) * 0.15, 0.0, 1.0)
    return MaskAsset(rgb=rgb.astype(np.float32), alpha=alpha, id="bars")


def blob_mask(rng: np.random.Generator, h: int, w: int, coverage: float = 0.35,
              dark: bool = True, textured: bool = True) -> MaskAsset:
    """Irregular blob occluder: thresholded filtered noise alpha."""
    fieldv = gaussian_filter(rng.random((h, w)), sigma=min(h, w) / 10)
    thresh = np.quantile(fieldv, 1.0 - coverage)
    alpha = (fieldv > thresh).astype(np.float32)
    base = rng.uniform(0.02, 0.25, size=3) if dark else rng.uniform(0.6, 0.95, size=3)
    rgb = np.broadcast_to(base, (h, w, 3)).astype(np.float32).copy()
    if textured:
        rgb = np.clip(rgb + random_texture(rng, h, w, smooth=1.0) * 0.15, 0.0, 1.0)
    return MaskAsset(rgb=rgb.astype(np.float32), alpha=alpha, id="blob")


def desk_mask_set(seed: int, count: int = 8, size: int = 56) -> list[MaskAsset]:
    """A small procedural mask library for desk-scale experiments."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))
    masks = []
    for i in range(count):
        if i % 2 == 0:
            masks.append(blob_mask(rng, size, size, coverage=float(rng.uniform(0.25, 0.45))))
        else:
            masks.append(bar_mask(rng, size, size, bar_width=int(rng.integers(3, 7)),
                                  spacing=int(rng.integers(12, 20))))
    return masks


def make_desk_sample(seed: int, h: int = 64, w: int = 64, u: int = 5, v: int = 5,
                     layer_count: int = 1, masks=None):
    """One desk-scale training sample: smooth background plane at disparity
    0 (views identical, i.e. already rectified) with embedded occluders.

    Returns (occluded LF, gt, layers).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x17]))
    bg = smooth_background(rng, h, w)
    clean = LightField(np.broadcast_to(bg, (u, v, h, w, 3)).copy())
    if masks is None:
        masks = desk_mask_set(seed=0)
    cfg = SynthesisConfig(
        layer_count=layer_count,
        disparity_ranges=((1.0, 2.0), (2.0, 3.5), (3.5, 5.0)),
        rng_seed=int(rng.integers(2 ** 31)),
        scale_range=(0.9, 1.4),
    )
    occluded, gt, layers = synthesize(clean, masks, cfg)
    return occluded, gt, layers


def make_desk_dataset(n: int, seed: int, **kwargs):
    """A list of (occluded LF, gt) desk-scale samples with derived seeds."""
    masks = desk_mask_set(seed=seed)
    out = []
    for i in range(n):
        occluded, gt, _ = make_desk_sample(seed * 100003 + i, masks=masks, **kwargs)
        out.append((occluded, gt))
    return out
