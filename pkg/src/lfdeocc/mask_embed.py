"""Mask-embedding training-data synthesis.

Plants alpha-carrying occluder masks into clean (rectified) light fields
at randomly assigned positive disparities.  Each mask is warped per view
by disparity * angular offset and alpha-composited over the view, so the
generated light field is disparity-consistent: refocusing at a layer's
disparity re-aligns that layer across views.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from .lf_core import LightField, resize_bilinear, shift_view
from .refocus import mean_gradient_magnitude, sa_average

DEFAULT_DISPARITY_RANGES = ((1.0, 2.0), (2.0, 3.5), (3.5, 5.0))


@dataclass
class MaskAsset:
    """An occluder image: 3-channel rgb plus a matching 1-channel alpha."""

    rgb: np.ndarray
    alpha: np.ndarray
    id: str = ""

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.alpha = np.asarray(self.alpha)
        if self.alpha.ndim == 3:
            self.alpha = self.alpha[:, :, 0]
        if self.rgb.shape[:2] != self.alpha.shape[:2]:
            raise ValueError("mask rgb and alpha must share dimensions")
        if self.alpha.min() < 0 or self.alpha.max() > 1:
            raise ValueError("mask alpha must lie in [0, 1]")


@dataclass
class OcclusionLayer:
    """A mask placed on the center view with a positive scene disparity."""

    mask: MaskAsset
    disparity: float
    placement: tuple[int, int]  # top-left (row, col) of the scaled mask
    scale: float = 1.0

    def __post_init__(self):
        if not self.disparity > 0:
            raise ValueError("occluders must have positive disparity")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass
class SynthesisConfig:
    layer_count: int = 1
    disparity_ranges: tuple = DEFAULT_DISPARITY_RANGES
    channel_shuffle: bool = False
    rng_seed: int = 0
    scale_range: tuple[float, float] = (0.5, 1.5)
    min_inside_fraction: float = 0.25
    binarize_alpha: bool = False
    # shuffle mask rgb with the same permutation as the light field
    shuffle_mask_same: bool = True

    def __post_init__(self):
        if self.layer_count not in (1, 2, 3):
            raise ValueError("layer_count must be 1, 2 or 3")
        prev_hi = 0.0
        for lo, hi in self.disparity_ranges[: self.layer_count]:
            if not (0 < lo <= hi):
                raise ValueError("disparity ranges must be strictly positive")
            if lo < prev_hi:
                raise ValueError("disparity ranges must increase across layers")
            prev_hi = hi


def channel_shuffle(lf: LightField, gt: np.ndarray, seed: int):
    """Apply one random RGB permutation consistently to every view and the
    groundtruth.  Returns (lf, gt, permutation)."""
    if lf.c != 3 or gt.shape[2] != 3:
        raise ValueError("channel shuffle requires 3-channel views")
    perm = np.random.default_rng(seed).permutation(3)
    return LightField(lf.views[..., perm].copy()), gt[..., perm].copy(), perm


def place_mask(layer: OcclusionLayer, shape: tuple[int, int]):
    """Render the scaled mask onto a view-sized canvas at its placement.

    Returns (rgb, alpha) canvases of the requested (H, W) shape; parts of
    the mask falling outside the canvas are clipped away.
    """
    h, w = shape
    mh = max(1, round(layer.mask.rgb.shape[0] * layer.scale))
    mw = max(1, round(layer.mask.rgb.shape[1] * layer.scale))
    rgb = resize_bilinear(layer.mask.rgb.astype(np.float64), mh, mw)
    alpha = resize_bilinear(layer.mask.alpha.astype(np.float64), mh, mw)
    crgb = np.zeros((h, w, 3), dtype=np.float64)
    calpha = np.zeros((h, w), dtype=np.float64)
    r0, c0 = layer.placement
    ry0, ry1 = max(r0, 0), min(r0 + mh, h)
    cx0, cx1 = max(c0, 0), min(c0 + mw, w)
    if ry1 > ry0 and cx1 > cx0:
        crgb[ry0:ry1, cx0:cx1] = rgb[ry0 - r0:ry1 - r0, cx0 - c0:cx1 - c0]
        calpha[ry0:ry1, cx0:cx1] = alpha[ry0 - r0:ry1 - r0, cx0 - c0:cx1 - c0]
    return crgb, np.clip(calpha, 0.0, 1.0)


def warp_mask(layer: OcclusionLayer, offset: tuple[int, int], shape: tuple[int, int]):
    """Warp the placed mask to the view at the given angular offset.

    Returns (rgb, alpha); at the center view (offset (0, 0)) the mask is
    unwarped.  A placement entirely outside the view yields all-zero alpha.
    """
    rgb, alpha = place_mask(layer, shape)
    if offset == (0, 0):
        return rgb, alpha
    wrgb, _ = shift_view(rgb, offset, layer.disparity)
    walpha, _ = shift_view(alpha, offset, layer.disparity)
    return wrgb, np.clip(walpha, 0.0, 1.0)


def composite(view: np.ndarray, rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Alpha-over compositing: out = alpha*rgb + (1-alpha)*view.

    Pixels with alpha == 0 are left bitwise unchanged.
    """
    if view.shape[:2] != rgb.shape[:2] or view.shape[:2] != alpha.shape[:2]:
        raise ValueError("composite inputs must share dimensions")
    out = view.copy()
    hit = alpha > 0
    a = alpha[hit][:, None]
    out[hit] = (a * rgb[hit] + (1.0 - a) * view[hit]).astype(view.dtype)
    return out


def _draw_layer(rng: np.random.Generator, masks, cfg: SynthesisConfig,
                layer_idx: int, shape: tuple[int, int]) -> OcclusionLayer:
    h, w = shape
    lo, hi = cfg.disparity_ranges[layer_idx]
    disparity = float(rng.uniform(lo, hi))
    mask = masks[int(rng.integers(len(masks)))]
    if cfg.binarize_alpha:
        mask = MaskAsset(mask.rgb, (mask.alpha > 0.5).astype(mask.alpha.dtype), mask.id)
    scale = float(rng.uniform(*cfg.scale_range))
    mh = max(1, round(mask.rgb.shape[0] * scale))
    mw = max(1, round(mask.rgb.shape[1] * scale))
    placement = (0, 0)
    for _ in range(100):
        r0 = int(rng.integers(-mh + 1, h))
        c0 = int(rng.integers(-mw + 1, w))
        inside = (min(r0 + mh, h) - max(r0, 0)) * (min(c0 + mw, w) - max(c0, 0))
        if inside >= cfg.min_inside_fraction * mh * mw:
            placement = (r0, c0)
            break
    return OcclusionLayer(mask=mask, disparity=disparity, placement=placement, scale=scale)


def synthesize(lf: LightField, masks, cfg: SynthesisConfig):
    """Embed 1-3 occlusion layers into a clean light field.

    The input light field must already be rectified so that scene content
    has non-positive disparity.  Returns (occluded, gt, layers) where gt
    is the clean center view (taken before compositing) and layers are
    ordered by increasing disparity, i.e. nearest occluder last.
    """
    masks = list(masks)
    if not masks:
        raise ValueError("mask set must be non-empty")
    rng = np.random.default_rng(cfg.rng_seed)

    views = lf.views.copy()
    perm = np.arange(3)
    if cfg.channel_shuffle:
        if lf.c != 3:
            raise ValueError("channel shuffle requires 3-channel views")
        perm = rng.permutation(3)
        views = views[..., perm]
    clean = LightField(views)
    gt = clean.center_view.copy()

    layers = []
    for k in range(cfg.layer_count):
        layer = _draw_layer(rng, masks, cfg, k, (lf.h, lf.w))
        if cfg.channel_shuffle and cfg.shuffle_mask_same:
            layer = OcclusionLayer(
                mask=MaskAsset(layer.mask.rgb[..., perm], layer.mask.alpha, layer.mask.id),
                disparity=layer.disparity, placement=layer.placement, scale=layer.scale)
        elif cfg.channel_shuffle:
            mperm = rng.permutation(3)
            layer = OcclusionLayer(
                mask=MaskAsset(layer.mask.rgb[..., mperm], layer.mask.alpha, layer.mask.id),
                disparity=layer.disparity, placement=layer.placement, scale=layer.scale)
        layers.append(layer)

    out = np.empty_like(clean.views)
    for (r, c), off, view in clean.iter_views():
        img = view
        # increasing disparity: nearer occluders composited last, on top
        for layer in layers:
            rgb, alpha = warp_mask(layer, off, (lf.h, lf.w))
            img = composite(img, rgb, alpha)
        out[r, c] = img
    return LightField(out), gt, layers


def center_alpha(layers, shape: tuple[int, int]) -> np.ndarray:
    """Composite alpha of all layers on the center view (union coverage)."""
    total = np.zeros(shape, dtype=np.float64)
    for layer in layers:
        _, alpha = place_mask(layer, shape)
        total = total + alpha - total * alpha
    return total


def occlusion_rate(layers, shape: tuple[int, int]) -> float:
    """Fraction of center-view pixels with composite alpha > 0.5."""
    return float((center_alpha(layers, shape) > 0.5).mean())


@dataclass
class LayerCheck:
    disparity: float
    sharpness: dict
    status: str  # "pass" | "fail" | "inconclusive"


@dataclass
class CheckReport:
    layers: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(lc.status != "fail" for lc in self.layers)


def refocus_check(occluded: LightField, layers,
                  min_region: int = 32) -> CheckReport:
    """Verify the synthesized configuration by refocusing.

    For each layer, refocus the occluded light field at every layer
    disparity and at 0, and measure sharpness (mean gradient magnitude)
    inside the layer's center-view footprint.  A correctly embedded layer
    is sharpest at its own disparity.

    The measurement region excludes (a) pixels any *other* layer can smear
    across under some probe warp (its footprint dilated by the maximum
    probe displacement) and (b) a border margin where refocusing
    renormalizes partially valid samples.  Layers whose usable region
    shrinks below `min_region` pixels, and texture-free (constant-color)
    masks, are flagged inconclusive.
    """
    layers = list(layers)
    if not layers:
        raise ValueError("refocus check needs at least one layer")
    h, w = occluded.h, occluded.w
    probes = sorted({0.0} | {float(l.disparity) for l in layers})
    stack = {d: sa_average(occluded, d)[0] for d in probes}
    m = max((occluded.u - 1) // 2, (occluded.v - 1) // 2)
    radius = int(np.ceil(max(probes) * m))

    placed = [place_mask(layer, (h, w)) for layer in layers]
    footprints = [alpha > 0.5 for _, alpha in placed]
    smears = [binary_dilation(fp, iterations=radius) if radius and fp.any() else fp
              for fp in footprints]
    border_ok = np.zeros((h, w), dtype=bool)
    if h > 2 * radius and w > 2 * radius:
        border_ok[radius:h - radius, radius:w - radius] = True

    report = CheckReport()
    for k, layer in enumerate(layers):
        rgb, _ = placed[k]
        region = footprints[k] & border_ok
        for j in range(len(layers)):
            if j != k:
                region &= ~smears[j]
        # probe texture on the eroded interior so the silhouette edge
        # doesn't count as texture for a constant-color mask
        interior = binary_erosion(footprints[k])
        texture = mean_gradient_magnitude(rgb, interior) if interior.any() else 0.0
        if region.sum() < min_region or texture < 1e-6:
            report.layers.append(LayerCheck(layer.disparity, {}, "inconclusive"))
            continue
        sharp = {d: mean_gradient_magnitude(stack[d], region) for d in probes}
        best = max(sharp, key=sharp.get)
        status = "pass" if best == float(layer.disparity) else "fail"
        report.layers.append(LayerCheck(layer.disparity, sharp, status))
    return report
