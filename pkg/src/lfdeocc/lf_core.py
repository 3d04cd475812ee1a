"""Light-field data model and geometric operations.

Images are numpy arrays of shape (H, W, C) with float intensities in a
nominal [0, 1] range.  A light field is a (U, V) grid of such views.

Conventions used throughout the package:
  * The center view of a (U, V) grid requires U and V odd and sits at
    ((U-1)/2, (V-1)/2).  The angular offset of view (r, c) is
    (r - center_row, c - center_col).
  * A scene point at disparity d appears translated by +d * offset
    (in pixels) when moving from the center view to view `offset`.
    Positive disparity = in front of the rectification plane (occluder),
    negative = behind (background).
  * Bilinear sampling places sample centers at integer coordinates.
    2x upsampling follows the align-corners-false convention with edge
    clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def angular_center(u: int, v: int) -> tuple[int, int]:
    """Center index of a (u, v) angular grid. Requires odd u, v."""
    if u % 2 == 0 or v % 2 == 0:
        raise ValueError(f"angular grid must be odd in both dims, got {u}x{v}")
    return (u - 1) // 2, (v - 1) // 2


@dataclass
class LightField:
    """A (U, V) grid of sub-aperture views, stored as one (U,V,H,W,C) array."""

    views: np.ndarray

    def __post_init__(self):
        self.views = np.asarray(self.views)
        if self.views.ndim != 5:
            raise ValueError(f"views must be (U,V,H,W,C), got shape {self.views.shape}")
        if self.views.shape[0] < 1 or self.views.shape[1] < 1:
            raise ValueError("need at least a 1x1 angular grid")

    @property
    def u(self) -> int:
        return self.views.shape[0]

    @property
    def v(self) -> int:
        return self.views.shape[1]

    @property
    def h(self) -> int:
        return self.views.shape[2]

    @property
    def w(self) -> int:
        return self.views.shape[3]

    @property
    def c(self) -> int:
        return self.views.shape[4]

    @property
    def center_index(self) -> tuple[int, int]:
        return angular_center(self.u, self.v)

    @property
    def center_view(self) -> np.ndarray:
        cr, cc = self.center_index
        return self.views[cr, cc]

    def offset(self, row: int, col: int) -> tuple[int, int]:
        cr, cc = self.center_index
        return row - cr, col - cc

    def iter_views(self):
        """Yield ((row, col), (drow, dcol), view) row-major over the grid."""
        cr, cc = self.center_index
        for r in range(self.u):
            for c in range(self.v):
                yield (r, c), (r - cr, c - cc), self.views[r, c]

    def max_offset(self) -> tuple[int, int]:
        cr, cc = self.center_index
        return max(cr, self.u - 1 - cr), max(cc, self.v - 1 - cc)

    @classmethod
    def from_view_list(cls, views, u: int, v: int) -> "LightField":
        """Build from a row-major list of u*v (H,W,C) arrays."""
        if len(views) != u * v:
            raise ValueError(f"expected {u * v} views, got {len(views)}")
        return cls(np.stack(views).reshape(u, v, *views[0].shape))


def shift_view(img: np.ndarray, offset, d: float):
    """Translate an image by (d*drow, d*dcol) pixels with bilinear sampling.

    Out-of-bounds source samples contribute zero; the returned validity map
    carries the fraction of in-bounds bilinear support per pixel in [0, 1].

    Returns (shifted, validity).
    """
    if not np.isfinite(d):
        raise ValueError(f"disparity must be finite, got {d}")
    img = np.asarray(img)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]
    ty = float(d) * float(offset[0])
    tx = float(d) * float(offset[1])

    ys = np.arange(h, dtype=np.float64) - ty
    xs = np.arange(w, dtype=np.float64) - tx
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0

    acc = np.zeros(img.shape, dtype=np.float64)
    wacc = np.zeros((h, w), dtype=np.float64)
    for yi, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        ym = (yi >= 0) & (yi < h)
        wyv = wy * ym
        yc = np.clip(yi, 0, h - 1)
        for xi, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            xm = (xi >= 0) & (xi < w)
            wxv = wx * xm
            xc = np.clip(xi, 0, w - 1)
            wgt = wyv[:, None] * wxv[None, :]
            acc += wgt[:, :, None] * img[yc][:, xc]
            wacc += wgt
    out = acc.astype(img.dtype)
    if squeeze:
        out = out[:, :, 0]
    return out, wacc


def rectify(lf: LightField, d0: float) -> LightField:
    """Shift every view toward the center by d0*offset and crop to the common
    valid region, so the plane at disparity d0 has zero residual disparity."""
    if not np.isfinite(d0):
        raise ValueError("rectification disparity must be finite")
    mr, mc = lf.max_offset()
    mh = math.ceil(abs(d0) * mr)
    mw = math.ceil(abs(d0) * mc)
    if lf.h - 2 * mh <= 0 or lf.w - 2 * mw <= 0:
        raise ValueError(
            f"rectification at d0={d0} crops {lf.h}x{lf.w} views to nothing")
    out = np.empty(
        (lf.u, lf.v, lf.h - 2 * mh, lf.w - 2 * mw, lf.c), dtype=lf.views.dtype)
    for (r, c), off, view in lf.iter_views():
        shifted, _ = shift_view(view, off, -d0)
        out[r, c] = shifted[mh:lf.h - mh, mw:lf.w - mw]
    return LightField(out)


def stack_channels(lf: LightField) -> np.ndarray:
    """Concatenate all views row-major by angular coordinate into one
    (U*V*C, H, W) array; the center view occupies the middle channel block."""
    return np.transpose(
        lf.views.reshape(lf.u * lf.v, lf.h, lf.w, lf.c), (0, 3, 1, 2)
    ).reshape(lf.u * lf.v * lf.c, lf.h, lf.w)


def unstack_channels(arr: np.ndarray, u: int, v: int, c: int) -> LightField:
    """Inverse of stack_channels."""
    n, h, w = arr.shape
    if n != u * v * c:
        raise ValueError(f"{n} channels cannot hold a {u}x{v} grid of {c}-channel views")
    views = np.transpose(arr.reshape(u * v, c, h, w), (0, 2, 3, 1)).reshape(u, v, h, w, c)
    return LightField(views.copy())


def patch_grid_count(size: int, patch: int, stride: int) -> int:
    return (size - patch) // stride + 1


def extract_patches(lf: LightField, gt: np.ndarray, patch: int, stride: int):
    """Crop the light field (identically across views) and the aligned
    groundtruth into patch x patch tiles on a regular stride grid.

    Returns a list of (LightField patch, gt patch) pairs.
    """
    if patch > lf.h or patch > lf.w:
        raise ValueError(f"patch {patch} exceeds view size {lf.h}x{lf.w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if gt.shape[0] != lf.h or gt.shape[1] != lf.w:
        raise ValueError("groundtruth dimensions must match the views")
    out = []
    for iy in range(patch_grid_count(lf.h, patch, stride)):
        for ix in range(patch_grid_count(lf.w, patch, stride)):
            y, x = iy * stride, ix * stride
            out.append((
                LightField(lf.views[:, :, y:y + patch, x:x + patch, :].copy()),
                gt[y:y + patch, x:x + patch].copy(),
            ))
    return out


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize, align-corners-false, edge-clamped."""
    img = np.asarray(img)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]

    def axis_taps(n_in, n_out):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        i0 = np.floor(src).astype(np.int64)
        f = src - i0
        i0c = np.clip(i0, 0, n_in - 1)
        i1c = np.clip(i0 + 1, 0, n_in - 1)
        return i0c, i1c, f

    y0, y1, fy = axis_taps(h, out_h)
    x0, x1, fx = axis_taps(w, out_w)
    top = img[y0][:, x0] * ((1 - fy)[:, None] * (1 - fx)[None, :])[:, :, None] \
        + img[y0][:, x1] * ((1 - fy)[:, None] * fx[None, :])[:, :, None]
    bot = img[y1][:, x0] * (fy[:, None] * (1 - fx)[None, :])[:, :, None] \
        + img[y1][:, x1] * (fy[:, None] * fx[None, :])[:, :, None]
    out = (top + bot).astype(img.dtype)
    if squeeze:
        out = out[:, :, 0]
    return out


def upsample2x(img: np.ndarray) -> np.ndarray:
    """Bilinear 2x spatial upsampling (align-corners-false)."""
    img = np.asarray(img)
    return resize_bilinear(img, 2 * img.shape[0], 2 * img.shape[1])
