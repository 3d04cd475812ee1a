"""Synthetic-aperture refocusing baselines.

Refocusing at disparity d warps every view by -d * offset so that the
scene plane at disparity d aligns with the center view, then aggregates
the warped views per pixel (validity-weighted mean, or median over the
views with majority-valid support).
"""

from __future__ import annotations

import numpy as np

from .lf_core import LightField, shift_view


def _warp_stack(lf: LightField, d: float):
    """Warp all views to the focus plane at disparity d.

    Returns (warped, validity) with shapes (U*V, H, W, C) and (U*V, H, W).
    Warped pixel values are pre-weighted by their bilinear validity.
    """
    n = lf.u * lf.v
    warped = np.empty((n, lf.h, lf.w, lf.c), dtype=np.float64)
    validity = np.empty((n, lf.h, lf.w), dtype=np.float64)
    i = 0
    for _, off, view in lf.iter_views():
        shifted, valid = shift_view(view.astype(np.float64), off, -d)
        warped[i] = shifted
        validity[i] = valid
        i += 1
    return warped, validity


def sa_average(lf: LightField, d: float):
    """Shift-and-average refocusing.

    Returns (image, weight) where weight is the per-pixel accumulated
    validity; pixels with zero total validity are filled with 0 and show
    up as weight == 0.
    """
    warped, validity = _warp_stack(lf, d)
    wsum = validity.sum(axis=0)
    total = warped.sum(axis=0)
    out = np.zeros_like(total)
    np.divide(total, wsum[:, :, None], out=out, where=wsum[:, :, None] > 0)
    return out.astype(lf.views.dtype), wsum


def sa_median(lf: LightField, d: float):
    """Per-pixel, per-channel median over warped views with validity > 0.5.

    Median of an even count is the lower order statistic (index
    floor((n-1)/2)).  Returns (image, count) where count is the number of
    contributing views per pixel; count == 0 pixels are filled with 0.
    """
    warped, validity = _warp_stack(lf, d)
    ok = validity > 0.5
    # renormalize partially-valid border samples before taking order stats
    vals = np.where(
        ok[:, :, :, None],
        warped / np.maximum(validity, 1e-12)[:, :, :, None],
        np.inf,
    )
    vals.sort(axis=0)
    count = ok.sum(axis=0)
    idx = np.maximum(count - 1, 0) // 2
    picked = np.take_along_axis(
        vals, np.broadcast_to(idx[None, :, :, None], (1,) + vals.shape[1:]), axis=0
    )[0]
    picked = np.where(count[:, :, None] > 0, picked, 0.0)
    return picked.astype(lf.views.dtype), count


def focal_stack(lf: LightField, d_list):
    """Sweep sa_average over a list of disparities."""
    d_list = list(d_list)
    if not d_list:
        raise ValueError("disparity sweep must be non-empty")
    return [sa_average(lf, d)[0] for d in d_list]


def mean_gradient_magnitude(img: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Sharpness statistic: mean gradient magnitude of the channel-mean
    image, optionally restricted to a boolean mask."""
    img = np.asarray(img, dtype=np.float64)
    gray = img.mean(axis=2) if img.ndim == 3 else img
    gy, gx = np.gradient(gray)
    mag = np.hypot(gy, gx)
    if mask is not None:
        if not mask.any():
            return 0.0
        return float(mag[mask].mean())
    return float(mag.mean())
