"""Quantitative evaluation: mean l1 error, PSNR, SSIM and report assembly."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def mean_l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference over all pixels and channels."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_shapes(a, b)
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio, 10*log10(peak^2 / MSE), capped at 99 dB."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_shapes(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_single(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu1 = convolve2d(a, win, mode="valid")
    mu2 = convolve2d(b, win, mode="valid")
    s11 = convolve2d(a * a, win, mode="valid") - mu1 * mu1
    s22 = convolve2d(b * b, win, mode="valid") - mu2 * mu2
    s12 = convolve2d(a * b, win, mode="valid") - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5);
    channel-mean for multi-channel images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    if a.ndim == 2:
        return _ssim_single(a, b, peak)
    vals = [_ssim_single(a[:, :, k], b[:, :, k], peak) for k in range(a.shape[2])]
    return float(np.mean(vals))


@dataclass
class EvalRow:
    scene: str
    l1: float
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    average: EvalRow | None = None

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "average": asdict(self.average) if self.average else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls(rows=[EvalRow(**r) for r in d["rows"]])
        if d.get("average"):
            rep.average = EvalRow(**d["average"])
        return rep

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load_json(cls, path) -> "EvalReport":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["scene", "l1", "psnr", "ssim"])
            for r in self.rows + ([self.average] if self.average else []):
                writer.writerow([r.scene, f"{r.l1:.6f}", f"{r.psnr:.4f}", f"{r.ssim:.6f}"])


def evaluate_scene(pred: np.ndarray, gt: np.ndarray, scene: str = "scene") -> EvalRow:
    """Compute the (l1, psnr, ssim) row for one prediction/groundtruth pair."""
    return EvalRow(scene=scene, l1=mean_l1(pred, gt), psnr=psnr(pred, gt), ssim=ssim(pred, gt))


def assemble_report(rows) -> EvalReport:
    """Assemble per-scene rows and append the arithmetic-mean Average row."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot assemble a report from zero rows")
    avg = EvalRow(
        scene="Average",
        l1=float(np.mean([r.l1 for r in rows])),
        psnr=float(np.mean([r.psnr for r in rows])),
        ssim=float(np.mean([r.ssim for r in rows])),
    )
    return EvalReport(rows=rows, average=avg)
