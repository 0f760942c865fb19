"""Full-reference quality metrics plus an edge-region error probe.

PSNR and SSIM follow their standard definitions on the [0, 1] range; SSIM
uses the canonical 11x11 Gaussian window (sigma 1.5) over fully interior
positions. edge_region_mae splits the absolute error by an edge-map
threshold so edge fidelity can be compared independently of flat regions.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionError
from .tensor import ImageTensor, WeightMatrix, to_luminance

__all__ = ["MetricReport", "psnr", "ssim", "edge_region_mae", "evaluate_pair"]

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
EMPTY_REGION = -1.0


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    edge_mae: float
    flat_mae: float

    def as_dict(self):
        return {
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
            "edge_mae": self.edge_mae,
            "flat_mae": self.flat_mae,
        }


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical inputs."""
    if a.shape != b.shape:
        raise DimensionError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _gaussian_window(size, sigma):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _window_means(plane, window):
    view = np.lib.stride_tricks.sliding_window_view(plane, window.shape)
    return np.tensordot(view, window, axes=([2, 3], [0, 1]))


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """Mean structural similarity over interior 11x11 Gaussian windows."""
    if a.shape != b.shape:
        raise DimensionError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if min(a.height, a.width) < SSIM_WINDOW:
        raise PreconditionError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = to_luminance(a).data[0]
    y = to_luminance(b).data[0]
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    mu_x = _window_means(x, window)
    mu_y = _window_means(y, window)
    var_x = _window_means(x * x, window) - mu_x * mu_x
    var_y = _window_means(y * y, window) - mu_y * mu_y
    cov = _window_means(x * y, window) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def edge_region_mae(hr: ImageTensor, sr: ImageTensor, w: WeightMatrix, tau: float):
    """(edge_mae, flat_mae) split at weight threshold tau; empty bucket -> -1."""
    if hr.shape != sr.shape or hr.shape != w.shape:
        raise DimensionError("edge_region_mae operands must share a shape")
    if not 0.0 <= tau <= 1.0:
        raise PreconditionError(f"tau must lie in [0, 1], got {tau}")
    err = np.abs(hr.data - sr.data)
    edge_mask = w.data >= tau
    edge_mae = float(err[edge_mask].mean()) if edge_mask.any() else EMPTY_REGION
    flat_mask = ~edge_mask
    flat_mae = float(err[flat_mask].mean()) if flat_mask.any() else EMPTY_REGION
    return edge_mae, flat_mae


def evaluate_pair(hr: ImageTensor, sr: ImageTensor, w: WeightMatrix, tau: float = 0.5) -> MetricReport:
    edge_mae, flat_mae = edge_region_mae(hr, sr, w, tau)
    return MetricReport(psnr(hr, sr), ssim(hr, sr), edge_mae, flat_mae)
