"""Edge-map extraction and the spatially adaptive weight matrix.

Two extractors are provided. The local-variance map measures windowed
spatial activity per channel and squashes it to [0, 1) with w = v/(v+delta).
The Canny map is a self-contained pipeline (blur, Sobel, non-maximum
suppression, hysteresis) yielding a binary map on luminance, broadcast to
all channels. Either map W feeds the combined weight matrix
H = alpha*1 + beta*W, whose alpha floor keeps flat regions from being
ignored during training.
"""

import collections
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PreconditionError
from .tensor import ImageTensor, PaddingPolicy, WeightMatrix, pad, to_luminance

__all__ = [
    "WindowSpec",
    "EdgeMapConfig",
    "local_stats",
    "variance_to_weights",
    "canny_edges",
    "extract_edge_map",
    "build_weight_matrix",
]


@dataclass(frozen=True)
class WindowSpec:
    """A square (2r+1)x(2r+1) analysis window with its border policy."""

    radius: int = 1
    mode: str = "reflect"

    def __post_init__(self):
        if self.radius < 1:
            raise PreconditionError(f"window radius must be >= 1, got {self.radius}")

    @property
    def size(self):
        return 2 * self.radius + 1

    @property
    def count(self):
        return self.size * self.size

    @property
    def padding(self) -> PaddingPolicy:
        return PaddingPolicy(mode=self.mode, margin=(self.radius, self.radius))


@dataclass(frozen=True)
class EdgeMapConfig:
    """Extractor selection plus the knobs of both methods.

    delta tunes the variance normalization: local variance equal to delta
    maps to weight 0.5. Canny thresholds are fractions of the per-image
    maximum gradient magnitude, keeping behavior exposure-independent.
    """

    method: str = "local_variance"
    window: WindowSpec = field(default_factory=WindowSpec)
    delta: float = 0.01
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.2

    def __post_init__(self):
        if self.method not in ("local_variance", "canny"):
            raise ConfigError(f"unknown edge method {self.method!r}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not self.canny_sigma > 0:
            raise ConfigError(f"canny_sigma must be positive, got {self.canny_sigma}")
        if not (0.0 < self.canny_low < 1.0 and 0.0 < self.canny_high < 1.0):
            raise ConfigError("canny thresholds must lie in (0, 1)")
        if self.canny_low >= self.canny_high:
            raise ConfigError(
                f"canny_low ({self.canny_low}) must be below canny_high ({self.canny_high})"
            )


def local_stats(img: ImageTensor, window: WindowSpec = WindowSpec()):
    """Windowed mean and variance per channel.

    Returns (mean, variance) maps the same shape as the input. Window
    samples are centered on the middle sample before accumulating, so
    constant regions give exactly zero variance, and the variance is the
    literal two-pass sum of squared deviations from the local mean.
    """
    r = window.size - 1  # total offset span per axis
    padded = pad(img, window.padding).data
    k, hi, wj = img.shape
    inv = 1.0 / window.count
    center = img.data

    shift = np.zeros((k, hi, wj))
    for di in range(r + 1):
        for dj in range(r + 1):
            shift += padded[:, di : di + hi, dj : dj + wj] - center
    shift *= inv

    var = np.zeros((k, hi, wj))
    for di in range(r + 1):
        for dj in range(r + 1):
            dev = (padded[:, di : di + hi, dj : dj + wj] - center) - shift
            var += dev * dev
    var *= inv
    return ImageTensor(center + shift), ImageTensor(var)


def variance_to_weights(variance: WeightMatrix, delta: float) -> WeightMatrix:
    """Squash non-negative variance to the [0, 1) range via v/(v+delta)."""
    if not delta > 0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    v = variance.data
    if np.any(v < 0):
        raise PreconditionError("variance map has negative elements")
    return ImageTensor(v / (v + delta))


# -- Canny pipeline -----------------------------------------------------------

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(round(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def _filter_separable(plane: np.ndarray, kern: np.ndarray) -> np.ndarray:
    radius = (len(kern) - 1) // 2
    img = ImageTensor(plane[np.newaxis])
    padded = pad(img, PaddingPolicy("reflect", (radius, radius))).data[0]
    hi, wj = plane.shape
    rows = np.zeros((hi, wj + 2 * radius))
    for t, w in enumerate(kern):
        rows += w * padded[t : t + hi, :]
    out = np.zeros((hi, wj))
    for t, w in enumerate(kern):
        out += w * rows[:, t : t + wj]
    return out


def _filter_3x3(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    img = ImageTensor(plane[np.newaxis])
    padded = pad(img, PaddingPolicy("reflect", (1, 1))).data[0]
    hi, wj = plane.shape
    out = np.zeros((hi, wj))
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * padded[di : di + hi, dj : dj + wj]
    return out


_NMS_TIE_REL = 1e-9


def _nms_4dir(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin ridges to the local maximum along the quantized gradient axis.

    Directions are quantized to 0/45/90/135 degrees. A pixel survives when
    its magnitude exceeds the preceding neighbor along that axis by a
    relative margin and is not below the following one by that margin; a
    symmetric plateau therefore keeps exactly its index-lowest pixel, and
    the margin keeps the decision stable under rounding dust (e.g. after
    an additive intensity shift). Out-of-image neighbors count as zero.
    """
    hi, wj = mag.shape
    padded = np.zeros((hi + 2, wj + 2))
    padded[1:-1, 1:-1] = mag

    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = np.zeros(mag.shape, dtype=np.int8)  # 0: horiz axis (vertical edge)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3

    # (prev, next) neighbor offsets along each quantized gradient axis.
    offsets = {
        0: ((0, -1), (0, 1)),
        1: ((-1, 1), (1, -1)),
        2: ((-1, 0), (1, 0)),
        3: ((-1, -1), (1, 1)),
    }
    keep = np.zeros(mag.shape, dtype=bool)
    for sec, ((pi, pj), (ni, nj)) in offsets.items():
        prev = padded[1 + pi : 1 + pi + hi, 1 + pj : 1 + pj + wj]
        nxt = padded[1 + ni : 1 + ni + hi, 1 + nj : 1 + nj + wj]
        above_prev = mag - prev > _NMS_TIE_REL * np.maximum(mag, prev)
        not_below_next = mag - nxt > -_NMS_TIE_REL * np.maximum(mag, nxt)
        keep |= (sector == sec) & above_prev & not_below_next
    keep &= mag > 0
    return keep


def _hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Grow strong seeds through weak pixels with 8-connectivity (BFS)."""
    hi, wj = strong.shape
    out = strong.copy()
    queue = collections.deque(zip(*np.nonzero(strong)))
    while queue:
        i, j = queue.popleft()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ni, nj = i + di, j + dj
                if 0 <= ni < hi and 0 <= nj < wj and weak[ni, nj] and not out[ni, nj]:
                    out[ni, nj] = True
                    queue.append((ni, nj))
    return out


def canny_edges(img: ImageTensor, cfg: EdgeMapConfig) -> WeightMatrix:
    """Binary edge map on luminance: blur, Sobel, NMS, hysteresis."""
    if cfg.canny_low >= cfg.canny_high:
        raise ConfigError("canny_low must be below canny_high")
    luma = to_luminance(img).data[0]
    blurred = _filter_separable(luma, _gaussian_kernel(cfg.canny_sigma))
    gx = _filter_3x3(blurred, _SOBEL_X)
    gy = _filter_3x3(blurred, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    # accumulation dust on flat regions must not masquerade as gradient
    # signal once thresholds scale with the per-image peak ([0,1] samples)
    mag[mag <= 1e-12] = 0.0

    peak = mag.max()
    if peak <= 0.0:
        return ImageTensor(np.zeros((1,) + mag.shape))

    surviving = _nms_4dir(mag, gx, gy)
    thinned = np.where(surviving, mag, 0.0)
    strong = thinned >= cfg.canny_high * peak
    weak = thinned >= cfg.canny_low * peak
    edges = _hysteresis(strong, weak)
    return ImageTensor(edges.astype(np.float64)[np.newaxis])


def extract_edge_map(img: ImageTensor, cfg: EdgeMapConfig = EdgeMapConfig()) -> WeightMatrix:
    """Edge map W(x) with the input's shape, by the configured method."""
    if cfg.method == "local_variance":
        _, variance = local_stats(img, cfg.window)
        return variance_to_weights(variance, cfg.delta)
    mono = canny_edges(img, cfg)
    if img.channels == 1:
        return mono
    return ImageTensor(np.broadcast_to(mono.data, img.shape).copy())


def build_weight_matrix(w: WeightMatrix, alpha: float, beta: float) -> WeightMatrix:
    """Combine the edge map into per-element weights h = alpha + beta*w.

    The alpha term is the flat-region floor: h >= alpha everywhere, so the
    weighted loss never ignores smooth areas.
    """
    if alpha < 0 or beta < 0:
        raise PreconditionError("alpha and beta must be non-negative")
    if np.any(w.data < 0):
        raise PreconditionError("edge map has negative elements")
    return ImageTensor(alpha + beta * w.data)
