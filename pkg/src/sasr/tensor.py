"""Multi-channel image tensors, padding, color conversion, bicubic resampling.

Images are held channel-major as (K, I, J) float64 arrays with a nominal
sample range of [0, 1]. All public operations are pure and return new
tensors; the wrapped arrays are marked read-only so values can be shared
freely between threads.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DimensionError, PreconditionError

__all__ = [
    "ImageTensor",
    "FrameStack",
    "PaddingPolicy",
    "pad",
    "crop_margin",
    "to_luminance",
    "bicubic_resize",
    "resize_matrix",
]

# ITU-R BT.601 luma weights, summing to 1.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageTensor:
    """A K-channel image grid of float64 samples in channel-major order."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis, :, :]
        if arr.ndim != 3:
            raise DimensionError(f"image data must be (K, I, J), got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise DimensionError(f"image dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("image data contains non-finite values")
        if arr is self.data and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def from_array(cls, arr) -> "ImageTensor":
        """Wrap a 2-D (single channel) or 3-D channel-major array."""
        return cls(np.asarray(arr, dtype=np.float64))

    @classmethod
    def full(cls, channels, height, width, value) -> "ImageTensor":
        return cls(np.full((channels, height, width), float(value)))

    @classmethod
    def zeros(cls, channels, height, width) -> "ImageTensor":
        return cls.full(channels, height, width, 0.0)

    def allclose(self, other: "ImageTensor", atol=0.0, rtol=0.0) -> bool:
        return self.shape == other.shape and np.allclose(
            self.data, other.data, atol=atol, rtol=rtol
        )


# Weight maps share the ImageTensor shape contract (non-negative values).
WeightMatrix = ImageTensor


@dataclass(frozen=True)
class FrameStack:
    """An odd-length, time-ordered run of same-shape frames."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) == 0 or len(frames) % 2 == 0:
            raise PreconditionError(f"frame count must be odd, got {len(frames)}")
        shape = frames[0].shape
        for f in frames:
            if f.shape != shape:
                raise DimensionError("all frames must share one (K, I, J) shape")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    @property
    def center_index(self):
        return (len(self.frames) - 1) // 2

    @property
    def center(self) -> ImageTensor:
        return self.frames[self.center_index]


@dataclass(frozen=True)
class PaddingPolicy:
    """Border handling for windowed operators.

    mode is "reflect" (mirror without repeating the edge sample) or
    "replicate" (repeat the edge sample). margin is per spatial axis.
    """

    mode: str = "reflect"
    margin: tuple = field(default=(0, 0))

    def __post_init__(self):
        if self.mode not in ("reflect", "replicate"):
            raise PreconditionError(f"unknown padding mode {self.mode!r}")
        m = self.margin
        if isinstance(m, int):
            m = (m, m)
        mi, mj = int(m[0]), int(m[1])
        if mi < 0 or mj < 0:
            raise PreconditionError("padding margins must be non-negative")
        object.__setattr__(self, "margin", (mi, mj))


def pad(img: ImageTensor, policy: PaddingPolicy) -> ImageTensor:
    """Grow the spatial axes by the policy margins using its border mode."""
    mi, mj = policy.margin
    if policy.mode == "reflect":
        if mi >= img.height or mj >= img.width:
            raise PreconditionError(
                f"reflect margin {policy.margin} too large for {img.height}x{img.width} image"
            )
        mode = "reflect"
    else:
        mode = "edge"
    if mi == 0 and mj == 0:
        return img
    out = np.pad(img.data, ((0, 0), (mi, mi), (mj, mj)), mode=mode)
    return ImageTensor(out)


def crop_margin(img: ImageTensor, margin) -> ImageTensor:
    """Drop `margin` samples from each spatial border (inverse of pad)."""
    mi, mj = (margin, margin) if isinstance(margin, int) else margin
    if mi == 0 and mj == 0:
        return img
    if 2 * mi >= img.height or 2 * mj >= img.width:
        raise PreconditionError("crop margin consumes the whole image")
    return ImageTensor(img.data[:, mi : img.height - mi, mj : img.width - mj])


def to_luminance(img: ImageTensor) -> ImageTensor:
    """Collapse an RGB image to one luma channel; identity on 1-channel input."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise DimensionError(f"luminance needs 1 or 3 channels, got {img.channels}")
    r, g, b = img.data
    return ImageTensor(_LUMA_WEIGHTS[0] * r + _LUMA_WEIGHTS[1] * g + _LUMA_WEIGHTS[2] * b)


def _catmull_rom(t):
    """Catmull-Rom cubic kernel (a = -0.5) evaluated at |t|."""
    a = -0.5
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    out = np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))
    return out


def resize_matrix(in_len: int, out_len: int) -> np.ndarray:
    """Dense (out_len, in_len) operator for 1-D Catmull-Rom resampling.

    Output sample x maps to input coordinate (x + 0.5) * in/out - 0.5; the
    four taps around it are clamped to the valid range (replicate border).
    Each row sums to 1 analytically, so constants are fixed points.
    """
    if out_len < 1 or in_len < 1:
        raise PreconditionError("resize lengths must be positive")
    ratio = in_len / out_len
    x = (np.arange(out_len) + 0.5) * ratio - 0.5
    base = np.floor(x).astype(np.int64)
    mat = np.zeros((out_len, in_len))
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, in_len - 1)
        w = _catmull_rom(x - (base + tap))
        np.add.at(mat, (np.arange(out_len), idx), w)
    return mat


def bicubic_resize(img: ImageTensor, scale) -> ImageTensor:
    """Separable Catmull-Rom resampling by a positive rational scale factor."""
    frac = Fraction(scale).limit_denominator(10**6)
    if frac <= 0:
        raise PreconditionError(f"scale must be positive, got {scale}")
    out_h = int(img.height * frac)
    out_w = int(img.width * frac)
    if out_h < 1 or out_w < 1:
        raise PreconditionError(f"scale {scale} collapses {img.height}x{img.width} to zero size")
    mat_h = resize_matrix(img.height, out_h)
    mat_w = resize_matrix(img.width, out_w)
    out = np.einsum("pi,kij,qj->kpq", mat_h, img.data, mat_w, optimize=True)
    return ImageTensor(out)
