"""Distance, spatially adaptive, perceptual, and adversarial loss terms.

All pixel distances are sums over (k, i, j); batching, where it occurs,
averages over samples. The weighted forms take a per-element weight matrix
H whose combination H = beta1*1 + beta2*W makes the loss spatially
adaptive: edge elements (large w) contribute more, so training effort
concentrates there, while the beta1 floor keeps flat regions in play.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, PreconditionError
from .tensor import ImageTensor, WeightMatrix

__all__ = [
    "LossCoefficients",
    "LossBreakdown",
    "weighted_l1",
    "weighted_charbonnier",
    "grad_weighted_loss",
    "sa_pixel_loss",
    "perceptual_loss",
    "gan_discriminator_loss",
    "gan_generator_loss",
    "total_loss",
    "PROB_FLOOR",
    "MODES",
]

# Probabilities are clamped to [PROB_FLOOR, 1 - PROB_FLOOR] before any log.
PROB_FLOOR = 1e-7

MODES = ("esr_plain", "esr_sa", "vsr_plain", "vsr_sa")


@dataclass(frozen=True)
class LossCoefficients:
    """Scalar family governing the composite training losses.

    alpha weighs the adversarial term of the image-SR loss; alpha1/alpha2
    weigh the adversarial and perceptual terms of the video-SR loss (the
    image-SR perceptual weight is fixed to 1). beta1 scales the uniform
    pixel term, beta2 the edge-weighted term; epsilon is the Charbonnier
    constant; norm picks the pixel distance.
    """

    alpha: float = 0.005
    alpha1: float = 0.001
    alpha2: float = 0.998
    beta1: float = 0.01
    beta2: float = 20.0
    epsilon: float = 0.001
    norm: str = "l1"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise PreconditionError(f"epsilon must be positive, got {self.epsilon}")
        if self.norm not in ("l1", "charbonnier"):
            raise PreconditionError(f"unknown norm {self.norm!r}")
        for name in ("alpha", "alpha1", "alpha2", "beta1", "beta2", "epsilon"):
            if not math.isfinite(getattr(self, name)):
                raise PreconditionError(f"coefficient {name} is not finite")

    @classmethod
    def image_sr_defaults(cls) -> "LossCoefficients":
        """Published image-SR values: GAN 0.005, uniform pixel 0.01, SA 20."""
        return cls(alpha=0.005, beta1=0.01, beta2=20.0, norm="l1")

    @classmethod
    def video_sr_defaults(cls, edge_method: str = "local_variance") -> "LossCoefficients":
        """Published video-SR values; beta2 is 5 for local variance, 1.5 for Canny."""
        beta2 = 5.0 if edge_method == "local_variance" else 1.5
        return cls(alpha1=0.001, alpha2=0.998, beta1=0.001, beta2=beta2, norm="charbonnier")

    def with_beta2(self, beta2: float) -> "LossCoefficients":
        return replace(self, beta2=float(beta2))


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term decomposition of a composite loss; total is their sum."""

    gan_term: float
    perceptual_term: float
    pixel_uniform_term: float
    pixel_sa_term: float
    total: float

    def as_dict(self):
        return {
            "gan_term": self.gan_term,
            "perceptual_term": self.perceptual_term,
            "pixel_uniform_term": self.pixel_uniform_term,
            "pixel_sa_term": self.pixel_sa_term,
            "total": self.total,
        }


def _check_same_shape(*tensors):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError(f"shape mismatch: {[t.shape for t in tensors]}")


def weighted_l1(u: ImageTensor, v: ImageTensor, h: WeightMatrix) -> float:
    """Sum of h * |u - v| over all elements; H = 1 gives the plain L1 loss."""
    _check_same_shape(u, v, h)
    return float(np.sum(h.data * np.abs(u.data - v.data)))


def weighted_charbonnier(u: ImageTensor, v: ImageTensor, h: WeightMatrix, eps: float) -> float:
    """Sum of h * sqrt((u - v)^2 + eps^2), the smooth L1 surrogate."""
    _check_same_shape(u, v, h)
    if not eps > 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    d = u.data - v.data
    return float(np.sum(h.data * np.sqrt(d * d + eps * eps)))


def weighted_norm(u, v, h, coeffs: LossCoefficients) -> float:
    """The coefficient set's configured pixel distance with weights h."""
    if coeffs.norm == "l1":
        return weighted_l1(u, v, h)
    return weighted_charbonnier(u, v, h, coeffs.epsilon)


def grad_weighted_loss(
    u: ImageTensor, v: ImageTensor, h: WeightMatrix, coeffs: LossCoefficients
) -> ImageTensor:
    """Elementwise derivative of the weighted distance with respect to v.

    L1 uses the subgradient -h * sign(u - v) with sign(0) = 0; Charbonnier
    is -h * (u - v) / sqrt((u - v)^2 + eps^2). v plays the role of the
    super-resolved output, so this is the tensor the optimizer consumes.
    """
    _check_same_shape(u, v, h)
    d = u.data - v.data
    if coeffs.norm == "l1":
        g = -h.data * np.sign(d)
    else:
        eps = coeffs.epsilon
        g = -h.data * d / np.sqrt(d * d + eps * eps)
    return ImageTensor(g)


def sa_pixel_loss(
    hr: ImageTensor, sr: ImageTensor, w: WeightMatrix, coeffs: LossCoefficients
) -> float:
    """Spatially adaptive pixel loss with H = beta1*1 + beta2*W(hr).

    Computed through its exact linear decomposition
    beta1 * L(1) + beta2 * L(W); beta2 = 0 degenerates to the uniform
    pixel loss scaled by beta1.
    """
    _check_same_shape(hr, sr, w)
    ones = ImageTensor(np.ones(hr.shape))
    uniform = weighted_norm(hr, sr, ones, coeffs)
    if coeffs.beta2 == 0.0:
        return coeffs.beta1 * uniform
    edge = weighted_norm(hr, sr, w, coeffs)
    return coeffs.beta1 * uniform + coeffs.beta2 * edge


def perceptual_loss(hr: ImageTensor, sr: ImageTensor, extractor, eps: float = 0.001) -> float:
    """Charbonnier distance between feature-space representations.

    The extractor is any callable mapping an ImageTensor to an ImageTensor
    of features; identical inputs cost eps per feature element.
    """
    feat_hr = extractor(hr)
    feat_sr = extractor(sr)
    _check_same_shape(feat_hr, feat_sr)
    ones = ImageTensor(np.ones(feat_hr.shape))
    return weighted_charbonnier(feat_hr, feat_sr, ones, eps)


def _clamp_probs(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise PreconditionError("empty probability batch")
    return np.clip(arr, PROB_FLOOR, 1.0 - PROB_FLOOR)


def gan_discriminator_loss(d_real, d_fake) -> float:
    """-mean log D(hr) - mean log(1 - D(sr)); minimizing trains the critic."""
    real = _clamp_probs(d_real)
    fake = _clamp_probs(d_fake)
    return float(-np.mean(np.log(real)) - np.mean(np.log(1.0 - fake)))


def gan_generator_loss(d_fake) -> float:
    """Non-saturating adversarial term -mean log D(sr) for the generator."""
    fake = _clamp_probs(d_fake)
    return float(-np.mean(np.log(fake)))


def total_loss(
    hr: ImageTensor,
    sr: ImageTensor,
    w,
    d_fake,
    extractor,
    coeffs: LossCoefficients,
    mode: str,
) -> LossBreakdown:
    """Composite generator loss for one of the four training modes.

    esr_* modes use the L1 pixel norm with GAN weight alpha and perceptual
    weight 1; vsr_* modes use Charbonnier with weights alpha1/alpha2.
    Plain modes weigh pixels uniformly (beta1); *_sa modes add the
    beta2-scaled edge term. The breakdown's total is the exact sum of its
    four terms.
    """
    if mode not in MODES:
        raise PreconditionError(f"unknown mode {mode!r}; expected one of {MODES}")
    norm = "l1" if mode.startswith("esr") else "charbonnier"
    coeffs = replace(coeffs, norm=norm)

    if mode.startswith("esr"):
        gan_term = coeffs.alpha * gan_generator_loss(d_fake)
        percep_term = perceptual_loss(hr, sr, extractor, coeffs.epsilon)
    else:
        gan_term = coeffs.alpha1 * gan_generator_loss(d_fake)
        percep_term = coeffs.alpha2 * perceptual_loss(hr, sr, extractor, coeffs.epsilon)

    ones = ImageTensor(np.ones(hr.shape))
    pixel_uniform = coeffs.beta1 * weighted_norm(hr, sr, ones, coeffs)
    if mode.endswith("_sa") and coeffs.beta2 != 0.0:
        if w is None:
            raise PreconditionError("SA modes require an edge map W")
        _check_same_shape(hr, sr, w)
        pixel_sa = coeffs.beta2 * weighted_norm(hr, sr, w, coeffs)
    else:
        pixel_sa = 0.0

    total = gan_term + percep_term + pixel_uniform + pixel_sa
    return LossBreakdown(gan_term, percep_term, pixel_uniform, pixel_sa, total)
