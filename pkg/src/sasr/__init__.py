"""Spatially adaptive pixel losses for GAN-based super-resolution.

The library extracts edge maps from ground-truth images (local variance or
a built-in Canny pipeline), combines them into per-element loss weights
H = alpha*1 + beta*W, and uses the resulting spatially adaptive losses,
together with adversarial and perceptual terms, to train toy single-image
and multi-frame super-resolution GANs at desk scale. Quality metrics and a
coefficient-calibration routine round out the toolkit.
"""

from .edges import (
    EdgeMapConfig,
    WindowSpec,
    build_weight_matrix,
    canny_edges,
    extract_edge_map,
    local_stats,
    variance_to_weights,
)
from .errors import (
    CalibrationError,
    ConfigError,
    DimensionError,
    DivergenceError,
    GraphConsumedError,
    PreconditionError,
    SasrError,
)
from .io import read_model, read_nt1, read_png, write_model, write_nt1, write_png
from .losses import (
    LossBreakdown,
    LossCoefficients,
    gan_discriminator_loss,
    gan_generator_loss,
    grad_weighted_loss,
    perceptual_loss,
    sa_pixel_loss,
    total_loss,
    weighted_charbonnier,
    weighted_l1,
)
from .metrics import MetricReport, edge_region_mae, evaluate_pair, psnr, ssim
from .nets import (
    FeatureExtractor,
    NetworkParams,
    discriminator_forward,
    generator_forward,
    init_discriminator,
    init_generator,
)
from .tensor import (
    FrameStack,
    ImageTensor,
    PaddingPolicy,
    WeightMatrix,
    bicubic_resize,
    pad,
    to_luminance,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainResult,
    adam_step,
    calibrate_beta2,
    effective_lr,
    make_synthetic_dataset,
    measure_sa_share,
    train_gan,
)

__version__ = "0.1.0"

__all__ = [
    "EdgeMapConfig", "WindowSpec", "build_weight_matrix", "canny_edges",
    "extract_edge_map", "local_stats", "variance_to_weights",
    "CalibrationError", "ConfigError", "DimensionError", "DivergenceError",
    "GraphConsumedError", "PreconditionError", "SasrError",
    "read_model", "read_nt1", "read_png", "write_model", "write_nt1", "write_png",
    "LossBreakdown", "LossCoefficients", "gan_discriminator_loss",
    "gan_generator_loss", "grad_weighted_loss", "perceptual_loss",
    "sa_pixel_loss", "total_loss", "weighted_charbonnier", "weighted_l1",
    "MetricReport", "edge_region_mae", "evaluate_pair", "psnr", "ssim",
    "FeatureExtractor", "NetworkParams", "discriminator_forward",
    "generator_forward", "init_discriminator", "init_generator",
    "FrameStack", "ImageTensor", "PaddingPolicy", "WeightMatrix",
    "bicubic_resize", "pad", "to_luminance",
    "AdamState", "TrainConfig", "TrainResult", "adam_step", "calibrate_beta2",
    "effective_lr", "make_synthetic_dataset", "measure_sa_share", "train_gan",
]
