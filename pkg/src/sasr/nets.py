"""Topology-faithful toy networks for the desk-scale GAN harness.

The generator upscales its input bicubically, fuses (concatenated) frames
with a 3x3 conv, refines through two conv-ReLU-conv residual blocks, and
adds the upscaled center frame back as a global residual, so zero weights
reproduce plain bicubic upscaling. The discriminator is three stride-2
convs with leaky ReLU into a dense sigmoid probability. The feature
extractor is a fixed, seeded two-layer conv stack standing in for a
pretrained perceptual network.
"""

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, DivergenceError, PreconditionError
from .tensor import FrameStack, ImageTensor, bicubic_resize

__all__ = [
    "NetworkParams",
    "FeatureExtractor",
    "init_generator",
    "init_discriminator",
    "generator_forward",
    "discriminator_forward",
    "generator_apply",
    "discriminator_apply",
    "upscaled_input",
]

LEAKY_SLOPE = 0.2
GENERATOR_FEATURES = 16
GENERATOR_BLOCKS = 2
DISCRIMINATOR_CHANNELS = (8, 16, 32)

# fused conv+activation is the fast path; the gradient audit disables it to
# expose pre-activation values (the numbers are identical either way)
FUSE_ACTIVATIONS = True


def _act_conv(x, kernel, bias, activation, stride=1, padding=1):
    if FUSE_ACTIVATIONS:
        return ad.conv2d(x, kernel, bias, stride=stride, padding=padding,
                         activation=activation, slope=LEAKY_SLOPE)
    z = ad.conv2d(x, kernel, bias, stride=stride, padding=padding)
    if activation == "relu":
        return ad.relu(z)
    return ad.leaky_relu(z, LEAKY_SLOPE)


class NetworkParams:
    """Ordered named parameter tensors with same-shape gradient slots."""

    def __init__(self, tensors, seed, meta):
        self.tensors = {name: np.asarray(value, dtype=np.float64) for name, value in tensors.items()}
        self.grads = {name: np.zeros_like(value) for name, value in self.tensors.items()}
        self.seed = int(seed)
        self.meta = dict(meta)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            {name: value.copy() for name, value in self.tensors.items()}, self.seed, self.meta
        )

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0.0

    def check_finite(self):
        for name, value in self.tensors.items():
            if not np.all(np.isfinite(value)):
                raise DivergenceError(f"parameter {name} became non-finite")

    def num_elements(self):
        return sum(v.size for v in self.tensors.values())


def _conv_init(rng, out_ch, in_ch, k=3):
    fan_in = in_ch * k * k
    kernel = rng.normal(0.0, fan_in**-0.5, size=(out_ch, in_ch, k, k))
    bias = np.zeros(out_ch)
    return kernel, bias


def init_generator(in_channels, out_channels, seed, features=GENERATOR_FEATURES,
                   blocks=GENERATOR_BLOCKS) -> NetworkParams:
    rng = np.random.default_rng(seed)
    tensors = {}
    tensors["conv_in.k"], tensors["conv_in.b"] = _conv_init(rng, features, in_channels)
    for r in range(blocks):
        tensors[f"res{r}.c0.k"], tensors[f"res{r}.c0.b"] = _conv_init(rng, features, features)
        tensors[f"res{r}.c1.k"], tensors[f"res{r}.c1.b"] = _conv_init(rng, features, features)
    tensors["conv_out.k"], tensors["conv_out.b"] = _conv_init(rng, out_channels, features)
    meta = {
        "kind": "generator",
        "in_channels": in_channels,
        "out_channels": out_channels,
        "features": features,
        "blocks": blocks,
    }
    return NetworkParams(tensors, seed, meta)


def init_discriminator(in_channels, height, width, seed,
                       channels=DISCRIMINATOR_CHANNELS) -> NetworkParams:
    h, w = height, width
    for _ in channels:
        h = (h - 1) // 2 + 1
        w = (w - 1) // 2 + 1
    if h < 1 or w < 1 or min(height, width) < 2 ** len(channels):
        raise DimensionError(
            f"{height}x{width} input too small for {len(channels)} stride-2 layers"
        )
    rng = np.random.default_rng(seed)
    tensors = {}
    prev = in_channels
    for i, ch in enumerate(channels):
        tensors[f"conv{i}.k"], tensors[f"conv{i}.b"] = _conv_init(rng, ch, prev)
        prev = ch
    flat = channels[-1] * h * w
    tensors["dense.w"] = rng.normal(0.0, flat**-0.5, size=(1, flat))
    tensors["dense.b"] = np.zeros(1)
    meta = {
        "kind": "discriminator",
        "in_channels": in_channels,
        "height": height,
        "width": width,
        "channels": tuple(channels),
    }
    return NetworkParams(tensors, seed, meta)


class FeatureExtractor:
    """Fixed seeded conv stack defining the perceptual feature space.

    Two 3x3 stride-2 layers (8 then 16 channels) with leaky-ReLU; weights
    are drawn once from a seeded Gaussian(0, 1/fan_in) and never updated.
    """

    def __init__(self, in_channels=1, seed=0):
        rng = np.random.default_rng(seed)
        self.k0, self.b0 = _conv_init(rng, 8, in_channels)
        self.k1, self.b1 = _conv_init(rng, 16, 8)
        self.in_channels = in_channels
        self.seed = int(seed)

    def apply(self, x_node):
        """Graph version on a (B, C, H, W) node."""
        tape = x_node.tape
        k0 = ad.const(tape, self.k0)
        b0 = ad.const(tape, self.b0)
        k1 = ad.const(tape, self.k1)
        b1 = ad.const(tape, self.b1)
        h = _act_conv(x_node, k0, b0, "leaky", stride=2)
        return _act_conv(h, k1, b1, "leaky", stride=2)

    def __call__(self, img: ImageTensor) -> ImageTensor:
        if img.channels != self.in_channels:
            raise DimensionError(
                f"extractor built for {self.in_channels} channels, got {img.channels}"
            )
        tape = ad.Tape()
        node = self.apply(ad.const(tape, img.data[np.newaxis]))
        return ImageTensor(node.value[0])


# -- generator ------------------------------------------------------------------


def upscaled_input(inp, params: NetworkParams, scale):
    """Bicubic-upscaled network input and center frame, as plain arrays.

    Returns (stacked_input (Cin, H, W), center (K, H, W)). Multi-frame
    input must be a 5-frame stack whose channel total matches the params.
    """
    k_out = params.meta["out_channels"]
    if isinstance(inp, FrameStack):
        if len(inp) != 5:
            raise PreconditionError(f"multi-frame generator takes 5 frames, got {len(inp)}")
        ups = [bicubic_resize(f, scale) for f in inp.frames]
        stacked = np.concatenate([u.data for u in ups], axis=0)
        center = ups[inp.center_index].data
    else:
        up = bicubic_resize(inp, scale)
        stacked = up.data
        center = up.data
    if stacked.shape[0] != params.meta["in_channels"]:
        raise DimensionError(
            f"generator expects {params.meta['in_channels']} input channels, "
            f"got {stacked.shape[0]}"
        )
    if center.shape[0] != k_out:
        raise DimensionError("center frame channels do not match generator output")
    return stacked, center


def generator_apply(tape, pnodes, up_stack, up_center, meta):
    """Build the generator graph from precomputed upscaled inputs.

    up_stack is a (B, Cin, H, W) constant node; up_center the matching
    (B, K, H, W) global-residual constant node.
    """
    x = _act_conv(up_stack, pnodes["conv_in.k"], pnodes["conv_in.b"], "relu")
    for r in range(meta["blocks"]):
        inner = _act_conv(x, pnodes[f"res{r}.c0.k"], pnodes[f"res{r}.c0.b"], "relu")
        inner = ad.conv2d(inner, pnodes[f"res{r}.c1.k"], pnodes[f"res{r}.c1.b"])
        x = ad.add(x, inner)
    x = ad.conv2d(x, pnodes["conv_out.k"], pnodes["conv_out.b"])
    return ad.add(x, up_center)


def _param_nodes(tape, params: NetworkParams, trainable):
    if trainable:
        return {name: ad.leaf(tape, value, name) for name, value in params.tensors.items()}
    return {name: ad.const(tape, value) for name, value in params.tensors.items()}


def generator_forward(inp, params: NetworkParams, scale) -> ImageTensor:
    """Super-resolve one image or 5-frame stack to HR size."""
    stacked, center = upscaled_input(inp, params, scale)
    tape = ad.Tape()
    pnodes = _param_nodes(tape, params, trainable=False)
    out = generator_apply(
        tape,
        pnodes,
        ad.const(tape, stacked[np.newaxis]),
        ad.const(tape, center[np.newaxis]),
        params.meta,
    )
    return ImageTensor(out.value[0])


def generator_forward_batch(up_stacks, up_centers, params: NetworkParams) -> np.ndarray:
    """Plain batched forward used where no gradients are needed."""
    tape = ad.Tape()
    pnodes = _param_nodes(tape, params, trainable=False)
    out = generator_apply(
        tape, pnodes, ad.const(tape, up_stacks), ad.const(tape, up_centers), params.meta
    )
    return out.value


# -- discriminator --------------------------------------------------------------


def discriminator_apply(tape, pnodes, img_node, meta):
    """Probability node (B,) that each batch image is a genuine HR image."""
    x = img_node
    for i in range(len(meta["channels"])):
        x = _act_conv(x, pnodes[f"conv{i}.k"], pnodes[f"conv{i}.b"], "leaky", stride=2)
    flat = ad.flatten_spatial(x)
    logits = ad.dense(flat, pnodes["dense.w"], pnodes["dense.b"])
    probs = ad.sigmoid(logits)
    squeezed = ad.Node(tape, probs.value[:, 0], (probs,), (lambda g: g[:, np.newaxis],))
    return ad.clip_probs(squeezed)


def discriminator_forward(img: ImageTensor, params: NetworkParams) -> float:
    """Probability in (0, 1) that the image is a genuine HR sample."""
    expected = (params.meta["in_channels"], params.meta["height"], params.meta["width"])
    if img.shape != expected:
        raise DimensionError(f"discriminator expects shape {expected}, got {img.shape}")
    tape = ad.Tape()
    pnodes = _param_nodes(tape, params, trainable=False)
    prob = discriminator_apply(tape, pnodes, ad.const(tape, img.data[np.newaxis]), params.meta)
    return float(prob.value[0])
