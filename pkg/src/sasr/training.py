"""Desk-scale adversarial training: Adam, schedules, calibration, data.

The loop alternates one discriminator update against one generator update,
halves the learning rate at the configured iteration marks, and keeps the
parameter snapshot with the minimum validation loss. A short generator-only
warmup on the plain pixel loss stands in for initializing from a
distortion-oriented pretrained model. Everything is driven by a single
seed and is bit-reproducible.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .edges import EdgeMapConfig, extract_edge_map
from .errors import CalibrationError, DivergenceError, PreconditionError
from .losses import LossCoefficients, total_loss
from .nets import (
    FeatureExtractor,
    NetworkParams,
    discriminator_apply,
    discriminator_forward,
    generator_apply,
    generator_forward,
    generator_forward_batch,
    init_discriminator,
    init_generator,
    upscaled_input,
)
from .tensor import FrameStack, ImageTensor, bicubic_resize

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "effective_lr",
    "make_synthetic_dataset",
    "train_gan",
    "TrainResult",
    "calibrate_beta2",
    "measure_sa_share",
]


@dataclass(frozen=True)
class TrainConfig:
    """Schedule, seeds, and loss selection for one training run.

    Defaults follow the published full-scale schedule (5e5 iterations,
    lr 1e-4 halved at 50k/100k/200k/300k, Adam batch 16); desk-scale runs
    override them. mode picks single-image (L1 composite) or 5-frame
    (Charbonnier composite) training; sa switches the edge-weighted pixel
    term on.
    """

    max_iterations: int = 500_000
    lr: float = 1e-4
    lr_halving_points: tuple = (50_000, 100_000, 200_000, 300_000)
    batch_size: int = 16
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    validate_every: int = 1000
    seed: int = 0
    mode: str = "single_image"
    scale: int = 4
    sa: bool = False
    edge_cfg: EdgeMapConfig = field(default_factory=EdgeMapConfig)
    coeffs: LossCoefficients = field(default_factory=LossCoefficients.image_sr_defaults)
    warmup_steps: int = 200

    def __post_init__(self):
        if self.mode not in ("single_image", "multi_frame"):
            raise PreconditionError(f"unknown training mode {self.mode!r}")
        if self.max_iterations < 0 or self.batch_size < 1 or self.validate_every < 1:
            raise PreconditionError("bad iteration/batch/validation settings")
        if not self.lr > 0:
            raise PreconditionError("lr must be positive")
        if self.scale < 1:
            raise PreconditionError("scale must be >= 1")
        if self.warmup_steps < 0:
            raise PreconditionError("warmup_steps must be >= 0")
        points = tuple(int(p) for p in self.lr_halving_points)
        if any(b <= a for a, b in zip(points, points[1:])):
            raise PreconditionError("lr_halving_points must be strictly increasing")
        if any(p < 1 for p in points) or any(p >= self.max_iterations for p in points):
            raise PreconditionError("lr_halving_points must lie in [1, max_iterations)")
        object.__setattr__(self, "lr_halving_points", points)

    @property
    def loss_mode(self):
        base = "esr" if self.mode == "single_image" else "vsr"
        return f"{base}_sa" if self.sa else f"{base}_plain"

    @property
    def sa_loss_mode(self):
        return self.loss_mode.replace("_plain", "_sa")


def effective_lr(cfg: TrainConfig, iteration: int) -> float:
    """Base lr halved once per schedule point reached: lr * 2^-m exactly."""
    m = sum(1 for p in cfg.lr_halving_points if p <= iteration)
    return cfg.lr * 0.5**m


class AdamState:
    """First/second moment accumulators and step counter per parameter."""

    def __init__(self, params: NetworkParams):
        self.m = {name: np.zeros_like(v) for name, v in params.tensors.items()}
        self.v = {name: np.zeros_like(v) for name, v in params.tensors.items()}
        self.step = 0


def adam_step(params: NetworkParams, state: AdamState, lr,
              b1=0.9, b2=0.999, eps=1e-8):
    """One bias-corrected Adam update from params.grads, in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in params.grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params.tensors[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    params.check_finite()
    return params, state


# -- synthetic data -------------------------------------------------------------


def _scene_factory(rng, size, channels):
    """Seeded edge-rich scene; render(oy, ox) rasterizes at a sub-pixel shift.

    Primitive edges ramp over ~1 px so fractional shifts move them smoothly.
    """
    yy0, xx0 = np.meshgrid(
        np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij"
    )
    base = rng.uniform(0.25, 0.55)
    gy, gx = rng.uniform(-0.25, 0.25, size=2)
    amp = rng.uniform(0.04, 0.12)
    freq_y, freq_x = rng.uniform(1.5, 5.0, size=2) / size
    phase = rng.uniform(0.0, 2.0 * math.pi)

    rects = []
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
        hy, hx = rng.uniform(0.06 * size, 0.28 * size, size=2)
        rects.append((cy, cx, hy, hx, rng.uniform(0.0, 1.0)))
    lines = []
    for _ in range(int(rng.integers(1, 3))):
        y0, x0 = rng.uniform(0.1 * size, 0.9 * size, size=2)
        theta = rng.uniform(0.0, math.pi)
        lines.append((y0, x0, math.cos(theta), math.sin(theta),
                      rng.uniform(0.6, 1.4), rng.uniform(0.0, 1.0)))
    gains = rng.uniform(0.8, 1.0, size=channels) if channels > 1 else np.ones(1)

    def render(oy=0.0, ox=0.0):
        yy = yy0 + oy
        xx = xx0 + ox
        img = base + gy * (yy / size) + gx * (xx / size)
        img = img + amp * np.sin(2.0 * math.pi * (freq_y * yy + freq_x * xx) + phase)
        for cy, cx, hy, hx, val in rects:
            cover = np.clip(hy - np.abs(yy - cy) + 0.5, 0.0, 1.0) * np.clip(
                hx - np.abs(xx - cx) + 0.5, 0.0, 1.0
            )
            img = img * (1.0 - cover) + val * cover
        for y0, x0, ct, st, thick, val in lines:
            dist = np.abs((yy - y0) * ct - (xx - x0) * st)
            cover = np.clip(thick - dist + 0.5, 0.0, 1.0)
            img = img * (1.0 - cover) + val * cover
        img = np.clip(img, 0.0, 1.0)
        return ImageTensor(np.stack([np.clip(img * g, 0.0, 1.0) for g in gains]))

    return render


def make_synthetic_dataset(n, hr_size, scale, seed, mode="single_image", channels=1):
    """n seeded (input, hr) pairs of edge-rich patches.

    Single-image samples are (lr, hr); multi-frame samples are
    (5-frame LR stack, center hr) where frames slide along a random
    sub-pixel velocity.
    """
    if hr_size % scale != 0 or hr_size < 2 * scale:
        raise PreconditionError(f"hr_size {hr_size} incompatible with scale {scale}")
    down = Fraction(1, int(scale))
    samples = []
    for idx in range(n):
        rng = np.random.default_rng([int(seed), idx])
        render = _scene_factory(rng, hr_size, channels)
        if mode == "single_image":
            hr = render()
            samples.append((bicubic_resize(hr, down), hr))
        else:
            vy, vx = rng.uniform(-0.6, 0.6, size=2)
            frames = []
            for t in range(5):
                shift = float(t - 2)
                frames.append(bicubic_resize(render(vy * shift, vx * shift), down))
            samples.append((FrameStack(tuple(frames)), render()))
    return samples


# -- prepared batches -----------------------------------------------------------


class _Prepared:
    """Dataset tensors precomputed once per run.

    Per sample: the upscaled (stacked) generator input, the upscaled center
    frame (global residual), the HR target, its edge map W(hr) when the SA
    term is on, and its feature representation for the perceptual term.
    """

    def __init__(self, ups, centers, hrs, weights, feats):
        self.ups = ups
        self.centers = centers
        self.hrs = hrs
        self.weights = weights
        self.feats = feats

    def __len__(self):
        return self.hrs.shape[0]

    def take(self, idx):
        return _Prepared(
            self.ups[idx],
            self.centers[idx],
            self.hrs[idx],
            None if self.weights is None else self.weights[idx],
            self.feats[idx],
        )


def _prepare(samples, gen: NetworkParams, cfg: TrainConfig, extractor, with_weights):
    ups, centers, hrs, weights, feats = [], [], [], [], []
    for inp, hr in samples:
        stacked, center = upscaled_input(inp, gen, cfg.scale)
        ups.append(stacked)
        centers.append(center)
        hrs.append(hr.data)
        feats.append(extractor(hr).data)
        if with_weights:
            weights.append(extract_edge_map(hr, cfg.edge_cfg).data)
    return _Prepared(
        np.stack(ups),
        np.stack(centers),
        np.stack(hrs),
        np.stack(weights) if with_weights else None,
        np.stack(feats),
    )


def _loss_weights(cfg: TrainConfig):
    c = cfg.coeffs
    if cfg.mode == "single_image":
        return c.alpha, 1.0
    return c.alpha1, c.alpha2


def _pixel_terminal(cfg: TrainConfig):
    eps = cfg.coeffs.epsilon
    if cfg.mode == "single_image":
        return lambda target, node, w: ad.l1_terminal(target, node, w)
    return lambda target, node, w: ad.charbonnier_terminal(target, node, w, eps)


def _generator_sr(gen, batch: _Prepared, pool=None):
    """Fresh tape with the generator forward applied to one batch."""
    tape = ad.Tape(pool)
    gp = {name: ad.leaf(tape, v, name) for name, v in gen.tensors.items()}
    sr = generator_apply(
        tape, gp, ad.const(tape, batch.ups), ad.const(tape, batch.centers), gen.meta
    )
    return tape, sr


def _attach_total_loss(tape, sr, disc, extractor, batch: _Prepared, cfg: TrainConfig, sa):
    """Extend a generator tape with the composite loss; returns (node, terms)."""
    dp = {name: ad.const(tape, v) for name, v in disc.tensors.items()}
    d_fake = discriminator_apply(tape, dp, sr, disc.meta)
    gan = ad.neg_mean_log(d_fake)
    percep = ad.charbonnier_terminal(
        batch.feats, extractor.apply(sr), 1.0, cfg.coeffs.epsilon
    )
    terminal = _pixel_terminal(cfg)
    uniform = terminal(batch.hrs, sr, 1.0)
    gan_w, percep_w = _loss_weights(cfg)
    terms = [gan, percep, uniform]
    coeffs = [gan_w, percep_w, cfg.coeffs.beta1]
    if sa:
        terms.append(terminal(batch.hrs, sr, batch.weights))
        coeffs.append(cfg.coeffs.beta2)
    total = ad.weighted_sum(terms, coeffs)
    breakdown = {
        "gan_term": gan_w * float(gan.value),
        "perceptual_term": percep_w * float(percep.value),
        "pixel_uniform_term": cfg.coeffs.beta1 * float(uniform.value),
        "pixel_sa_term": cfg.coeffs.beta2 * float(terms[3].value) if sa else 0.0,
    }
    return total, breakdown


def _generator_graph(gen, disc, extractor, batch: _Prepared, cfg: TrainConfig, sa, pool=None):
    """Total-loss graph for one batch; returns (total node, term values)."""
    tape, sr = _generator_sr(gen, batch, pool)
    return _attach_total_loss(tape, sr, disc, extractor, batch, cfg, sa)


def _warmup_graph(gen, batch: _Prepared, cfg: TrainConfig, pool=None):
    tape, sr = _generator_sr(gen, batch, pool)
    uniform = _pixel_terminal(cfg)(batch.hrs, sr, 1.0)
    return ad.weighted_sum([uniform], [cfg.coeffs.beta1])


def _discriminator_graph(disc, real_batch, fake_batch, pool=None):
    tape = ad.Tape(pool)
    dp = {name: ad.leaf(tape, v, name) for name, v in disc.tensors.items()}
    d_real = discriminator_apply(tape, dp, ad.const(tape, real_batch), disc.meta)
    d_fake = discriminator_apply(tape, dp, ad.const(tape, fake_batch), disc.meta)
    return ad.weighted_sum(
        [ad.neg_mean_log(d_real), ad.neg_mean_log_one_minus(d_fake)], [1.0, 1.0]
    )


def _apply_grads(params: NetworkParams, grads):
    for name in params.grads:
        params.grads[name][...] = grads[name]


def _step(params, state, graph_root, lr, cfg):
    value = float(graph_root.value)
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}")
    _apply_grads(params, ad.backward(graph_root))
    graph_root.tape.close()
    adam_step(params, state, lr, cfg.adam_b1, cfg.adam_b2, cfg.adam_eps)
    return value


@dataclass
class TrainResult:
    generator: NetworkParams
    discriminator: NetworkParams
    history: list
    best_iteration: int
    best_val_loss: float


def _init_components(cfg: TrainConfig, sample_hr: ImageTensor):
    k = sample_hr.channels
    in_ch = 5 * k if cfg.mode == "multi_frame" else k
    gen = init_generator(in_ch, k, seed=cfg.seed + 1)
    disc = init_discriminator(k, sample_hr.height, sample_hr.width, seed=cfg.seed + 2)
    extractor = FeatureExtractor(k, seed=cfg.seed + 3)
    return gen, disc, extractor


def train_gan(train_data, val_data, cfg: TrainConfig) -> TrainResult:
    """Alternating GAN loop returning the minimum-validation-loss snapshot.

    Deterministic for a fixed config: identical runs yield bit-identical
    parameters and histories. Raises DivergenceError on non-finite losses.
    """
    if not train_data or not val_data:
        raise PreconditionError("training and validation data must be non-empty")
    gen, disc, extractor = _init_components(cfg, train_data[0][1])
    history = []
    if cfg.max_iterations == 0:
        return TrainResult(gen, disc, history, 0, math.inf)

    train = _prepare(train_data, gen, cfg, extractor, with_weights=cfg.sa)
    val = _prepare(val_data, gen, cfg, extractor, with_weights=cfg.sa)
    rng = np.random.default_rng(cfg.seed)
    pool = ad.BufferPool()

    warm_state = AdamState(gen)
    for step in range(1, cfg.warmup_steps + 1):
        batch = train.take(rng.integers(0, len(train), size=cfg.batch_size))
        value = _step(gen, warm_state, _warmup_graph(gen, batch, cfg, pool), cfg.lr, cfg)
        history.append({"phase": "warmup", "iteration": step, "pixel_loss": value})

    gen_state = AdamState(gen)
    disc_state = AdamState(disc)
    best_gen, best_disc = gen.copy(), disc.copy()
    best_val = math.inf
    best_iteration = 0

    for it in range(1, cfg.max_iterations + 1):
        lr = effective_lr(cfg, it)
        batch = train.take(rng.integers(0, len(train), size=cfg.batch_size))

        # one generator forward serves both updates: its detached output is
        # the discriminator's fake batch, then the same tape is extended
        # with the composite loss against the just-updated discriminator
        gen_tape, sr = _generator_sr(gen, batch, pool)
        disc_value = _step(
            disc, disc_state, _discriminator_graph(disc, batch.hrs, sr.value, pool), lr, cfg
        )
        total, breakdown = _attach_total_loss(gen_tape, sr, disc, extractor, batch, cfg, cfg.sa)
        gen_value = _step(gen, gen_state, total, lr, cfg)

        row = {"phase": "train", "iteration": it, "lr": lr,
               "disc_loss": disc_value, "total": gen_value}
        row.update(breakdown)

        if it % cfg.validate_every == 0 or it == cfg.max_iterations:
            val_total, _ = _generator_graph(gen, disc, extractor, val, cfg, cfg.sa, pool)
            val_value = float(val_total.value)
            val_total.tape.close()
            if not math.isfinite(val_value):
                raise DivergenceError(f"non-finite validation loss {val_value}")
            row["val_total"] = val_value
            if val_value < best_val:
                best_val = val_value
                best_iteration = it
                best_gen, best_disc = gen.copy(), disc.copy()
        history.append(row)

    return TrainResult(best_gen, best_disc, history, best_iteration, best_val)


# -- coefficient calibration ----------------------------------------------------


def _calibration_state(dataset_sample, cfg: TrainConfig):
    """Components warmed exactly as a training run would start."""
    if not dataset_sample:
        raise PreconditionError("calibration sample must be non-empty")
    gen, disc, extractor = _init_components(cfg, dataset_sample[0][1])
    prepared = _prepare(dataset_sample, gen, cfg, extractor, with_weights=True)
    rng = np.random.default_rng(cfg.seed)
    pool = ad.BufferPool()
    warm_state = AdamState(gen)
    for _ in range(cfg.warmup_steps):
        batch = prepared.take(rng.integers(0, len(prepared), size=cfg.batch_size))
        _step(gen, warm_state, _warmup_graph(gen, batch, cfg, pool), cfg.lr, cfg)
    return gen, disc, extractor, prepared


def _per_sample_terms(gen, disc, extractor, prepared: _Prepared, cfg: TrainConfig):
    """Per-sample unit SA term S_n and remaining-loss term B_n."""
    sr = generator_forward_batch(prepared.ups, prepared.centers, gen)
    tape = ad.Tape()
    dp = {name: ad.const(tape, v) for name, v in disc.tensors.items()}
    probs = discriminator_apply(tape, dp, ad.const(tape, sr), disc.meta).value

    diff = prepared.hrs - sr
    eps = cfg.coeffs.epsilon
    if cfg.mode == "single_image":
        elem = np.abs(diff)
    else:
        elem = np.sqrt(diff * diff + eps * eps)
    unit_sa = (prepared.weights * elem).sum(axis=(1, 2, 3))
    uniform = elem.sum(axis=(1, 2, 3))

    tape = ad.Tape()
    feat_nodes = extractor.apply(ad.const(tape, sr))
    fdiff = prepared.feats - feat_nodes.value
    percep = np.sqrt(fdiff * fdiff + eps * eps).sum(axis=(1, 2, 3))

    gan_w, percep_w = _loss_weights(cfg)
    gan = -np.log(np.clip(probs, 1e-7, 1.0 - 1e-7))
    rest = gan_w * gan + percep_w * percep + cfg.coeffs.beta1 * uniform
    return unit_sa, rest


def calibrate_beta2(dataset_sample, cfg: TrainConfig, target_share=0.15) -> float:
    """Edge-term coefficient making the SA share of the total loss ~= target.

    With beta2 = 1 the unit SA term S and the remaining terms B are
    averaged over the sample; beta2 = s*B / ((1-s)*S) then yields
    share s = beta2*S / (beta2*S + B).
    """
    if not 0.0 < target_share < 1.0:
        raise PreconditionError("target share must lie in (0, 1)")
    gen, disc, extractor, prepared = _calibration_state(dataset_sample, cfg)
    unit_sa, rest = _per_sample_terms(gen, disc, extractor, prepared, cfg)
    s_mean = float(np.mean(unit_sa))
    b_mean = float(np.mean(rest))
    if s_mean <= 0.0:
        raise CalibrationError("edge term vanished on the calibration sample")
    beta2 = target_share * b_mean / ((1.0 - target_share) * s_mean)
    achieved = beta2 * s_mean / (beta2 * s_mean + b_mean)
    if abs(achieved - target_share) > 0.02:
        raise CalibrationError(f"calibrated share {achieved:.4f} misses target {target_share}")
    return beta2


def measure_sa_share(dataset_sample, cfg: TrainConfig, beta2) -> float:
    """Fraction of the SA-mode total loss contributed by the beta2 term.

    Measured through the per-sample composite-loss API on the same warmed
    state calibration uses, so it cross-checks calibrate_beta2 through an
    independent code path.
    """
    gen, disc, extractor, _ = _calibration_state(dataset_sample, cfg)
    coeffs = cfg.coeffs.with_beta2(beta2)
    mode = cfg.sa_loss_mode
    terms = np.zeros(5)
    for inp, hr in dataset_sample:
        sr = generator_forward(inp, gen, cfg.scale)
        w = extract_edge_map(hr, cfg.edge_cfg)
        d_fake = discriminator_forward(sr, disc)
        br = total_loss(hr, sr, w, [d_fake], extractor, coeffs, mode)
        terms += [br.gan_term, br.perceptual_term, br.pixel_uniform_term,
                  br.pixel_sa_term, br.total]
    terms /= len(dataset_sample)
    return float(terms[3] / terms[4])
