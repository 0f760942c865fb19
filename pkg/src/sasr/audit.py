"""Finite-difference verification of every analytic gradient.

Each check perturbs one input of one operator (or every parameter of a
small end-to-end network loss), compares the analytic gradient against
central differences, and reports the worst relative error. The error is
|analytic - numeric| / max(|analytic|, |numeric|, floor); the floor
absorbs finite-difference roundoff on genuinely tiny gradients.
"""

import numpy as np

from . import autodiff as ad
from .nets import FeatureExtractor, discriminator_apply, generator_apply, init_discriminator, init_generator
from .tensor import resize_matrix

__all__ = ["central_difference", "relative_error", "run_gradient_audit", "FD_STEP"]

FD_STEP = 1e-6
ERROR_FLOOR = 1e-3


def central_difference(f, x, step=FD_STEP):
    """Numeric gradient of scalar f at x, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=ERROR_FLOOR):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _projected(op, shape, rng, x=None):
    """Compare gradients of the scalar sum(r * op(x)) so every output matters."""
    if x is None:
        x = rng.uniform(-1.0, 1.0, size=shape)
    out_shape = op(ad.leaf(ad.Tape(), x, "x")).value.shape
    r = rng.uniform(-1.0, 1.0, size=out_shape)

    def build(arr):
        tape = ad.Tape()
        node = op(ad.leaf(tape, arr, "x"))
        return ad.Node(tape, np.float64(np.sum(r * node.value)), (node,), (lambda g: g * r,))

    analytic = ad.backward(build(x))["x"]
    numeric = central_difference(lambda arr: float(build(arr).value), x)
    return relative_error(analytic, numeric)


def _check_elementwise(rng):
    errs = []
    for op in (ad.relu, lambda n: ad.leaky_relu(n, 0.2), ad.sigmoid):
        x = rng.uniform(-2.0, 2.0, size=(2, 3, 4, 4))
        # keep samples away from the ReLU kink so differences are one-sided
        x = np.where(np.abs(x) < 1e-3, x + 3e-3, x)
        errs.append(_projected(op, x.shape, rng, x))
    return max(errs)


def _check_add_concat(rng):
    x = rng.uniform(-1.0, 1.0, size=(2, 3, 4, 4))
    y = rng.uniform(-1.0, 1.0, size=(2, 3, 4, 4))
    r = rng.uniform(-1.0, 1.0, size=(2, 6, 4, 4))

    def f(pair):
        tape = ad.Tape()
        a = ad.leaf(tape, pair[0], "a")
        b = ad.leaf(tape, pair[1], "b")
        cat = ad.concat_channels([ad.add(a, b), b])
        root = ad.Node(tape, np.float64(np.sum(r * cat.value)), (cat,), (lambda g: g * r,))
        return tape, root

    def scalar(pair):
        return float(f(pair)[1].value)

    _, root = f(np.stack([x, y]))
    grads = ad.backward(root)
    numeric = central_difference(scalar, np.stack([x, y]))
    return max(
        relative_error(grads["a"], numeric[0]),
        relative_error(grads["b"], numeric[1]),
    )


def _check_conv_full(rng, stride):
    x = rng.uniform(-1.0, 1.0, size=(2, 3, 6, 6))
    k = rng.uniform(-0.5, 0.5, size=(4, 3, 3, 3))
    bias = rng.uniform(-0.2, 0.2, size=4)

    def build(xv, kv, bv):
        tape = ad.Tape()
        node = ad.conv2d(
            ad.leaf(tape, xv, "x"),
            ad.leaf(tape, kv, "k"),
            ad.leaf(tape, bv, "b"),
            stride=stride,
            padding=1,
        )
        root = ad.Node(
            tape, np.float64(np.sum(build.r * node.value)), (node,), (lambda g: g * build.r,)
        )
        return root

    tape0 = ad.Tape()
    shape = ad.conv2d(
        ad.leaf(tape0, x, "x"), ad.leaf(tape0, k, "k"), ad.leaf(tape0, bias, "b"),
        stride=stride, padding=1,
    ).value.shape
    build.r = rng.uniform(-1.0, 1.0, size=shape)

    root = build(x, k, bias)
    grads = ad.backward(root)
    errs = [
        relative_error(grads["x"], central_difference(lambda v: float(build(v, k, bias).value), x)),
        relative_error(grads["k"], central_difference(lambda v: float(build(x, v, bias).value), k)),
        relative_error(grads["b"], central_difference(lambda v: float(build(x, k, v).value), bias)),
    ]
    return max(errs)


def _check_dense(rng):
    x = rng.uniform(-1.0, 1.0, size=(3, 7))
    w = rng.uniform(-0.5, 0.5, size=(2, 7))
    bias = rng.uniform(-0.2, 0.2, size=2)
    r = rng.uniform(-1.0, 1.0, size=(3, 2))

    def build(xv, wv, bv):
        tape = ad.Tape()
        node = ad.dense(ad.leaf(tape, xv, "x"), ad.leaf(tape, wv, "w"), ad.leaf(tape, bv, "b"))
        return ad.Node(tape, np.float64(np.sum(r * node.value)), (node,), (lambda g: g * r,))

    grads = ad.backward(build(x, w, bias))
    return max(
        relative_error(grads["x"], central_difference(lambda v: float(build(v, w, bias).value), x)),
        relative_error(grads["w"], central_difference(lambda v: float(build(x, v, bias).value), w)),
        relative_error(grads["b"], central_difference(lambda v: float(build(x, w, v).value), bias)),
    )


def _check_upscale(rng):
    x = rng.uniform(-1.0, 1.0, size=(1, 2, 4, 4))
    mh = resize_matrix(4, 8)
    mw = resize_matrix(4, 8)
    r = rng.uniform(-1.0, 1.0, size=(1, 2, 8, 8))

    def build(xv):
        tape = ad.Tape()
        node = ad.upscale_linear(ad.leaf(tape, xv, "x"), mh, mw)
        return ad.Node(tape, np.float64(np.sum(r * node.value)), (node,), (lambda g: g * r,))

    analytic = ad.backward(build(x))["x"]
    numeric = central_difference(lambda v: float(build(v).value), x)
    return relative_error(analytic, numeric)


def _check_pixel_terminals(rng):
    target = rng.uniform(0.0, 1.0, size=(2, 1, 4, 4))
    x = rng.uniform(0.0, 1.0, size=(2, 1, 4, 4))
    # keep the l1 term away from its kink
    close = np.abs(target - x) < 1e-3
    x = np.where(close, x + 5e-3, x)
    weights = rng.uniform(0.0, 2.0, size=x.shape)
    errs = []
    for terminal in (
        lambda t, n, w: ad.l1_terminal(t, n, w),
        lambda t, n, w: ad.charbonnier_terminal(t, n, w, 0.001),
    ):
        def build(v):
            tape = ad.Tape()
            return terminal(target, ad.leaf(tape, v, "v"), weights)

        analytic = ad.backward(build(x))["v"]
        numeric = central_difference(lambda v: float(build(v).value), x)
        errs.append(relative_error(analytic, numeric))
    return max(errs)


def _check_log_terminals(rng):
    p = rng.uniform(0.05, 0.95, size=6)
    errs = []
    for terminal in (ad.neg_mean_log, ad.neg_mean_log_one_minus):
        def build(v):
            tape = ad.Tape()
            return terminal(ad.leaf(tape, v, "p"))

        analytic = ad.backward(build(p))["p"]
        numeric = central_difference(lambda v: float(build(v).value), p)
        errs.append(relative_error(analytic, numeric))
    return max(errs)


def _pack(params):
    return np.concatenate([v.reshape(-1) for v in params.tensors.values()])


def _unpack_into(params, vector):
    offset = 0
    out = {}
    for name, v in params.tensors.items():
        out[name] = vector[offset : offset + v.size].reshape(v.shape)
        offset += v.size
    return out


def _activation_kink_margin(root):
    """Smallest |pre-activation| over every activation node on a tape.

    Perturbing a parameter by the FD step can flip an activation branch;
    instances whose margin is below a few steps are excluded, mirroring
    the l1-kink exclusion. Requires an unfused graph so pre-activations
    are visible as activation-node parents.
    """
    margin = np.inf
    for node in root.tape.nodes:
        if node.op == "activation":
            margin = min(margin, float(np.min(np.abs(node.parents[0].value))))
    return margin


def _check_generator_loss(rng, seed):
    """End-to-end audit of the composite generator loss on a 1x6x6 instance."""
    gen = init_generator(1, 1, seed=seed, features=4, blocks=1)
    disc = init_discriminator(1, 12, 12, seed=seed + 1)
    extractor = FeatureExtractor(1, seed=seed + 2)

    def draw():
        up = rng.uniform(0.0, 1.0, size=(1, 1, 12, 12))
        center = rng.uniform(0.0, 1.0, size=(1, 1, 12, 12))
        hr = rng.uniform(0.0, 1.0, size=(1, 1, 12, 12))
        w = rng.uniform(0.0, 1.0, size=(1, 1, 12, 12))
        tape0 = ad.Tape()
        feat_hr = extractor.apply(ad.const(tape0, hr)).value
        return up, center, hr, w, feat_hr

    def build(vector, inst):
        up, center, hr, w, feat_hr = inst
        tensors = _unpack_into(gen, vector)
        tape = ad.Tape()
        gp = {name: ad.leaf(tape, v, name) for name, v in tensors.items()}
        dp = {name: ad.const(tape, v) for name, v in disc.tensors.items()}
        sr = generator_apply(tape, gp, ad.const(tape, up), ad.const(tape, center), gen.meta)
        d_fake = discriminator_apply(tape, dp, sr, disc.meta)
        gan = ad.neg_mean_log(d_fake)
        percep = ad.charbonnier_terminal(feat_hr, extractor.apply(sr), 1.0, 0.001)
        pixel = ad.charbonnier_terminal(hr, sr, 1.0, 0.001)
        sa = ad.charbonnier_terminal(hr, sr, w, 0.001)
        return ad.weighted_sum([gan, percep, pixel, sa], [0.005, 1.0, 0.01, 0.2])

    # zero-initialized biases put whole receptive fields exactly on the
    # relu kink; jitter all parameters off that measure-zero set first
    vec = _pack(gen) + rng.normal(0.0, 0.05, size=_pack(gen).shape)
    inst = _draw_clear_of_kinks(draw, lambda i: build(vec, i))

    grads = ad.backward(build(vec, inst))
    analytic = np.concatenate([grads[name].reshape(-1) for name in gen.tensors])
    numeric = central_difference(lambda v: float(build(v, inst).value), vec)
    return relative_error(analytic, numeric)


def _draw_clear_of_kinks(draw, build, attempts=50):
    """Redraw instances until no activation sits within a few FD steps of 0."""
    import sasr.nets as nets

    inst = draw()
    saved = nets.FUSE_ACTIVATIONS
    nets.FUSE_ACTIVATIONS = False
    try:
        for _ in range(attempts):
            if _activation_kink_margin(build(inst)) > 20 * FD_STEP:
                break
            inst = draw()
    finally:
        nets.FUSE_ACTIVATIONS = saved
    return inst


def _check_discriminator_loss(rng, seed):
    disc = init_discriminator(1, 8, 8, seed=seed + 3, channels=(4, 6, 8))

    def draw():
        return (
            rng.uniform(0.0, 1.0, size=(2, 1, 8, 8)),
            rng.uniform(0.0, 1.0, size=(2, 1, 8, 8)),
        )

    def build(vector, inst):
        real, fake = inst
        tensors = _unpack_into(disc, vector)
        tape = ad.Tape()
        dp = {name: ad.leaf(tape, v, name) for name, v in tensors.items()}
        d_real = discriminator_apply(tape, dp, ad.const(tape, real), disc.meta)
        d_fake = discriminator_apply(tape, dp, ad.const(tape, fake), disc.meta)
        return ad.weighted_sum(
            [ad.neg_mean_log(d_real), ad.neg_mean_log_one_minus(d_fake)], [1.0, 1.0]
        )

    vec = _pack(disc) + rng.normal(0.0, 0.05, size=_pack(disc).shape)
    inst = _draw_clear_of_kinks(draw, lambda i: build(vec, i))
    grads = ad.backward(build(vec, inst))
    analytic = np.concatenate([grads[name].reshape(-1) for name in disc.tensors])
    numeric = central_difference(lambda v: float(build(v, inst).value), vec)
    return relative_error(analytic, numeric)


def run_gradient_audit(seed=0, instances=20, tolerance=1e-5):
    """Cross-check every operator and both end-to-end losses against FD.

    Returns a report dict with per-check worst errors over `instances`
    random instances each (end-to-end checks use instances // 4, min 2).
    """
    checks = {
        "elementwise": _check_elementwise,
        "add_concat": _check_add_concat,
        "conv2d_stride1": lambda rng: _check_conv_full(rng, 1),
        "conv2d_stride2": lambda rng: _check_conv_full(rng, 2),
        "dense": _check_dense,
        "upscale": _check_upscale,
        "pixel_terminals": _check_pixel_terminals,
        "log_terminals": _check_log_terminals,
    }
    report = {"checks": [], "seed": seed, "tolerance": tolerance}
    worst = 0.0
    for stream, (name, fn) in enumerate(checks.items()):
        err = 0.0
        for i in range(instances):
            rng = np.random.default_rng([seed, stream, i])
            err = max(err, fn(rng))
        report["checks"].append({"name": name, "max_rel_err": err, "instances": instances})
        worst = max(worst, err)

    deep = max(2, instances // 4)
    for stream, (name, fn) in enumerate(
        [("generator_total_loss", _check_generator_loss),
         ("discriminator_loss", _check_discriminator_loss)],
        start=len(checks),
    ):
        err = 0.0
        for i in range(deep):
            rng = np.random.default_rng([seed, stream, i])
            err = max(err, fn(rng, seed + i))
        report["checks"].append({"name": name, "max_rel_err": err, "instances": deep})
        worst = max(worst, err)

    report["max_rel_err"] = worst
    report["passed"] = bool(worst < tolerance)
    return report
