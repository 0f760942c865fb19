"""Minimal reverse-mode differentiation over a fixed operator set.

A Tape records Nodes in construction order (already topological). Each op
computes its forward value eagerly and registers one vector-Jacobian
callback per parent. backward() seeds the scalar root with 1, sweeps the
tape once in reverse, and returns gradients for named leaves; a tape can
be consumed only once.

Image batches are (B, C, H, W) float64 arrays. Batched loss terminals
average per-sample sums over the batch. Convolutions run through an
im2col/matmul fast path whose backward reuses the stored patch matrix.
"""

import numpy as np

from .errors import DimensionError, GraphConsumedError, PreconditionError
from .losses import PROB_FLOOR

__all__ = [
    "Tape",
    "Node",
    "backward",
    "leaf",
    "const",
    "add",
    "concat_channels",
    "relu",
    "leaky_relu",
    "sigmoid",
    "clip_probs",
    "conv2d",
    "dense",
    "flatten_spatial",
    "upscale_linear",
    "l1_terminal",
    "charbonnier_terminal",
    "neg_mean_log",
    "neg_mean_log_one_minus",
    "weighted_sum",
]


class BufferPool:
    """Shape-keyed free list for the large conv scratch buffers.

    Not thread-safe; meant for a single-threaded training loop that closes
    its tapes. Tapes without a pool allocate normally and stay pure.
    """

    MAX_PER_SHAPE = 16

    def __init__(self):
        self._free = {}

    def acquire(self, shape):
        stack = self._free.get(shape)
        if stack:
            return stack.pop()
        return np.empty(shape)

    def release(self, arr):
        stack = self._free.setdefault(arr.shape, [])
        if len(stack) < self.MAX_PER_SHAPE:
            stack.append(arr)


class Tape:
    """Ordered op recording for one forward pass."""

    def __init__(self, pool=None):
        self.nodes = []
        self.consumed = False
        self.pool = pool
        self._borrowed = []

    def _register(self, node):
        self.nodes.append(node)

    def _borrow(self, shape):
        if self.pool is None:
            return np.empty(shape)
        arr = self.pool.acquire(shape)
        self._borrowed.append(arr)
        return arr

    def close(self):
        """Return pooled scratch buffers; the graph must not be used after."""
        if self.pool is not None:
            for arr in self._borrowed:
                self.pool.release(arr)
        self._borrowed = []
        self.nodes = []
        self.consumed = True


class Node:
    __slots__ = ("tape", "value", "parents", "vjps", "grad", "name", "requires", "op")

    def __init__(self, tape, value, parents=(), vjps=(), name=None, op=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.grad = None
        self.name = name
        self.op = op
        # gradients only flow where a named leaf can be reached
        self.requires = name is not None or any(p.requires for p in parents)
        tape._register(self)


def leaf(tape, value, name):
    """A trainable input; backward() reports its gradient under `name`."""
    return Node(tape, np.asarray(value, dtype=np.float64), name=name)


def const(tape, value):
    """A fixed input; gradients flow around it but are not reported."""
    return Node(tape, np.asarray(value, dtype=np.float64))


def backward(root):
    """Gradients of the scalar root for every named leaf on its tape.

    Leaves unreachable from the root get exact zero gradients. The tape is
    marked consumed; a second sweep raises.
    """
    tape = root.tape
    if tape.consumed:
        raise GraphConsumedError("backward() already consumed this tape")
    tape.consumed = True
    if np.ndim(root.value) != 0:
        raise PreconditionError("backward() needs a scalar root")

    root.grad = 1.0
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.requires:
                continue
            contribution = vjp(node.grad)
            if parent.grad is None:
                parent.grad = contribution
            else:
                parent.grad = parent.grad + contribution

    grads = {}
    for node in tape.nodes:
        if node.name is not None:
            grads[node.name] = (
                np.zeros_like(node.value) if node.grad is None else np.asarray(node.grad)
            )
    return grads


# -- elementwise ops -----------------------------------------------------------


def add(a, b):
    if np.shape(a.value) != np.shape(b.value):
        raise DimensionError("add operands must share a shape")
    out = np.add(a.value, b.value, out=a.tape._borrow(a.value.shape))
    return Node(a.tape, out, parents=(a, b), vjps=(lambda g: g, lambda g: g))


def relu(x):
    mask = x.value > 0
    out = np.maximum(x.value, 0.0, out=x.tape._borrow(x.value.shape))
    return Node(x.tape, out, (x,), (lambda g: g * mask,), op="activation")


def leaky_relu(x, slope=0.2):
    scale = np.where(x.value > 0, 1.0, slope)
    out = np.multiply(x.value, scale, out=x.tape._borrow(x.value.shape))
    return Node(x.tape, out, (x,), (lambda g: g * scale,), op="activation")


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    s = _stable_sigmoid(np.asarray(x.value, dtype=np.float64))
    return Node(x.tape, s, (x,), (lambda g: g * s * (1.0 - s),))


def clip_probs(x, floor=PROB_FLOOR):
    """Clamp probabilities away from {0, 1}; gradient is zero where clipped."""
    clipped = np.clip(x.value, floor, 1.0 - floor)
    passthrough = (x.value > floor) & (x.value < 1.0 - floor)
    return Node(x.tape, clipped, (x,), (lambda g: g * passthrough,))


def concat_channels(xs):
    sizes = [x.value.shape[1] for x in xs]
    bounds = np.cumsum([0] + sizes)
    value = np.concatenate([x.value for x in xs], axis=1)

    def make_vjp(lo, hi):
        return lambda g: g[:, lo:hi]

    vjps = tuple(make_vjp(bounds[i], bounds[i + 1]) for i in range(len(xs)))
    return Node(xs[0].tape, value, tuple(xs), vjps)


def flatten_spatial(x):
    shape = x.value.shape
    flat = x.value.reshape(shape[0], -1)
    return Node(x.tape, flat, (x,), (lambda g: g.reshape(shape),))


# -- linear layers -------------------------------------------------------------


def _zero_pad(x, padding, tape=None):
    b, c, h, w = x.shape
    if tape is None:
        xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding))
    else:
        # pooled buffers are dirty: clear the border ring, interior is assigned
        xp = tape._borrow((b, c, h + 2 * padding, w + 2 * padding))
        xp[:, :, :padding, :] = 0.0
        xp[:, :, h + padding :, :] = 0.0
        xp[:, :, :, :padding] = 0.0
        xp[:, :, :, w + padding :] = 0.0
    xp[:, :, padding : padding + h, padding : padding + w] = x
    return xp


def _im2col(x, kh, kw, stride, padding, tape=None):
    b, c, h, w = x.shape
    if padding:
        x = _zero_pad(x, padding, tape)
    hp, wp = x.shape[2], x.shape[3]
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"input {h}x{w} too small for {kh}x{kw} stride-{stride} conv")
    # one row-contiguous slice copy per kernel offset beats a strided gather
    buf = np.empty((b, c, kh, kw, out_h, out_w)) if tape is None else tape._borrow(
        (b, c, kh, kw, out_h, out_w)
    )
    for di in range(kh):
        for dj in range(kw):
            buf[:, :, di, dj] = x[:, :, di : di + stride * out_h : stride,
                                  dj : dj + stride * out_w : stride]
    patches = buf.reshape(b, c * kh * kw, out_h * out_w)
    return patches, out_h, out_w


def _col2im(cols, x_shape, kh, kw, stride, padding):
    b, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    cols6 = cols.reshape(b, c, kh, kw, out_h, out_w)
    xp = np.zeros((b, c, hp, wp))
    for di in range(kh):
        for dj in range(kw):
            xp[:, :, di : di + stride * out_h : stride, dj : dj + stride * out_w : stride] += (
                cols6[:, :, di, dj]
            )
    if padding:
        return xp[:, :, padding : padding + h, padding : padding + w]
    return xp


def conv2d(x, kernel, bias, stride=1, padding=1, activation=None, slope=0.2):
    """2-D cross-correlation of a (B,C,H,W) node with a (O,C,kh,kw) kernel.

    activation fuses an elementwise "relu" or "leaky" ("leaky_relu") onto
    the output, saving a full-size intermediate on hot paths.
    """
    kval = kernel.value
    out_ch, in_ch, kh, kw = kval.shape
    if x.value.shape[1] != in_ch:
        raise DimensionError(
            f"conv2d expects {in_ch} input channels, got {x.value.shape[1]}"
        )
    tape = x.tape
    patches, out_h, out_w = _im2col(x.value, kh, kw, stride, padding, tape)
    kmat = kval.reshape(out_ch, -1)
    out = np.matmul(kmat, patches, out=tape._borrow((x.value.shape[0], out_ch, out_h * out_w)))
    out += bias.value[:, np.newaxis]
    out = out.reshape(x.value.shape[0], out_ch, out_h, out_w)
    x_shape = x.value.shape

    if activation is None:
        act_scale = None
    elif activation == "relu":
        act_scale = (out > 0).astype(np.float64)
        out *= act_scale
    elif activation in ("leaky", "leaky_relu"):
        act_scale = np.where(out > 0, 1.0, slope)
        out *= act_scale
    else:
        raise PreconditionError(f"unknown conv activation {activation!r}")

    memo = {}

    def upstream(g):
        # the pre-activation gradient is shared by all three vjps
        if act_scale is None:
            return g
        if "dz" not in memo:
            memo["dz"] = g * act_scale
        return memo["dz"]

    def vjp_x(g):
        g = upstream(g)
        if stride == 1 and padding <= kh - 1:
            # full correlation with the flipped, channel-swapped kernel is
            # the exact transpose map and reuses the fast im2col path
            flipped = np.ascontiguousarray(kval[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            gpatches, _, _ = _im2col(g, kh, kw, 1, kh - 1 - padding, tape)
            dx = np.matmul(
                flipped.reshape(in_ch, -1),
                gpatches,
                out=tape._borrow((g.shape[0], in_ch, x_shape[2] * x_shape[3])),
            )
            return dx.reshape(x_shape)
        gmat = g.reshape(g.shape[0], out_ch, -1)
        cols = np.matmul(kmat.T, gmat)
        return _col2im(cols, x_shape, kh, kw, stride, padding)

    def vjp_k(g):
        gmat = upstream(g).reshape(g.shape[0], out_ch, -1)
        dk = np.matmul(gmat, patches.transpose(0, 2, 1)).sum(axis=0)
        return dk.reshape(kval.shape)

    def vjp_b(g):
        return upstream(g).sum(axis=(0, 2, 3))

    return Node(tape, out, (x, kernel, bias), (vjp_x, vjp_k, vjp_b))


def dense(x, weight, bias):
    """Affine map of a (B, F) node by a (O, F) weight and (O,) bias."""
    if x.value.shape[1] != weight.value.shape[1]:
        raise DimensionError("dense weight width does not match input features")
    out = x.value @ weight.value.T + bias.value

    def vjp_x(g):
        return g @ weight.value

    def vjp_w(g):
        return g.T @ x.value

    def vjp_b(g):
        return g.sum(axis=0)

    return Node(x.tape, out, (x, weight, bias), (vjp_x, vjp_w, vjp_b))


def upscale_linear(x, mat_h, mat_w):
    """Apply fixed 1-D resampling operators along both spatial axes.

    The map is linear, so the backward pass is its exact transpose.
    """
    out = np.einsum("pi,bcij,qj->bcpq", mat_h, x.value, mat_w, optimize=True)

    def vjp(g):
        return np.einsum("pi,bcpq,qj->bcij", mat_h, g, mat_w, optimize=True)

    return Node(x.tape, out, (x,), (vjp,))


# -- loss terminals ------------------------------------------------------------


def l1_terminal(target, x, weights):
    """Batch mean of the weighted L1 sum; subgradient at zero is zero."""
    t = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    batch = x.value.shape[0]
    diff = t - x.value
    value = float(np.sum(w * np.abs(diff)) / batch)
    sign = np.sign(diff)

    def vjp(g):
        return g * (-(w * sign) / batch)

    return Node(x.tape, np.float64(value), (x,), (vjp,))


def charbonnier_terminal(target, x, weights, eps):
    """Batch mean of the weighted Charbonnier sum."""
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    t = np.asarray(target, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    batch = x.value.shape[0]
    diff = t - x.value
    root = np.sqrt(diff * diff + eps * eps)
    value = float(np.sum(w * root) / batch)

    def vjp(g):
        return g * (-(w * diff / root) / batch)

    return Node(x.tape, np.float64(value), (x,), (vjp,))


def neg_mean_log(p):
    """-mean(log p) over a (B,) probability node, clamped away from 0/1."""
    clipped = np.clip(p.value, PROB_FLOOR, 1.0 - PROB_FLOOR)
    inside = (p.value > PROB_FLOOR) & (p.value < 1.0 - PROB_FLOOR)
    n = p.value.shape[0]
    value = float(-np.mean(np.log(clipped)))

    def vjp(g):
        return g * np.where(inside, -1.0 / (n * clipped), 0.0)

    return Node(p.tape, np.float64(value), (p,), (vjp,))


def neg_mean_log_one_minus(p):
    """-mean(log(1 - p)) over a (B,) probability node."""
    clipped = np.clip(p.value, PROB_FLOOR, 1.0 - PROB_FLOOR)
    inside = (p.value > PROB_FLOOR) & (p.value < 1.0 - PROB_FLOOR)
    n = p.value.shape[0]
    value = float(-np.mean(np.log(1.0 - clipped)))

    def vjp(g):
        return g * np.where(inside, 1.0 / (n * (1.0 - clipped)), 0.0)

    return Node(p.tape, np.float64(value), (p,), (vjp,))


def weighted_sum(nodes, coefficients):
    """Scalar combination sum_i c_i * node_i of scalar nodes."""
    coefficients = [float(c) for c in coefficients]
    value = np.float64(sum(c * float(n.value) for c, n in zip(coefficients, nodes)))

    def make_vjp(c):
        return lambda g: g * c

    return Node(
        nodes[0].tape,
        value,
        tuple(nodes),
        tuple(make_vjp(c) for c in coefficients),
    )
