"""Differentiable layers on the reverse-mode tape.

Every operation takes the tape as its first argument (pass ``None`` for
inference, nothing is recorded), consumes/produces :class:`Var` nodes, and
validates shapes with errors that name the offending layer.  Outputs are
checked finite; NaN/Inf anywhere raises immediately.

``init_layers``/``forward_graph`` at the bottom interpret a sequential
layer-spec list (affine, conv, batch-norm, ReLU, tanh, the pools, softmax),
which is how the backbone/classifier/actor/critic stacks are declared.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import ParameterSet, TensorError, Var, check_finite


def _record(tape, fn):
    if tape is not None:
        tape.record(fn)


# ---------------------------------------------------------------------------
# primitive layers


def affine(tape, x, w, b=None, name="affine"):
    """y = x @ w + b with x (N, din), w (din, dout), b (dout,)."""
    xv, wv = x.value, w.value
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise TensorError(
            f"{name}: cannot apply weights {wv.shape} to input {xv.shape}"
        )
    y = xv @ wv
    if b is not None:
        if b.value.shape != (wv.shape[1],):
            raise TensorError(f"{name}: bias shape {b.value.shape} != ({wv.shape[1]},)")
        y = y + b.value
    check_finite(y, name)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(g @ wv.T)
        w.accumulate(xv.T @ g)
        if b is not None:
            b.accumulate(g.sum(axis=0))

    _record(tape, bwd)
    return out


def conv2d(tape, x, w, b=None, stride=1, pad=0, name="conv2d"):
    """NHWC convolution; w is (kh, kw, cin, cout)."""
    xv, wv = x.value, w.value
    if xv.ndim != 4 or wv.ndim != 4 or xv.shape[3] != wv.shape[2]:
        raise TensorError(
            f"{name}: input {xv.shape} incompatible with kernel {wv.shape}"
        )
    if xv.shape[1] + 2 * pad < wv.shape[0] or xv.shape[2] + 2 * pad < wv.shape[1]:
        raise TensorError(f"{name}: kernel {wv.shape[:2]} larger than padded input")
    y = kernels.conv2d_forward(xv, wv, stride, pad)
    if b is not None:
        y = y + b.value
    check_finite(y, name)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        gx, gw = kernels.conv2d_backward(xv, wv, g, stride, pad)
        x.accumulate(gx)
        w.accumulate(gw)
        if b is not None:
            b.accumulate(g.sum(axis=(0, 1, 2)))

    _record(tape, bwd)
    return out


def relu(tape, x, name="relu"):
    y = np.maximum(x.value, 0.0)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(g * (x.value > 0.0))

    _record(tape, bwd)
    return out


def tanh(tape, x, name="tanh"):
    y = np.tanh(x.value)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(g * (1.0 - y * y))

    _record(tape, bwd)
    return out


def maxpool(tape, x, k, stride=None, name="maxpool"):
    stride = k if stride is None else stride
    xv = x.value
    if xv.ndim != 4 or xv.shape[1] < k or xv.shape[2] < k:
        raise TensorError(f"{name}: cannot pool {xv.shape} with window {k}")
    y, idx = kernels.maxpool_forward(xv, k, stride)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(kernels.maxpool_backward(xv.shape, idx, g, k, stride))

    _record(tape, bwd)
    return out


def avgpool(tape, x, k, stride=None, name="avgpool"):
    stride = k if stride is None else stride
    xv = x.value
    if xv.ndim != 4 or xv.shape[1] < k or xv.shape[2] < k:
        raise TensorError(f"{name}: cannot pool {xv.shape} with window {k}")
    y = kernels.avgpool_forward(xv, k, stride)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(kernels.avgpool_backward(xv.shape, g, k, stride))

    _record(tape, bwd)
    return out


def global_avg_pool(tape, x, name="gap"):
    """(N, H, W, C) -> (N, C) spatial mean."""
    xv = x.value
    if xv.ndim != 4:
        raise TensorError(f"{name}: expected NHWC input, got {xv.shape}")
    n, h, w, c = xv.shape
    out = Var(xv.mean(axis=(1, 2)))

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(np.broadcast_to(g[:, None, None, :] / (h * w), xv.shape))

    _record(tape, bwd)
    return out


def batchnorm(
    tape,
    x,
    gamma,
    beta,
    running_mean,
    running_var,
    training,
    momentum=0.99,
    eps=1e-5,
    name="batchnorm",
):
    """Per-feature normalization over the batch (and spatial dims for NHWC).

    In training mode batch statistics are used and the running statistics are
    updated as ``running <- momentum * running + (1 - momentum) * batch``; in
    inference mode the running statistics are used and are not touched.
    """
    xv = x.value
    if xv.ndim == 2:
        axes = (0,)
    elif xv.ndim == 4:
        axes = (0, 1, 2)
    else:
        raise TensorError(f"{name}: expected 2-D or 4-D input, got {xv.shape}")
    nfeat = xv.shape[-1]
    if gamma.value.shape != (nfeat,):
        raise TensorError(
            f"{name}: gamma shape {gamma.value.shape} != ({nfeat},) for input {xv.shape}"
        )
    n = xv.size // nfeat

    if training:
        mu = xv.mean(axis=axes)
        var = xv.var(axis=axes)
        running_mean.value[...] = momentum * running_mean.value + (1 - momentum) * mu
        running_var.value[...] = momentum * running_var.value + (1 - momentum) * var
    else:
        mu = running_mean.value
        var = running_var.value

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    y = gamma.value * xhat + beta.value
    check_finite(y, name)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        gamma.accumulate((g * xhat).sum(axis=axes))
        beta.accumulate(g.sum(axis=axes))
        dxhat = g * gamma.value
        if training:
            x.accumulate(
                (inv / n)
                * (
                    n * dxhat
                    - dxhat.sum(axis=axes)
                    - xhat * (dxhat * xhat).sum(axis=axes)
                )
            )
        else:
            x.accumulate(dxhat * inv)

    _record(tape, bwd)
    return out


def softmax(tape, x, name="softmax"):
    """Row-wise softmax with max subtraction, last axis."""
    xv = x.value
    z = xv - xv.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    check_finite(y, name)
    out = Var(y)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    _record(tape, bwd)
    return out


def cross_entropy(tape, logits, labels, name="cross_entropy"):
    """Mean negative log softmax probability of the true class.

    ``logits`` is (N, C) or (C,); ``labels`` an int array (N,) or a scalar.
    The result is a 0-d Var (mean over the batch when batched).
    """
    xv = logits.value
    single = xv.ndim == 1
    z = xv[None, :] if single else xv
    if z.ndim != 2:
        raise TensorError(f"{name}: logits must be 1-D or 2-D, got {xv.shape}")
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = z.shape
    if lab.shape != (n,):
        raise TensorError(f"{name}: {n} rows but labels shape {lab.shape}")
    if lab.min() < 0 or lab.max() >= c:
        raise TensorError(f"{name}: label out of range [0, {c})")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    nll = lse - zs[np.arange(n), lab]
    loss = np.array(nll.mean())
    check_finite(loss, name)
    out = Var(loss)

    def bwd():
        g = out.grad
        if g is None:
            return
        p = np.exp(zs)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), lab] -= 1.0
        gx = p * (float(g) / n)
        logits.accumulate(gx[0] if single else gx)

    _record(tape, bwd)
    return out


# ---------------------------------------------------------------------------
# glue ops for losses and input assembly


def concat(tape, parts, axis=1, name="concat"):
    vals = [p.value for p in parts]
    y = np.concatenate(vals, axis=axis)
    out = Var(y)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def bwd():
        g = out.grad
        if g is None:
            return
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            p.accumulate(g[tuple(sl)])

    _record(tape, bwd)
    return out


def reshape(tape, x, shape, name="reshape"):
    out = Var(x.value.reshape(shape))

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(g.reshape(x.value.shape))

    _record(tape, bwd)
    return out


def add(tape, a, b, name="add"):
    out = Var(a.value + b.value)

    def bwd():
        g = out.grad
        if g is None:
            return
        a.accumulate(g)
        b.accumulate(g)

    _record(tape, bwd)
    return out


def sub(tape, a, b, name="sub"):
    out = Var(a.value - b.value)

    def bwd():
        g = out.grad
        if g is None:
            return
        a.accumulate(g)
        b.accumulate(-g)

    _record(tape, bwd)
    return out


def square(tape, x, name="square"):
    out = Var(x.value * x.value)

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(2.0 * x.value * g)

    _record(tape, bwd)
    return out


def scale(tape, x, c, name="scale"):
    out = Var(x.value * float(c))

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(g * float(c))

    _record(tape, bwd)
    return out


def mean_all(tape, x, name="mean"):
    out = Var(np.array(x.value.mean()))

    def bwd():
        g = out.grad
        if g is None:
            return
        x.accumulate(np.full_like(x.value, float(g) / x.value.size))

    _record(tape, bwd)
    return out


# ---------------------------------------------------------------------------
# sequential layer-spec interpreter

_PARAMETRIC = ("affine", "conv", "bn")


def init_layers(params: ParameterSet, prefix: str, specs, rng) -> None:
    """Create the parameters for a sequential layer-spec list.

    Parameter names are ``{prefix}{layer-name}.{field}``.  Affine/conv
    weights use He-normal init by default; ``init: "head"`` selects the
    small-uniform init conventionally used on policy output layers.
    """
    for spec in specs:
        kind = spec["kind"]
        if kind not in _PARAMETRIC:
            continue
        name = f"{prefix}{spec['name']}"
        if kind == "affine":
            din, dout = spec["din"], spec["dout"]
            if spec.get("init") == "head":
                w = rng.uniform(-3e-3, 3e-3, size=(din, dout))
            else:
                w = rng.normal(0.0, np.sqrt(2.0 / din), size=(din, dout))
            params.add(f"{name}.w", w)
            params.add(f"{name}.b", np.zeros(dout))
        elif kind == "conv":
            k, cin, cout = spec["k"], spec["cin"], spec["cout"]
            fan_in = k * k * cin
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(k, k, cin, cout))
            params.add(f"{name}.w", w)
            params.add(f"{name}.b", np.zeros(cout))
        elif kind == "bn":
            d = spec["dim"]
            params.add(f"{name}.gamma", np.ones(d))
            params.add(f"{name}.beta", np.zeros(d))
            params.add(f"{name}.running_mean", np.zeros(d), trainable=False)
            params.add(f"{name}.running_var", np.ones(d), trainable=False)


def forward_graph(tape, x: Var, specs, params: ParameterSet, prefix: str, training=False) -> Var:
    """Run a sequential layer-spec list; errors name the failing layer."""
    h = x
    for spec in specs:
        kind = spec["kind"]
        name = f"{prefix}{spec.get('name', kind)}"
        if kind == "affine":
            h = affine(tape, h, params[f"{name}.w"], params[f"{name}.b"], name=name)
        elif kind == "conv":
            h = conv2d(
                tape,
                h,
                params[f"{name}.w"],
                params[f"{name}.b"],
                stride=spec.get("stride", 1),
                pad=spec.get("pad", 0),
                name=name,
            )
        elif kind == "bn":
            h = batchnorm(
                tape,
                h,
                params[f"{name}.gamma"],
                params[f"{name}.beta"],
                params[f"{name}.running_mean"],
                params[f"{name}.running_var"],
                training=training,
                name=name,
            )
        elif kind == "relu":
            h = relu(tape, h, name=name)
        elif kind == "tanh":
            h = tanh(tape, h, name=name)
        elif kind == "softmax":
            h = softmax(tape, h, name=name)
        elif kind == "maxpool":
            h = maxpool(tape, h, spec["k"], spec.get("stride"), name=name)
        elif kind == "avgpool":
            h = avgpool(tape, h, spec["k"], spec.get("stride"), name=name)
        elif kind == "gap":
            h = global_avg_pool(tape, h, name=name)
        else:
            raise TensorError(f"unknown layer kind {kind!r}")
    return h
