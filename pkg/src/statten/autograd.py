"""Minimal dense-tensor core with tape-based reverse-mode autodiff.

Tensors wrap float64 numpy arrays. Every differentiable operation records
itself on a :class:`GradTape` node attached to its output; ``backward`` on a
scalar loss replays the recorded rules in reverse topological order and
accumulates gradients into ``requires_grad`` leaves. Gradients accumulate
across repeated backward calls until ``zero_grad`` is called.

Single-threaded per graph; independent graphs share no mutable state.
"""

from __future__ import annotations

import numpy as np


class TensorError(Exception):
    """Raised on shape mismatches, detached backward calls, and domain errors."""


class GradTape:
    """One recorded operation: output, parent tensors, and a backward rule.

    The backward rule maps the output gradient to a tuple of parent
    gradients (``None`` for parents that do not require grad).
    """

    __slots__ = ("parents", "backward_rule")

    def __init__(self, parents, backward_rule):
        self.parents = parents
        self.backward_rule = backward_rule


class Tensor:
    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None  # GradTape node set by the op that produced this tensor

    # -- basic protocol ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- graph bookkeeping -------------------------------------------------

    def _record(self, parents, backward_rule):
        """Attach a tape node if any parent participates in the graph."""
        if any(p.requires_grad or p._tape is not None for p in parents):
            self.requires_grad = True
            self._tape = GradTape(parents, backward_rule)
        return self

    def backward(self, grad=None):
        """Populate ``grad`` on every reachable requires_grad leaf.

        Replays recorded backward rules in reverse topological order.
        Raises for non-scalar tensors unless an explicit output gradient is
        given, and for tensors detached from any tape.
        """
        if self._tape is None and not self.requires_grad:
            raise TensorError("backward() on a tensor detached from the tape")
        if grad is None:
            if self.data.size != 1:
                raise TensorError(
                    f"backward() without gradient requires a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._tape is not None:
                for p in node._tape.parents:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._tape is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._tape.backward_rule(g)
            for p, pg in zip(node._tape.parents, parent_grads):
                if pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ops -------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data)
    return out._record(
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data)
    return out._record(
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def power(a, exponent):
    a = _wrap(a)
    out = Tensor(a.data**exponent)
    return out._record(
        (a,), lambda g: (g * exponent * a.data ** (exponent - 1),)
    )


def exp(a):
    a = _wrap(a)
    out = Tensor(np.exp(a.data))
    return out._record((a,), lambda g: (g * out.data,))


def log(a):
    a = _wrap(a)
    out = Tensor(np.log(a.data))
    return out._record((a,), lambda g: (g / a.data,))


def sqrt(a):
    return power(a, 0.5)


# -- shape ops -------------------------------------------------------------


def reshape(a, *shape):
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor(a.data.reshape(shape))
    return out._record((a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes=None):
    a = _wrap(a)
    out = Tensor(np.transpose(a.data, axes))
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))
    return out._record((a,), lambda g: (np.transpose(g, inv),))


def getitem(a, key):
    a = _wrap(a)
    out = Tensor(a.data[key])

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return out._record((a,), back)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return out._record(tuple(tensors), back)


def stack(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def back(g):
        parts = np.split(g, len(tensors), axis=axis)
        return tuple(np.squeeze(p, axis=axis) for p in parts)

    return out._record(tuple(tensors), back)


# -- reductions ------------------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.data.shape).copy(),)

    return out._record((a,), back)


def tmean(a, axis=None, keepdims=False):
    a = _wrap(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def tmax(a, axis):
    """Max over a single axis; gradient flows to the (first) argmax."""
    a = _wrap(a)
    out_data = a.data.max(axis=axis)
    out = Tensor(out_data)
    idx = a.data.argmax(axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        grid = np.ogrid[tuple(slice(s) for s in out_data.shape)]
        key = list(grid)
        key.insert(axis if axis >= 0 else a.data.ndim + axis, idx)
        full[tuple(key)] = g
        return (full,)

    return out._record((a,), back)


# -- linear algebra --------------------------------------------------------


def matmul(a, b):
    """Dense (optionally batched) matrix product.

    Integer-valued inputs give exactly representable integer outputs at desk
    scale (float64 is exact below 2**53).
    """
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise TensorError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(np.matmul(a.data, b.data))

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (
            _unbroadcast(ga, a.data.shape),
            _unbroadcast(gb, b.data.shape),
        )

    return out._record((a, b), back)


# -- convolution -----------------------------------------------------------


def _conv_out_size(size, k, stride, padding):
    out = (size + 2 * padding - k) // stride + 1
    if out <= 0:
        raise TensorError(
            f"conv output size {out} <= 0 (input {size}, kernel {k}, "
            f"stride {stride}, padding {padding})"
        )
    return out


def conv2d(x, w, stride=1, padding=0):
    """Cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,Kh,Kw]."""
    x, w = _wrap(x), _wrap(w)
    B, Cin, H, W = x.data.shape
    Cout, Cin_w, Kh, Kw = w.data.shape
    if Cin != Cin_w:
        raise TensorError(f"conv2d channel mismatch: input {Cin}, kernel {Cin_w}")
    Ho = _conv_out_size(H, Kh, stride, padding)
    Wo = _conv_out_size(W, Kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    s = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, Cin, Kh, Kw, Ho, Wo),
        strides=(s[0], s[1], s[2], s[3], s[2] * stride, s[3] * stride),
    )
    cols2 = cols.reshape(B, Cin * Kh * Kw, Ho * Wo)
    wf = w.data.reshape(Cout, Cin * Kh * Kw)
    out = Tensor(np.matmul(wf, cols2).reshape(B, Cout, Ho, Wo))

    def back(g):
        gf = g.reshape(B, Cout, Ho * Wo)
        gw = np.einsum("bof,bcf->oc", gf, cols2).reshape(w.data.shape)
        gcols = np.matmul(wf.T, gf).reshape(B, Cin, Kh, Kw, Ho, Wo)
        gxp = np.zeros_like(xp)
        for i in range(Kh):
            for j in range(Kw):
                gxp[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride] += gcols[
                    :, :, i, j
                ]
        gx = gxp[:, :, padding : padding + H, padding : padding + W]
        return (gx, gw)

    return out._record((x, w), back)


def conv1d(x, w, stride=1, padding=0):
    """Cross-correlation of x[B,Cin,S] with w[Cout,Cin,K] via the 2-D kernel."""
    x, w = _wrap(x), _wrap(w)
    if padding:
        # conv2d pads both spatial axes; height is 1 here, so pad width only.
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
        x = Tensor(xp)._record(
            (x,), lambda g, s=x.shape[2]: (g[:, :, padding : padding + s],)
        )
    x4 = reshape(x, (x.shape[0], x.shape[1], 1, x.shape[2]))
    w4 = reshape(w, (w.shape[0], w.shape[1], 1, w.shape[2]))
    out4 = conv2d(x4, w4, stride=stride, padding=0)
    return reshape(out4, (out4.shape[0], out4.shape[1], out4.shape[3]))


def conv_flops(kernel_shape, out_spatial):
    """Multiply-accumulate count of a conv layer: K(...)*out_spatial*Cin*Cout."""
    c_out, c_in = kernel_shape[0], kernel_shape[1]
    k = int(np.prod(kernel_shape[2:]))
    return k * int(np.prod(out_spatial)) * c_in * c_out


def maxpool1d(x, kernel):
    """Non-overlapping 1-D max pooling (stride == kernel)."""
    x = _wrap(x)
    B, C, S = x.shape
    if S % kernel:
        raise TensorError(f"maxpool1d: size {S} not divisible by kernel {kernel}")
    return tmax(reshape(x, (B, C, S // kernel, kernel)), axis=3)


def maxpool2d(x, kernel):
    """Non-overlapping 2-D max pooling (stride == kernel)."""
    x = _wrap(x)
    B, C, H, W = x.shape
    if H % kernel or W % kernel:
        raise TensorError(f"maxpool2d: {H}x{W} not divisible by kernel {kernel}")
    r = reshape(x, (B, C, H // kernel, kernel, W // kernel, kernel))
    return tmax(tmax(r, axis=5), axis=3)


# -- custom-gradient hook --------------------------------------------------


def custom_grad(inputs, forward_fn, backward_fn):
    """Record an op whose backward rule is supplied by the caller.

    ``forward_fn`` maps input arrays to the output array; ``backward_fn``
    maps (output gradient, input arrays) to a tuple of input gradients.
    This is the hook point for surrogate-gradient spike functions.
    """
    inputs = tuple(_wrap(x) for x in inputs)
    arrays = tuple(x.data for x in inputs)
    out = Tensor(forward_fn(*arrays))
    return out._record(inputs, lambda g: backward_fn(g, *arrays))


# -- normalization ---------------------------------------------------------


class BatchNorm:
    """Per-channel batch normalization over axis 1 (all other axes pooled).

    Training mode normalizes with batch statistics and updates running
    stats; inference mode uses the running statistics.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        if eps <= 0:
            raise TensorError("batchnorm eps must be > 0")
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x, training=True):
        x = _wrap(x)
        if x.shape[0] == 0:
            raise TensorError("batchnorm on empty batch")
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
        if training:
            mean = tmean(x, axis=axes, keepdims=True)
            centered = x - mean
            var = tmean(mul(centered, centered), axis=axes, keepdims=True)
            self.running_mean = (
                (1 - self.momentum) * self.running_mean
                + self.momentum * mean.data.reshape(-1)
            )
            self.running_var = (
                (1 - self.momentum) * self.running_var
                + self.momentum * var.data.reshape(-1)
            )
            inv = power(var + self.eps, -0.5)
            xhat = mul(centered, inv)
        else:
            xhat = mul(
                x - self.running_mean.reshape(bshape),
                1.0 / np.sqrt(self.running_var.reshape(bshape) + self.eps),
            )
        return add(mul(xhat, reshape(self.gamma, bshape)), reshape(self.beta, bshape))

    def parameters(self):
        return [self.gamma, self.beta]
