"""Minimal dense tensor engine with reverse-mode automatic differentiation.

All values are float64. Ops build an acyclic tape; ``Tensor.backward`` walks
it in reverse topological order and accumulates gradients additively, so a
tensor consumed twice receives the sum of both path gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, DomainError


class Tensor:
    """Dense float64 array participating in a differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self):
        """Leaf copy sharing no graph history (data is copied)."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Populate ``grad`` on every requires_grad ancestor of a scalar loss."""
        if self.data.size != 1:
            raise ContractError("backward requires a scalar loss tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def _node(data, parents, backward_fn):
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires,
                  _parents=parents if requires else (),
                  _backward_fn=backward_fn if requires else None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        return (g @ b.data.T, a.data.T @ g)

    return _node(out, (a, b), backward)


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("transpose2d expects a 2-d tensor")
    return _node(x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"cannot reshape {x.data.shape} to {shape}")
    old = x.data.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# convolution

def conv_output_extent(n, k, stride, dilation, padding):
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d(x: Tensor, w: Tensor, stride=1, dilation=1, padding=0) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError("conv2d expects 4-d input and weight")
    b, cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square and odd, got {kh}x{kw}")
    if cin_w != cin:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise DomainError("stride/dilation must be >= 1 and padding >= 0")
    k = kh
    hout = conv_output_extent(h, k, stride, dilation, padding)
    wout = conv_output_extent(wd, k, stride, dilation, padding)
    if hout < 1 or wout < 1:
        raise DimensionError(
            f"conv2d output extent nonpositive for input {h}x{wd}, "
            f"k={k}, stride={stride}, dilation={dilation}, padding={padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((b, cout, hout, wout))
    # small kernels: accumulate one shifted slice per tap
    for a_ in range(k):
        for b_ in range(k):
            xs = xp[:, :,
                    a_ * dilation: a_ * dilation + stride * (hout - 1) + 1: stride,
                    b_ * dilation: b_ * dilation + stride * (wout - 1) + 1: stride]
            out += np.einsum("bchw,oc->bohw", xs, w.data[:, :, a_, b_])

    def backward(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w.data)
        for a_ in range(k):
            for b_ in range(k):
                sl = (slice(None), slice(None),
                      slice(a_ * dilation, a_ * dilation + stride * (hout - 1) + 1, stride),
                      slice(b_ * dilation, b_ * dilation + stride * (wout - 1) + 1, stride))
                xs = xp[sl]
                dw[:, :, a_, b_] = np.einsum("bohw,bchw->oc", g, xs)
                dxp[sl] += np.einsum("bohw,oc->bchw", g, w.data[:, :, a_, b_])
        if padding:
            dx = dxp[:, :, padding:-padding, padding:-padding]
        else:
            dx = dxp
        return (dx, dw)

    return _node(out, (x, w), backward)


def pointwise_conv(x: Tensor, w: Tensor) -> Tensor:
    if w.data.ndim != 4 or w.data.shape[2:] != (1, 1):
        raise DimensionError(f"pointwise_conv needs a 1x1 kernel, got {w.data.shape}")
    if x.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"pointwise_conv channel mismatch: {x.data.shape} vs {w.data.shape}")
    wm = w.data[:, :, 0, 0]
    out = np.einsum("bchw,oc->bohw", x.data, wm)

    def backward(g):
        dx = np.einsum("bohw,oc->bchw", g, wm)
        dw = np.einsum("bohw,bchw->oc", g, x.data)[:, :, None, None]
        return (dx, dw)

    return _node(out, (x, w), backward)


# ---------------------------------------------------------------------------
# normalizations

def softmax_axis(x: Tensor, axis: int) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.data.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (x,), backward)


def l1_normalize_axis(x: Tensor, axis: int, eps: float = 1e-9) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.data.shape}")
    if np.any(x.data < 0):
        raise DomainError("l1_normalize_axis requires nonnegative entries")
    denom = x.data.sum(axis=axis, keepdims=True) + eps
    out = x.data / denom

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) / denom,)

    return _node(out, (x,), backward)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization using the current batch statistics."""
    if x.data.ndim != 4:
        raise DimensionError("batchnorm2d expects a 4-d tensor")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError("gamma/beta must have one entry per channel")
    axes = (0, 2, 3)
    n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data[None, :, None, None]
        dx = (inv_std / n) * (n * dxhat
                              - dxhat.sum(axis=axes, keepdims=True)
                              - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        return (dx, dgamma, dbeta)

    return _node(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# structural ops

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise DimensionError("concat_channels expects 4-d tensors")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise DimensionError(
            f"concat_channels batch/spatial mismatch: {a.data.shape} vs {b.data.shape}")
    c1 = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return _node(out, (a, b), lambda g: (g[:, :c1], g[:, c1:]))


def concat_batch(tensors) -> Tensor:
    tensors = list(tensors)
    shapes = {t.data.shape[1:] for t in tensors}
    if len(shapes) != 1:
        raise DimensionError("concat_batch requires identical trailing extents")
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=0)

    def backward(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _node(out, tuple(tensors), backward)


def batch_slice(x: Tensor, i: int) -> Tensor:
    if not 0 <= i < x.data.shape[0]:
        raise DimensionError(f"batch index {i} out of range")

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[i:i + 1] = g
        return (dx,)

    return _node(x.data[i:i + 1].copy(), (x,), backward)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise DomainError(f"upsample factor must be >= 1, got {factor}")
    if x.data.ndim != 4:
        raise DimensionError("upsample_nearest expects a 4-d tensor")
    b, c, h, w = x.data.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _node(out, (x,), backward)


def spatial_mean(x: Tensor) -> Tensor:
    """Global average pool to [B,C,1,1]."""
    if x.data.ndim != 4:
        raise DimensionError("spatial_mean expects a 4-d tensor")
    b, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        return (np.broadcast_to(g / (h * w), x.data.shape).copy(),)

    return _node(out, (x,), backward)


def tile_spatial(x: Tensor, h: int, w: int) -> Tensor:
    if x.data.ndim != 4 or x.data.shape[2:] != (1, 1):
        raise DimensionError("tile_spatial expects a [B,C,1,1] tensor")
    out = np.broadcast_to(x.data, x.data.shape[:2] + (h, w)).copy()
    return _node(out, (x,), lambda g: (g.sum(axis=(2, 3), keepdims=True),))


# ---------------------------------------------------------------------------
# elementwise

def _binary_check(a, b, name):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{name} shape mismatch: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b, "div")
    out = a.data / b.data
    return _node(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def scale(x: Tensor, a: float, b: float = 0.0) -> Tensor:
    return _node(a * x.data + b, (x,), lambda g: (a * g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # derivative at exactly 0 is 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data)
    sig = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    return _node(out, (x,), lambda g: (g * sig,))


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)  # 0 at exactly 0, matching the relu convention
    return _node(np.abs(x.data), (x,), lambda g: (g * sign,))


def reduce_sum(x: Tensor) -> Tensor:
    shape = x.data.shape
    return _node(x.data.sum(), (x,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def reduce_mean(x: Tensor) -> Tensor:
    return scale(reduce_sum(x), 1.0 / x.data.size)


# ---------------------------------------------------------------------------
# gradient verification

def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error of backward() against central finite differences."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    x.grad = None
    out = f(x)
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    flat = x.data.ravel()
    aflat = analytic.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x).item()
        flat[i] = orig - eps
        fm = f(x).item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(aflat[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    x.grad = None
    return worst


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_param(cls, param: Tensor, weight_decay: float = 0.0,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(m=np.zeros_like(param.data), v=np.zeros_like(param.data),
                   beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def adamw_step(param: Tensor, state: AdamWState, lr: float) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    if param.grad is None:
        raise ContractError("adamw_step requires a populated gradient")
    g = param.grad.reshape(param.data.shape)
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    param.data -= lr * (m_hat / (np.sqrt(v_hat) + state.eps)
                        + state.weight_decay * param.data)
