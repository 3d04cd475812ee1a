"""Minimal reverse-mode autodiff tensor and the kernel set used by the
de-occlusion network: dilated/strided 2D convolution, transposed
convolution, batch normalization, leaky ReLU, concat/add/crop and MSE.

All reductions accumulate in float64 with a fixed summation order;
results are cast back to the input dtype (float32 by default), so every
forward op is bitwise deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class Tensor:
    """An N-d array with an optional gradient and a backward tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._grad_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data, dtype=np.float64)
        topo = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for t in reversed(topo):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            if t._grad_fn is None:
                continue
            for parent, pg in zip(t._parents, t._grad_fn(g)):
                if pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _result(data, parents, grad_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._grad_fn is not None for p in parents):
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


# ---------------------------------------------------------------------------
# convolution plumbing

def conv_out_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, dilation: int, padding: int):
    """(N,C,H,W) -> (N, C*k*k, Ho*Wo) float64 column matrix."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))).astype(np.float64)
    ho = conv_out_size(h, k, stride, dilation, padding)
    wo = conv_out_size(w, k, stride, dilation, padding)
    if ho < 1 or wo < 1:
        raise ValueError(
            f"spatial dims {h}x{w} too small for k={k} d={dilation} s={stride} p={padding}")
    s0, s1, s2, s3 = xp.strides
    win = as_strided(
        xp,
        shape=(n, c, k, k, ho, wo),
        strides=(s0, s1, s2 * dilation, s3 * dilation, s2 * stride, s3 * stride),
    )
    return np.ascontiguousarray(win).reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(cols: np.ndarray, n: int, c: int, h: int, w: int,
            k: int, stride: int, dilation: int, padding: int, ho: int, wo: int):
    """Adjoint of _im2col: scatter-add columns back onto an image."""
    cols6 = cols.reshape(n, c, k, k, ho, wo)
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            xp[:, :,
               i * dilation:i * dilation + stride * (ho - 1) + 1:stride,
               j * dilation:j * dilation + stride * (wo - 1) + 1:stride] += cols6[:, :, i, j]
    return xp[:, :, padding:padding + h, padding:padding + w]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, dilation: int = 1, padding: int = 0) -> Tensor:
    """2D convolution (cross-correlation); weight is (O, C, k, k)."""
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if k != k2:
        raise ValueError("only square kernels are supported")
    if ci != c:
        raise ValueError(f"channel mismatch: input {c}, weight expects {ci}")
    cols, ho, wo = _im2col(x.data, k, stride, dilation, padding)
    wm = weight.data.reshape(o, c * k * k).astype(np.float64)
    out = np.matmul(wm, cols)
    if bias is not None:
        out += bias.data.astype(np.float64)[:, None]
    out = out.reshape(n, o, ho, wo).astype(x.dtype)

    def grad_fn(g):
        gf = g.reshape(n, o, ho * wo)
        dx = _col2im(np.matmul(wm.T, gf), n, c, h, w, k, stride, dilation, padding, ho, wo)
        dw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        db = None if bias is None else g.sum(axis=(0, 2, 3))
        return (dx, dw) if bias is None else (dx, dw, db)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, grad_fn)


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 2, padding: int = 1, output_padding: int = 1,
                     dilation: int = 1) -> Tensor:
    """Transposed 2D convolution, the adjoint of conv2d with the same
    geometry; weight is (C_in, C_out, k, k)."""
    n, c, h, w = x.shape
    ci, co, k, k2 = weight.shape
    if k != k2:
        raise ValueError("only square kernels are supported")
    if ci != c:
        raise ValueError(f"channel mismatch: input {c}, weight expects {ci}")
    if output_padding >= stride:
        raise ValueError("output_padding must be < stride")
    hout = (h - 1) * stride - 2 * padding + dilation * (k - 1) + 1 + output_padding
    wout = (w - 1) * stride - 2 * padding + dilation * (k - 1) + 1 + output_padding
    if hout < 1 or wout < 1:
        raise ValueError("transposed convolution output would be empty")
    wm = weight.data.reshape(c, co * k * k).astype(np.float64)
    xf = x.data.reshape(n, c, h * w).astype(np.float64)
    cols = np.matmul(wm.T, xf)
    out = _col2im(cols, n, co, hout, wout, k, stride, dilation, padding, h, w)
    if bias is not None:
        out += bias.data.astype(np.float64)[None, :, None, None]
    out = out.astype(x.dtype)

    def grad_fn(g):
        gcols, gho, gwo = _im2col(g, k, stride, dilation, padding)
        assert (gho, gwo) == (h, w)
        dx = np.matmul(wm, gcols).reshape(n, c, h, w)
        dw = np.matmul(xf, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        db = None if bias is None else g.sum(axis=(0, 2, 3))
        return (dx, dw) if bias is None else (dx, dw, db)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, grad_fn)


# ---------------------------------------------------------------------------
# normalization and activations

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode uses batch statistics and updates the running buffers
    in place (unbiased variance for the running estimate, as is standard);
    eval mode normalizes with the running statistics.
    """
    xd = x.data.astype(np.float64)
    n, c, h, w = xd.shape
    m = n * h * w
    if training:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_var *= (1.0 - momentum)
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu[None, :, None, None]) * inv[None, :, None, None]
    gd = gamma.data.astype(np.float64)
    out = (gd[None, :, None, None] * xhat + beta.data.astype(np.float64)[None, :, None, None])
    out = out.astype(x.dtype)

    def grad_fn(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gd[None, :, None, None]
        if training:
            mean_dxhat = dxhat.mean(axis=(0, 2, 3))
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3))
            dx = inv[None, :, None, None] * (
                dxhat
                - mean_dxhat[None, :, None, None]
                - xhat * mean_dxhat_xhat[None, :, None, None]
            )
        else:
            dx = dxhat * inv[None, :, None, None]
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), grad_fn)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    """y = x for x >= 0 else slope * x, elementwise."""
    pos = x.data >= 0
    out = np.where(pos, x.data, slope * x.data).astype(x.dtype)

    def grad_fn(g):
        return (np.where(pos, g, slope * g),)

    return _result(out, (x,), grad_fn)


# ---------------------------------------------------------------------------
# structure ops and loss

def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(out, tensors, grad_fn)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ValueError(f"add shape mismatch: {x.shape} vs {y.shape}")
    out = (x.data.astype(np.float64) + y.data.astype(np.float64)).astype(x.dtype)

    def grad_fn(g):
        return g, g

    return _result(out, (x, y), grad_fn)


def crop_center(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Center-crop the spatial dims of an (N, C, H, W) tensor."""
    n, c, h, w = x.shape
    if out_h > h or out_w > w:
        raise ValueError("crop larger than input")
    y0 = (h - out_h) // 2
    x0 = (w - out_w) // 2
    out = x.data[:, :, y0:y0 + out_h, x0:x0 + out_w].copy()

    def grad_fn(g):
        dx = np.zeros((n, c, h, w), dtype=np.float64)
        dx[:, :, y0:y0 + out_h, x0:x0 + out_w] = g
        return (dx,)

    return _result(out, (x,), grad_fn)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements (scalar tensor)."""
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    out = np.asarray(np.mean(diff * diff))

    def grad_fn(g):
        scale = 2.0 / diff.size
        return g * scale * diff, -g * scale * diff

    return _result(out, (pred, target), grad_fn)
