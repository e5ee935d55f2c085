"""Structured differentiable ops used by the network layers.

Conventions fixed here so results are portable:

* conv2d / conv_transpose2d operate on single samples laid out C,H,W and
  perform cross-correlation (no kernel flip).
* conv1d_depthwise runs one kernel per channel along the token axis of a
  T,C matrix and must preserve T.
* grid_sample_bilinear uses align-corners semantics: -1 maps to the center
  of pixel 0 and +1 to the center of the last pixel; coordinates outside
  [-1, 1] are clamped to the border.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .core import Array, Tensor, _record


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-wise affine map: x[T,Cin] @ weight[Cin,Cout] + bias[Cout]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear got incompatible shapes {x.shape} and {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(
            f"linear bias shape {bias.shape} does not match weight {weight.shape}"
        )
    y = x.data @ weight.data
    if bias is not None:
        y = y + bias.data
    req = x.requires_grad or weight.requires_grad or (
        bias is not None and bias.requires_grad
    )
    out = Tensor(y, requires_grad=req)
    xd, wd = x.data, weight.data

    if bias is None:

        def vjp(g):
            return g @ wd.T, xd.T @ g

        _record(out, (x, weight), vjp)
    else:

        def vjp(g):
            return g @ wd.T, xd.T @ g, g.sum(axis=0)

        _record(out, (x, weight, bias), vjp)
    return out


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def _conv_geometry(size: int, k: int, stride: int, pad: int) -> int:
    padded = size + 2 * pad
    if padded < k:
        raise ShapeError(f"kernel {k} exceeds padded extent {padded}")
    return (padded - k) // stride + 1


def _im2col(xp: Array, k: int, stride: int, oh: int, ow: int) -> Array:
    """Padded input C,Hp,Wp -> columns (C*k*k, oh*ow)."""
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c, k, k, oh, ow),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
        writeable=False,
    )
    return windows.reshape(c * k * k, oh * ow)


def conv2d(
    x: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation of x[C,H,W] with kernels[O,C,k,k]."""
    if x.ndim != 3 or kernels.ndim != 4 or kernels.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d got shapes {x.shape} and {kernels.shape}")
    o, c, k, k2 = kernels.shape
    if k != k2:
        raise ShapeError(f"conv2d kernels must be square, got {kernels.shape}")
    _, h, w = x.shape
    oh = _conv_geometry(h, k, stride, padding)
    ow = _conv_geometry(w, k, stride, padding)

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, k, stride, oh, ow)
    wmat = kernels.data.reshape(o, c * k * k)
    y = (wmat @ cols).reshape(o, oh, ow)
    if bias is not None:
        if bias.shape != (o,):
            raise ShapeError(f"conv2d bias shape {bias.shape} does not match {o} kernels")
        y = y + bias.data[:, None, None]
    req = x.requires_grad or kernels.requires_grad or (
        bias is not None and bias.requires_grad
    )
    out = Tensor(y, requires_grad=req)
    hp, wp = h + 2 * padding, w + 2 * padding

    def vjp(g):
        gmat = g.reshape(o, oh * ow)
        dw = (gmat @ cols.T).reshape(o, c, k, k)
        dcols = (wmat.T @ gmat).reshape(c, k, k, oh, ow)
        dxp = np.zeros((c, hp, wp))
        for a in range(k):
            for b in range(k):
                dxp[:, a : a + stride * oh : stride, b : b + stride * ow : stride] += dcols[
                    :, a, b
                ]
        dx = dxp[:, padding : padding + h, padding : padding + w]
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(1, 2))

    _record(out, (x, kernels) if bias is None else (x, kernels, bias), vjp)
    return out


def conv_transpose2d(
    x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1
) -> Tensor:
    """Transposed convolution of x[Cin,H,W] with kernels[Cin,Cout,k,k].

    Output spatial size is (H-1)*stride + k.  The gradient with respect to
    the input is an ordinary strided cross-correlation, so the pair
    (conv2d, conv_transpose2d) is adjoint.
    """
    if x.ndim != 3 or kernels.ndim != 4 or kernels.shape[0] != x.shape[0]:
        raise ShapeError(f"conv_transpose2d got shapes {x.shape} and {kernels.shape}")
    if stride < 1:
        raise ShapeError(f"conv_transpose2d stride must be >= 1, got {stride}")
    cin, cout, k, k2 = kernels.shape
    if k != k2:
        raise ShapeError(f"conv_transpose2d kernels must be square, got {kernels.shape}")
    _, h, w = x.shape
    oh = (h - 1) * stride + k
    ow = (w - 1) * stride + k

    # tmp[o,a,b,i,j] = sum_c x[c,i,j] * kernels[c,o,a,b]
    tmp = np.tensordot(kernels.data, x.data, axes=([0], [0]))
    y = np.zeros((cout, oh, ow))
    for a in range(k):
        for b in range(k):
            y[:, a : a + stride * h : stride, b : b + stride * w : stride] += tmp[:, a, b]
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError(
                f"conv_transpose2d bias shape {bias.shape} does not match {cout} outputs"
            )
        y = y + bias.data[:, None, None]
    req = x.requires_grad or kernels.requires_grad or (
        bias is not None and bias.requires_grad
    )
    out = Tensor(y, requires_grad=req)
    xd, kd = x.data, kernels.data

    def vjp(g):
        dx = np.zeros((cin, h, w))
        dk = np.zeros((cin, cout, k, k))
        for a in range(k):
            for b in range(k):
                gab = g[:, a : a + stride * h : stride, b : b + stride * w : stride]
                dx += np.tensordot(kd[:, :, a, b], gab, axes=([1], [0]))
                dk[:, :, a, b] = np.tensordot(xd, gab, axes=([1, 2], [1, 2]))
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(1, 2))

    _record(out, (x, kernels) if bias is None else (x, kernels, bias), vjp)
    return out


def conv1d_depthwise(x: Tensor, kernel: Tensor, padding: int) -> Tensor:
    """Per-channel 1-D cross-correlation along the token axis of x[T,C].

    ``kernel`` is C,k; zero padding must keep the token count unchanged,
    which pins padding = (k-1)/2 for odd k.
    """
    if x.ndim != 2 or kernel.ndim != 2 or kernel.shape[0] != x.shape[1]:
        raise ShapeError(f"conv1d got shapes {x.shape} and {kernel.shape}")
    t, c = x.shape
    k = kernel.shape[1]
    if t + 2 * padding < k:
        raise ShapeError(f"kernel {k} exceeds padded sequence {t + 2 * padding}")
    if t + 2 * padding - k + 1 != t:
        raise ShapeError(
            f"padding {padding} does not preserve token count for kernel {k}"
        )
    xp = np.pad(x.data, ((padding, padding), (0, 0)))
    s0, s1 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(t, k, c), strides=(s0, s0, s1), writeable=False
    )
    y = np.einsum("tkc,ck->tc", windows, kernel.data)
    out = Tensor(y, requires_grad=x.requires_grad or kernel.requires_grad)
    kd = kernel.data

    def vjp(g):
        dk = np.einsum("tkc,tc->ck", windows, g)
        dxp = np.zeros((t + 2 * padding, c))
        for j in range(k):
            dxp[j : j + t] += g * kd[:, j]
        return dxp[padding : padding + t], dk

    _record(out, (x, kernel), vjp)
    return out


# ---------------------------------------------------------------------------
# normalization and attention primitives
# ---------------------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=x.requires_grad)

    def vjp(g):
        dot = np.sum(g * y, axis=axis, keepdims=True)
        return (y * (g - dot),)

    _record(out, (x,), vjp)
    return out


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-token normalization of x[T,C] to zero mean / unit variance, then affine."""
    if x.ndim != 2 or gain.shape != (x.shape[1],) or shift.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm got x {x.shape}, gain {gain.shape}, shift {shift.shape}"
        )
    c = x.shape[1]
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    req = x.requires_grad or gain.requires_grad or shift.requires_grad
    out = Tensor(xhat * gain.data + shift.data, requires_grad=req)
    gd = gain.data

    def vjp(g):
        dgain = np.sum(g * xhat, axis=0)
        dshift = np.sum(g, axis=0)
        dxhat = g * gd
        # classic layer-norm backward over the channel axis
        dx = inv / c * (
            c * dxhat
            - np.sum(dxhat, axis=1, keepdims=True)
            - xhat * np.sum(dxhat * xhat, axis=1, keepdims=True)
        )
        return dx, dgain, dshift

    _record(out, (x, gain, shift), vjp)
    return out


def grid_sample_bilinear(fmap: Tensor, coords: Tensor) -> Tensor:
    """Sample fmap[C,H,W] at T normalized (x, y) points, bilinearly.

    coords[:, 0] runs along the width axis and coords[:, 1] along the
    height axis, both in [-1, 1] (align-corners); out-of-range points are
    clamped to the border.  Differentiable in both the map and the
    coordinates; the coordinate gradient is zero where clamping engaged.
    """
    if fmap.ndim != 3 or coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"grid_sample got shapes {fmap.shape} and {coords.shape}")
    c, h, w = fmap.shape
    raw = coords.data
    cl = np.clip(raw, -1.0, 1.0)
    px = (cl[:, 0] + 1.0) * 0.5 * (w - 1)
    py = (cl[:, 1] + 1.0) * 0.5 * (h - 1)
    x0 = np.clip(np.floor(px).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (px - x0)[:, None]
    wy = (py - y0)[:, None]

    fm = fmap.data.transpose(1, 2, 0)  # H,W,C for fancy gathers
    fa = fm[y0, x0]
    fb = fm[y0, x1]
    fc = fm[y1, x0]
    fd = fm[y1, x1]
    top = fa + wx * (fb - fa)
    bot = fc + wx * (fd - fc)
    y = top + wy * (bot - top)
    out = Tensor(y, requires_grad=fmap.requires_grad or coords.requires_grad)

    inside = ((raw >= -1.0) & (raw <= 1.0)).astype(np.float64)

    def vjp(g):
        wa = (1.0 - wx) * (1.0 - wy)
        wb = wx * (1.0 - wy)
        wc = (1.0 - wx) * wy
        wd = wx * wy
        dfm = np.zeros((h, w, c))
        np.add.at(dfm, (y0, x0), wa * g)
        np.add.at(dfm, (y0, x1), wb * g)
        np.add.at(dfm, (y1, x0), wc * g)
        np.add.at(dfm, (y1, x1), wd * g)
        dpx = np.sum(g * ((1.0 - wy) * (fb - fa) + wy * (fd - fc)), axis=1)
        dpy = np.sum(g * (bot - top), axis=1)
        dcoords = np.stack(
            [dpx * 0.5 * (w - 1), dpy * 0.5 * (h - 1)], axis=1
        ) * inside
        return dfm.transpose(2, 0, 1), dcoords

    _record(out, (fmap, coords), vjp)
    return out
