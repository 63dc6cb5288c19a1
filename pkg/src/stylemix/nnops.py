"""Differentiable neural building blocks on top of the autodiff tape.

All spatial operators work on NCHW tensors.  Convolutions use reflection
"same" padding, so stride-1 outputs keep their spatial size and stride-s
outputs shrink by exactly s.  Kernels must be odd so the padding is
symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .autodiff import ShapeError, Tensor, record

__all__ = [
    "ConvKernel",
    "AdamState",
    "conv2d",
    "upsample2x",
    "upsample_conv2d",
    "instance_norm",
    "relu",
    "softmax_vec",
    "scale_channels",
    "adam_step",
]

HALF_STRIDE = Fraction(1, 2)


@dataclass
class ConvKernel:
    """A convolution's parameters plus its declared stride.

    ``weights`` is shaped [c_out, c_in, k_h, k_w] with odd k_h, k_w.  The
    stride is a positive integer, or ``Fraction(1, 2)`` for the upsampling
    convolution realised by :func:`upsample_conv2d`.
    """

    weights: Tensor
    bias: Tensor | None = None
    stride: int | Fraction = 1

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"ConvKernel: weights must be 4-D, got shape {self.weights.shape}")
        _, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"ConvKernel: kernel dims must be odd for symmetric padding, got {kh}x{kw}")
        if self.bias is not None and self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"ConvKernel: bias shape {self.bias.shape} does not match "
                             f"{self.weights.shape[0]} output channels")
        if not (self.stride == HALF_STRIDE or (isinstance(self.stride, (int, np.integer)) and self.stride >= 1)):
            raise ValueError(f"ConvKernel: stride must be a positive integer or 1/2, got {self.stride!r}")

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]


def _reflect_pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="reflect")


def _fold_reflect_axis(gp: np.ndarray, p: int, axis: int) -> np.ndarray:
    """Fold one axis of a reflect-pad gradient back onto the interior."""
    size = gp.shape[axis] - 2 * p
    if size > p:
        # Fast path: every pad row reflects to a distinct interior row.
        sl = [slice(None)] * gp.ndim

        def view(s):
            sl[axis] = s
            return gp[tuple(sl)]

        g = view(slice(p, -p)).copy()
        gsl = [slice(None)] * g.ndim
        gsl[axis] = slice(1, p + 1)
        g[tuple(gsl)] += view(slice(p - 1, None, -1))
        gsl[axis] = slice(-p - 1, -1)
        g[tuple(gsl)] += view(slice(None, -p - 1, -1))
        return g
    # Tiny interior (size <= p): reflection indices repeat, so accumulate
    # row by row through numpy's own index mapping.
    idx = np.pad(np.arange(size), p, mode="reflect")
    out_shape = list(gp.shape)
    out_shape[axis] = size
    out = np.zeros(out_shape, dtype=gp.dtype)
    sl_out = [slice(None)] * gp.ndim
    sl_in = [slice(None)] * gp.ndim
    for q, r in enumerate(idx):
        sl_out[axis] = r
        sl_in[axis] = q
        out[tuple(sl_out)] += gp[tuple(sl_in)]
    return out


def _reflect_pad_grad(gp: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Fold the gradient of a reflect-padded array back onto the interior.

    Rows first, then columns; sequential folding routes corner pads through
    both axes, matching the forward composition of the two reflections.
    """
    g = gp
    if ph:
        g = _fold_reflect_axis(g, ph, axis=2)
    if pw:
        g = _fold_reflect_axis(g, pw, axis=3)
    return g if g is not gp else gp.copy()


def conv2d(x: Tensor, kernel: ConvKernel) -> Tensor:
    """Strided cross-correlation with reflection padding.

    Input [n, c_in, h, w] maps to [n, c_out, h/s, w/s]; h and w must divide
    the integer stride.  Gradients flow to the input, the kernel weights,
    and the bias.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-D NCHW, got shape {x.shape}")
    if kernel.stride == HALF_STRIDE:
        raise ValueError("conv2d: kernel declares fractional stride; use upsample_conv2d")
    s = int(kernel.stride)
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.weights.shape
    if cin != kcin:
        raise ShapeError(f"conv2d: input has {cin} channels but kernel expects {kcin}")
    if h % s or w % s:
        raise ShapeError(f"conv2d: spatial dims ({h}, {w}) are not divisible by stride {s}")
    ph, pw = kh // 2, kw // 2

    wt = kernel.weights
    bias = kernel.bias
    xp = _reflect_pad(x.data, ph, pw)
    ho, wo = h // s, w // s
    span = ho * wo
    k_flat = cin * kh * kw

    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::s, ::s, :, :]                    # [n, cin, ho, wo, kh, kw]
    # One copy into [n, cin*kh*kw, ho*wo]; the GEMM output is then already NCHW.
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, k_flat, span)
    wm = wt.data.reshape(cout, k_flat)
    out = np.matmul(wm, cols).reshape(n, cout, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)

    needs_x = x.requires_grad
    needs_w = wt.requires_grad
    needs_b = bias is not None and bias.requires_grad

    def bwd(g):
        gm = g.reshape(n, cout, span)
        gw = gb = gx = None
        if needs_w:
            gw = np.tensordot(gm, cols, axes=([0, 2], [0, 2])).reshape(wt.data.shape)
        if needs_b:
            gb = g.sum(axis=(0, 2, 3))
        if needs_x:
            gcols = np.matmul(wm.T, gm).reshape(n, cin, kh, kw, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += gcols[:, :, i, j]
            gx = _reflect_pad_grad(gxp, ph, pw)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, wt, bias) if bias is not None else (x, wt)
    return record("conv2d", inputs, out, bwd)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling of an NCHW tensor."""
    if x.ndim != 4:
        raise ShapeError(f"upsample2x: input must be 4-D NCHW, got shape {x.shape}")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bwd(g):
        return (g[:, :, 0::2, 0::2] + g[:, :, 0::2, 1::2]
                + g[:, :, 1::2, 0::2] + g[:, :, 1::2, 1::2],)

    return record("upsample2x", (x,), out, bwd)


def upsample_conv2d(x: Tensor, kernel: ConvKernel) -> Tensor:
    """Fractional-stride convolution: nearest-neighbor 2x upsample, then stride-1 conv.

    The kernel must declare stride 1/2.  Output spatial dims are double the
    input's.
    """
    if kernel.stride != HALF_STRIDE:
        raise ValueError(f"upsample_conv2d: kernel stride must be 1/2, got {kernel.stride!r}")
    return conv2d(upsample2x(x), replace(kernel, stride=1))


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over h*w, then affine gamma/beta."""
    if x.ndim != 4:
        raise ShapeError(f"instance_norm: input must be 4-D NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: affine params must have shape ({c},), "
                         f"got {gamma.shape} and {beta.shape}")
    if eps <= 0:
        raise ValueError(f"instance_norm: eps must be positive, got {eps}")

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mu) * inv_std
    gb = gamma.data.reshape(1, c, 1, 1)
    out = xhat * gb + beta.data.reshape(1, c, 1, 1)

    needs = (x.requires_grad, gamma.requires_grad, beta.requires_grad)
    m = h * w

    def bwd(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3)) if needs[1] else None
        gbeta = g.sum(axis=(0, 2, 3)) if needs[2] else None
        gx = None
        if needs[0]:
            gxhat = g * gb
            gx = (inv_std / m) * (m * gxhat
                                  - gxhat.sum(axis=(2, 3), keepdims=True)
                                  - xhat * (gxhat * xhat).sum(axis=(2, 3), keepdims=True))
        return (gx, ggamma, gbeta)

    return record("instance_norm", (x, gamma, beta), out, bwd)


def relu(x: Tensor) -> Tensor:
    """Rectifier; the subgradient at zero is taken as zero."""
    out = np.maximum(x.data, 0)
    if not x.requires_grad:
        return record("relu", (x,), out, lambda g: (None,))
    mask = x.data > 0

    def bwd(g):
        return (g * mask,)

    return record("relu", (x,), out, bwd)


def softmax_vec(x: Tensor) -> Tensor:
    """Numerically stable softmax of a 1-D tensor; output is strictly positive and sums to 1."""
    if x.ndim != 1:
        raise ShapeError(f"softmax_vec: input must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError("softmax_vec: input contains non-finite values")
    z = x.data - x.data.max()
    e = np.exp(z)
    y = e / e.sum()

    def bwd(g):
        return (y * (g - np.dot(g, y)),)

    return record("softmax_vec", (x,), y, bwd)


def scale_channels(x: Tensor, w: Tensor) -> Tensor:
    """Scale slice i along axis 1 of a 4-D tensor by w[i].

    Used both to weight a feature map's channels and to weight the
    input-channel slices of a 4-D kernel bank.
    """
    if x.ndim != 4:
        raise ShapeError(f"scale_channels: input must be 4-D, got shape {x.shape}")
    if w.ndim != 1 or w.shape[0] != x.shape[1]:
        raise ShapeError(f"scale_channels: weight vector of shape {w.shape} does not match "
                         f"axis-1 size {x.shape[1]}")
    wb = w.data.reshape(1, -1, 1, 1)
    needs = (x.requires_grad, w.requires_grad)

    def bwd(g, xd=x.data, wb=wb, needs=needs):
        gx = g * wb if needs[0] else None
        gw = (g * xd).sum(axis=(0, 2, 3)) if needs[1] else None
        return (gx, gw)

    return record("scale_channels", (x, w), x.data * wb, bwd)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter group."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor], **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **kwargs)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params``.

    Follows the original formulation: theta -= lr * m_hat / (sqrt(v_hat) + eps).
    """
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"adam_step: got {len(params)} params, {len(grads)} grads, "
                         f"{len(state.m)} state slots")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} does not match "
                             f"parameter shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
