"""2-D cross-correlation with exact analytic gradients.

Layout is [channels, freq, time] (no batch axis). Forward and backward
share one decomposition: the output is a sum over kernel taps (a, b) of
channel-mixed, strided slices of the zero-padded input,

    out[o, i, j] = sum_{c,a,b} W[o,c,a,b] * xp[c, i*sf + a*df, j*st + b*dt]

so the backward pass is the exact adjoint of the same tap loop - no
separate "transposed convolution" derivation to get wrong.

Default padding follows the "same" rule floor(dilation*(k-1)/2) per side,
which preserves spatial size at stride 1 (odd kernels) and yields
ceil(n/stride) when strided. An explicit padding overrides it, e.g. the
score head uses zero frequency padding to collapse that axis entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SizeError


@dataclass(frozen=True)
class Conv2dSpec:
    in_channels: int
    out_channels: int
    kernel: tuple
    stride: tuple = (1, 1)
    dilation: tuple = (1, 1)
    has_bias: bool = True
    depthwise: bool = False
    padding: tuple | None = None  # per-side (freq, time); None = "same" rule

    def __post_init__(self):
        sizes = (self.in_channels, self.out_channels, *self.kernel,
                 *self.stride, *self.dilation)
        if any(int(v) < 1 for v in sizes):
            raise ConfigError(f"all sizes must be >= 1: {self}")
        if self.depthwise and self.out_channels != self.in_channels:
            raise ConfigError("depthwise convolution requires out_channels == in_channels")

    @property
    def pad(self) -> tuple:
        if self.padding is not None:
            return self.padding
        return tuple(
            (d * (k - 1)) // 2 for k, d in zip(self.kernel, self.dilation)
        )

    @property
    def weight_shape(self) -> tuple:
        cin = 1 if self.depthwise else self.in_channels
        return (self.out_channels, cin, *self.kernel)

    def out_size(self, in_size: tuple) -> tuple:
        out = []
        for n, k, s, d, p in zip(in_size, self.kernel, self.stride,
                                 self.dilation, self.pad):
            span = d * (k - 1) + 1
            m = (n + 2 * p - span) // s + 1
            if m < 1:
                raise SizeError(
                    f"input size {in_size} too small for kernel {self.kernel} "
                    f"dilation {self.dilation} padding {self.pad}"
                )
            out.append(m)
        return tuple(out)


def _check_shapes(x, spec, weights, bias):
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise SizeError(f"input shape {x.shape}, expected [{spec.in_channels}, F, T]")
    if weights.shape != spec.weight_shape:
        raise SizeError(f"weight shape {weights.shape}, expected {spec.weight_shape}")
    if spec.has_bias:
        if bias is None or bias.shape != (spec.out_channels,):
            raise SizeError(f"bias shape must be ({spec.out_channels},)")
    elif bias is not None:
        raise SizeError("bias given for a bias-free layer")


def conv2d_forward(x: np.ndarray, spec: Conv2dSpec, weights: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = None if bias is None else np.asarray(bias, dtype=np.float64)
    _check_shapes(x, spec, weights, bias)

    (kf, kt), (sf, st), (df, dt) = spec.kernel, spec.stride, spec.dilation
    pf, pt = spec.pad
    hf, wt = spec.out_size(x.shape[1:])
    xp = np.pad(x, ((0, 0), (pf, pf), (pt, pt)))
    out = np.zeros((spec.out_channels, hf, wt))
    for a in range(kf):
        for b in range(kt):
            sl = xp[:, a * df: a * df + sf * hf: sf, b * dt: b * dt + st * wt: st]
            if spec.depthwise:
                out += weights[:, 0, a, b][:, None, None] * sl
            else:
                out += np.einsum("oc,cft->oft", weights[:, :, a, b], sl)
    if bias is not None:
        out += bias[:, None, None]
    return out


def conv2d_backward(x: np.ndarray, spec: Conv2dSpec, weights: np.ndarray,
                    upstream: np.ndarray, bias: np.ndarray | None = None):
    """Exact gradients (grad_input, grad_weights, grad_bias) of the forward.

    grad_bias is None for bias-free layers.
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = None if bias is None else np.asarray(bias, dtype=np.float64)
    _check_shapes(x, spec, weights, bias)
    upstream = np.asarray(upstream, dtype=np.float64)

    (kf, kt), (sf, st), (df, dt) = spec.kernel, spec.stride, spec.dilation
    pf, pt = spec.pad
    hf, wt = spec.out_size(x.shape[1:])
    if upstream.shape != (spec.out_channels, hf, wt):
        raise SizeError(
            f"upstream shape {upstream.shape}, expected {(spec.out_channels, hf, wt)}"
        )

    xp = np.pad(x, ((0, 0), (pf, pf), (pt, pt)))
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(weights)
    for a in range(kf):
        for b in range(kt):
            fsl = slice(a * df, a * df + sf * hf, sf)
            tsl = slice(b * dt, b * dt + st * wt, st)
            sl = xp[:, fsl, tsl]
            if spec.depthwise:
                grad_w[:, 0, a, b] = np.einsum("cft,cft->c", upstream, sl)
                grad_xp[:, fsl, tsl] += weights[:, 0, a, b][:, None, None] * upstream
            else:
                grad_w[:, :, a, b] = np.einsum("oft,cft->oc", upstream, sl)
                grad_xp[:, fsl, tsl] += np.einsum(
                    "oc,oft->cft", weights[:, :, a, b], upstream
                )
    f_end = grad_xp.shape[1] - pf
    t_end = grad_xp.shape[2] - pt
    grad_x = grad_xp[:, pf:f_end, pt:t_end]
    grad_b = upstream.sum(axis=(1, 2)) if spec.has_bias else None
    return grad_x, grad_w, grad_b
