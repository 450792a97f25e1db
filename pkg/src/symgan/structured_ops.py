"""Symmetry-carrying operators.

These are the pieces that make the model stack's left-right guarantees
architectural: latent/vector flips, image mirroring, half-kernel expansion
into exactly symmetric or antisymmetric 5x5 kernels, symmetric folding of
feature maps, and the symmetric-kernel convolution built from them.

All guarantees here are bitwise, not just within tolerance:

* ``expand_symmetric`` output equals its own mirror by construction and is
  flagged so :func:`~symgan.tensor_autodiff.conv2d` takes its folded,
  exactly mirror-equivariant path;
* ``expand_antisymmetric`` output's mirror equals its exact negation;
* ``fold_symmetric`` adds mirrored column pairs, so it is bitwise invariant
  to mirroring its input.
"""

from __future__ import annotations

import numpy as np

from . import tensor_autodiff as ta
from .tensor_autodiff import PadMode, Tensor

__all__ = [
    "PadMode",
    "SymmetricKernelBank",
    "flip",
    "mirror",
    "expand_symmetric",
    "expand_antisymmetric",
    "fold_symmetric",
    "sym_conv",
]


def flip(z: Tensor) -> Tensor:
    """Reverse element order (first entry swaps with the last).

    Applied to latent vectors; batched input ``(N, z_dim)`` flips each row.
    """
    return ta.flip_axis(z, -1)


def mirror(img: Tensor) -> Tensor:
    """Reverse the column order (last axis) of an image or feature map."""
    return ta.flip_axis(img, -1)


def expand_symmetric(half: Tensor) -> Tensor:
    """Expand half-kernels ``(..., h, 3)`` to symmetric kernels ``(..., h, 5)``.

    The first column is copied to the fifth and the second to the fourth,
    so each 5x5 slice carries exactly 15 free parameters.  The gradient
    w.r.t. ``half`` accumulates both copies.  The result is flagged
    ``mirror_symmetric``, routing convolutions through the folded path
    whose mirror equivariance is exact.
    """
    if half.data.ndim < 2 or half.shape[-1] != 3:
        raise ValueError(
            f"expand_symmetric expects trailing extent 3, got shape {half.shape}")
    d = half.data
    out_data = np.concatenate([d, d[..., [1, 0]]], axis=-1)
    out = Tensor(out_data)
    out.mirror_symmetric = True
    tp = ta._taping()
    if tp is not None:
        def backward(g, half=half):
            dh = np.empty_like(half.data)
            dh[..., 0] = g[..., 0] + g[..., 4]
            dh[..., 1] = g[..., 1] + g[..., 3]
            dh[..., 2] = g[..., 2]
            ta._accum(half, dh)
        tp.record(out, (half,), backward)
    return out


def expand_antisymmetric(half: Tensor) -> Tensor:
    """Expand half-maps ``(..., h, 2)`` to antisymmetric maps ``(..., h, 5)``.

    Columns come out as ``[c1, c2, 0, -c2, -c1]``; the center column is a
    hard zero (forced by ``mirror(out) == -out``, which holds bitwise).
    """
    if half.data.ndim < 2 or half.shape[-1] != 2:
        raise ValueError(
            f"expand_antisymmetric expects trailing extent 2, got shape {half.shape}")
    d = half.data
    zeros = np.zeros(d.shape[:-1] + (1,), d.dtype)
    out = Tensor(np.concatenate([d, zeros, -d[..., [1, 0]]], axis=-1))
    tp = ta._taping()
    if tp is not None:
        def backward(g, half=half):
            dh = np.empty_like(half.data)
            dh[..., 0] = g[..., 0] - g[..., 4]
            dh[..., 1] = g[..., 1] - g[..., 3]
            ta._accum(half, dh)
        tp.record(out, (half,), backward)
    return out


def fold_symmetric(x: Tensor, data_format: str = "NCHW") -> Tensor:
    """Fold mirrored column pairs of a feature map: ``[c1+c5, c2+c4, 2*c3]``.

    Requires odd width; the output width is ``(W+1)/2``.  Folding makes any
    subsequent dense head mirror-invariant, bitwise: the pair sums commute
    and the doubled center is shared.
    """
    if x.data.ndim != 4:
        raise ValueError(f"fold_symmetric expects a 4-D tensor, got {x.shape}")
    if data_format == "NCHW":
        waxis = 3
    elif data_format == "NHWC":
        waxis = 2
    else:
        raise ValueError(f"unknown data_format {data_format!r}")
    W = x.shape[waxis]
    if W % 2 == 0:
        raise ValueError(f"fold_symmetric requires odd width, got {W}")
    hw = (W + 1) // 2
    d = np.moveaxis(x.data, waxis, -1)
    out_d = np.empty(d.shape[:-1] + (hw,), d.dtype)
    for j in range(hw - 1):
        out_d[..., j] = d[..., j] + d[..., W - 1 - j]
    out_d[..., hw - 1] = 2.0 * d[..., hw - 1]
    out = Tensor(np.ascontiguousarray(np.moveaxis(out_d, -1, waxis)))
    tp = ta._taping()
    if tp is not None:
        def backward(g, x=x, waxis=waxis, W=W, hw=hw):
            gm = np.moveaxis(g, waxis, -1)
            dx = np.empty(gm.shape[:-1] + (W,), g.dtype)
            for j in range(hw - 1):
                dx[..., j] = gm[..., j]
                dx[..., W - 1 - j] = gm[..., j]
            dx[..., hw - 1] = 2.0 * gm[..., hw - 1]
            ta._accum(x, np.ascontiguousarray(np.moveaxis(dx, -1, waxis)))
        tp.record(out, (x,), backward)
    return out


class SymmetricKernelBank:
    """Free half-kernel parameters expanding to symmetric 5x5 kernels.

    ``free`` has shape ``(O, C, 5, 3)`` - 15 free scalars per kernel slice.
    The expansion is recomputed each forward pass (the free parameters are
    the single source of truth); ``expanded`` offers an untaped view for
    inspection.
    """

    def __init__(self, free: Tensor):
        if free.data.ndim != 4 or free.shape[2] != 5 or free.shape[3] != 3:
            raise ValueError(
                f"SymmetricKernelBank expects free parameters (O, C, 5, 3), "
                f"got {free.shape}")
        self.free = free

    @classmethod
    def init(cls, out_channels: int, in_channels: int, rng: np.random.Generator,
             scale: float = 0.02, dtype=np.float32,
             name: str | None = None) -> "SymmetricKernelBank":
        data = rng.normal(0.0, scale, (out_channels, in_channels, 5, 3))
        return cls(Tensor(data.astype(dtype), trainable=True, name=name))

    @property
    def expanded(self) -> np.ndarray:
        d = self.free.data
        return np.concatenate([d, d[..., [1, 0]]], axis=-1)

    @property
    def free_parameter_count(self) -> int:
        return int(np.prod(self.free.shape))

    def expand(self) -> Tensor:
        return expand_symmetric(self.free)


def sym_conv(x: Tensor, bank: SymmetricKernelBank, pad: PadMode | None = None,
             data_format: str = "NCHW") -> Tensor:
    """Convolution with symmetric kernels expanded from ``bank``.

    Exactly matches ``conv2d`` applied to the pre-expanded kernels (they
    share the folded code path), and ``mirror(sym_conv(x)) ==
    sym_conv(mirror(x))`` holds bitwise for zero and circular padding.
    """
    return ta.conv2d(x, bank.expand(), pad=pad, data_format=data_format)
