"""Dense-tensor engine with reverse-mode automatic differentiation.

Everything in this package computes on :class:`Tensor` objects, which wrap a
row-major numpy array (float32 for training, float64 for gradient audits).
Operations executed while a :class:`Tape` is active append backward closures
to the tape; ``Tape.backward`` then replays them in exact reverse order.

Two implementation disciplines matter throughout and are easy to break, so
they are documented here once:

* **Bitwise mirror discipline.**  The symmetry guarantees of the model stack
  are *exact* (to the last bit), not approximate.  They hold because every
  spatial primitive here is written so that reversing the column order of
  the input produces the identical float operations up to commutativity of
  single additions: convolutions with mirror-symmetric kernels pre-fold
  mirrored input column pairs (``a + b`` vs ``b + a``), batchnorm reduces
  mirror-paired sums, and the average pool adds its window entries in a
  left/right paired order.  Do not "simplify" these into generic reductions;
  numpy's pairwise summation is not symmetric in the required sense.

* **No in-place gradient mutation.**  Backward closures accumulate with
  ``grad = grad + g`` (never ``+=``) so that stored gradients may alias
  views of other gradient buffers without corruption.

Feature maps use the NCHW convention in all public signatures; the spatial
primitives also accept ``data_format="NHWC"``, which is the faster internal
layout used by the model assemblies (window gathers become contiguous).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "PadMode",
    "tape",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "bmm",
    "reshape",
    "transpose",
    "flip_axis",
    "narrow",
    "concat",
    "gather_pixels",
    "detach",
    "sum_all",
    "mean_all",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "softplus",
    "abs_",
    "dense",
    "conv2d",
    "upsample_nn",
    "avgpool2",
    "batchnorm",
    "adam_step",
    "zero_grads",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense n-dimensional array participating in gradient taping.

    Parameters
    ----------
    data:
        Array-like; coerced to float32 unless it is already float64.
    trainable:
        Marks an optimizable leaf.  After ``Tape.backward`` every trainable
        leaf seen during the forward pass has a ``grad`` (zeros if it did
        not influence the loss).
    name:
        Optional identifier used in diagnostics and checkpoints.
    """

    __slots__ = ("data", "grad", "trainable", "name", "mirror_symmetric")

    def __init__(self, data, trainable: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.trainable = bool(trainable)
        self.name = name
        # Set by expand_symmetric: promises data[..., j] == data[..., -1-j]
        # and routes conv2d through the folded (exactly mirror-equivariant)
        # kernel path.
        self.mirror_symmetric = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class Tape:
    """Ordered record of primitive applications for reverse-mode autodiff."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._trainable_leaves: dict[int, Tensor] = {}

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: Iterable[Tensor],
               backward: Callable[[np.ndarray], None]) -> None:
        for t in inputs:
            if isinstance(t, Tensor) and t.trainable:
                self._trainable_leaves.setdefault(id(t), t)
        self._records.append((out, backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        """Propagate gradients from ``loss`` back to every reachable input.

        Records are consumed in exact reverse order of their forward
        application.  Branches that did not receive a gradient are skipped.
        """
        if seed is None:
            seed = np.ones_like(loss.data)
        loss.grad = np.asarray(seed, dtype=loss.data.dtype)
        for out, fn in reversed(self._records):
            if out.grad is None:
                continue
            fn(out.grad)
        for leaf in self._trainable_leaves.values():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


_ACTIVE_TAPES: list[Tape] = []


@contextlib.contextmanager
def tape():
    """Context manager activating a fresh :class:`Tape`.

    Operations executed with no active tape run forward-only (no backward
    closures, no saved activations).
    """
    t = Tape()
    _ACTIVE_TAPES.append(t)
    try:
        yield t
    finally:
        _ACTIVE_TAPES.pop()


def _taping() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _as_const(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    bd = _as_const(b)
    out = Tensor(a.data + bd)
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, b=b, ash=a.shape):
            _accum(a, _unbroadcast(g, ash))
            if isinstance(b, Tensor):
                _accum(b, _unbroadcast(g, b.shape))
        tp.record(out, (a, b) if isinstance(b, Tensor) else (a,), backward)
    return out


def sub(a: Tensor, b) -> Tensor:
    bd = _as_const(b)
    out = Tensor(a.data - bd)
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.shape))
            if isinstance(b, Tensor):
                _accum(b, _unbroadcast(-g, b.shape))
        tp.record(out, (a, b) if isinstance(b, Tensor) else (a,), backward)
    return out


def mul(a: Tensor, b) -> Tensor:
    bd = _as_const(b)
    out = Tensor(a.data * bd)
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, b=b, bd=bd):
            _accum(a, _unbroadcast(g * bd, a.shape))
            if isinstance(b, Tensor):
                _accum(b, _unbroadcast(g * a.data, b.shape))
        tp.record(out, (a, b) if isinstance(b, Tensor) else (a,), backward)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,), lambda g, a=a: _accum(a, -g))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, b=b):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        tp.record(out, (a, b), backward)
    return out


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product of ``(N, P, Q) @ (N, Q, R) -> (N, P, R)``."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0] \
            or a.shape[2] != b.shape[1]:
        raise ValueError(
            f"bmm expects (N, P, Q) @ (N, Q, R), got {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, b=b):
            _accum(a, g @ b.data.transpose(0, 2, 1))
            _accum(b, a.data.transpose(0, 2, 1) @ g)
        tp.record(out, (a, b), backward)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,),
                  lambda g, a=a: _accum(a, g.reshape(a.shape)))
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    tp = _taping()
    if tp is not None:
        inv = tuple(np.argsort(axes))
        tp.record(out, (a,),
                  lambda g, a=a, inv=inv: _accum(a, g.transpose(inv)))
    return out


def flip_axis(a: Tensor, axis: int) -> Tensor:
    """Reverse one axis.  ``flip_axis(x, -1)`` is the image mirror."""
    out = Tensor(np.flip(a.data, axis=axis).copy())
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,),
                  lambda g, a=a, ax=axis: _accum(a, np.flip(g, axis=ax)))
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(a.data[index].copy())
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, index=index):
            full = np.zeros_like(a.data)
            full[index] = g
            _accum(a, full)
        tp.record(out, (a,), backward)
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    tp = _taping()
    if tp is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def backward(g, tensors=tuple(tensors), splits=splits, ax=axis):
            for t, piece in zip(tensors, np.split(g, splits, axis=ax)):
                _accum(t, piece)
        tp.record(out, tensors, backward)
    return out


def gather_pixels(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Differentiable gather of the last two axes through integer maps.

    ``rows`` and ``cols`` must share a shape.  2-D maps read the same
    pixels from every leading slice: ``out = x[..., rows, cols]``.  3-D
    maps of shape ``(N, A, B)`` on a 4-D ``x`` give each batch entry its
    own map.  The backward pass scatter-adds, so a source pixel read k
    times collects k gradient contributions.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.shape != cols.shape:
        raise ValueError(
            f"index maps disagree: rows {rows.shape} vs cols {cols.shape}")
    if x.data.ndim < 2:
        raise ValueError("gather_pixels needs at least two axes to index")
    h, w = x.shape[-2], x.shape[-1]
    if rows.size and (rows.min() < 0 or rows.max() >= h
                      or cols.min() < 0 or cols.max() >= w):
        raise ValueError(f"index maps reach outside the {h}x{w} source")
    if rows.ndim == 2:
        index = (Ellipsis, rows, cols)
    elif rows.ndim == 3 and x.data.ndim == 4 and rows.shape[0] == x.shape[0]:
        n, c = x.shape[0], x.shape[1]
        index = (np.arange(n)[:, None, None, None],
                 np.arange(c)[None, :, None, None],
                 rows[:, None], cols[:, None])
    else:
        raise ValueError(
            f"index maps of shape {rows.shape} do not fit input {x.shape}")
    out = Tensor(x.data[index])
    tp = _taping()
    if tp is not None:
        def backward(g, x=x, index=index):
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            _accum(x, gx)
        tp.record(out, (x,), backward)
    return out


def detach(a: Tensor) -> Tensor:
    """A non-taped leaf sharing ``a``'s values (blocks gradient flow)."""
    return Tensor(a.data)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,),
                  lambda g, a=a: _accum(a, np.full(a.shape, g, a.dtype)))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(np.asarray(a.data.mean(), dtype=a.dtype))
    tp = _taping()
    if tp is not None:
        def backward(g, a=a, n=n):
            _accum(a, np.full(a.shape, g / n, a.dtype))
        tp.record(out, (a,), backward)
    return out


# ---------------------------------------------------------------------------
# pointwise activations
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))
    tp = _taping()
    if tp is not None:
        mask = a.data > 0
        tp.record(out, (a,),
                  lambda g, a=a, m=mask: _accum(a, g * m))
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    d = a.data
    out = Tensor(np.where(d > 0, d, d * slope))
    tp = _taping()
    if tp is not None:
        scale = np.where(d > 0, np.asarray(1.0, d.dtype), np.asarray(slope, d.dtype))
        tp.record(out, (a,),
                  lambda g, a=a, s=scale: _accum(a, g * s))
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,),
                  lambda g, a=a, y=out.data: _accum(a, g * (1.0 - y * y)))
    return out


def sigmoid(a: Tensor) -> Tensor:
    d = a.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    out = Tensor(y)
    tp = _taping()
    if tp is not None:
        tp.record(out, (a,),
                  lambda g, a=a, y=y: _accum(a, g * y * (1.0 - y)))
    return out


def softplus(a: Tensor) -> Tensor:
    """Numerically stable ``log(1 + exp(x))``."""
    d = a.data
    out = Tensor(np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d))))
    tp = _taping()
    if tp is not None:
        e = np.exp(-np.abs(d))
        sig = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
        tp.record(out, (a,),
                  lambda g, a=a, s=sig: _accum(a, g * s))
    return out


def abs_(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    tp = _taping()
    if tp is not None:
        sign = np.sign(a.data)
        tp.record(out, (a,),
                  lambda g, a=a, s=sign: _accum(a, g * s))
    return out


# ---------------------------------------------------------------------------
# affine layer
# ---------------------------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` with ``x: (N, F)``, ``w: (F, G)``, ``b: (G,)``."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(
            f"dense shape mismatch: x {x.shape} vs w {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ValueError(
            f"dense bias shape {b.shape} does not match width {w.shape[1]}")
    y = x.data @ w.data
    if b is not None:
        y = y + b.data
    out = Tensor(y)
    tp = _taping()
    if tp is not None:
        def backward(g, x=x, w=w, b=b):
            _accum(x, g @ w.data.T)
            _accum(w, x.data.T @ g)
            if b is not None:
                _accum(b, g.sum(axis=0))
        inputs = (x, w) if b is None else (x, w, b)
        tp.record(out, inputs, backward)
    return out


# ---------------------------------------------------------------------------
# padding
# ---------------------------------------------------------------------------

class PadMode:
    """Spatial padding specification for convolutions.

    ``kind`` is one of:

    * ``"zero"``      - ordinary zero padding;
    * ``"circular"``  - wraparound (torus) padding, the basis of cyclic
      (seamlessly tileable) generators;
    * ``"flipwrap"``  - wraparound where the horizontally wrapped content is
      vertically flipped and vice versa, matching the projective-plane
      tiling's edge identification.

    ``width`` of ``None`` means shape-preserving padding derived from the
    kernel extents, ``(kh - 1) / 2`` and ``(kw - 1) / 2`` per axis.
    """

    KINDS = ("zero", "circular", "flipwrap")

    def __init__(self, kind: str = "zero", width: int | None = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown pad kind {kind!r}; expected one of {self.KINDS}")
        if width is not None and width < 0:
            raise ValueError("pad width must be non-negative")
        self.kind = kind
        self.width = width

    def widths_for(self, kh: int, kw: int) -> tuple[int, int]:
        if self.width is not None:
            return self.width, self.width
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(
                f"shape-preserving padding requires odd kernel extents, got {kh}x{kw}")
        return (kh - 1) // 2, (kw - 1) // 2

    def __eq__(self, other):
        return (isinstance(other, PadMode)
                and (self.kind, self.width) == (other.kind, other.width))

    def __repr__(self):
        return f"PadMode({self.kind!r}, width={self.width})"

    def to_json(self) -> dict:
        return {"kind": self.kind, "width": self.width}

    @classmethod
    def from_json(cls, obj: dict) -> "PadMode":
        return cls(obj["kind"], obj.get("width"))


def _pad_forward(x: np.ndarray, ph: int, pw: int, kind: str) -> np.ndarray:
    """Pad rows/cols of an NHWC array according to the pad kind."""
    if ph == 0 and pw == 0:
        return x
    if kind == "zero":
        return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    if kind == "circular":
        return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)), mode="wrap")
    # flipwrap: horizontal wrap carries vertically flipped content, then the
    # vertical wrap of the column-padded array carries horizontally flipped
    # content (corners compose to a 180-degree rotation).
    H, W = x.shape[1], x.shape[2]
    if pw:
        left = x[:, ::-1, W - pw:, :]
        right = x[:, ::-1, :pw, :]
        x = np.concatenate([left, x, right], axis=2)
    if ph:
        top = x[:, H - ph:, ::-1, :]
        bottom = x[:, :ph, ::-1, :]
        x = np.concatenate([top, x, bottom], axis=1)
    return x


def _pad_backward(g: np.ndarray, ph: int, pw: int, kind: str,
                  H: int, W: int) -> np.ndarray:
    """Adjoint of :func:`_pad_forward` (NHWC)."""
    if ph == 0 and pw == 0:
        return g
    if kind == "zero":
        return g[:, ph:ph + H, pw:pw + W, :]
    if kind == "circular":
        tmp = np.array(g[:, ph:ph + H])
        if ph:
            tmp[:, :ph] = tmp[:, :ph] + g[:, ph + H:]
            tmp[:, H - ph:] = tmp[:, H - ph:] + g[:, :ph]
        dx = np.array(tmp[:, :, pw:pw + W])
        if pw:
            dx[:, :, :pw] = dx[:, :, :pw] + tmp[:, :, pw + W:]
            dx[:, :, W - pw:] = dx[:, :, W - pw:] + tmp[:, :, :pw]
        return dx
    # flipwrap adjoint: undo the two concatenations in reverse order.
    tmp = np.array(g[:, ph:ph + H])
    if ph:
        tmp[:, H - ph:] = tmp[:, H - ph:] + g[:, :ph, ::-1, :]
        tmp[:, :ph] = tmp[:, :ph] + g[:, ph + H:, ::-1, :]
    dx = np.array(tmp[:, :, pw:pw + W])
    if pw:
        dx[:, :, W - pw:] = dx[:, :, W - pw:] + tmp[:, ::-1, :pw, :]
        dx[:, :, :pw] = dx[:, :, :pw] + tmp[:, ::-1, pw + W:, :]
    return dx


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_forward_generic(xp: np.ndarray, kd: np.ndarray):
    """Valid convolution of padded NHWC input with an (O,C,kh,kw) kernel."""
    N, Hp, Wp, C = xp.shape
    O, _, kh, kw = kd.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))      # (N,Ho,Wo,C,kh,kw)
    mat = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    mat = mat.reshape(N * Ho * Wo, kh * kw * C)
    kmat = np.ascontiguousarray(kd.transpose(2, 3, 1, 0)).reshape(kh * kw * C, O)
    out = (mat @ kmat).reshape(N, Ho, Wo, O)
    return out, mat, kmat


def _conv_forward_folded(xp: np.ndarray, kd: np.ndarray):
    """Valid convolution with a mirror-symmetric kernel, folded form.

    Mirrored input column pairs are summed *before* the matrix product, so a
    mirrored input produces bitwise-identical im2col rows at mirrored output
    positions; the contraction then yields exact mirror equivariance.  Also
    40% fewer multiply-accumulates than the generic path.
    """
    N, Hp, Wp, C = xp.shape
    O, _, kh, kw = kd.shape
    hw = (kw + 1) // 2
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    F = np.empty((N, Hp, Wo, hw, C), xp.dtype)
    for j in range(hw - 1):
        np.add(xp[:, :, j:j + Wo, :], xp[:, :, kw - 1 - j:kw - 1 - j + Wo, :],
               out=F[:, :, :, j, :])
    F[:, :, :, hw - 1, :] = xp[:, :, hw - 1:hw - 1 + Wo, :]
    win = sliding_window_view(F, kh, axis=1)                  # (N,Ho,Wo,hw,C,kh)
    mat = np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 4))
    mat = mat.reshape(N * Ho * Wo, hw * kh * C)
    kmat = np.ascontiguousarray(kd[:, :, :, :hw].transpose(3, 2, 1, 0))
    kmat = kmat.reshape(hw * kh * C, O)
    out = (mat @ kmat).reshape(N, Ho, Wo, O)
    return out, mat, kmat


def _conv_backward_generic(g: np.ndarray, mat, kmat, xp_shape, k_shape):
    N, Hp, Wp, C = xp_shape
    O, _, kh, kw = k_shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    gm = g.reshape(N * Ho * Wo, O)
    dk = (mat.T @ gm).reshape(kh, kw, C, O).transpose(3, 2, 0, 1)
    dv = (gm @ kmat.T).reshape(N, Ho, Wo, kh, kw, C)
    stage = np.zeros((N, Hp, Wo, kw, C), g.dtype)
    for r in range(kh):
        stage[:, r:r + Ho] += dv[:, :, :, r]
    dxp = np.zeros(xp_shape, g.dtype)
    for s in range(kw):
        dxp[:, :, s:s + Wo] += stage[:, :, :, s]
    return dxp, dk


def _conv_backward_folded(g: np.ndarray, mat, kmat, xp_shape, k_shape):
    N, Hp, Wp, C = xp_shape
    O, _, kh, kw = k_shape
    hw = (kw + 1) // 2
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    gm = g.reshape(N * Ho * Wo, O)
    dk_half = (mat.T @ gm).reshape(hw, kh, C, O).transpose(3, 2, 1, 0)
    # The two mirrored kernel columns are numerically identical, so report
    # their combined gradient split evenly; the half-kernel expansion's
    # backward re-sums the halves, recovering the exact pair total.
    dk = np.empty(k_shape, g.dtype)
    for j in range(hw - 1):
        half = dk_half[:, :, :, j] * 0.5
        dk[:, :, :, j] = half
        dk[:, :, :, kw - 1 - j] = half
    dk[:, :, :, hw - 1] = dk_half[:, :, :, hw - 1]
    dv = (gm @ kmat.T).reshape(N, Ho, Wo, hw, kh, C)
    stage = np.zeros((N, Hp, Wo, hw, C), g.dtype)
    for r in range(kh):
        stage[:, r:r + Ho] += dv[:, :, :, :, r, :]
    dxp = np.zeros(xp_shape, g.dtype)
    for j in range(hw - 1):
        dxp[:, :, j:j + Wo] += stage[:, :, :, j, :]
        dxp[:, :, kw - 1 - j:kw - 1 - j + Wo] += stage[:, :, :, j, :]
    dxp[:, :, hw - 1:hw - 1 + Wo] += stage[:, :, :, hw - 1, :]
    return dxp, dk


def conv2d(x: Tensor, k: Tensor, pad: PadMode | None = None,
           data_format: str = "NCHW") -> Tensor:
    """2-D convolution (stride 1) of ``x`` with kernel bank ``k``.

    ``x`` is ``(N, C, H, W)`` (or ``(N, H, W, C)`` with
    ``data_format="NHWC"``); ``k`` is ``(O, C, kh, kw)``.  With
    shape-preserving padding the output spatial size equals the input's.
    Kernels flagged mirror-symmetric (produced by half-kernel expansion)
    take a folded path that is exactly mirror-equivariant; see the module
    docstring.
    """
    if pad is None:
        pad = PadMode("zero")
    if data_format == "NCHW":
        xh = transpose(x, (0, 2, 3, 1))
        yh = conv2d(xh, k, pad, data_format="NHWC")
        return transpose(yh, (0, 3, 1, 2))
    if data_format != "NHWC":
        raise ValueError(f"unknown data_format {data_format!r}")
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-D input and kernel, got {x.shape} and {k.shape}")
    if x.shape[3] != k.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has C={x.shape[3]} channels "
            f"but kernel expects C={k.shape[1]} (kernel shape {k.shape})")
    if x.data.dtype != k.data.dtype:
        raise ValueError(
            f"conv2d dtype mismatch: {x.data.dtype} vs {k.data.dtype}")
    O, C, kh, kw = k.shape
    ph, pw = pad.widths_for(kh, kw)
    N, H, W, _ = x.shape
    if H + 2 * ph < kh or W + 2 * pw < kw:
        raise ValueError(
            f"conv2d input {H}x{W} too small for kernel {kh}x{kw} with pad ({ph},{pw})")

    xp = _pad_forward(x.data, ph, pw, pad.kind)
    folded = bool(k.mirror_symmetric) and kw % 2 == 1 and kw > 1
    if folded:
        out_data, mat, kmat = _conv_forward_folded(xp, k.data)
    else:
        out_data, mat, kmat = _conv_forward_generic(xp, k.data)
    out = Tensor(out_data)
    tp = _taping()
    if tp is not None:
        xp_shape, k_shape = xp.shape, k.data.shape
        def backward(g, x=x, k=k, mat=mat, kmat=kmat, folded=folded,
                     xp_shape=xp_shape, k_shape=k_shape, ph=ph, pw=pw,
                     kind=pad.kind, H=H, W=W):
            if folded:
                dxp, dk = _conv_backward_folded(g, mat, kmat, xp_shape, k_shape)
            else:
                dxp, dk = _conv_backward_generic(g, mat, kmat, xp_shape, k_shape)
            _accum(x, _pad_backward(dxp, ph, pw, kind, H, W))
            _accum(k, dk)
        tp.record(out, (x, k), backward)
    return out


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def upsample_nn(x: Tensor, factor: int = 2, data_format: str = "NCHW") -> Tensor:
    """Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block."""
    if factor != 2:
        raise ValueError("upsample_nn supports factor=2 only")
    if x.data.ndim != 4:
        raise ValueError(f"upsample_nn expects a 4-D tensor, got {x.shape}")
    if data_format == "NCHW":
        N, C, H, W = x.shape
        d = x.data[:, :, :, None, :, None]
        out_data = np.broadcast_to(d, (N, C, H, 2, W, 2)).reshape(N, C, 2 * H, 2 * W)
        axes = (3, 5)
        shape6 = (N, C, H, 2, W, 2)
    elif data_format == "NHWC":
        N, H, W, C = x.shape
        d = x.data[:, :, None, :, None, :]
        out_data = np.broadcast_to(d, (N, H, 2, W, 2, C)).reshape(N, 2 * H, 2 * W, C)
        axes = (2, 4)
        shape6 = (N, H, 2, W, 2, C)
    else:
        raise ValueError(f"unknown data_format {data_format!r}")
    out = Tensor(np.ascontiguousarray(out_data))
    tp = _taping()
    if tp is not None:
        def backward(g, x=x, shape6=shape6, axes=axes):
            _accum(x, g.reshape(shape6).sum(axis=axes))
        tp.record(out, (x,), backward)
    return out


def avgpool2(x: Tensor, data_format: str = "NCHW") -> Tensor:
    """2x2 average pooling (stride 2).

    The four window entries are added in left/right-paired order so that the
    pool commutes bitwise with mirroring on even widths.
    """
    if x.data.ndim != 4:
        raise ValueError(f"avgpool2 expects a 4-D tensor, got {x.shape}")
    if data_format == "NCHW":
        haxis, waxis = 2, 3
    elif data_format == "NHWC":
        haxis, waxis = 1, 2
    else:
        raise ValueError(f"unknown data_format {data_format!r}")
    H, W = x.shape[haxis], x.shape[waxis]
    if H % 2 or W % 2:
        raise ValueError(f"avgpool2 requires even spatial extents, got {H}x{W}")
    d = x.data
    ix = [slice(None)] * 4

    def quadrant(r, c):
        ix[haxis] = slice(r, None, 2)
        ix[waxis] = slice(c, None, 2)
        return d[tuple(ix)]

    out_data = ((quadrant(0, 0) + quadrant(0, 1))
                + (quadrant(1, 0) + quadrant(1, 1))) * 0.25
    out = Tensor(out_data)
    tp = _taping()
    if tp is not None:
        def backward(g, x=x, haxis=haxis, waxis=waxis):
            gq = g * 0.25
            dx = np.empty_like(x.data)
            jx = [slice(None)] * 4
            for r in (0, 1):
                for c in (0, 1):
                    jx[haxis] = slice(r, None, 2)
                    jx[waxis] = slice(c, None, 2)
                    dx[tuple(jx)] = gq
            _accum(x, dx)
        tp.record(out, (x,), backward)
    return out


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, mode: str = "train",
              running_mean: Tensor | None = None,
              running_var: Tensor | None = None,
              momentum: float = 0.1, eps: float = 1e-5,
              data_format: str = "NCHW") -> Tensor:
    """Per-channel batch normalization over (batch, height, width).

    In ``train`` mode statistics come from the batch via mirror-paired sums
    (``x + mirror(x)`` is bitwise invariant to mirroring the batch, which
    makes the whole op exactly mirror-equivariant) and the running buffers,
    when given, are updated in place with ``momentum``.  In ``eval`` mode the
    running statistics are used.  Biased variance throughout.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm expects a 4-D tensor, got {x.shape}")
    if data_format == "NCHW":
        caxis, waxis, raxes = 1, 3, (0, 2, 3)
    elif data_format == "NHWC":
        caxis, waxis, raxes = 3, 2, (0, 1, 2)
    else:
        raise ValueError(f"unknown data_format {data_format!r}")
    C = x.shape[caxis]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(
            f"batchnorm parameter shapes {gamma.shape}/{beta.shape} do not match C={C}")
    bshape = [1, 1, 1, 1]
    bshape[caxis] = C
    bshape = tuple(bshape)
    d = x.data
    M = d.size // C

    if mode == "train":
        s = d + np.flip(d, axis=waxis)
        mean = s.sum(axis=raxes) / (2 * M)
        dev = d - mean.reshape(bshape)
        q = dev * dev
        var = (q + np.flip(q, axis=waxis)).sum(axis=raxes) / (2 * M)
        if running_mean is not None:
            running_mean.data[...] = ((1.0 - momentum) * running_mean.data
                                      + momentum * mean)
        if running_var is not None:
            running_var.data[...] = ((1.0 - momentum) * running_var.data
                                     + momentum * var)
    else:
        if running_mean is None or running_var is None:
            raise ValueError("batchnorm eval mode requires running statistics")
        mean = running_mean.data
        var = running_var.data
        dev = d - mean.reshape(bshape)

    inv = 1.0 / np.sqrt(var + eps)
    xhat = dev * inv.reshape(bshape)
    out = Tensor(xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape))
    tp = _taping()
    if tp is not None:
        def backward(g, x=x, gamma=gamma, beta=beta, xhat=xhat, inv=inv,
                     bshape=bshape, raxes=raxes, M=M, train=(mode == "train")):
            _accum(beta, g.sum(axis=raxes))
            _accum(gamma, (g * xhat).sum(axis=raxes))
            gx = g * gamma.data.reshape(bshape)
            if train:
                # d/dx of ((x - mean) * inv) with mean/var functions of x.
                gsum = gx.sum(axis=raxes).reshape(bshape)
                gdot = (gx * xhat).sum(axis=raxes).reshape(bshape)
                dx = (gx - gsum / M - xhat * gdot / M) * inv.reshape(bshape)
            else:
                dx = gx * inv.reshape(bshape)
            _accum(x, dx)
        tp.record(out, (x, gamma, beta), backward)
    return out


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdamState:
    """Adam moments and hyperparameters for an ordered parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 2e-4,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0
        self.skipped = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray] | None,
              state: AdamState) -> bool:
    """One Adam update with bias correction.

    ``grads`` of ``None`` takes each parameter's ``.grad``.  If any gradient
    is non-finite the whole step is skipped and ``state.skipped`` counts it.
    Returns whether the step was applied.
    """
    params = list(params)
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match optimizer state")
    if grads is None:
        grads = [p.grad for p in params]
    gs = []
    for p, g in zip(params, grads):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        gs.append(g)
    if any(not np.all(np.isfinite(g)) for g in gs):
        state.skipped += 1
        return False
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return True
