"""Shared test utilities: independent oracles and the gradient-check harness."""

import numpy as np
import pytest

from symgan import tensor_autodiff as ta


def conv2d_oracle(x, k, pad_kind="zero", widths=None):
    """Brute-force nested-loop 2-D convolution (stride 1), NCHW numpy arrays.

    Written independently of the engine: explicit python loops over every
    output element, with padding realized by index arithmetic.
    """
    x = np.asarray(x)
    k = np.asarray(k)
    N, C, H, W = x.shape
    O, _, kh, kw = k.shape
    if widths is None:
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    else:
        ph, pw = widths
    Ho, Wo = H + 2 * ph - kh + 1, W + 2 * pw - kw + 1
    out = np.zeros((N, O, Ho, Wo), dtype=x.dtype)

    def sample(n, c, i, j):
        if pad_kind == "zero":
            if 0 <= i < H and 0 <= j < W:
                return x[n, c, i, j]
            return 0.0
        if pad_kind == "circular":
            return x[n, c, i % H, j % W]
        if pad_kind == "flipwrap":
            # Horizontal wrap flips rows; vertical wrap flips columns.
            ti, tj = i // H, j // W
            ii, jj = i % H, j % W
            if tj % 2:
                ii = H - 1 - ii
            if ti % 2:
                jj = W - 1 - jj
            return x[n, c, ii, jj]
        raise ValueError(pad_kind)

    for n in range(N):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for r in range(kh):
                            for s in range(kw):
                                acc += sample(n, c, i - ph + r, j - pw + s) * k[o, c, r, s]
                    out[n, o, i, j] = acc
    return out


def gram_oracle(features):
    """Brute-force pairwise-inner-product descriptor with a ones map.

    ``features`` is (C, H, W); returns (C+1, C+1), every entry divided by
    C ** 1.5.
    """
    f = np.asarray(features, dtype=np.float64)
    C, H, W = f.shape
    stack = np.concatenate([np.ones((1, H, W)), f], axis=0)
    out = np.zeros((C + 1, C + 1))
    for i in range(C + 1):
        for j in range(C + 1):
            acc = 0.0
            for y in range(H):
                for x in range(W):
                    acc += stack[i, y, x] * stack[j, y, x]
            out[i, j] = acc
    return out / C ** 1.5


def finite_diff_check(make_loss, tensors, h=1e-5, rtol=1e-4):
    """Compare tape gradients of a scalar loss against central differences.

    ``make_loss`` is a zero-argument callable re-running the forward pass
    (64-bit tensors).  Asserts max |analytic - numeric| <= rtol * scale per
    tensor, where scale is the numeric gradient's max magnitude (floored to
    dodge 0/0).
    """
    for t in tensors:
        assert t.data.dtype == np.float64, "gradient checks run in 64-bit mode"
        t.grad = None
    with ta.tape() as tp:
        loss = make_loss()
        tp.backward(loss)
    for t in tensors:
        analytic = t.grad
        assert analytic is not None, f"no gradient reached {t.name or t}"
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(make_loss().data)
            flat[i] = orig - h
            lo = float(make_loss().data)
            flat[i] = orig
            nflat[i] = (hi - lo) / (2 * h)
        scale = max(np.abs(numeric).max(), 1e-6)
        err = np.abs(analytic - numeric).max()
        assert err <= rtol * scale, (
            f"gradient mismatch for {t.name or 'tensor'}: "
            f"max abs err {err:.3e} vs scale {scale:.3e}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
