"""Seamless-texture machinery: tiling-pattern geometry, tiled rendering,
a differentiable tile-and-crop map, wraparound patch generation, seam
scoring, and the texture-adversary training step.

A *tiling pattern* describes how copies of one square patch cover the
plane: which rigid transform each copy undergoes and how rows are offset.
Patterns are defined by small per-parity tables; every geometric routine
here derives from a single vectorized coordinate fold (``patch_indices``),
so the canvas, crops, and gradients all agree by construction.

Two routes produce seamless patches.  ``cyclic_generate`` bakes the
wraparound into the generator's convolutions so periodicity is exact by
architecture; ``tile_train_step(mode="crop")`` instead tiles the patch,
crops across the seams, and lets the texture discriminator's verdict push
seam artifacts out of the generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import models as mo
from . import tensor_autodiff as ta
from . import training as tr
from .tensor_autodiff import Tensor

__all__ = [
    "PATTERN_NAMES",
    "TilingPattern",
    "TileSpec",
    "get_pattern",
    "pattern_tables_json",
    "patch_indices",
    "tile_plane",
    "crop_tiled",
    "random_crop_tiled",
    "cyclic_generate",
    "seam_score",
    "tile_train_step",
]

PATTERN_NAMES = ("grid", "projective", "spherical", "hexagonal")

# How a displayed tile T relates to the patch P: T[a, b] = P[op(a, b)].
# rot90 is a quarter turn counter-clockwise (numpy's rot90 convention);
# flip_hv doubles as the 180-degree rotation.
_OP_INDEX = {
    "identity": lambda a, b, s: (a, b),
    "flip_h": lambda a, b, s: (a, s - 1 - b),
    "flip_v": lambda a, b, s: (s - 1 - a, b),
    "flip_hv": lambda a, b, s: (s - 1 - a, s - 1 - b),
    "rot90": lambda a, b, s: (b, s - 1 - a),
    "rot270": lambda a, b, s: (s - 1 - b, a),
}


@dataclass(frozen=True)
class TilingPattern:
    """Edge-identification scheme for covering the plane with one patch.

    ``transforms[i % period[0]][j % period[1]]`` names the rigid transform
    tile (i, j) applies to the patch; ``half_row_shift`` slides odd tile
    rows right by half a tile (the brick lattice).  The tables are the
    normative definition: every seam consequence is derived from them.
    """

    name: str
    period: tuple
    transforms: tuple
    half_row_shift: bool = False

    def transform(self, i: int, j: int) -> str:
        return self.transforms[i % self.period[0]][j % self.period[1]]

    def offset(self, i: int, j: int, s: int) -> tuple:
        """Sub-tile translation (rows, cols) applied to tile (i, j)."""
        if self.half_row_shift and i % 2:
            if s % 2:
                raise ValueError(
                    f"{self.name} tiling shifts rows by half a tile; "
                    f"patch size {s} is odd")
            return (0, s // 2)
        return (0, 0)

    def to_json(self) -> dict:
        return {"name": self.name, "period": list(self.period),
                "transforms": [list(row) for row in self.transforms],
                "half_row_shift": self.half_row_shift}


# Normative tables.  projective: a step right flips the patch vertically
# ((S, y) ~ (0, S-y)) and a step down flips it horizontally
# ((x, 0) ~ (S-x, S)).  spherical: quarter-turn pinwheel realizing
# top-edge <-> right-edge and bottom <-> left with row/column transposition.
# hexagonal: unrotated bricks, odd rows slid by half a tile.
_PATTERNS = {
    "grid": TilingPattern("grid", (1, 1), (("identity",),)),
    "projective": TilingPattern("projective", (2, 2),
                                (("identity", "flip_v"),
                                 ("flip_h", "flip_hv"))),
    "spherical": TilingPattern("spherical", (2, 2),
                               (("identity", "rot90"),
                                ("rot270", "flip_hv"))),
    "hexagonal": TilingPattern("hexagonal", (2, 1),
                               (("identity",), ("identity",)),
                               half_row_shift=True),
}


def get_pattern(name: str | TilingPattern) -> TilingPattern:
    if isinstance(name, TilingPattern):
        return name
    try:
        return _PATTERNS[name]
    except KeyError:
        raise ValueError(
            f"unknown tiling pattern {name!r}; expected one of {PATTERN_NAMES}"
        ) from None


def pattern_tables_json() -> str:
    """All pattern tables as a JSON document (fixtures, docs)."""
    return json.dumps({n: _PATTERNS[n].to_json() for n in PATTERN_NAMES},
                      indent=2)


@dataclass(frozen=True)
class TileSpec:
    """Patch/crop geometry for tile-and-crop training."""

    patch_size: int = 64
    pattern: str = "grid"
    crop_size: int = 0  # 0 means "same as patch_size"

    def __post_init__(self):
        object.__setattr__(self, "crop_size",
                           self.crop_size or self.patch_size)
        get_pattern(self.pattern)
        if self.patch_size < 1:
            raise ValueError(f"patch size must be positive, got {self.patch_size}")
        if not 0 < self.crop_size <= 2 * self.patch_size:
            raise ValueError(
                f"crop size {self.crop_size} does not fit a 2x2 tiling of a "
                f"{self.patch_size}-pixel patch")

    def to_json(self) -> dict:
        return {"patch_size": self.patch_size, "pattern": self.pattern,
                "crop_size": self.crop_size}

    @classmethod
    def from_json(cls, obj: dict) -> "TileSpec":
        return cls(patch_size=obj["patch_size"], pattern=obj["pattern"],
                   crop_size=obj["crop_size"])


# ---------------------------------------------------------------------------
# coordinate geometry
# ---------------------------------------------------------------------------

def patch_indices(pattern: str | TilingPattern, s: int, u, v) -> tuple:
    """Fold canvas coordinates into patch coordinates.

    ``u``/``v`` are integer row/column coordinates of the infinite tiled
    canvas (any range, negatives included); the result is the pair of
    patch index arrays such that ``canvas[u, v] == patch[rows, cols]``.
    """
    p = get_pattern(pattern)
    ub, vb = np.broadcast_arrays(np.asarray(u), np.asarray(v))
    shape = ub.shape
    ub = ub.reshape(-1)
    vb = vb.reshape(-1)
    i = ub // s
    j = vb // s
    a = ub - i * s
    b = vb - j * s
    if p.half_row_shift:
        if s % 2:
            raise ValueError(
                f"{p.name} tiling shifts rows by half a tile; patch size "
                f"{s} is odd")
        b = (b - (i % 2) * (s // 2)) % s
    rows = np.empty_like(a)
    cols = np.empty_like(b)
    pr, pc = p.period
    for pi in range(pr):
        for pj in range(pc):
            mask = ((i % pr) == pi) & ((j % pc) == pj)
            ra, rb = _OP_INDEX[p.transforms[pi][pj]](a[mask], b[mask], s)
            rows[mask] = ra
            cols[mask] = rb
    return rows.reshape(shape), cols.reshape(shape)


def tile_plane(patch: np.ndarray, pattern: str | TilingPattern,
               rows: int, cols: int) -> np.ndarray:
    """Cover a ``rows x cols``-tile canvas with transformed patch copies.

    ``patch`` is ``(..., S, S)``; the canvas is ``(..., rows*S, cols*S)``.
    Half-shifted rows wrap around the canvas edge, so the canvas itself
    stays rectangular.
    """
    patch = np.asarray(patch)
    if patch.ndim < 2 or patch.shape[-1] != patch.shape[-2]:
        raise ValueError(f"patch must be square, got shape {patch.shape}")
    if rows < 1 or cols < 1:
        raise ValueError("canvas needs at least one tile in each direction")
    s = patch.shape[-1]
    u, v = np.indices((rows * s, cols * s))
    r_idx, c_idx = patch_indices(pattern, s, u, v)
    return patch[..., r_idx, c_idx]


def crop_tiled(patch: Tensor, pattern: str | TilingPattern,
               u0, v0, crop_size: int | None = None) -> Tensor:
    """Differentiable ``crop_size`` square window of the tiled plane.

    ``patch`` is ``(3, S, S)`` or batched ``(N, 3, S, S)``; batched input
    takes per-sample offsets (``u0``/``v0`` arrays of length N).  Tiling
    and cropping compose to one linear index map, so gradients flow back
    to every patch pixel the window read.
    """
    nd = patch.data.ndim
    if nd not in (3, 4) or patch.shape[-1] != patch.shape[-2]:
        raise ValueError(
            f"patch must be (C, S, S) or (N, C, S, S), got {patch.shape}")
    s = patch.shape[-1]
    c = s if crop_size is None else int(crop_size)
    if c < 1:
        raise ValueError(f"crop size must be positive, got {c}")
    u0 = np.asarray(u0, dtype=np.int64)
    v0 = np.asarray(v0, dtype=np.int64)
    win = np.indices((c, c))
    if nd == 3:
        if u0.ndim or v0.ndim:
            raise ValueError("single patch takes scalar offsets")
        rows, cols = patch_indices(pattern, s, u0 + win[0], v0 + win[1])
    else:
        n = patch.shape[0]
        if u0.shape != (n,) or v0.shape != (n,):
            raise ValueError(
                f"batched patches need offset arrays of length {n}")
        rows, cols = patch_indices(pattern, s,
                                   u0[:, None, None] + win[0][None],
                                   v0[:, None, None] + win[1][None])
    return ta.gather_pixels(patch, rows, cols)


def random_crop_tiled(patch: Tensor, pattern: str | TilingPattern,
                      rng: np.random.Generator,
                      crop_size: int | None = None) -> Tensor:
    """Crop at an offset drawn uniformly from one fundamental domain."""
    p = get_pattern(pattern)
    s = patch.shape[-1]
    dom_r = p.period[0] * s
    dom_c = p.period[1] * s
    if patch.data.ndim == 4:
        n = patch.shape[0]
        u0 = rng.integers(0, dom_r, size=n)
        v0 = rng.integers(0, dom_c, size=n)
    else:
        u0 = int(rng.integers(0, dom_r))
        v0 = int(rng.integers(0, dom_c))
    return crop_tiled(patch, pattern, u0, v0, crop_size)


# ---------------------------------------------------------------------------
# wraparound generation
# ---------------------------------------------------------------------------

_CYCLIC_PAD_FOR_PATTERN = {"grid": "circular", "projective": "flipwrap"}


def _check_cyclic_pairing(spec: mo.GeneratorSpec, p: TilingPattern) -> None:
    if spec.kind != "cyclic":
        raise ValueError(
            f"cyclic_generate needs a cyclic-kind generator, got {spec.kind!r}")
    want = _CYCLIC_PAD_FOR_PATTERN.get(p.name)
    if want is None:
        raise ValueError(
            f"no wraparound convolution realizes the {p.name} pattern; "
            f"use tile-and-crop training instead")
    if spec.pad.kind != want:
        raise ValueError(
            f"the {p.name} pattern needs {want!r} padding, but the "
            f"generator was built with {spec.pad.kind!r}")


def cyclic_generate(spec: mo.GeneratorSpec, params: dict, z,
                    pattern: str | TilingPattern = "grid",
                    mode: str = "eval") -> Tensor:
    """Generate a patch whose wraparound seams are consistent by design.

    Every convolution's support wraps to the far side of its feature map,
    so the patch continues into itself: grid-tiling it makes every
    patch-sized window a circular shift of the patch.  The projective
    pattern uses the flip-and-wrap padding variant.  Spherical tiling is
    rejected: its edge identification turns rows into columns, which no
    fixed wraparound support can express; the half-shifted brick rows of
    the hexagonal pattern are likewise out of reach.  Use the
    tile-and-crop route for those patterns.
    """
    _check_cyclic_pairing(spec, get_pattern(pattern))
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    return mo.generate(spec, params, z, mode)


# ---------------------------------------------------------------------------
# seam scoring
# ---------------------------------------------------------------------------

def seam_score(canvas: np.ndarray, s: int, include_wrap: bool = True):
    """Cross-seam discontinuity relative to interior discontinuity.

    Adjacent-pixel absolute differences are split into pairs straddling a
    tile boundary (every ``s``-th column/row, the canvas wrap edge
    included unless disabled) and interior pairs; the score is the ratio
    of their means.  1.0 reads as "statistically seamless".  Returns NaN
    when the interior shows no variation at all.
    """
    canvas = np.asarray(canvas, dtype=np.float64)
    h, w = canvas.shape[-2], canvas.shape[-1]
    if s < 1 or h % s or w % s:
        raise ValueError(
            f"canvas {h}x{w} is not a whole number of {s}-pixel tiles")
    col_diff = np.abs(canvas - np.roll(canvas, -1, axis=-1))
    row_diff = np.abs(canvas - np.roll(canvas, -1, axis=-2))
    col_seam = (np.arange(w) % s) == s - 1
    row_seam = (np.arange(h) % s) == s - 1
    if not include_wrap:
        col_diff = col_diff[..., :-1]
        row_diff = row_diff[..., :-1, :]
        col_seam = col_seam[:-1]
        row_seam = row_seam[:-1]
    cross = np.concatenate([col_diff[..., col_seam].ravel(),
                            row_diff[..., row_seam, :].ravel()])
    interior = np.concatenate([col_diff[..., ~col_seam].ravel(),
                               row_diff[..., ~row_seam, :].ravel()])
    if interior.size == 0 or cross.size == 0:
        raise ValueError("canvas too small to hold both seam and interior pairs")
    denom = interior.mean()
    if denom == 0.0:
        return float("nan")
    return float(cross.mean() / denom)


# ---------------------------------------------------------------------------
# adversarial step
# ---------------------------------------------------------------------------

TILE_MODES = ("cyclic", "crop")


def _random_source_crops(source: np.ndarray, size: int, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    c, h, w = source.shape
    us = rng.integers(0, h - size + 1, size=count)
    vs = rng.integers(0, w - size + 1, size=count)
    return np.stack([source[:, u:u + size, v:v + size]
                     for u, v in zip(us, vs)])


def tile_train_step(g: "tr.ModelPack", d: "tr.ModelPack", source: np.ndarray,
                    mode: str, rng: np.random.Generator,
                    pattern: str | TilingPattern = "grid",
                    batch_size: int = 64) -> dict:
    """One adversarial update pair on texture crops.

    The real side is ``batch_size`` random windows of the source texture;
    the fake side is the generator's patches, fed directly in ``cyclic``
    mode or put through ``random_crop_tiled`` in ``crop`` mode so that
    seam artifacts land inside the judged window.  Returns the same
    metric record as a face-model adversarial step.
    """
    if mode not in TILE_MODES:
        raise ValueError(f"unknown tile-training mode {mode!r}; "
                         f"expected one of {TILE_MODES}")
    if d.spec.kind != "texture":
        raise ValueError(
            f"tile training judges with the texture discriminator, "
            f"got kind {d.spec.kind!r}")
    source = np.asarray(source)
    size = d.spec.input_size
    if source.ndim != 3 or source.shape[0] != 3:
        raise ValueError(f"source must be one (3, H, W) image, got "
                         f"{source.shape}")
    if source.shape[1] < size or source.shape[2] < size:
        raise ValueError(
            f"source {source.shape[1]}x{source.shape[2]} is smaller than "
            f"the {size}x{size} crop the discriminator judges")
    p = get_pattern(pattern)
    if mode == "cyclic":
        _check_cyclic_pairing(g.spec, p)
        if g.spec.output_size != size:
            raise ValueError(
                f"cyclic mode feeds patches straight to the judge: patch "
                f"{g.spec.output_size} != crop {size}")
    elif not 0 < size <= 2 * g.spec.output_size:
        raise ValueError(
            f"crop {size} does not fit a 2x2 tiling of the "
            f"{g.spec.output_size}-pixel patch")

    def fake_batch(z_t: Tensor) -> Tensor:
        patches = mo.generate(g.spec, g.params, z_t, "train")
        if mode == "cyclic":
            return patches
        return random_crop_tiled(patches, p, rng, size)

    real = Tensor(_random_source_crops(source, size, batch_size, rng))
    z = mo.sample_latent(g.spec, batch_size, rng)
    record = {"d_loss": float("nan"), "g_loss": float("nan"),
              "d_real": float("nan"), "d_fake": float("nan"),
              "d_applied": False, "g_applied": False}
    try:
        fake = fake_batch(z)  # untaped: constant for the D update
    except mo.NumericError:
        d.opt.skipped += 1
        g.opt.skipped += 1
        return record

    ta.zero_grads(d.trainables)
    with ta.tape() as tp:
        l_real = mo.texture_discriminate_logits(d.spec, d.params, real)
        l_fake = mo.texture_discriminate_logits(d.spec, d.params,
                                                Tensor(fake.data))
        d_loss = ta.add(ta.mean_all(ta.softplus(ta.neg(l_real))),
                        ta.mean_all(ta.softplus(l_fake)))
        tp.backward(d_loss)
    if np.isfinite(d_loss.data):
        record["d_applied"] = tr._apply(d)
    else:
        d.opt.skipped += 1
    record["d_loss"] = float(d_loss.data)
    record["d_real"], record["d_fake"] = tr._logit_means(l_real, l_fake)

    ta.zero_grads(g.trainables)
    ta.zero_grads(d.trainables)  # G's tape reaches D parameters too
    try:
        with ta.tape() as tp:
            crops = fake_batch(z)
            logits = mo.texture_discriminate_logits(d.spec, d.params, crops)
            g_loss = ta.mean_all(ta.softplus(ta.neg(logits)))
            tp.backward(g_loss)
    except mo.NumericError:
        g.opt.skipped += 1
        return record
    if np.isfinite(g_loss.data):
        record["g_applied"] = tr._apply(g)
    else:
        g.opt.skipped += 1
    record["g_loss"] = float(g_loss.data)
    return record
