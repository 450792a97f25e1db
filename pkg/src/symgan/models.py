"""Generator and discriminator assemblies.

Four generator kinds and three discriminator kinds share one small layer
vocabulary (dense first map, nearest-neighbour upsample + 5x5 convolution
stages, batchnorm, relu/tanh; pooled convolution stages + dense head for
discriminators):

* ``zprime`` generator - the latent splits into an antisymmetric part z'
  (first ``zprime_dim`` entries) and a symmetric part z''; each maps through
  a dense layer into half feature maps that expand into antisymmetric and
  symmetric 5-wide stacks, summed into the first feature map.  Negating z'
  mirrors the output *bitwise*.
* ``flip`` generator - one shared dense layer applied to both z and
  flip(z); the second result is mirrored and the two are summed, so
  flipping z mirrors the output bitwise.
* ``baseline`` generator - plain DC-GAN-style stack, no symmetry guarantee.
* ``cyclic`` generator - plain kernels with wraparound (circular or
  flipwrap) padding in every convolution; output patches are
  torus-consistent and tile seamlessly.
* ``symmetric`` discriminator - symmetric kernels, paired-statistics
  batchnorm, 2x2 average pooling, symmetric folding, dense head: mirror
  images receive the identical score, bitwise.
* ``standard`` discriminator - plain kernels, no invariance guarantee.
* ``texture`` discriminator - plain convolution trunk whose Gram
  descriptors (pairwise feature inner products + a ones map, taken before
  the bias) from every layer feed the dense head; position-blind.

The antisymmetric first-map dense layer carries *no* bias: a bias would
survive the z' sign flip and break exact mirroring (its absence is what
makes the equivariance guarantee hold at every parameter setting).

Feature maps flow internally in NHWC layout for speed; all public
signatures use NCHW images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_autodiff as ta
from . import structured_ops as so
from .tensor_autodiff import PadMode, Tensor


__all__ = [
    "GeneratorSpec",
    "DiscriminatorSpec",
    "LatentBatch",
    "NumericError",
    "init_generator",
    "init_discriminator",
    "zprime_first_map",
    "flip_first_map",
    "generate",
    "discriminate",
    "discriminate_logits",
    "gram_descriptor",
    "texture_discriminate",
    "texture_discriminate_logits",
    "trainable_parameters",
    "desk_generator_spec",
    "reference_generator_spec",
    "desk_discriminator_spec",
    "reference_discriminator_spec",
    "pair_latent",
    "sample_latent",
]

GENERATOR_KINDS = ("zprime", "flip", "baseline", "cyclic")
DISCRIMINATOR_KINDS = ("symmetric", "standard", "texture")


class NumericError(RuntimeError):
    """Raised when a forward pass produces non-finite activations."""


@dataclass
class GeneratorSpec:
    """Layer-stack description of a generator.

    ``channels`` runs from the first feature map's depth down to 3 (the
    image); each step is one upsample+conv stage, so the output is
    ``base_size * 2 ** stages`` pixels square.  ``base_size`` is 5 for the
    face-style generators; cyclic (tileable) generators use 4 so patch
    sizes come out as powers of two.
    """

    kind: str = "zprime"
    z_dim: int = 100
    zprime_dim: int = 5
    channels: tuple = (512, 256, 128, 64, 3)
    pad: PadMode = field(default_factory=lambda: PadMode("zero"))
    base_size: int = 5

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) < 2 or self.channels[-1] != 3:
            raise ValueError(
                f"channel ladder must end at 3 image channels, got {self.channels}")
        if self.kind == "zprime" and not 0 < self.zprime_dim < self.z_dim:
            raise ValueError(
                f"zprime_dim must split z_dim, got {self.zprime_dim}/{self.z_dim}")
        if self.kind == "cyclic":
            if self.pad.kind == "zero":
                raise ValueError("cyclic generators require wraparound padding")
        elif self.kind in ("zprime", "flip") and self.base_size != 5:
            # The mirror-structured first maps are built from width-2/3
            # half-maps, which expand to a width-5 base exactly.
            raise ValueError(
                f"{self.kind} generators use a 5x5 first map, got base_size={self.base_size}")

    @property
    def stages(self) -> int:
        return len(self.channels) - 1

    @property
    def output_size(self) -> int:
        return self.base_size * 2 ** self.stages

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "z_dim": self.z_dim,
            "zprime_dim": self.zprime_dim,
            "channels": list(self.channels),
            "pad": self.pad.to_json(),
            "base_size": self.base_size,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorSpec":
        return cls(kind=obj["kind"], z_dim=obj["z_dim"],
                   zprime_dim=obj["zprime_dim"],
                   channels=tuple(obj["channels"]),
                   pad=PadMode.from_json(obj["pad"]),
                   base_size=obj["base_size"])


@dataclass
class DiscriminatorSpec:
    """Layer-stack description of a discriminator.

    ``channels`` mirrors the generator ladder (image depth first); each
    stage is conv + pool, halving the spatial size down to ``base_size``.
    For the texture kind, ``input_size`` is the expected crop size and the
    head reads concatenated Gram descriptors instead of the final map.
    """

    kind: str = "symmetric"
    channels: tuple = (3, 64, 128, 256, 512)
    base_size: int = 5

    def __post_init__(self):
        if self.kind not in DISCRIMINATOR_KINDS:
            raise ValueError(f"unknown discriminator kind {self.kind!r}")
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) < 2 or self.channels[0] != 3:
            raise ValueError(
                f"channel ladder must start at 3 image channels, got {self.channels}")

    @property
    def stages(self) -> int:
        return len(self.channels) - 1

    @property
    def input_size(self) -> int:
        return self.base_size * 2 ** self.stages

    @property
    def descriptor_length(self) -> int:
        # Gram blocks from the input image and every conv layer.
        return sum((c + 1) ** 2 for c in self.channels)

    def to_json(self) -> dict:
        return {"kind": self.kind, "channels": list(self.channels),
                "base_size": self.base_size}

    @classmethod
    def from_json(cls, obj: dict) -> "DiscriminatorSpec":
        return cls(kind=obj["kind"], channels=tuple(obj["channels"]),
                   base_size=obj["base_size"])


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def reference_generator_spec(kind: str = "zprime") -> GeneratorSpec:
    """Full-scale profile: z=100 (z'=5), ladder 512..3, 80x80 output.

    ``kind="crop"`` names the plain 64x64 patch generator used by
    tile-and-crop texture training (baseline architecture, power-of-two
    output, no wraparound).
    """
    if kind == "cyclic":
        return GeneratorSpec(kind="cyclic", z_dim=100, zprime_dim=5,
                             channels=(256, 128, 64, 32, 3),
                             pad=PadMode("circular"), base_size=4)
    if kind == "crop":
        return GeneratorSpec(kind="baseline", z_dim=100, zprime_dim=5,
                             channels=(256, 128, 64, 32, 3), base_size=4)
    return GeneratorSpec(kind=kind)


def desk_generator_spec(kind: str = "zprime") -> GeneratorSpec:
    """Small profile for tests and CI: z=20 (z'=3), ladder 64-32-3, 20x20."""
    if kind == "cyclic":
        return GeneratorSpec(kind="cyclic", z_dim=20, zprime_dim=3,
                             channels=(32, 16, 8, 3), pad=PadMode("circular"),
                             base_size=4)
    if kind == "crop":
        return GeneratorSpec(kind="baseline", z_dim=20, zprime_dim=3,
                             channels=(32, 16, 8, 3), base_size=4)
    return GeneratorSpec(kind=kind, z_dim=20, zprime_dim=3,
                         channels=(64, 32, 3))


def reference_discriminator_spec(kind: str = "symmetric") -> DiscriminatorSpec:
    if kind == "texture":
        return DiscriminatorSpec(kind="texture", channels=(3, 64, 128, 256),
                                 base_size=8)
    return DiscriminatorSpec(kind=kind)


def desk_discriminator_spec(kind: str = "symmetric") -> DiscriminatorSpec:
    if kind == "texture":
        return DiscriminatorSpec(kind="texture", channels=(3, 16, 24, 32),
                                 base_size=4)
    return DiscriminatorSpec(kind=kind, channels=(3, 32, 64))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

_INIT_SCALE = 0.02  # normal(0, 0.02) on free parameters, DC-GAN convention


def _bn_params(params: dict, prefix: str, c: int, dtype) -> None:
    params[f"{prefix}.gamma"] = Tensor(np.ones(c, dtype), trainable=True,
                                       name=f"{prefix}.gamma")
    params[f"{prefix}.beta"] = Tensor(np.zeros(c, dtype), trainable=True,
                                      name=f"{prefix}.beta")
    params[f"{prefix}.running_mean"] = Tensor(np.zeros(c, dtype),
                                              name=f"{prefix}.running_mean")
    params[f"{prefix}.running_var"] = Tensor(np.ones(c, dtype),
                                             name=f"{prefix}.running_var")


def init_generator(spec: GeneratorSpec, rng: np.random.Generator,
                   dtype=np.float32) -> dict:
    """Freshly initialized named parameter tensors for ``spec``."""
    p: dict[str, Tensor] = {}
    c0, b = spec.channels[0], spec.base_size

    def normal(shape, name):
        return Tensor(rng.normal(0.0, _INIT_SCALE, shape).astype(dtype),
                      trainable=True, name=name)

    if spec.kind == "zprime":
        zp = spec.zprime_dim
        # No bias on the antisymmetric branch: exact mirroring under
        # z' -> -z' requires the map to be odd in z'.
        p["fc_anti.w"] = normal((zp, c0 * b * 2), "fc_anti.w")
        p["fc_sym.w"] = normal((spec.z_dim - zp, c0 * b * 3), "fc_sym.w")
        p["fc_sym.b"] = Tensor(np.zeros(c0 * b * 3, dtype), trainable=True,
                               name="fc_sym.b")
    elif spec.kind == "flip":
        p["fc.w"] = normal((spec.z_dim, c0 * b * b), "fc.w")
        p["fc.b"] = Tensor(np.zeros(c0 * b * b, dtype), trainable=True,
                           name="fc.b")
    else:
        p["fc.w"] = normal((spec.z_dim, c0 * b * b), "fc.w")
        p["fc.b"] = Tensor(np.zeros(c0 * b * b, dtype), trainable=True,
                           name="fc.b")
    _bn_params(p, "bn0", c0, dtype)

    symmetric_kernels = spec.kind in ("zprime", "flip")
    for s in range(spec.stages):
        cin, cout = spec.channels[s], spec.channels[s + 1]
        if symmetric_kernels:
            p[f"stage{s}.kernel"] = normal((cout, cin, 5, 3), f"stage{s}.kernel")
        else:
            p[f"stage{s}.kernel"] = normal((cout, cin, 5, 5), f"stage{s}.kernel")
        if s < spec.stages - 1:
            _bn_params(p, f"stage{s}.bn", cout, dtype)
        else:
            p[f"stage{s}.bias"] = Tensor(np.zeros(cout, dtype), trainable=True,
                                         name=f"stage{s}.bias")
    return p


def init_discriminator(spec: DiscriminatorSpec, rng: np.random.Generator,
                       dtype=np.float32) -> dict:
    p: dict[str, Tensor] = {}

    def normal(shape, name):
        return Tensor(rng.normal(0.0, _INIT_SCALE, shape).astype(dtype),
                      trainable=True, name=name)

    symmetric_kernels = spec.kind == "symmetric"
    for s in range(spec.stages):
        cin, cout = spec.channels[s], spec.channels[s + 1]
        if symmetric_kernels:
            p[f"stage{s}.kernel"] = normal((cout, cin, 5, 3), f"stage{s}.kernel")
        else:
            p[f"stage{s}.kernel"] = normal((cout, cin, 5, 5), f"stage{s}.kernel")
        if spec.kind == "texture":
            # The texture trunk is batchnorm-free; its Gram taps read the
            # conv outputs before this bias is added.
            p[f"stage{s}.bias"] = Tensor(np.zeros(cout, dtype), trainable=True,
                                         name=f"stage{s}.bias")
        else:
            _bn_params(p, f"stage{s}.bn", cout, dtype)

    if spec.kind == "texture":
        head_in = spec.descriptor_length
    elif spec.kind == "symmetric":
        head_in = spec.channels[-1] * spec.base_size * ((spec.base_size + 1) // 2)
    else:
        head_in = spec.channels[-1] * spec.base_size * spec.base_size
    p["head.w"] = normal((head_in, 1), "head.w")
    p["head.b"] = Tensor(np.zeros(1, dtype), trainable=True, name="head.b")
    return p


def trainable_parameters(params: dict) -> list:
    """Trainable tensors in deterministic (insertion) order."""
    return [t for t in params.values() if t.trainable]


# ---------------------------------------------------------------------------
# latent handling
# ---------------------------------------------------------------------------

def pair_latent(spec: GeneratorSpec, z: np.ndarray) -> np.ndarray:
    """The paired latent z_N whose image should be the mirror of G(z).

    Negates the first ``zprime_dim`` coordinates for the z' encoding (also
    used with baseline generators under the loss-based scheme); reverses
    the whole vector for the flip encoding.
    """
    if spec.kind == "flip":
        return z[..., ::-1].copy()
    zn = z.copy()
    zn[..., :spec.zprime_dim] = -zn[..., :spec.zprime_dim]
    return zn


@dataclass
class LatentBatch:
    """A batch of latent vectors, optionally with their mirror partners."""

    z: Tensor
    z_n: Tensor | None = None

    @classmethod
    def sample(cls, spec: GeneratorSpec, n: int, rng: np.random.Generator,
               pair: bool = False, dtype=np.float32) -> "LatentBatch":
        z = rng.uniform(-1.0, 1.0, (n, spec.z_dim)).astype(dtype)
        zn = pair_latent(spec, z) if pair else None
        return cls(Tensor(z), Tensor(zn) if zn is not None else None)


def sample_latent(spec: GeneratorSpec, n: int, rng: np.random.Generator,
                  dtype=np.float32) -> Tensor:
    return LatentBatch.sample(spec, n, rng, dtype=dtype).z


# ---------------------------------------------------------------------------
# first maps
# ---------------------------------------------------------------------------

def _check_z(spec: GeneratorSpec, z: Tensor) -> None:
    if z.data.ndim != 2 or z.shape[1] != spec.z_dim:
        raise ValueError(
            f"latent shape {z.shape} does not match z_dim={spec.z_dim}")


def zprime_first_map(params: dict, z: Tensor,
                     spec: GeneratorSpec) -> Tensor:
    """First feature map of the z' generator, ``(N, C0, b, b)``.

    z' drives an antisymmetric stack (dense, *bias-free*, reshaped to
    half-maps of width 2 and expanded), z'' a symmetric stack (dense with
    bias, width-3 half-maps, expanded); the two are summed.  Bitwise:
    z'=0 gives a self-mirrored map, and negating z' mirrors the map.
    """
    _check_z(spec, z)
    n = z.shape[0]
    c0, b = spec.channels[0], spec.base_size
    zp = spec.zprime_dim
    z_anti = ta.narrow(z, 1, 0, zp)
    z_sym = ta.narrow(z, 1, zp, spec.z_dim - zp)
    anti_half = ta.reshape(ta.dense(z_anti, params["fc_anti.w"]), (n, c0, b, 2))
    sym_half = ta.reshape(
        ta.dense(z_sym, params["fc_sym.w"], params["fc_sym.b"]), (n, c0, b, 3))
    return ta.add(so.expand_antisymmetric(anti_half),
                  so.expand_symmetric(sym_half))


def flip_first_map(params: dict, z: Tensor, spec: GeneratorSpec) -> Tensor:
    """First feature map of the flip generator, ``(N, C0, b, b)``.

    One shared affine layer maps both z and flip(z); the flipped branch's
    map is mirrored and the two are summed, so flip_first_map(flip(z)) ==
    mirror(flip_first_map(z)) bitwise (the sum commutes).
    """
    _check_z(spec, z)
    n = z.shape[0]
    c0, b = spec.channels[0], spec.base_size
    w, bias = params["fc.w"], params["fc.b"]
    straight = ta.reshape(ta.dense(z, w, bias), (n, c0, b, b))
    flipped = ta.reshape(ta.dense(so.flip(z), w, bias), (n, c0, b, b))
    return ta.add(straight, so.mirror(flipped))


def _plain_first_map(params: dict, z: Tensor, spec: GeneratorSpec) -> Tensor:
    _check_z(spec, z)
    n = z.shape[0]
    c0, b = spec.channels[0], spec.base_size
    return ta.reshape(ta.dense(z, params["fc.w"], params["fc.b"]),
                      (n, c0, b, b))


_FIRST_MAPS = {
    "zprime": zprime_first_map,
    "flip": flip_first_map,
    "baseline": _plain_first_map,
    "cyclic": _plain_first_map,
}


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _bn(params: dict, prefix: str, h: Tensor, mode: str) -> Tensor:
    return ta.batchnorm(h, params[f"{prefix}.gamma"], params[f"{prefix}.beta"],
                        mode, running_mean=params[f"{prefix}.running_mean"],
                        running_var=params[f"{prefix}.running_var"],
                        data_format="NHWC")


def generate(spec: GeneratorSpec, params: dict, z: Tensor,
             mode: str = "eval", first_map: Tensor | None = None) -> Tensor:
    """Run the generator; returns images ``(N, 3, S, S)`` in [-1, 1].

    ``first_map`` (NCHW) substitutes for the latent projection when given -
    used by the shift-equivariance checks of cyclic generators.
    """
    if first_map is None:
        fm = _FIRST_MAPS[spec.kind](params, z, spec)
    else:
        fm = first_map
    h = ta.transpose(fm, (0, 2, 3, 1))
    h = ta.relu(_bn(params, "bn0", h, mode))
    symmetric_kernels = spec.kind in ("zprime", "flip")
    for s in range(spec.stages):
        h = ta.upsample_nn(h, data_format="NHWC")
        kernel = params[f"stage{s}.kernel"]
        if symmetric_kernels:
            h = so.sym_conv(h, so.SymmetricKernelBank(kernel), spec.pad,
                            data_format="NHWC")
        else:
            h = ta.conv2d(h, kernel, spec.pad, data_format="NHWC")
        if s < spec.stages - 1:
            h = ta.relu(_bn(params, f"stage{s}.bn", h, mode))
        else:
            h = ta.tanh(ta.add(h, params[f"stage{s}.bias"]))
    out = ta.transpose(h, (0, 3, 1, 2))
    if not np.all(np.isfinite(out.data)):
        raise NumericError("generator produced non-finite activations")
    return out


def discriminate_logits(spec: DiscriminatorSpec, params: dict, x: Tensor,
                        mode: str = "eval") -> Tensor:
    """Pre-sigmoid scores ``(N,)`` of the symmetric/standard discriminator."""
    if spec.kind == "texture":
        return texture_discriminate_logits(spec, params, x)
    if x.data.ndim != 4 or x.shape[1] != 3 or x.shape[2] != x.shape[3] \
            or x.shape[2] != spec.input_size:
        raise ValueError(
            f"discriminator expects (N, 3, {spec.input_size}, "
            f"{spec.input_size}) input, got {x.shape}")
    symmetric_kernels = spec.kind == "symmetric"
    h = ta.transpose(x, (0, 2, 3, 1))
    pad = PadMode("zero")
    for s in range(spec.stages):
        kernel = params[f"stage{s}.kernel"]
        if symmetric_kernels:
            h = so.sym_conv(h, so.SymmetricKernelBank(kernel), pad,
                            data_format="NHWC")
        else:
            h = ta.conv2d(h, kernel, pad, data_format="NHWC")
        h = _bn(params, f"stage{s}.bn", h, mode)
        h = ta.leaky_relu(h, 0.2)
        h = ta.avgpool2(h, data_format="NHWC")
    if spec.kind == "symmetric":
        h = so.fold_symmetric(h, data_format="NHWC")
    n = h.shape[0]
    flat = ta.reshape(h, (n, -1))
    logits = ta.dense(flat, params["head.w"], params["head.b"])
    return ta.reshape(logits, (n,))


def discriminate(spec: DiscriminatorSpec, params: dict, x: Tensor,
                 mode: str = "eval") -> Tensor:
    """Probability in (0, 1) that each input is real, shape ``(N,)``.

    For the symmetric kind, mirrored inputs receive bitwise-identical
    scores (symmetric kernels + paired-statistics batchnorm + paired
    pooling + symmetric folding).
    """
    return ta.sigmoid(discriminate_logits(spec, params, x, mode))


# ---------------------------------------------------------------------------
# Gram texture machinery
# ---------------------------------------------------------------------------

def _gram_batched(h: Tensor) -> Tensor:
    """Gram blocks for a batch of NHWC feature stacks -> (N, (C+1)**2).

    Appends a ones map (first-order statistics), takes all pairwise inner
    products over spatial positions, and divides by C ** 1.5 where C is the
    raw channel count.
    """
    n, hh, ww, c = h.shape
    if c == 0:
        raise ValueError("empty feature stack")
    ones = Tensor(np.ones((n, hh, ww, 1), h.dtype))
    stack = ta.concat([ones, h], axis=3)
    flat = ta.reshape(stack, (n, hh * ww, c + 1))
    gram = ta.bmm(ta.transpose(flat, (0, 2, 1)), flat)
    return ta.reshape(ta.mul(gram, 1.0 / c ** 1.5), (n, (c + 1) * (c + 1)))


def gram_descriptor(features: Tensor) -> Tensor:
    """Normalized pairwise-inner-product descriptor of a ``(C, H, W)`` stack.

    A ones map is appended ahead of the C feature maps, every pair is
    reduced over spatial positions, and all entries divide by ``C ** 1.5``;
    the result is symmetric positive semidefinite of size ``(C+1, C+1)``.
    """
    if features.data.ndim != 3 or features.shape[0] == 0:
        raise ValueError(
            f"gram_descriptor expects a non-empty (C, H, W) stack, got {features.shape}")
    c = features.shape[0]
    h = ta.transpose(features, (1, 2, 0))
    n1 = ta.reshape(h, (1,) + h.shape)
    return ta.reshape(_gram_batched(n1), (c + 1, c + 1))


def texture_discriminate_logits(spec: DiscriminatorSpec, params: dict,
                                x: Tensor) -> Tensor:
    """Pre-sigmoid texture scores ``(N,)``.

    Gram blocks are read from the input image and from every conv layer's
    output *before* its bias; the concatenated descriptor feeds the dense
    head, so the score depends only on position-blind feature statistics.
    """
    if x.data.ndim != 4 or x.shape[1] != 3 or x.shape[2] != spec.input_size \
            or x.shape[3] != spec.input_size:
        raise ValueError(
            f"texture discriminator expects (N, 3, {spec.input_size}, "
            f"{spec.input_size}) input, got {x.shape}")
    h = ta.transpose(x, (0, 2, 3, 1))
    blocks = [_gram_batched(h)]
    pad = PadMode("zero")
    for s in range(spec.stages):
        pre_bias = ta.conv2d(h, params[f"stage{s}.kernel"], pad,
                             data_format="NHWC")
        blocks.append(_gram_batched(pre_bias))
        h = ta.leaky_relu(ta.add(pre_bias, params[f"stage{s}.bias"]), 0.2)
        h = ta.avgpool2(h, data_format="NHWC")
    descriptor = ta.concat(blocks, axis=1)
    logits = ta.dense(descriptor, params["head.w"], params["head.b"])
    return ta.reshape(logits, (x.shape[0],))


def texture_discriminate(spec: DiscriminatorSpec, params: dict,
                         x: Tensor) -> Tensor:
    """Probability in (0, 1) that each 3-channel crop is real texture."""
    return ta.sigmoid(texture_discriminate_logits(spec, params, x))
