"""Mirror-symmetric GAN toolkit.

A small numpy-backed library for building generative adversarial networks
whose left-right symmetry properties are enforced by architecture rather
than by a loss term, together with latent inversion / one-shot generator
fine-tuning and architecture-enforced seamless texture tiling.

Modules
-------
tensor_autodiff
    Dense tensors with reverse-mode differentiation and the layer
    primitives (conv2d, upsample, pooling, batchnorm, dense, Adam).
structured_ops
    The symmetry-carrying operators: flips, half-kernel expansions,
    symmetric folding, wrap paddings.
models
    Generator / discriminator assemblies and their latent semantics.
training
    Adversarial training loops, the loss-based symmetry baseline,
    fit-and-tune latent inversion, and evaluation sweeps.
tiling
    Tiling-pattern geometry, tile-and-crop training, cyclic generators,
    seam scoring.
data_io
    Datasets (folder / synthetic), checkpoint persistence, montages
    and curve files.
cli
    The ``symgan`` command-line entry point.
"""

from . import tensor_autodiff
from . import structured_ops
from . import models
from . import data_io
from . import training
from . import tiling

__all__ = [
    "tensor_autodiff",
    "structured_ops",
    "models",
    "training",
    "tiling",
    "data_io",
]

__version__ = "0.1.0"
