"""Adversarial training, generator inversion, and evaluation sweeps.

The GAN loop is the non-saturating variant: the discriminator descends
``softplus(-logit(real)) + softplus(logit(fake))`` and the generator
descends ``softplus(-logit(fake))``, each with its own Adam state.  An
optional mirror-consistency penalty ``alpha_sym * MSE(G(z),
mirror(G(z_N)))`` turns a plain generator into the loss-based symmetry
baseline (presets: 40 soft, 100 strong); for the architecture-constrained
generators the penalty is identically zero.

Generator inversion runs in two phases.  ``fit_z`` freezes the generator
and descends ``MSE(G(z), I) + alpha_wd * sum(z^2) + beta * sum(relu(|z|
- 1))`` from z = 0, tracking the best-so-far iterate and bailing out
after 50 consecutive non-improving steps.  ``fine_tune`` then alternates
adversarial training of the generator copy against the original dataset
with joint reconstruction descent over (z, generator parameters),
snapshotting each round and rolling back whenever a full alternation
makes the reconstruction worse.

The sweep utilities scale the antisymmetric latent block: ``yaw_sweep``
renders the interpolation from z' to -z' (a virtual yaw), ``mse_curve``
scores each sweep image against the mirror of its negated-z' partner
(the midpoint pairs with itself), and ``scalar_sweep`` steps one or all
z' coordinates through an explicit range.

Training emits line-delimited JSON records ``{step, d_loss, g_loss,
sym_loss, d_real, d_fake}`` plus periodic eval records (equivariance gap
and output-spread diagnostics, the latter a mode-collapse indicator for
the loss-based baseline).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import data_io as dio
from . import models as mo
from . import structured_ops as so
from . import tensor_autodiff as ta
from .models import DiscriminatorSpec, GeneratorSpec
from .tensor_autodiff import AdamState, Tensor

__all__ = [
    "SOFT_SYMMETRIC_WEIGHT",
    "STRONG_SYMMETRIC_WEIGHT",
    "TrainConfig",
    "FitTuneConfig",
    "ModelPack",
    "TrainResult",
    "FitResult",
    "FineTuneResult",
    "new_generator_pack",
    "new_discriminator_pack",
    "gan_step",
    "symmetric_loss",
    "mirror_pair_mse",
    "train",
    "fit_z",
    "fine_tune",
    "yaw_sweep",
    "overlay_average",
    "mse_curve",
    "scalar_sweep",
    "pack_checkpoint",
    "save_run_checkpoint",
    "load_run_checkpoint",
    "RunState",
]

SOFT_SYMMETRIC_WEIGHT = 40.0
STRONG_SYMMETRIC_WEIGHT = 100.0


@dataclass
class TrainConfig:
    """Adversarial-loop settings; ``alpha_sym`` weights the mirror penalty."""

    batch_size: int = 64
    steps: int = 1000
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    alpha_sym: float = 0.0
    eval_every: int = 100
    dataset: object = None

    def __post_init__(self):
        if self.alpha_sym < 0:
            raise ValueError(f"alpha_sym must be >= 0, got {self.alpha_sym}")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")
        if self.alpha_sym > 0 and self.batch_size % 2:
            raise ValueError(
                "batch size must be even when pairing (z, z_N) for the "
                "mirror penalty")

    def to_json(self) -> dict:
        return {"batch_size": self.batch_size, "steps": self.steps,
                "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "seed": self.seed, "alpha_sym": self.alpha_sym,
                "eval_every": self.eval_every}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class FitTuneConfig:
    """Inversion settings: weight decay, hinge weight, phase budgets."""

    alpha_wd: float = 1e-3
    beta_hinge: float = 1.0
    phase1_steps: int = 2000
    alternations: int = 10
    gan_steps_per_alt: int = 50
    joint_steps_per_alt: int = 100
    lr_z: float = 0.05
    lr_params: float = 2e-4
    seed: int = 0

    def __post_init__(self):
        if self.alpha_wd < 0 or self.beta_hinge < 0:
            raise ValueError("alpha_wd and beta_hinge must be >= 0")

    def to_json(self) -> dict:
        return {"alpha_wd": self.alpha_wd, "beta_hinge": self.beta_hinge,
                "phase1_steps": self.phase1_steps,
                "alternations": self.alternations,
                "gan_steps_per_alt": self.gan_steps_per_alt,
                "joint_steps_per_alt": self.joint_steps_per_alt,
                "lr_z": self.lr_z, "lr_params": self.lr_params,
                "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "FitTuneConfig":
        return cls(**obj)


# ---------------------------------------------------------------------------
# model/optimizer bundles
# ---------------------------------------------------------------------------

@dataclass
class ModelPack:
    """A spec, its parameter tensors, and (optionally) an Adam state."""

    spec: object
    params: dict
    opt: AdamState | None = None

    @property
    def trainables(self) -> list:
        return mo.trainable_parameters(self.params)


def new_generator_pack(spec: GeneratorSpec, rng: np.random.Generator,
                       cfg: TrainConfig | None = None) -> ModelPack:
    cfg = cfg or TrainConfig()
    params = mo.init_generator(spec, rng)
    opt = AdamState(mo.trainable_parameters(params), lr=cfg.lr,
                    beta1=cfg.beta1, beta2=cfg.beta2)
    return ModelPack(spec, params, opt)


def new_discriminator_pack(spec: DiscriminatorSpec, rng: np.random.Generator,
                           cfg: TrainConfig | None = None) -> ModelPack:
    cfg = cfg or TrainConfig()
    params = mo.init_discriminator(spec, rng)
    opt = AdamState(mo.trainable_parameters(params), lr=cfg.lr,
                    beta1=cfg.beta1, beta2=cfg.beta2)
    return ModelPack(spec, params, opt)


def _apply(pack: ModelPack) -> bool:
    """One Adam update from the accumulated gradients (skips non-finite)."""
    params = pack.trainables
    grads = [t.grad if t.grad is not None else np.zeros_like(t.data)
             for t in params]
    return ta.adam_step(params, grads, pack.opt)


# ---------------------------------------------------------------------------
# losses and the adversarial step
# ---------------------------------------------------------------------------

def mirror_pair_mse(images: Tensor, paired_images: Tensor) -> Tensor:
    """Mean squared difference between images and mirrored partners."""
    diff = ta.sub(images, so.mirror(paired_images))
    return ta.mean_all(ta.mul(diff, diff))


def symmetric_loss(g: ModelPack, z_batch, alpha_sym: float,
                   mode: str = "train",
                   generate_fn: Callable | None = None) -> Tensor:
    """``alpha_sym * MSE(G(z), mirror(G(z_N)))`` with z_N per encoding.

    Exactly zero for the architecture-constrained generators.  A custom
    ``generate_fn(z) -> images`` substitutes for the model forward (the
    pairing rule still comes from ``g.spec``).
    """
    if alpha_sym < 0:
        raise ValueError(f"alpha_sym must be >= 0, got {alpha_sym}")
    z = z_batch if isinstance(z_batch, Tensor) else Tensor(z_batch)
    z_n = Tensor(mo.pair_latent(g.spec, z.data))
    if generate_fn is None:
        images = mo.generate(g.spec, g.params, z, mode)
        paired = mo.generate(g.spec, g.params, z_n, mode)
    else:
        images, paired = generate_fn(z), generate_fn(z_n)
    return ta.mul(mirror_pair_mse(images, paired), alpha_sym)


def _logit_means(l_real: Tensor, l_fake: Tensor) -> tuple:
    d_real = float(ta.sigmoid(Tensor(l_real.data)).data.mean())
    d_fake = float(ta.sigmoid(Tensor(l_fake.data)).data.mean())
    return d_real, d_fake


def gan_step(g: ModelPack, d: ModelPack, real_batch, z_batch,
             alpha_sym: float = 0.0, mode: str = "train") -> dict:
    """One discriminator update followed by one generator update.

    Returns ``{d_loss, g_loss, sym_loss, d_real, d_fake, d_applied,
    g_applied}``.  Non-finite losses or gradients reject the affected
    update (recorded via the ``*_applied`` flags and the Adam skip
    counters) instead of corrupting parameters.
    """
    real = real_batch if isinstance(real_batch, Tensor) else Tensor(real_batch)
    z = z_batch if isinstance(z_batch, Tensor) else Tensor(z_batch)

    record = {"d_loss": float("nan"), "g_loss": float("nan"),
              "sym_loss": 0.0, "d_real": float("nan"),
              "d_fake": float("nan"), "d_applied": False, "g_applied": False}
    try:
        fake = mo.generate(g.spec, g.params, z, mode)  # untaped: constant for D
    except mo.NumericError:
        d.opt.skipped += 1
        g.opt.skipped += 1
        return record

    ta.zero_grads(d.trainables)
    with ta.tape() as tp:
        l_real = mo.discriminate_logits(d.spec, d.params, real, mode)
        l_fake = mo.discriminate_logits(d.spec, d.params, Tensor(fake.data),
                                        mode)
        d_loss = ta.add(ta.mean_all(ta.softplus(ta.neg(l_real))),
                        ta.mean_all(ta.softplus(l_fake)))
        tp.backward(d_loss)
    if np.isfinite(d_loss.data):
        record["d_applied"] = _apply(d)
    else:
        d.opt.skipped += 1
    record["d_loss"] = float(d_loss.data)
    record["d_real"], record["d_fake"] = _logit_means(l_real, l_fake)

    ta.zero_grads(g.trainables)
    ta.zero_grads(d.trainables)  # G's tape reaches D parameters too
    with ta.tape() as tp:
        images = mo.generate(g.spec, g.params, z, mode)
        logits = mo.discriminate_logits(d.spec, d.params, images, mode)
        g_loss = ta.mean_all(ta.softplus(ta.neg(logits)))
        if alpha_sym > 0.0:
            sym = symmetric_loss(g, z, alpha_sym, mode)
            record["sym_loss"] = float(sym.data)
            g_loss = ta.add(g_loss, sym)
        tp.backward(g_loss)
    if np.isfinite(g_loss.data):
        record["g_applied"] = _apply(g)
    else:
        g.opt.skipped += 1
    record["g_loss"] = float(g_loss.data)
    return record


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    g: ModelPack
    d: ModelPack
    history: list = field(default_factory=list)
    eval_records: list = field(default_factory=list)


def _equivariance_gap(g: ModelPack, probe_z: np.ndarray) -> float:
    """max |G(z_N) - mirror(G(z))| on a probe batch (eval mode)."""
    imgs = mo.generate(g.spec, g.params, Tensor(probe_z), "eval").data
    z_n = mo.pair_latent(g.spec, probe_z)
    imgs_n = mo.generate(g.spec, g.params, Tensor(z_n), "eval").data
    return float(np.max(np.abs(imgs_n - imgs[..., ::-1])))


def train(gspec: GeneratorSpec, dspec: DiscriminatorSpec, cfg: TrainConfig,
          dataset=None, log_path: str | None = None,
          g: ModelPack | None = None, d: ModelPack | None = None) -> TrainResult:
    """Run ``cfg.steps`` adversarial steps; fully seeded and deterministic.

    Fresh models are initialized from ``cfg.seed`` unless packs are
    passed in.  Each step appends one JSON record to ``log_path``; every
    ``cfg.eval_every`` steps an eval record (equivariance gap, output
    spread) is appended as well.
    """
    dataset = dataset if dataset is not None else cfg.dataset
    if dataset is None:
        raise ValueError("train() needs a dataset")
    rng = np.random.default_rng(cfg.seed)
    if g is None:
        g = new_generator_pack(gspec, rng, cfg)
    if d is None:
        d = new_discriminator_pack(dspec, rng, cfg)
    probe_z = rng.uniform(-1, 1, (8, gspec.z_dim)).astype(np.float32)

    result = TrainResult(g, d)
    for step in range(cfg.steps):
        real = dataset.sample(cfg.batch_size, rng)
        z = rng.uniform(-1, 1, (cfg.batch_size, gspec.z_dim)).astype(np.float32)
        rec = gan_step(g, d, real, z, cfg.alpha_sym)
        row = {"step": step, "d_loss": rec["d_loss"], "g_loss": rec["g_loss"],
               "sym_loss": rec["sym_loss"], "d_real": rec["d_real"],
               "d_fake": rec["d_fake"]}
        result.history.append(row)
        if log_path:
            dio.append_jsonl(log_path, row)
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            imgs = mo.generate(g.spec, g.params, Tensor(probe_z), "eval").data
            ev = {"kind": "eval", "step": step,
                  "equivariance_gap": _equivariance_gap(g, probe_z),
                  "g_std": float(imgs.std(axis=0).mean()),
                  "d_skipped": d.opt.skipped, "g_skipped": g.opt.skipped}
            result.eval_records.append(ev)
            if log_path:
                dio.append_jsonl(log_path, ev)
    return result


# ---------------------------------------------------------------------------
# generator inversion: fit, then tune
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    z: np.ndarray
    objective: float
    residual_mse: float
    steps_run: int
    diverged: bool
    history: list = field(default_factory=list)


def _as_image_batch(image) -> np.ndarray:
    arr = np.asarray(image.data if isinstance(image, Tensor) else image,
                     dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] != 1:
        raise ValueError(f"expected one (3, S, S) target image, got {arr.shape}")
    return arr


def _recon_objective(g: ModelPack, z: Tensor, target: Tensor,
                     cfg: FitTuneConfig) -> tuple:
    """(objective, mse) tensors for MSE + weight decay + hinge on z."""
    images = mo.generate(g.spec, g.params, z, "eval")
    diff = ta.sub(images, target)
    mse = ta.mean_all(ta.mul(diff, diff))
    obj = mse
    if cfg.alpha_wd > 0:
        obj = ta.add(obj, ta.mul(ta.sum_all(ta.mul(z, z)), cfg.alpha_wd))
    if cfg.beta_hinge > 0:
        hinge = ta.sum_all(ta.relu(ta.sub(ta.abs_(z), 1.0)))
        obj = ta.add(obj, ta.mul(hinge, cfg.beta_hinge))
    return obj, mse


def fit_z(g: ModelPack, image, cfg: FitTuneConfig) -> FitResult:
    """Phase I: descend the reconstruction objective over z alone.

    z starts at 0; the generator is frozen (eval mode).  Returns the
    best-so-far iterate; 50 consecutive steps without improving it stop
    the search early with a warning.
    """
    target = Tensor(_as_image_batch(image))
    z = Tensor(np.zeros((1, g.spec.z_dim), np.float32), trainable=True,
               name="z")
    opt = AdamState([z], lr=cfg.lr_z)
    best_obj = np.inf
    best_z = z.data.copy()
    best_mse = np.inf
    stall = 0
    diverged = False
    history = []
    steps = 0
    for steps in range(1, cfg.phase1_steps + 1):
        ta.zero_grads([z])
        with ta.tape() as tp:
            obj, mse = _recon_objective(g, z, target, cfg)
            tp.backward(obj)
        value = float(obj.data)
        history.append(value)
        if value < best_obj:
            best_obj, best_z, best_mse = value, z.data.copy(), float(mse.data)
            stall = 0
        else:
            stall += 1
            if stall >= 50:
                diverged = True
                warnings.warn(
                    f"fit_z stopped after {steps} steps: objective failed to "
                    f"improve for 50 consecutive steps; returning best-so-far")
                break
        ta.adam_step([z], [z.grad], opt)
    z.data = best_z
    if not np.isfinite(best_obj):  # zero-step budget: report z = 0 as-is
        obj, mse = _recon_objective(g, z, target, cfg)
        best_obj, best_mse = float(obj.data), float(mse.data)
    return FitResult(best_z[0].copy(), best_obj, best_mse, steps, diverged,
                     history)


@dataclass
class FineTuneResult:
    z: np.ndarray
    g: ModelPack
    residuals: list
    rollbacks: int

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def _snapshot(params: dict) -> dict:
    return {k: t.data.copy() for k, t in params.items()}


def _restore(params: dict, snap: dict) -> None:
    for k, t in params.items():
        t.data = snap[k].copy()


def fine_tune(g: ModelPack, d: ModelPack, z: np.ndarray, image, dataset,
              cfg: FitTuneConfig, train_cfg: TrainConfig | None = None,
              on_alternation: Callable | None = None) -> FineTuneResult:
    """Phase II: alternate adversarial training with joint reconstruction.

    Each of ``cfg.alternations`` rounds runs ``gan_steps_per_alt``
    adversarial steps on ``dataset`` and then ``joint_steps_per_alt``
    descent steps of the reconstruction objective over z *and* the
    generator parameters (weight decay and hinge still act on z only).
    A round that ends with a worse reconstruction than it started is
    rolled back to its entry snapshot.  The generator architecture is
    untouched, so its mirror guarantees survive every round.
    """
    train_cfg = train_cfg or TrainConfig(batch_size=16, steps=0,
                                         seed=cfg.seed)
    if g.opt is None:
        g.opt = AdamState(g.trainables, lr=train_cfg.lr,
                          beta1=train_cfg.beta1, beta2=train_cfg.beta2)
    if d.opt is None:
        d.opt = AdamState(d.trainables, lr=train_cfg.lr,
                          beta1=train_cfg.beta1, beta2=train_cfg.beta2)
    target = Tensor(_as_image_batch(image))
    z_t = Tensor(np.asarray(z, np.float32).reshape(1, -1).copy(),
                 trainable=True, name="z")
    if z_t.shape[1] != g.spec.z_dim:
        raise ValueError(f"z has {z_t.shape[1]} entries, generator wants "
                         f"{g.spec.z_dim}")
    z_opt = AdamState([z_t], lr=cfg.lr_z)
    joint_opt = AdamState(g.trainables, lr=cfg.lr_params)
    rng = np.random.default_rng(cfg.seed)

    def residual() -> float:
        images = mo.generate(g.spec, g.params, z_t, "eval").data
        return float(np.mean((images - target.data) ** 2))

    residuals = [residual()]
    rollbacks = 0
    for round_idx in range(cfg.alternations):
        snap = (_snapshot(g.params), _snapshot(d.params), z_t.data.copy())
        entry_residual = residuals[-1]
        for _ in range(cfg.gan_steps_per_alt):
            real = dataset.sample(train_cfg.batch_size, rng)
            z_batch = rng.uniform(-1, 1, (train_cfg.batch_size,
                                          g.spec.z_dim)).astype(np.float32)
            gan_step(g, d, real, z_batch, train_cfg.alpha_sym)
        for _ in range(cfg.joint_steps_per_alt):
            ta.zero_grads(g.trainables)
            ta.zero_grads([z_t])
            with ta.tape() as tp:
                obj, _ = _recon_objective(g, z_t, target, cfg)
                tp.backward(obj)
            ta.adam_step([z_t], [z_t.grad], z_opt)
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data)
                     for t in g.trainables]
            ta.adam_step(g.trainables, grads, joint_opt)
        now = residual()
        if now > entry_residual:
            _restore(g.params, snap[0])
            _restore(d.params, snap[1])
            z_t.data = snap[2]
            rollbacks += 1
            now = entry_residual
        residuals.append(now)
        if on_alternation is not None:
            on_alternation(round_idx, z_t.data[0].copy(), g)
    return FineTuneResult(z_t.data[0].copy(), g, residuals, rollbacks)


# ---------------------------------------------------------------------------
# latent sweeps and overlays
# ---------------------------------------------------------------------------

def _require_scalable(spec: GeneratorSpec, op: str) -> None:
    if spec.kind not in ("zprime", "baseline"):
        raise ValueError(
            f"{op} scales the leading latent block, which only the zprime "
            f"and baseline kinds define; got kind={spec.kind!r}")


def _antisymmetric_grid(n: int) -> np.ndarray:
    """n scales from 1 to -1 with t[i] == -t[n-1-i] exactly."""
    if n < 1:
        raise ValueError("need at least one sweep point")
    half = np.array([1.0 - 2.0 * i / (n - 1) for i in range(n // 2)],
                    np.float32) if n > 1 else np.zeros(0, np.float32)
    middle = np.zeros(1 if n % 2 else 0, np.float32)
    return np.concatenate([half, middle, -half[::-1]])


def _sweep_latents(spec: GeneratorSpec, z: np.ndarray,
                   scales: np.ndarray) -> np.ndarray:
    z = np.asarray(z, np.float32).reshape(-1)
    if z.shape[0] != spec.z_dim:
        raise ValueError(f"z has {z.shape[0]} entries, expected {spec.z_dim}")
    batch = np.tile(z, (scales.size, 1))
    batch[:, :spec.zprime_dim] = scales[:, None] * z[:spec.zprime_dim]
    return batch


def yaw_sweep(g: ModelPack, z, n: int) -> np.ndarray:
    """Interpolate the antisymmetric block from z' to -z' over n images.

    For the zprime architecture image i is exactly the mirror of image
    n-1-i (the scale grid is antisymmetric bit-for-bit, so paired latents
    are exact negations).
    """
    if g.spec.kind != "zprime":
        raise ValueError(f"yaw_sweep needs a zprime generator, got "
                         f"{g.spec.kind!r}")
    scales = _antisymmetric_grid(n)
    latents = _sweep_latents(g.spec, z, scales)
    return mo.generate(g.spec, g.params, Tensor(latents), "eval").data


def overlay_average(g: ModelPack, z) -> np.ndarray:
    """Pixelwise ``(G(z) + mirror(G(z_N))) / 2``.

    For the mirror-equivariant generators the two terms are identical, so
    the overlay reproduces G(z) with no ghosting.
    """
    z = np.asarray(z, np.float32)
    single = z.ndim == 1
    batch = z[None] if single else z
    imgs = mo.generate(g.spec, g.params, Tensor(batch), "eval").data
    z_n = mo.pair_latent(g.spec, batch)
    imgs_n = mo.generate(g.spec, g.params, Tensor(z_n), "eval").data
    out = (imgs + imgs_n[..., ::-1]) * np.float32(0.5)
    return out[0] if single else out


def mse_curve(g: ModelPack, z, n: int) -> np.ndarray:
    """Sweep MSE(image_i, mirror(image of the negated scale)) over n scales.

    Image i pairs with image n-1-i (same |scale|, opposite sign); the
    midpoint pairs with itself.  Identically ~0 for equivariant
    generators; informative for the baseline.
    """
    _require_scalable(g.spec, "mse_curve")
    scales = _antisymmetric_grid(n)
    latents = _sweep_latents(g.spec, z, scales)
    imgs = mo.generate(g.spec, g.params, Tensor(latents), "eval").data
    paired = imgs[::-1, :, :, ::-1]
    return np.mean((imgs.astype(np.float64) - paired.astype(np.float64)) ** 2,
                   axis=(1, 2, 3))


def scalar_sweep(g: ModelPack, z, lo: float, hi: float, step: float,
                 coordinate="all") -> np.ndarray:
    """Images with the z' block stepped through [lo, hi].

    ``coordinate="all"`` drives every z' entry to each grid value
    together; an integer selects one coordinate, zeroing the others.
    The symmetric block z'' always comes from ``z``.
    """
    _require_scalable(g.spec, "scalar_sweep")
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    count = int(round((hi - lo) / step)) + 1
    values = (lo + step * np.arange(count)).astype(np.float32)
    z = np.asarray(z, np.float32).reshape(-1)
    if z.shape[0] != g.spec.z_dim:
        raise ValueError(f"z has {z.shape[0]} entries, expected {g.spec.z_dim}")
    zp = g.spec.zprime_dim
    batch = np.tile(z, (count, 1))
    if coordinate == "all":
        batch[:, :zp] = values[:, None]
    else:
        coordinate = int(coordinate)
        if not 0 <= coordinate < zp:
            raise ValueError(
                f"coordinate {coordinate} out of range for a {zp}-wide "
                f"antisymmetric block")
        batch[:, :zp] = 0.0
        batch[:, coordinate] = values
    return mo.generate(g.spec, g.params, Tensor(batch), "eval").data


# ---------------------------------------------------------------------------
# checkpoint plumbing
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    g: ModelPack
    d: ModelPack | None
    meta: dict


def _pack_opt(prefix: str, pack: ModelPack, tensors: dict, meta: dict) -> None:
    if pack.opt is None:
        return
    names = [t.name or f"p{i}" for i, t in enumerate(pack.trainables)]
    for name, m, v in zip(names, pack.opt.m, pack.opt.v):
        tensors[f"{prefix}.m.{name}"] = m
        tensors[f"{prefix}.v.{name}"] = v
    meta[prefix] = {"lr": pack.opt.lr, "beta1": pack.opt.beta1,
                    "beta2": pack.opt.beta2, "eps": pack.opt.eps,
                    "step_count": pack.opt.step_count,
                    "skipped": pack.opt.skipped, "order": names}


def pack_checkpoint(g: ModelPack, d: ModelPack | None = None,
                    extra_meta: dict | None = None) -> tuple:
    """Flatten packs into (tensors, spec blob) for ``data_io``."""
    tensors = {}
    meta = {"g_spec": g.spec.to_json()}
    for name, t in g.params.items():
        tensors[f"g.{name}"] = t
    if d is not None:
        meta["d_spec"] = d.spec.to_json()
        for name, t in d.params.items():
            tensors[f"d.{name}"] = t
    _pack_opt("g_opt", g, tensors, meta)
    if d is not None:
        _pack_opt("d_opt", d, tensors, meta)
    if extra_meta:
        meta["run"] = extra_meta
    return tensors, meta


def save_run_checkpoint(path: str, g: ModelPack, d: ModelPack | None = None,
                        extra_meta: dict | None = None) -> None:
    tensors, meta = pack_checkpoint(g, d, extra_meta)
    dio.save_checkpoint(path, tensors, meta)


def _unpack_params(prefix: str, tensors: dict) -> dict:
    params = {}
    for key, value in tensors.items():
        if key.startswith(prefix):
            name = key[len(prefix):]
            trainable = not name.endswith(("running_mean", "running_var"))
            params[name] = Tensor(value, trainable=trainable, name=name)
    return params


def _unpack_opt(prefix: str, tensors: dict, meta: dict,
                pack: ModelPack) -> None:
    info = meta.get(prefix)
    if info is None:
        return
    opt = AdamState(pack.trainables, lr=info["lr"], beta1=info["beta1"],
                    beta2=info["beta2"], eps=info["eps"])
    opt.step_count = info["step_count"]
    opt.skipped = info["skipped"]
    by_name = {t.name: i for i, t in enumerate(pack.trainables)}
    for name in info["order"]:
        i = by_name[name]
        opt.m[i] = tensors[f"{prefix}.m.{name}"].copy()
        opt.v[i] = tensors[f"{prefix}.v.{name}"].copy()
    pack.opt = opt


def load_run_checkpoint(path: str) -> RunState:
    """Rebuild packs (specs, parameters, optimizer state) from disk."""
    tensors, meta = dio.load_checkpoint(path)
    gspec = GeneratorSpec.from_json(meta["g_spec"])
    g = ModelPack(gspec, _unpack_params("g.", tensors))
    _unpack_opt("g_opt", tensors, meta, g)
    d = None
    if "d_spec" in meta:
        dspec = DiscriminatorSpec.from_json(meta["d_spec"])
        d = ModelPack(dspec, _unpack_params("d.", tensors))
        _unpack_opt("d_opt", tensors, meta, d)
    return RunState(g, d, meta)
