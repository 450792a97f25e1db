"""Command-line entry point: one binary, one subcommand per workflow.

Subcommands: ``train`` (adversarial training), ``sweep`` / ``overlay`` /
``msecurve`` (latent-space evaluation montages and curves), ``fit`` /
``tune`` / ``rotate`` (single-image inversion and personalization),
``tile-train`` / ``tile-render`` (seamless textures), and ``verify``
(invariant audit of a checkpoint).

Configuration comes from an optional JSON file plus ``--set section.key=
value`` overrides; unknown sections or keys are rejected.  Every
artifact-producing command creates a fresh run directory
``<out_dir>/<command>-NNN`` (existing runs are never overwritten) and
writes the effective configuration into it.

Exit codes: 0 success, 2 configuration error, 3 data/file error,
4 numeric failure, 5 invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import data_io as dio
from . import models as mo
from . import structured_ops as so
from . import tensor_autodiff as ta
from . import tiling as ti
from . import training as tr
from .tensor_autodiff import PadMode, Tensor

__all__ = ["main", "RunConfig", "load_config", "ConfigError", "DataError",
           "InvariantViolation"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_INVARIANT = 5


class ConfigError(ValueError):
    """Bad configuration file, override, or flag combination."""


class DataError(RuntimeError):
    """Missing or unusable input data."""


class InvariantViolation(RuntimeError):
    """A checkpoint failed the invariant audit."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"profile", "generator", "discriminator", "generator_spec",
               "discriminator_spec"}
_IO_KEYS = {"seed", "out_dir", "dataset"}
_DATASET_KEYS = {"folder", "kind", "seed", "count", "size", "jitter"}
_SECTIONS = ("model", "train", "fit", "tile", "io")

_PROFILES = {
    "desk": (mo.desk_generator_spec, mo.desk_discriminator_spec),
    "reference": (mo.reference_generator_spec, mo.reference_discriminator_spec),
}


@dataclasses.dataclass
class RunConfig:
    """Validated configuration: model selection plus per-phase settings."""

    model: dict
    train: tr.TrainConfig
    fit: tr.FitTuneConfig
    tile: ti.TileSpec
    io: dict

    def to_json(self) -> dict:
        return {"model": dict(self.model), "train": self.train.to_json(),
                "fit": self.fit.to_json(), "tile": self.tile.to_json(),
                "io": dict(self.io)}


def _strict(section: str, obj, allowed: set) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(
            f"unknown {section} key(s): {', '.join(sorted(unknown))}")
    return obj


def _build_section(section: str, cls, obj: dict):
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad {section} section: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad {section} section: {exc}") from None


def _apply_override(raw: dict, item: str) -> None:
    key, sep, value = item.partition("=")
    parts = key.strip().split(".")
    if not sep or len(parts) < 2 or not all(parts):
        raise ConfigError(
            f"override {item!r} is not of the form section.key=value")
    if parts[0] not in _SECTIONS:
        raise ConfigError(f"unknown config section {parts[0]!r} in {item!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value  # bare strings need no quoting on the command line
    node = raw.setdefault(parts[0], {})
    for p in parts[1:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = parsed


def load_config(path: str | None, overrides: list) -> RunConfig:
    """Parse the JSON config file and apply ``--set`` overrides, strictly."""
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    for item in overrides:
        _apply_override(raw, item)
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(
            f"unknown config section(s): {', '.join(sorted(unknown))}")

    model = dict(_strict("model", raw.get("model", {}), _MODEL_KEYS))
    model.setdefault("profile", "desk")
    if model["profile"] not in _PROFILES:
        raise ConfigError(f"unknown model profile {model['profile']!r}; "
                          f"expected one of {sorted(_PROFILES)}")

    train_raw = dict(_strict("train", raw.get("train", {}),
                             set(tr.TrainConfig().to_json())))
    fit_raw = dict(_strict("fit", raw.get("fit", {}),
                           set(tr.FitTuneConfig().to_json())))
    tile_raw = dict(_strict("tile", raw.get("tile", {}),
                            set(ti.TileSpec().to_json())))
    io = dict(_strict("io", raw.get("io", {}), _IO_KEYS))
    io.setdefault("seed", 0)
    io.setdefault("out_dir", "runs")
    io.setdefault("dataset", None)
    if io["dataset"] is not None:
        _strict("io.dataset", io["dataset"], _DATASET_KEYS)

    return RunConfig(model=model,
                     train=_build_section("train", tr.TrainConfig, train_raw),
                     fit=_build_section("fit", tr.FitTuneConfig, fit_raw),
                     tile=_build_section("tile", ti.TileSpec, tile_raw),
                     io=io)


def build_model_specs(model: dict, default_generator: str = "zprime",
                      default_discriminator: str = "symmetric") -> tuple:
    """(GeneratorSpec, DiscriminatorSpec) from the model section."""
    g_profile, d_profile = _PROFILES[model["profile"]]
    if "generator_spec" in model:
        gspec = mo.GeneratorSpec.from_json(model["generator_spec"])
    else:
        gspec = g_profile(model.get("generator", default_generator))
    if "discriminator_spec" in model:
        dspec = mo.DiscriminatorSpec.from_json(model["discriminator_spec"])
    else:
        dspec = d_profile(model.get("discriminator", default_discriminator))
    return gspec, dspec


def build_dataset(io_cfg: dict):
    """Dataset named by ``io.dataset``; None when the section is absent."""
    ds = io_cfg.get("dataset")
    if ds is None:
        return None
    if "folder" in ds:
        if "size" not in ds:
            raise ConfigError("io.dataset.folder needs io.dataset.size")
        return dio.load_folder(ds["folder"], int(ds["size"]))
    for key in ("kind", "count", "size"):
        if key not in ds:
            raise ConfigError(f"synthetic io.dataset needs key {key!r}")
    kwargs = {"jitter": ds["jitter"]} if "jitter" in ds else {}
    return dio.synth_dataset(ds["kind"], int(ds.get("seed", 0)),
                             int(ds["count"]), int(ds["size"]), **kwargs)


def _require_dataset(cfg: RunConfig):
    dataset = build_dataset(cfg.io)
    if dataset is None:
        raise ConfigError("this command needs io.dataset in the config")
    return dataset


# ---------------------------------------------------------------------------
# run directories and shared plumbing
# ---------------------------------------------------------------------------

def make_run_dir(out_dir: str, command: str) -> str:
    """Create ``<out_dir>/<command>-NNN`` with the first free suffix."""
    os.makedirs(out_dir, exist_ok=True)
    n = 0
    while True:
        path = os.path.join(out_dir, f"{command}-{n:03d}")
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            n += 1


def _start_run(cfg: RunConfig, command: str, extras: dict) -> str:
    run_dir = make_run_dir(cfg.io["out_dir"], command)
    doc = {"command": command, **extras, **cfg.to_json()}
    with open(os.path.join(run_dir, "config.json"), "w",
              encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"run directory: {run_dir}")
    print(f"effective config: {json.dumps(doc, sort_keys=True)}")
    return run_dir


def _load_state(path: str) -> tr.RunState:
    return tr.load_run_checkpoint(path)


def _load_image(path: str, size: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.uint8)
    return dio.from_uint8(arr.transpose(2, 0, 1))


def _load_texture(value: str) -> np.ndarray:
    """A (3, H, W) texture image: a file path or ``synth:kind:seed:size``."""
    if value.startswith("synth:"):
        parts = value.split(":")
        if len(parts) != 4:
            raise ConfigError(
                f"synthetic texture {value!r} is not synth:kind:seed:size")
        try:
            seed, size = int(parts[2]), int(parts[3])
        except ValueError:
            raise ConfigError(
                f"synthetic texture {value!r} needs integer seed/size") from None
        return dio.synth_dataset(parts[1], seed, 1, size)[0]
    from PIL import Image

    with Image.open(value) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return dio.from_uint8(arr.transpose(2, 0, 1))


def _pair_mse_curve(images: np.ndarray) -> np.ndarray:
    """MSE(image_i, mirror(image_{n-1-i})) across a sweep strip."""
    imgs = images.astype(np.float64)
    return np.mean((imgs - imgs[::-1, :, :, ::-1]) ** 2, axis=(1, 2, 3))


def _draw_z(g: tr.ModelPack, n: int, seed: int) -> np.ndarray:
    return mo.sample_latent(g.spec, n, np.random.default_rng(seed)).data


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args, cfg: RunConfig) -> int:
    gspec, dspec = build_model_specs(cfg.model)
    dataset = _require_dataset(cfg)
    run_dir = _start_run(cfg, "train", {})
    log_path = os.path.join(run_dir, "metrics.jsonl")
    result = tr.train(gspec, dspec, cfg.train, dataset, log_path=log_path)
    ckpt = os.path.join(run_dir, "checkpoint.ckpt")
    tr.save_run_checkpoint(ckpt, result.g, result.d,
                           extra_meta={"command": "train",
                                       "steps": cfg.train.steps,
                                       "alpha_sym": cfg.train.alpha_sym})
    last = result.history[-1] if result.history else {}
    print(f"trained {cfg.train.steps} steps; "
          f"d_loss={last.get('d_loss', float('nan')):.4f} "
          f"g_loss={last.get('g_loss', float('nan')):.4f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    run_dir = _start_run(cfg, "sweep", {"ckpt": args.ckpt, "mode": args.mode,
                                        "n": args.n})
    z = _draw_z(g, 1, args.seed)[0]
    if args.mode == "nine":
        images = tr.yaw_sweep(g, z, args.n)
    elif args.mode == "scalar":
        images = tr.scalar_sweep(g, z, args.lo, args.hi, args.step, "all")
    else:
        images = tr.scalar_sweep(g, z, args.lo, args.hi, args.step,
                                 args.coordinate)
    dio.montage(images, 1, images.shape[0],
                os.path.join(run_dir, "sweep.png"))
    curve = _pair_mse_curve(images)
    dio.save_curve(curve, os.path.join(run_dir, "pair_mse.csv"))
    print(f"{images.shape[0]} images; midpoint pair MSE "
          f"{curve[len(curve) // 2]:.3e}")
    return EXIT_OK


def cmd_overlay(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    run_dir = _start_run(cfg, "overlay", {"ckpt": args.ckpt, "n": args.n})
    z = _draw_z(g, args.n, args.seed)
    images = mo.generate(g.spec, g.params, Tensor(z), "eval").data
    z_n = mo.pair_latent(g.spec, z)
    paired = mo.generate(g.spec, g.params, Tensor(z_n), "eval").data[..., ::-1]
    averaged = tr.overlay_average(g, z)
    rows = []
    for i in range(args.n):
        rows.extend([images[i], paired[i], averaged[i]])
    dio.montage(rows, args.n, 3, os.path.join(run_dir, "overlay.png"))
    ghosting = float(np.max(np.abs(images - averaged)))
    print(f"max |image - overlay| = {ghosting:.3e}")
    return EXIT_OK


def cmd_msecurve(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    run_dir = _start_run(cfg, "msecurve", {"ckpt": args.ckpt, "n": args.n})
    z = _draw_z(g, 1, args.seed)[0]
    curve = tr.mse_curve(g, z, args.n)
    dio.save_curve(curve, os.path.join(run_dir, "curve.csv"))
    print(f"midpoint MSE {curve[args.n // 2]:.3e}; max {curve.max():.3e}")
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    target = _load_image(args.image, g.spec.output_size)
    run_dir = _start_run(cfg, "fit", {"ckpt": args.ckpt, "image": args.image})
    fit = tr.fit_z(g, target, cfg.fit)
    np.save(os.path.join(run_dir, "z.npy"), fit.z)
    recon = mo.generate(g.spec, g.params, Tensor(fit.z[None]), "eval").data[0]
    dio.montage([target, recon], 1, 2,
                os.path.join(run_dir, "reconstruction.png"))
    dio.save_curve(np.asarray(fit.history),
                   os.path.join(run_dir, "objective.csv"))
    print(f"fit {fit.steps_run} steps; reconstruction MSE "
          f"{fit.residual_mse:.3e}"
          + (" (diverged; best iterate kept)" if fit.diverged else ""))
    return EXIT_OK


def cmd_tune(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g, d = state.g, state.d
    if d is None:
        raise ConfigError(
            "tune needs a checkpoint that carries a discriminator")
    dataset = _require_dataset(cfg)
    target = _load_image(args.image, g.spec.output_size)
    run_dir = _start_run(cfg, "tune", {"ckpt": args.ckpt, "image": args.image})
    fit = tr.fit_z(g, target, cfg.fit)
    before = mo.generate(g.spec, g.params, Tensor(fit.z[None]), "eval").data[0]
    tuned = tr.fine_tune(g, d, fit.z, target, dataset, cfg.fit,
                         train_cfg=cfg.train)
    after = mo.generate(g.spec, g.params, Tensor(tuned.z[None]),
                        "eval").data[0]
    np.save(os.path.join(run_dir, "z.npy"), tuned.z)
    dio.montage([target, before, after], 1, 3,
                os.path.join(run_dir, "reconstruction.png"))
    dio.save_curve(np.asarray(tuned.residuals),
                   os.path.join(run_dir, "residuals.csv"))
    ckpt = os.path.join(run_dir, "checkpoint.ckpt")
    tr.save_run_checkpoint(ckpt, g, d, extra_meta={
        "command": "tune", "image": os.path.abspath(args.image),
        "fit_residual": fit.residual_mse,
        "final_residual": tuned.final_residual,
        "rollbacks": tuned.rollbacks})
    print(f"fit residual {fit.residual_mse:.3e} -> tuned "
          f"{tuned.final_residual:.3e} ({tuned.rollbacks} rollbacks)")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_rotate(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    target = _load_image(args.image, g.spec.output_size)
    run_dir = _start_run(cfg, "rotate",
                         {"ckpt": args.ckpt, "image": args.image,
                          "n": args.n})
    fit = tr.fit_z(g, target, cfg.fit)
    strip = tr.yaw_sweep(g, fit.z, args.n)
    np.save(os.path.join(run_dir, "z.npy"), fit.z)
    dio.montage(strip, 1, args.n, os.path.join(run_dir, "rotation.png"))
    print(f"reconstruction MSE {fit.residual_mse:.3e}; "
          f"{args.n}-step strip written")
    return EXIT_OK


def cmd_tile_train(args, cfg: RunConfig) -> int:
    source = _load_texture(args.texture)
    default_g = "cyclic" if args.mode == "cyclic" else "crop"
    gspec, dspec = build_model_specs(cfg.model, default_generator=default_g,
                                     default_discriminator="texture")
    if (args.mode == "cyclic" and "generator_spec" not in cfg.model
            and args.pattern == "projective"):
        gspec = dataclasses.replace(gspec, pad=PadMode("flipwrap"))
    size = dspec.input_size
    if source.shape[1] < size or source.shape[2] < size:
        raise DataError(f"texture {source.shape[1]}x{source.shape[2]} is "
                        f"smaller than the {size}x{size} training crop")
    run_dir = _start_run(cfg, "tile-train",
                         {"texture": args.texture, "mode": args.mode,
                          "pattern": args.pattern})
    rng = np.random.default_rng(cfg.train.seed)
    g = tr.new_generator_pack(gspec, rng, cfg.train)
    d = tr.new_discriminator_pack(dspec, rng, cfg.train)
    log_path = os.path.join(run_dir, "metrics.jsonl")
    for step in range(cfg.train.steps):
        rec = ti.tile_train_step(g, d, source, args.mode, rng,
                                 pattern=args.pattern,
                                 batch_size=cfg.train.batch_size)
        dio.append_jsonl(log_path, {"step": step, **rec})
    ckpt = os.path.join(run_dir, "checkpoint.ckpt")
    tr.save_run_checkpoint(ckpt, g, d, extra_meta={
        "command": "tile-train", "mode": args.mode, "pattern": args.pattern,
        "steps": cfg.train.steps})
    patch = mo.generate(gspec, g.params, Tensor(_draw_z(g, 1, cfg.io["seed"])),
                        "eval").data[0]
    dio.montage([patch], 1, 1, os.path.join(run_dir, "patch.png"))
    print(f"trained {cfg.train.steps} steps in {args.mode} mode")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_tile_render(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    g = state.g
    run_dir = _start_run(cfg, "tile-render",
                         {"ckpt": args.ckpt, "pattern": args.pattern,
                          "rows": args.rows, "cols": args.cols})
    z = mo.sample_latent(g.spec, 1, np.random.default_rng(args.seed))
    if g.spec.kind == "cyclic":
        patch = ti.cyclic_generate(g.spec, g.params, z, args.pattern)
    else:
        patch = mo.generate(g.spec, g.params, z, "eval")
    canvas = ti.tile_plane(patch.data[0], args.pattern, args.rows, args.cols)
    dio.montage([canvas], 1, 1, os.path.join(run_dir, "canvas.png"))
    score = ti.seam_score(canvas, g.spec.output_size)
    report = {"pattern": args.pattern, "rows": args.rows, "cols": args.cols,
              "patch_size": g.spec.output_size,
              "seam_score": None if np.isnan(score) else score}
    with open(os.path.join(run_dir, "seam_report.json"), "w",
              encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    print("seam_score: " + ("undefined (flat canvas)" if np.isnan(score)
                            else f"{score:.4f}"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# invariant audit
# ---------------------------------------------------------------------------

def _all_checkpoint_arrays(state: tr.RunState):
    for pack, tag in ((state.g, "g"), (state.d, "d")):
        if pack is None:
            continue
        for name, t in pack.params.items():
            yield f"{tag}.{name}", t.data
        if pack.opt is not None:
            for i, (m, v) in enumerate(zip(pack.opt.m, pack.opt.v)):
                yield f"{tag}.opt[{i}].m", m
                yield f"{tag}.opt[{i}].v", v


def _check_finite(state) -> None:
    for name, arr in _all_checkpoint_arrays(state):
        if not np.all(np.isfinite(arr)):
            raise mo.NumericError(f"non-finite values in {name}")


def _check_running_variances(state) -> tuple:
    worst = 0.0
    for name, arr in _all_checkpoint_arrays(state):
        if name.endswith("running_var"):
            worst = min(worst, float(arr.min()))
    return worst >= 0.0, f"min running variance {worst:.3e}"


def _check_optimizer_state(state) -> tuple:
    for pack in (state.g, state.d):
        if pack is None or pack.opt is None:
            continue
        if pack.opt.step_count < 0 or pack.opt.skipped < 0:
            return False, (f"step_count={pack.opt.step_count} "
                           f"skipped={pack.opt.skipped}")
    return True, "counters non-negative"


def _check_generator_equivariance(g) -> tuple:
    z = _draw_z(g, 8, 1234)
    images = mo.generate(g.spec, g.params, Tensor(z), "eval").data
    z_n = mo.pair_latent(g.spec, z)
    paired = mo.generate(g.spec, g.params, Tensor(z_n), "eval").data
    gap = float(np.max(np.abs(paired - images[..., ::-1])))
    return gap <= 1e-5, f"max mirror gap {gap:.3e}"


def _check_discriminator_invariance(d) -> tuple:
    rng = np.random.default_rng(1235)
    x = rng.uniform(-1, 1, (8, 3, d.spec.input_size,
                            d.spec.input_size)).astype(np.float32)
    logits = mo.discriminate_logits(d.spec, d.params, Tensor(x)).data
    mirrored = mo.discriminate_logits(d.spec, d.params,
                                      Tensor(x[..., ::-1].copy())).data
    gap = float(np.max(np.abs(logits - mirrored)))
    return gap <= 1e-6, f"max mirror gap {gap:.3e}"


def _check_gram_descriptor(d) -> tuple:
    rng = np.random.default_rng(1236)
    feats = Tensor(rng.standard_normal((6, 9, 9)).astype(np.float32))
    gram = mo.gram_descriptor(feats).data.astype(np.float64)
    symmetric = np.array_equal(gram, gram.T)
    min_eig = float(np.linalg.eigvalsh(gram).min())
    ok = symmetric and min_eig >= -1e-8
    return ok, f"symmetric={symmetric}, min eigenvalue {min_eig:.3e}"


def _check_cyclic_periodicity(g) -> tuple:
    if g.spec.pad.kind != "circular":
        return True, "flip-and-wrap padding: window property not applicable"
    z = _draw_z(g, 1, 1237)
    patch = ti.cyclic_generate(g.spec, g.params, Tensor(z)).data[0]
    s = patch.shape[-1]
    canvas = ti.tile_plane(patch, "grid", 2, 2)
    for du in range(s + 1):
        for dv in range(s + 1):
            window = canvas[:, du:du + s, dv:dv + s]
            if not np.array_equal(window,
                                  np.roll(patch, (-du, -dv), axis=(1, 2))):
                return False, f"window at ({du}, {dv}) is not a shifted patch"
    return True, f"all {(s + 1) ** 2} windows are circular shifts, bit-exact"


def _check_cyclic_shift_equivariance(g) -> tuple:
    if g.spec.pad.kind != "circular":
        return True, "flip-and-wrap padding: shift property not applicable"
    z = Tensor(_draw_z(g, 2, 1238))
    fm = mo._FIRST_MAPS[g.spec.kind](g.params, z, g.spec)
    out = mo.generate(g.spec, g.params, z, "eval", first_map=fm).data
    rolled_fm = Tensor(np.roll(fm.data, (1, 1), axis=(2, 3)))
    out_rolled = mo.generate(g.spec, g.params, z, "eval",
                             first_map=rolled_fm).data
    k = 2 ** g.spec.stages
    ok = np.array_equal(out_rolled, np.roll(out, (k, k), axis=(2, 3)))
    return ok, f"first-map shift (1, 1) -> output shift ({k}, {k})"


def _check_generator_determinism(g) -> tuple:
    z = Tensor(_draw_z(g, 4, 1239))
    a = mo.generate(g.spec, g.params, z, "eval").data
    b = mo.generate(g.spec, g.params, z, "eval").data
    return np.array_equal(a, b), "two eval passes bit-identical"


def _check_mirror_commutation(_state) -> tuple:
    rng = np.random.default_rng(1240)
    bank = so.SymmetricKernelBank.init(4, 3, rng)
    x = Tensor(rng.standard_normal((2, 3, 9, 9)).astype(np.float32))
    y = so.sym_conv(x, bank).data
    y_m = so.sym_conv(so.mirror(x), bank).data
    ok = np.array_equal(y_m, y[..., ::-1])
    return ok, "sym_conv commutes with mirroring, bit-exact"


def _check_antisymmetric_expansion(_state) -> tuple:
    rng = np.random.default_rng(1241)
    half = Tensor(rng.standard_normal((3, 5, 2)).astype(np.float32))
    full = so.expand_antisymmetric(half).data
    ok = np.array_equal(full[..., ::-1], -full)
    return ok, "expanded maps are antisymmetric, bit-exact"


def _check_edge_identifications(_state) -> tuple:
    s = 8

    def pairs(pattern, fixed, along, vertical):
        out = set()
        for t in along:
            lo = (t, fixed - 1) if vertical else (fixed - 1, t)
            hi = (t, fixed) if vertical else (fixed, t)
            a = ti.patch_indices(pattern, s, *lo)
            b = ti.patch_indices(pattern, s, *hi)
            out.add(frozenset([(int(a[0]), int(a[1])),
                               (int(b[0]), int(b[1]))]))
        return out

    torus_v = {frozenset([(y, s - 1), (y, 0)]) for y in range(s)}
    torus_h = {frozenset([(s - 1, x), (0, x)]) for x in range(s)}
    proj_v = {frozenset([(y, s - 1), (s - 1 - y, 0)]) for y in range(s)}
    proj_h = {frozenset([(s - 1, x), (0, s - 1 - x)]) for x in range(s)}
    sphere = ({frozenset([(y, s - 1), (0, s - 1 - y)]) for y in range(s)},
              {frozenset([(s - 1, x), (s - 1 - x, 0)]) for x in range(s)})
    hex_h = {frozenset([(s - 1, x), (0, (x - s // 2) % s)]) for x in range(s)}
    mid_brick = {frozenset([(y, s // 2 - 1), (y, s // 2)]) for y in range(s)}

    for seam in (-s, 0, s):
        for band in range(-2, 2):
            row_span = range(band * s, (band + 1) * s)
            v = {"grid": torus_v, "projective": proj_v,
                 "hexagonal": torus_v if band % 2 == 0 else mid_brick}
            h = {"grid": torus_h, "projective": proj_h, "hexagonal": hex_h}
            for name in ("grid", "projective", "hexagonal"):
                if pairs(name, seam, row_span, True) != v[name]:
                    return False, f"{name} vertical seam {seam} band {band}"
                if pairs(name, seam, row_span, False) != h[name]:
                    return False, f"{name} horizontal seam {seam} band {band}"
            for vertical in (True, False):
                if pairs("spherical", seam, row_span, vertical) not in sphere:
                    return False, f"spherical seam {seam} band {band}"
    return True, "all four patterns, exhaustive at tile size 8"


def _check_crop_adjoint(_state) -> tuple:
    rng = np.random.default_rng(1242)
    s = 8
    for name in ti.PATTERN_NAMES:
        patch = Tensor(rng.standard_normal((3, s, s)).astype(np.float32),
                       trainable=True)
        win = np.indices((10, 10))
        rows, cols = ti.patch_indices(name, s, 3 + win[0], 5 + win[1])
        count = np.zeros((s, s), np.float32)
        np.add.at(count, (rows, cols), 1.0)
        with ta.tape() as tp:
            tp.backward(ta.sum_all(ti.crop_tiled(patch, name, 3, 5, 10)))
        if any(not np.array_equal(patch.grad[ch], count) for ch in range(3)):
            return False, f"{name} crop gradient != pixel visit counts"
    return True, "crop gradients equal pixel visit counts, all patterns"


def run_verify(state: tr.RunState) -> list:
    """(name, ok, detail) for every applicable invariant check."""
    _check_finite(state)
    checks = [("running-variances", _check_running_variances),
              ("optimizer-state", _check_optimizer_state)]
    g, d = state.g, state.d
    if g.spec.kind in ("zprime", "flip"):
        checks.append(("generator-mirror-equivariance",
                       lambda s: _check_generator_equivariance(s.g)))
    if g.spec.kind == "cyclic":
        checks.append(("wraparound-periodicity",
                       lambda s: _check_cyclic_periodicity(s.g)))
        checks.append(("shift-equivariance",
                       lambda s: _check_cyclic_shift_equivariance(s.g)))
    checks.append(("generator-determinism",
                   lambda s: _check_generator_determinism(s.g)))
    if d is not None and d.spec.kind == "symmetric":
        checks.append(("discriminator-mirror-invariance",
                       lambda s: _check_discriminator_invariance(s.d)))
    if d is not None and d.spec.kind == "texture":
        checks.append(("gram-descriptor",
                       lambda s: _check_gram_descriptor(s.d)))
    checks.extend([("mirror-commutation", _check_mirror_commutation),
                   ("antisymmetric-expansion", _check_antisymmetric_expansion),
                   ("edge-identifications", _check_edge_identifications),
                   ("crop-adjoint", _check_crop_adjoint)])
    results = []
    for name, fn in checks:
        # The stored numbers are finite (checked above), so a probe that
        # still explodes numerically marks a violated invariant rather
        # than corrupt data.
        try:
            ok, detail = fn(state)
        except mo.NumericError as exc:
            ok, detail = False, f"probe failed numerically: {exc}"
        results.append((name, ok, detail))
    return results


def cmd_verify(args, cfg: RunConfig) -> int:
    state = _load_state(args.ckpt)
    results = run_verify(state)
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if failed:
        print(f"{len(failed)} invariant(s) violated: {', '.join(failed)}")
        return EXIT_INVARIANT
    print(f"all {len(results)} invariants hold")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symgan",
        description="Mirror-symmetric GAN toolkit: training, latent "
                    "evaluation, image inversion, seamless textures.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="JSON config file (sections: model, train, "
                             "fit, tile, io)")
    common.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="adversarial training on io.dataset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", parents=[common],
                       help="latent sweep montage + per-pair MSE curve")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", choices=("nine", "scalar", "coord"),
                   default="nine")
    p.add_argument("-n", type=int, default=9,
                   help="strip length for --mode nine")
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--step", type=float, default=0.25)
    p.add_argument("--coordinate", type=int, default=0,
                   help="antisymmetric coordinate for --mode coord")
    p.add_argument("--seed", type=int, default=0, help="latent draw seed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overlay", parents=[common],
                       help="image / mirrored-pair / overlay montage")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-n", type=int, default=4, help="number of latent draws")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("msecurve", parents=[common],
                       help="mirror-MSE curve across the yaw sweep")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-n", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_msecurve)

    p = sub.add_parser("fit", parents=[common],
                       help="invert one image to a latent vector")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", parents=[common],
                       help="personalize the generator to one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("rotate", parents=[common],
                       help="fit an image, then render its yaw strip")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("-n", type=int, default=9)
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("tile-train", parents=[common],
                       help="texture training (wraparound or tile-and-crop)")
    p.add_argument("--texture", required=True,
                   help="image path or synth:kind:seed:size")
    p.add_argument("--mode", choices=ti.TILE_MODES, required=True)
    p.add_argument("--pattern", choices=ti.PATTERN_NAMES, default="grid")
    p.set_defaults(func=cmd_tile_train)

    p = sub.add_parser("tile-render", parents=[common],
                       help="tiled canvas + seam score from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pattern", choices=ti.PATTERN_NAMES, default="grid")
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--cols", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tile_render)

    p = sub.add_parser("verify", parents=[common],
                       help="audit a checkpoint against all invariants")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except dio.CheckpointError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except mo.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
