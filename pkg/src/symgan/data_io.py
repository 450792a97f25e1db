"""Dataset ingestion, synthetic data, checkpoints, and image/curve output.

Datasets are small enough here to live in memory as ``(N, 3, S, S)``
float32 arrays in [-1, 1].  Three seeded synthetic families stand in for
photo corpora at desk scale:

* ``mirrored_blobs`` - sums of Gaussian blobs plus their mirror images,
  with a controllable asymmetric jitter component (jitter 0 gives exactly
  self-mirrored samples);
* ``stripes`` - oriented sinusoidal gratings with random angle, frequency,
  phase and per-channel amplitude;
* ``noise_texture`` - one fixed stationary Gaussian random field family
  (spectral low-pass filtering of white noise, fixed cross-channel mix),
  squashed through tanh; every pixel has the same marginal statistics.

The checkpoint format is self-describing and fully little-endian:
``b"SGCK"`` magic, a uint32 header length, a JSON header
``{format_version, spec, tensors, payload_bytes}`` whose tensor index
carries name/dtype/shape/byte_offset/crc32 per entry, then the raw
float32 payload in index order.  The header is readable without touching
the payload, and every load failure carries a machine-checkable ``code``.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .tensor_autodiff import Tensor

__all__ = [
    "Dataset",
    "CheckpointError",
    "load_folder",
    "synth_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint_header",
    "montage",
    "save_curve",
    "load_curve",
    "append_jsonl",
    "read_jsonl",
    "to_uint8",
    "from_uint8",
]

SYNTH_KINDS = ("mirrored_blobs", "stripes", "noise_texture")


# ---------------------------------------------------------------------------
# pixel scaling
# ---------------------------------------------------------------------------

def to_uint8(x: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to 8-bit; inverse of :func:`from_uint8` to ±1/255."""
    return np.clip(np.rint((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(u: np.ndarray, dtype=np.float32) -> np.ndarray:
    return ((np.asarray(u, dtype=np.float64) / 127.5) - 1.0).astype(dtype)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """In-memory image collection: ``(N, 3, S, S)`` float32 in [-1, 1]."""

    images: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        x = self.images
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != x.shape[3]:
            raise ValueError(f"expected (N, 3, S, S) images, got {x.shape}")
        if x.dtype != np.float32:
            raise ValueError(f"images must be float32, got {x.dtype}")
        if x.size and (x.min() < -1.0 or x.max() > 1.0):
            raise ValueError("image values must lie in [-1, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.images[i]

    @property
    def size(self) -> int:
        return self.images.shape[2]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform batch with replacement."""
        idx = rng.integers(0, len(self), n)
        return self.images[idx]


def _load_image(path: str, size: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        w, h = im.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        im = im.crop((left, top, left + side, top + side))
        if side != size:
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.uint8)
    return from_uint8(arr.transpose(2, 0, 1))


def load_folder(path: str, size: int) -> Dataset:
    """Load every readable PNG/JPEG under ``path``.

    Each file is center-cropped square, resized to ``size`` and scaled to
    [-1, 1].  Unreadable files are skipped with a warning; an empty result
    is an error.
    """
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".png", ".jpg", ".jpeg")))
    images = []
    for name in names:
        full = os.path.join(path, name)
        try:
            images.append(_load_image(full, size))
        except Exception as exc:  # noqa: BLE001 - any decode failure skips
            warnings.warn(f"skipping unreadable image {full}: {exc}")
    if not images:
        raise ValueError(f"no readable images in {path!r}")
    return Dataset(np.stack(images), {"kind": "image_folder", "path": path,
                                      "size": size})


def _blob_field(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """Sum of ``count`` colored Gaussian bumps, peak-normalized to [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    f = np.zeros((3, size, size))
    for _ in range(count):
        cy, cx = rng.uniform(0, size - 1, 2)
        sigma = rng.uniform(size / 12, size / 4)
        color = rng.uniform(0.3, 1.0, 3)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        f += color[:, None, None] * bump
    return f / (f.max() + 1e-12)


def _make_mirrored_blobs(rng, count, size, jitter):
    out = np.empty((count, 3, size, size), np.float32)
    for i in range(count):
        n_blobs = int(rng.integers(2, 5))
        f = _blob_field(rng, size, n_blobs)
        base = f + f[..., ::-1]
        base = base / (base.max() + 1e-12)
        if jitter:
            g = _blob_field(rng, size, 2)
            base = np.clip(base + jitter * g, 0.0, 1.0)
        out[i] = (2.0 * base - 1.0).astype(np.float32)
    return out


def _make_stripes(rng, count, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.empty((count, 3, size, size), np.float32)
    for i in range(count):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(1.5, 5.0)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.4, 1.0, 3)
        wave = np.sin(2 * np.pi * freq *
                      (np.cos(theta) * xx + np.sin(theta) * yy) / size + phase)
        out[i] = (amp[:, None, None] * wave).astype(np.float32)
    return out


# Fixed cross-channel mixing for the noise_texture family (rows unit-norm
# so each output channel keeps unit variance before the tanh squash).
_TEXTURE_MIX = np.array([[0.8, 0.5, 0.2],
                         [0.2, 0.8, 0.5],
                         [0.5, 0.2, 0.8]])
_TEXTURE_MIX = _TEXTURE_MIX / np.linalg.norm(_TEXTURE_MIX, axis=1, keepdims=True)
_TEXTURE_SMOOTH_PIXELS = 2.0


def _make_noise_texture(rng, count, size):
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    lowpass = np.exp(-2.0 * (np.pi * _TEXTURE_SMOOTH_PIXELS) ** 2
                     * (fx ** 2 + fy ** 2))
    # Unit-variance normalization of the filtered field, from the filter
    # itself (Parseval): var = mean of H^2 over the full square spectrum.
    fx_full = np.fft.fftfreq(size)[None, :]
    full = np.exp(-2.0 * (np.pi * _TEXTURE_SMOOTH_PIXELS) ** 2
                  * (fx_full ** 2 + fy ** 2))
    gain = 1.0 / np.sqrt(np.mean(full ** 2))
    out = np.empty((count, 3, size, size), np.float32)
    for i in range(count):
        white = rng.normal(0.0, 1.0, (3, size, size))
        spectra = np.fft.rfft2(white) * lowpass
        smooth = np.fft.irfft2(spectra, s=(size, size)) * gain
        mixed = np.einsum("rc,chw->rhw", _TEXTURE_MIX, smooth)
        out[i] = np.tanh(mixed).astype(np.float32)
    return out


def synth_dataset(kind: str, seed: int, count: int, size: int,
                  jitter: float = 0.1) -> Dataset:
    """Deterministic synthetic dataset of ``count`` images of side ``size``.

    ``mirrored_blobs`` samples obey MSE(x, mirror(x)) <= (2 * jitter)**2,
    exactly self-mirrored at jitter 0.  ``noise_texture`` samples are
    draws from one stationary random-field distribution.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    rng = np.random.default_rng(seed)
    if kind == "mirrored_blobs":
        images = _make_mirrored_blobs(rng, count, size, jitter)
    elif kind == "stripes":
        images = _make_stripes(rng, count, size)
    else:
        images = _make_noise_texture(rng, count, size)
    source = {"kind": "synthetic", "synth_kind": kind, "seed": seed,
              "count": count, "size": size}
    if kind == "mirrored_blobs":
        source["jitter"] = jitter
    return Dataset(images, source)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"SGCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint rejection with a machine-checkable ``code``.

    Codes: ``bad_magic``, ``version_mismatch``, ``index_inconsistent``,
    ``truncated_payload``, ``checksum_mismatch``.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


def _tensor_bytes(name: str, value) -> bytes:
    data = value.data if isinstance(value, Tensor) else np.asarray(value)
    if data.dtype != np.float32:
        raise ValueError(
            f"checkpoint tensors are 32-bit floats; {name!r} is {data.dtype}")
    return np.ascontiguousarray(data).astype("<f4").tobytes()


def save_checkpoint(path: str, tensors: dict, spec: dict) -> None:
    """Write a self-describing checkpoint of named float32 tensors.

    ``spec`` is an arbitrary JSON-serializable blob (model/run metadata);
    ``tensors`` maps names to float32 arrays or Tensors, written in
    insertion order.
    """
    index = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        raw = _tensor_bytes(name, value)
        data = value.data if isinstance(value, Tensor) else np.asarray(value)
        index.append({"name": name, "dtype": "float32",
                      "shape": list(data.shape), "byte_offset": offset,
                      "crc32": zlib.crc32(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "spec": spec,
              "tensors": index, "payload_bytes": offset}
    blob = json.dumps(header).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for raw in chunks:
            f.write(raw)
    os.replace(tmp, path)


def read_checkpoint_header(path: str) -> dict:
    """Parse and validate the JSON header alone (no payload read)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise CheckpointError("bad_magic",
                                  f"expected {_MAGIC!r}, found {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        blob = f.read(hlen)
        if len(blob) != hlen:
            raise CheckpointError("truncated_payload", "header cut short")
        try:
            header = json.loads(blob.decode("utf-8"))
        except ValueError as exc:
            raise CheckpointError("index_inconsistent",
                                  f"header is not valid JSON: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            "version_mismatch",
            f"found format_version {header.get('format_version')!r}, "
            f"this reader handles {FORMAT_VERSION}")
    _validate_index(header)
    return header


def _validate_index(header: dict) -> None:
    expected = 0
    for entry in header.get("tensors", ()):
        if entry.get("dtype") != "float32":
            raise CheckpointError("index_inconsistent",
                                  f"unsupported dtype {entry.get('dtype')!r}")
        if entry["byte_offset"] != expected:
            raise CheckpointError(
                "index_inconsistent",
                f"tensor {entry['name']!r} at offset {entry['byte_offset']}, "
                f"expected {expected} (ascending, non-overlapping, dense)")
        expected += int(np.prod(entry["shape"], dtype=np.int64)) * 4
    if expected != header.get("payload_bytes"):
        raise CheckpointError(
            "index_inconsistent",
            f"index covers {expected} bytes but header declares "
            f"{header.get('payload_bytes')}")


def load_checkpoint(path: str) -> tuple:
    """Read a checkpoint; returns ``(tensors: dict[str, ndarray], spec)``.

    Every tensor round-trips bit-exactly; payload truncation and per-tensor
    checksum failures are rejected.
    """
    header = read_checkpoint_header(path)
    with open(path, "rb") as f:
        f.seek(4)
        (hlen,) = struct.unpack("<I", f.read(4))
        f.seek(8 + hlen)
        payload = f.read()
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            "truncated_payload",
            f"payload is {len(payload)} bytes, header declares "
            f"{header['payload_bytes']}")
    tensors = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64)) * 4
        raw = payload[entry["byte_offset"]:entry["byte_offset"] + n]
        if zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointError(
                "checksum_mismatch",
                f"tensor {entry['name']!r} payload does not match its checksum")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(
            entry["shape"]).astype(np.float32, copy=True)
    return tensors, header["spec"]


# ---------------------------------------------------------------------------
# montage / curves / json-lines
# ---------------------------------------------------------------------------

_SEPARATOR = 2  # pixels between montage cells
_SEPARATOR_VALUE = 255


def montage(images, rows: int, cols: int, path: str | None = None) -> np.ndarray:
    """Arrange images on a ``rows x cols`` grid with 2-pixel separators.

    ``images`` is a sequence of (3, S, S) arrays in [-1, 1] (all the same
    size) or an (N, 3, S, S) array; returns the uint8 RGB canvas (H, W, 3)
    and writes it as PNG when ``path`` is given.
    """
    arrs = [np.asarray(im) for im in images]
    if not arrs:
        raise ValueError("montage needs at least one image")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("montage images must share one size")
    if len(shape) != 3 or shape[0] != 3:
        raise ValueError(f"montage expects (3, S, S) images, got {shape}")
    if len(arrs) > rows * cols:
        raise ValueError(f"{len(arrs)} images exceed a {rows}x{cols} grid")
    s_h, s_w = shape[1], shape[2]
    height = rows * s_h + (rows - 1) * _SEPARATOR
    width = cols * s_w + (cols - 1) * _SEPARATOR
    canvas = np.full((height, width, 3), _SEPARATOR_VALUE, np.uint8)
    for i, a in enumerate(arrs):
        r, c = divmod(i, cols)
        top = r * (s_h + _SEPARATOR)
        left = c * (s_w + _SEPARATOR)
        canvas[top:top + s_h, left:left + s_w] = to_uint8(a).transpose(1, 2, 0)
    if path is not None:
        from PIL import Image

        Image.fromarray(canvas).save(path)
    return canvas


def save_curve(values, path: str) -> None:
    """Write a scalar series as ``step,value`` CSV plus a PNG line plot.

    Values print with 17 significant digits so parsing the CSV recovers
    the exact floats; the plot lands next to the CSV with a .png suffix.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"save_curve expects a 1-D series, got {values.shape}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,value\n")
        for i, v in enumerate(values):
            f.write(f"{i},{v:.17g}\n")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(values.size), values)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(os.path.splitext(path)[0] + ".png", dpi=100)
    plt.close(fig)


def load_curve(path: str) -> np.ndarray:
    """Read a :func:`save_curve` CSV back as a float64 value array."""
    values = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "step,value":
            raise ValueError(f"unexpected curve header {header!r}")
        for expected, line in enumerate(f):
            step, value = line.strip().split(",")
            if int(step) != expected:
                raise ValueError(f"non-contiguous steps at line {expected + 2}")
            values.append(float(value))
    return np.asarray(values, dtype=np.float64)


def append_jsonl(path: str, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record) + "\n")


def read_jsonl(path: str) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
