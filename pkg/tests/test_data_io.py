"""Dataset, checkpoint, and rendering-output tests."""

import json
import struct

import numpy as np
import pytest
from PIL import Image

from symgan import data_io as dio
from symgan.data_io import CheckpointError, Dataset
from symgan.tensor_autodiff import Tensor


# ---------------------------------------------------------------------------
# pixel scaling
# ---------------------------------------------------------------------------

def test_uint8_round_trip_within_half_step():
    # The worst case sits exactly on the half-step bound of 1/255; allow
    # only representation noise beyond it.
    x = np.linspace(-1.0, 1.0, 2001, dtype=np.float64)
    back = dio.from_uint8(dio.to_uint8(x), dtype=np.float64)
    assert np.max(np.abs(back - x)) <= 1.0 / 255.0 + 1e-12

def test_uint8_endpoints():
    assert dio.to_uint8(np.array([-1.0])) == [0]
    assert dio.to_uint8(np.array([1.0])) == [255]


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------

class TestDataset:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((4, 1, 8, 8), np.float32))
        with pytest.raises(ValueError):
            Dataset(np.zeros((4, 3, 8, 6), np.float32))
        with pytest.raises(ValueError):
            Dataset(np.zeros((4, 3, 8, 8), np.float64))
        with pytest.raises(ValueError):
            Dataset(np.full((1, 3, 8, 8), 1.5, np.float32))

    def test_len_getitem_sample(self, rng):
        images = rng.uniform(-1, 1, (10, 3, 8, 8)).astype(np.float32)
        ds = Dataset(images)
        assert len(ds) == 10
        assert np.array_equal(ds[3], images[3])
        batch = ds.sample(5, np.random.default_rng(1))
        again = ds.sample(5, np.random.default_rng(1))
        assert batch.shape == (5, 3, 8, 8)
        assert np.array_equal(batch, again)


# ---------------------------------------------------------------------------
# folder loading
# ---------------------------------------------------------------------------

def _write_png(path, array_hwc):
    Image.fromarray(array_hwc.astype(np.uint8)).save(path)


class TestLoadFolder:
    def test_single_white_image_is_all_ones(self, tmp_path):
        _write_png(tmp_path / "a.png", np.full((8, 8, 3), 255))
        ds = dio.load_folder(str(tmp_path), 8)
        assert len(ds) == 1
        assert np.array_equal(ds[0], np.ones((3, 8, 8), np.float32))

    def test_mirror_loads_as_mirrored_tensor(self, tmp_path, rng):
        pix = rng.integers(0, 256, (8, 8, 3))
        _write_png(tmp_path / "x.png", pix)
        _write_png(tmp_path / "y.png", pix[:, ::-1])
        ds = dio.load_folder(str(tmp_path), 8)
        assert np.array_equal(ds[1], ds[0][..., ::-1])

    def test_center_crop_of_wide_image(self, tmp_path):
        pix = np.zeros((6, 10, 3))
        pix[:, :, 0] = np.arange(10) * 20  # red encodes the column index
        _write_png(tmp_path / "wide.png", pix)
        ds = dio.load_folder(str(tmp_path), 6)
        red = dio.to_uint8(ds[0])[0]
        assert np.array_equal(red[0], (np.arange(2, 8) * 20).astype(np.uint8))

    def test_unreadable_file_skipped_with_warning(self, tmp_path):
        _write_png(tmp_path / "ok.png", np.full((4, 4, 3), 128))
        (tmp_path / "broken.png").write_bytes(b"not an image at all")
        with pytest.warns(UserWarning, match="broken.png"):
            ds = dio.load_folder(str(tmp_path), 4)
        assert len(ds) == 1

    def test_empty_folder_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            dio.load_folder(str(tmp_path), 8)

    def test_resize_path_produces_target_size(self, tmp_path, rng):
        _write_png(tmp_path / "big.png", rng.integers(0, 256, (32, 32, 3)))
        ds = dio.load_folder(str(tmp_path), 12)
        assert ds.images.shape == (1, 3, 12, 12)


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------

class TestSynth:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            dio.synth_dataset("checkerboard", 0, 4, 16)

    @pytest.mark.parametrize("kind", dio.SYNTH_KINDS)
    def test_same_seed_identical(self, kind):
        a = dio.synth_dataset(kind, 7, 6, 16)
        b = dio.synth_dataset(kind, 7, 6, 16)
        assert np.array_equal(a.images, b.images)
        c = dio.synth_dataset(kind, 8, 6, 16)
        assert not np.array_equal(a.images, c.images)

    @pytest.mark.parametrize("kind", dio.SYNTH_KINDS)
    def test_contract_shape_and_range(self, kind):
        ds = dio.synth_dataset(kind, 0, 5, 20)
        assert ds.images.shape == (5, 3, 20, 20)
        assert ds.images.dtype == np.float32
        assert ds.images.min() >= -1.0 and ds.images.max() <= 1.0

    def test_blobs_zero_jitter_exactly_self_mirrored(self):
        ds = dio.synth_dataset("mirrored_blobs", 11, 16, 20, jitter=0.0)
        assert np.array_equal(ds.images, ds.images[..., ::-1])

    def test_blobs_jitter_bounds_asymmetry(self):
        jitter = 0.15
        ds = dio.synth_dataset("mirrored_blobs", 11, 32, 20, jitter=jitter)
        x = ds.images.astype(np.float64)
        mse = np.mean((x - x[..., ::-1]) ** 2, axis=(1, 2, 3))
        assert np.all(mse <= (2 * jitter) ** 2)
        assert np.any(mse > 0.0)

    def test_noise_texture_stationary_across_halves(self):
        # Monte-Carlo: per-sample left/right half statistics must agree
        # within 3 standard errors over 1000 samples.
        ds = dio.synth_dataset("noise_texture", 123, 1000, 16)
        x = ds.images.astype(np.float64)
        left = x[..., :8].reshape(1000, -1)
        right = x[..., 8:].reshape(1000, -1)
        for stat in (np.mean, np.var):
            d = stat(left, axis=1) - stat(right, axis=1)
            assert abs(d.mean()) <= 3.0 * d.std(ddof=1) / np.sqrt(len(d))

    def test_noise_texture_samples_differ(self):
        ds = dio.synth_dataset("noise_texture", 0, 2, 16)
        assert not np.array_equal(ds[0], ds[1])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _demo_tensors(rng):
    return {
        "g.w": Tensor(rng.normal(0, 1, (4, 7)).astype(np.float32)),
        "g.b": rng.normal(0, 1, (7,)).astype(np.float32),
        "adam.m0": rng.normal(0, 1, (4, 7)).astype(np.float32),
        "scalar": np.float32(3.25).reshape(()),
    }


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        path = str(tmp_path / "model.ckpt")
        tensors = _demo_tensors(rng)
        spec = {"profile": "desk", "step": 17, "nested": {"ok": [1, 2]}}
        dio.save_checkpoint(path, tensors, spec)
        loaded, spec_back = dio.load_checkpoint(path)
        assert spec_back == spec
        assert list(loaded) == list(tensors)
        for name, value in tensors.items():
            data = value.data if isinstance(value, Tensor) else np.asarray(value)
            assert loaded[name].dtype == np.float32
            assert np.array_equal(loaded[name], data)

    def test_header_readable_without_payload(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {"a": 1})
        raw = open(path, "rb").read()
        (hlen,) = struct.unpack("<I", raw[4:8])
        open(path, "wb").write(raw[:8 + hlen])  # drop the whole payload
        header = dio.read_checkpoint_header(path)
        assert header["spec"] == {"a": 1}
        assert [e["name"] for e in header["tensors"]] == [
            "g.w", "g.b", "adam.m0", "scalar"]

    def test_offsets_ascending_non_overlapping(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})
        header = dio.read_checkpoint_header(path)
        end = 0
        for entry in header["tensors"]:
            assert entry["byte_offset"] >= end
            end = entry["byte_offset"] + 4 * int(np.prod(entry["shape"]))
        assert end == header["payload_bytes"]

    def test_single_corrupt_payload_byte_rejected(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})
        raw = bytearray(open(path, "rb").read())
        raw[-3] ^= 0x40
        open(path, "wb").write(bytes(raw))
        with pytest.raises(CheckpointError) as err:
            dio.load_checkpoint(path)
        assert err.value.code == "checksum_mismatch"

    def test_truncated_payload_rejected(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})
        raw = open(path, "rb").read()
        open(path, "wb").write(raw[:-5])
        with pytest.raises(CheckpointError) as err:
            dio.load_checkpoint(path)
        assert err.value.code == "truncated_payload"

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "m.ckpt")
        open(path, "wb").write(b"ZZZZ" + b"\0" * 16)
        with pytest.raises(CheckpointError) as err:
            dio.read_checkpoint_header(path)
        assert err.value.code == "bad_magic"

    @staticmethod
    def _rewrite_header(path, mutate):
        raw = open(path, "rb").read()
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + hlen].decode())
        mutate(header)
        blob = json.dumps(header).encode()
        open(path, "wb").write(b"SGCK" + struct.pack("<I", len(blob)) + blob
                               + raw[8 + hlen:])

    def test_version_mismatch_rejected(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})
        self._rewrite_header(path, lambda h: h.update(format_version=99))
        with pytest.raises(CheckpointError) as err:
            dio.load_checkpoint(path)
        assert err.value.code == "version_mismatch"

    def test_inconsistent_offsets_rejected(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})

        def clash(h):
            h["tensors"][1]["byte_offset"] = h["tensors"][0]["byte_offset"]

        self._rewrite_header(path, clash)
        with pytest.raises(CheckpointError) as err:
            dio.load_checkpoint(path)
        assert err.value.code == "index_inconsistent"

    def test_payload_total_mismatch_rejected(self, tmp_path, rng):
        path = str(tmp_path / "m.ckpt")
        dio.save_checkpoint(path, _demo_tensors(rng), {})
        self._rewrite_header(path, lambda h: h.update(payload_bytes=4))
        with pytest.raises(CheckpointError) as err:
            dio.read_checkpoint_header(path)
        assert err.value.code == "index_inconsistent"

    def test_non_float32_tensor_rejected_at_save(self, tmp_path):
        with pytest.raises(ValueError):
            dio.save_checkpoint(str(tmp_path / "m.ckpt"),
                                {"x": np.zeros(3, np.float64)}, {})


# ---------------------------------------------------------------------------
# montage and curves
# ---------------------------------------------------------------------------

class TestMontage:
    def test_one_by_nine_layout_width(self, rng, tmp_path):
        images = rng.uniform(-1, 1, (9, 3, 10, 10)).astype(np.float32)
        canvas = dio.montage(images, 1, 9, str(tmp_path / "grid.png"))
        assert canvas.shape == (10, 9 * 10 + 8 * 2, 3)
        disk = np.asarray(Image.open(tmp_path / "grid.png"))
        assert np.array_equal(disk, canvas)

    def test_single_image_is_the_image(self, rng):
        img = rng.uniform(-1, 1, (3, 7, 7)).astype(np.float32)
        canvas = dio.montage([img], 1, 1)
        assert canvas.shape == (7, 7, 3)
        assert np.array_equal(canvas, dio.to_uint8(img).transpose(1, 2, 0))

    def test_grid_placement_and_separator(self, rng):
        images = rng.uniform(-1, 1, (4, 3, 5, 5)).astype(np.float32)
        canvas = dio.montage(images, 2, 2)
        assert canvas.shape == (12, 12, 3)
        cell = dio.to_uint8(images[3]).transpose(1, 2, 0)
        assert np.array_equal(canvas[7:, 7:], cell)
        assert np.all(canvas[:, 5:7] == 255)

    def test_mixed_sizes_rejected(self, rng):
        a = rng.uniform(-1, 1, (3, 6, 6)).astype(np.float32)
        b = rng.uniform(-1, 1, (3, 7, 7)).astype(np.float32)
        with pytest.raises(ValueError):
            dio.montage([a, b], 1, 2)

    def test_overfull_grid_rejected(self, rng):
        images = rng.uniform(-1, 1, (5, 3, 4, 4)).astype(np.float32)
        with pytest.raises(ValueError):
            dio.montage(images, 2, 2)


class TestCurves:
    def test_csv_round_trips_exactly(self, tmp_path, rng):
        values = np.concatenate([
            rng.normal(0, 1, 20),
            [1e-300, 1e300, 0.1 + 0.2, np.float64(np.float32(0.1))],
        ])
        path = str(tmp_path / "loss.csv")
        dio.save_curve(values, path)
        back = dio.load_curve(path)
        assert np.array_equal(back, values)
        assert (tmp_path / "loss.png").exists()

    def test_non_1d_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            dio.save_curve(np.zeros((3, 3)), str(tmp_path / "x.csv"))

    def test_jsonl_round_trip(self, tmp_path):
        path = str(tmp_path / "log.jsonl")
        records = [{"step": 0, "d_loss": 0.5}, {"step": 1, "d_loss": 0.25}]
        for r in records:
            dio.append_jsonl(path, r)
        assert dio.read_jsonl(path) == records
