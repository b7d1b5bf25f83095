import json

import numpy as np
import pytest

from dynaseg.phantom import PhantomConfig, PhantomStream, phantom
from dynaseg.preprocess import nonzero_bbox, preprocess
from dynaseg.rle import decode_mask, encode_mask
from dynaseg.vio import read_volume, write_volume
from dynaseg.volume import BinaryMask, Volume


class TestPhantom:
    def test_noise_free_volume_equals_mask(self):
        cfg = PhantomConfig(noise_std=0.0, contrast=1.0, background=0.0, seed=1)
        vol, mask = phantom(cfg)
        assert np.array_equal(vol.data, mask.data.astype(np.float32))

    def test_same_seed_bit_identical(self):
        cfg = PhantomConfig(seed=42)
        v1, m1 = phantom(cfg)
        v2, m2 = phantom(cfg)
        assert np.array_equal(v1.data, v2.data)
        assert np.array_equal(m1.data, m2.data)

    def test_foreground_fraction_within_sphere_bounds(self):
        # one sphere of radius in [5, 8]: volume between 4/3*pi*5^3 and
        # 4/3*pi*8^3 voxels, with a discretization allowance
        cfg_base = PhantomConfig(n_blobs=1, radius_range=(5.0, 8.0), dims=(32, 32, 32))
        lo = 4 / 3 * np.pi * 5.0**3 * 0.8
        hi = 4 / 3 * np.pi * 8.0**3 * 1.2
        for seed in range(100):
            _, mask = phantom(PhantomConfig(**{**cfg_base.__dict__, "seed": seed}))
            count = int(mask.data.sum())
            assert lo <= count <= hi

    def test_blobs_that_cannot_fit_raise(self):
        with pytest.raises(ValueError):
            PhantomConfig(dims=(16, 16, 16), radius_range=(8.0, 9.0))

    def test_stream_is_deterministic_and_drifts(self):
        s1 = PhantomStream(PhantomConfig(seed=3), drift=0.5, seed=7).take(5)
        s2 = PhantomStream(PhantomConfig(seed=3), drift=0.5, seed=7).take(5)
        for (v1, m1), (v2, m2) in zip(s1, s2):
            assert np.array_equal(v1.data, v2.data)
            assert np.array_equal(m1.data, m2.data)
        first, last = s1[0][1].data, s1[-1][1].data
        assert not np.array_equal(first, last)


class TestPreprocess:
    def test_exact_crop_identity_resize(self):
        data = np.zeros((8, 8, 8), dtype=np.float32)
        data[2:6, 2:6, 2:6] = 1.0
        v = Volume(data)
        out = preprocess(v, mean=0.0, std=1.0, margin=(0, 0), target_dims=(4, 4, 4))
        assert np.allclose(out.data, 1.0)

    def test_normalization_statistics(self):
        rng = np.random.default_rng(0)
        data = rng.uniform(0.5, 1.5, size=(10, 10, 10)).astype(np.float32)
        v = Volume(data)
        mean, std = float(data.mean()), float(data.std())
        out = preprocess(v, mean, std, (0, 0), (10, 10, 10))
        assert abs(float(out.data.mean())) < 0.05

    def test_constant_cube_resize(self):
        data = np.zeros((20, 20, 20), dtype=np.float32)
        data[5:15, 5:15, 5:15] = 1.0
        out = preprocess(Volume(data), 0.0, 1.0, (0, 0), (5, 5, 5))
        assert np.allclose(out.data, 1.0)

    def test_all_zero_volume_raises(self):
        with pytest.raises(ValueError):
            preprocess(Volume(np.zeros((4, 4, 4))), 0.0, 1.0, (0, 0), (4, 4, 4))

    def test_mask_stays_binary_through_resize(self):
        vol, mask = phantom(PhantomConfig(seed=9))
        out_v, out_m = preprocess(vol, 0.0, 1.0, (1, 3), (16, 16, 16),
                                  rng=np.random.default_rng(0), mask=mask)
        assert set(np.unique(out_m.data)) <= {0, 1}
        assert out_v.dims == (16, 16, 16)

    def test_bbox(self):
        data = np.zeros((6, 6, 6))
        data[1:3, 2:5, 0:6] = 2.0
        assert nonzero_bbox(data) == ((1, 3), (2, 5), (0, 6))


class TestVolumeIO:
    def test_round_trip_is_bit_exact(self, tmp_path):
        vol, mask = phantom(PhantomConfig(seed=11))
        write_volume(tmp_path / "v", vol)
        write_volume(tmp_path / "m", mask)
        v2 = read_volume(tmp_path / "v")
        m2 = read_volume(tmp_path / "m")
        assert isinstance(v2, Volume) and isinstance(m2, BinaryMask)
        assert v2.data.tobytes() == vol.data.astype("<f4").tobytes()
        assert m2.data.tobytes() == mask.data.tobytes()

    def test_dims_payload_mismatch(self, tmp_path):
        (tmp_path / "x.json").write_text(
            json.dumps({"dims": [2, 2, 2], "dtype": "f32", "order": "x-major"})
        )
        np.arange(7, dtype="<f4").tofile(tmp_path / "x.raw")
        with pytest.raises(ValueError):
            read_volume(tmp_path / "x")

    def test_unknown_dtype(self, tmp_path):
        (tmp_path / "x.json").write_text(
            json.dumps({"dims": [1, 1, 1], "dtype": "f64", "order": "x-major"})
        )
        np.zeros(1).tofile(tmp_path / "x.raw")
        with pytest.raises(ValueError):
            read_volume(tmp_path / "x")

    def test_float_encoding_is_ieee754_le(self, tmp_path):
        v = Volume(np.ones((1, 1, 1), dtype=np.float32))
        write_volume(tmp_path / "one", v)
        assert (tmp_path / "one.raw").read_bytes() == bytes([0x00, 0x00, 0x80, 0x3F])


class TestRLE:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mask = rng.integers(0, 2, size=(9, 13)).astype(np.uint8)
            assert np.array_equal(decode_mask(encode_mask(mask), mask.shape), mask)

    def test_known_encoding(self):
        mask = np.array([[0, 1, 1, 0, 1], [0, 0, 0, 0, 0]], dtype=np.uint8)
        assert encode_mask(mask) == {"rows": [[1, 2, 4, 1], []]}

    def test_out_of_bounds_run_rejected(self):
        with pytest.raises(ValueError):
            decode_mask({"rows": [[3, 5]]}, (1, 4))
