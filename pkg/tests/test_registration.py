import numpy as np
import pytest
from scipy.ndimage import shift as ndshift

from dynaseg.phantom import PhantomConfig, phantom
from dynaseg.registration import (
    RegistrationConfig,
    Transform2D,
    register,
    warp_mask,
)


def smooth_slice(seed=5):
    v, _ = phantom(
        PhantomConfig(seed=seed, smooth_sigma=1.0, noise_std=0.02, radius_range=(8, 11))
    )
    return v.data[:, :, 16].astype(np.float64)


def shifted(img, displacement):
    """Content of img displaced by `displacement` (moving relative to fixed)."""
    return ndshift(img, displacement, order=1, mode="nearest")


class TestTransform:
    def test_singular_matrix_rejected(self):
        with pytest.raises(ValueError):
            Transform2D("affine", np.zeros((2, 2)), np.zeros(2))

    def test_identity_warp_is_noop(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[2:5, 3:6] = 1
        assert np.array_equal(warp_mask(mask, Transform2D.identity()), mask)

    def test_translation_moves_single_voxel(self):
        mask = np.zeros((12, 12), dtype=np.uint8)
        mask[5, 5] = 1
        # content displaced by (+1, 0): the transform samples moving at x + t
        # with t = displacement, so foreground lands at (6, 5)
        out = warp_mask(mask, Transform2D.translate(-1.0, 0.0))
        assert out[6, 5] == 1 and out.sum() == 1

    def test_translation_out_of_bounds_empties_mask(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[4, 4] = 1
        out = warp_mask(mask, Transform2D.translate(20.0, 0.0))
        assert out.sum() == 0


class TestRegister:
    def test_identity_recovered(self):
        img = smooth_slice()
        for metric in ("mi", "ssd"):
            t = register(img, img, RegistrationConfig(metric=metric, family="translation"))
            assert np.abs(t.translation).max() < 1e-3

    def test_known_translation_recovered(self):
        img = smooth_slice()
        disp = np.array([3.0, -2.0])
        moving = shifted(img, disp)
        t = register(img, moving, RegistrationConfig(metric="mi", family="translation"))
        # the recovered translation equals the content displacement of the
        # moving slice relative to the fixed slice
        assert np.abs(t.translation - disp).max() < 0.5

    def test_constant_fixed_with_mi_raises(self):
        img = np.zeros((16, 16))
        with pytest.raises(ValueError):
            register(img, img, RegistrationConfig(metric="mi", family="translation"))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            register(np.zeros((8, 8)), np.zeros((8, 9)))

    def test_deterministic(self):
        img = smooth_slice()
        moving = shifted(img, [2.0, 1.0])
        cfg = RegistrationConfig(metric="mi")
        t1 = register(img, moving, cfg)
        t2 = register(img, moving, cfg)
        assert np.array_equal(t1.translation, t2.translation)
        assert np.array_equal(t1.matrix, t2.matrix)

    def test_trace_metric_non_increasing_per_level(self):
        img = smooth_slice()
        moving = shifted(img, [4.0, -3.0])
        trace = []
        register(img, moving, RegistrationConfig(metric="ssd", family="translation"),
                 trace=trace)
        by_level = {}
        for level, _, metric, _ in trace:
            by_level.setdefault(level, []).append(metric)
        for metrics in by_level.values():
            assert all(b <= a + 1e-12 for a, b in zip(metrics, metrics[1:]))

    def test_similarity_recovers_scale(self):
        img = smooth_slice(seed=8)
        # moving content scaled up by 10% about the center
        scale = Transform2D("similarity", np.eye(2) / 1.1, np.zeros(2))
        from dynaseg.registration import warp_image

        moving = warp_image(img, scale)
        t = register(img, moving, RegistrationConfig(metric="ssd", family="similarity"))
        # aligning moving onto fixed undoes the shrink: expect scale 1.1
        recovered = float(np.sqrt(abs(np.linalg.det(t.matrix))))
        assert recovered == pytest.approx(1.1, abs=0.05)
