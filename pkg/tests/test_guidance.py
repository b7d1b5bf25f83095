import numpy as np
import pytest
from scipy.stats import chi2

from dynaseg.guidance import (
    GuidanceConfig,
    propose_slices,
    random_slices,
    residual_map,
    slice_masses,
)
from dynaseg.volume import SliceSet


def labeled(axis, *indices, shape=(4, 4)):
    return SliceSet({axis: {i: np.ones(shape, dtype=np.uint8) for i in indices}})


class TestResidualMap:
    def test_pure_disagreement_zero_when_identical(self):
        field = np.random.default_rng(0).uniform(0, 1, size=(4, 4, 4))
        cfg = GuidanceConfig(omega1=1.0)
        r = residual_map(field, field, SliceSet(), cfg)
        assert np.allclose(r, 0.0)

    def test_near_form_is_one_on_labeled_slice(self):
        cfg = GuidanceConfig(omega1=0.0, d2_form="near")
        r = residual_map(np.zeros((4, 4, 4)), np.zeros((4, 4, 4)),
                         labeled(0, 1), cfg)
        assert np.allclose(r[1], 1.0)
        assert np.allclose(r[2], np.exp(-1.0))

    def test_far_form_vanishes_on_labeled_slice(self):
        cfg = GuidanceConfig(omega1=0.0, d2_form="far")
        r = residual_map(np.zeros((4, 4, 4)), np.zeros((4, 4, 4)),
                         labeled(0, 1), cfg)
        assert np.allclose(r[1], 0.0)
        assert np.allclose(r[2], 1.0 - np.exp(-1.0))
        assert r[3].mean() > r[2].mean()  # grows with distance

    def test_empty_gamma_extremes(self):
        zeros = np.zeros((3, 3, 3))
        far = residual_map(zeros, zeros, SliceSet(), GuidanceConfig(omega1=0.0))
        near = residual_map(zeros, zeros, SliceSet(),
                            GuidanceConfig(omega1=0.0, d2_form="near"))
        assert np.allclose(far, 1.0)
        assert np.allclose(near, 0.0)

    def test_hand_computed_blend(self):
        # one disagreeing voxel, omega1 = 0.5, far form, one labeled slice:
        # r = 0.5 * |proxy - pred| + 0.5 * (1 - exp(-dist to slice 0))
        proxy = np.zeros((4, 4, 4))
        pred = np.zeros((4, 4, 4))
        pred[2, 1, 1] = 1.0
        cfg = GuidanceConfig(omega1=0.5, d2_form="far")
        r = residual_map(proxy, pred, labeled(0, 0), cfg)
        d2 = lambda k: 1.0 - np.exp(-float(k))
        assert r[2, 1, 1] == pytest.approx(0.5 * 1.0 + 0.5 * d2(2))
        assert r[2, 0, 0] == pytest.approx(0.5 * d2(2))
        assert r[0, 0, 0] == pytest.approx(0.0)
        assert (r >= 0).all()

    def test_dims_mismatch_raises(self):
        with pytest.raises(ValueError):
            residual_map(np.zeros((3, 3, 3)), np.zeros((3, 3, 4)), SliceSet())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GuidanceConfig(omega1=1.5)
        with pytest.raises(ValueError):
            GuidanceConfig(d2_form="quadratic")
        with pytest.raises(ValueError):
            GuidanceConfig(tau=0)


class TestProposeSlices:
    def test_all_mass_on_one_slice_selects_it(self):
        r = np.zeros((5, 4, 4))
        r[3] = 1.0
        for seed in range(10):
            out = propose_slices(r, 0, [], 1, np.random.default_rng(seed))
            assert out == [3]

    def test_all_labeled_returns_empty(self):
        r = np.ones((4, 4, 4))
        out = propose_slices(r, 0, [0, 1, 2, 3], 1, np.random.default_rng(0))
        assert out == []

    def test_zero_mass_returns_empty(self):
        out = propose_slices(np.zeros((4, 4, 4)), 0, [], 2, np.random.default_rng(0))
        assert out == []

    def test_never_returns_labeled_index(self):
        r = np.ones((8, 4, 4))
        for seed in range(20):
            out = propose_slices(r, 0, [2, 5], 3, np.random.default_rng(seed))
            assert not ({2, 5} & set(out))
            assert len(out) == len(set(out)) == 3

    def test_tau_capped_by_nonzero_candidates(self):
        r = np.zeros((6, 4, 4))
        r[1] = 1.0
        r[4] = 1.0
        out = propose_slices(r, 0, [], 5, np.random.default_rng(0))
        assert sorted(out) == [1, 4]

    def test_uniform_mass_draws_uniformly(self):
        # chi-square goodness of fit, 10^4 single draws over 10 candidates
        r = np.ones((10, 4, 4))
        rng = np.random.default_rng(42)
        counts = np.zeros(10)
        n = 10_000
        for _ in range(n):
            counts[propose_slices(r, 0, [], 1, rng)[0]] += 1
        expected = n / 10
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2.ppf(0.99, df=9)

    def test_mass_proportionality(self):
        # slice with twice the mass drawn about twice as often
        r = np.zeros((2, 4, 4))
        r[0] = 1.0
        r[1] = 2.0
        rng = np.random.default_rng(7)
        wins = sum(propose_slices(r, 0, [], 1, rng)[0] == 1 for _ in range(3000))
        assert wins / 3000 == pytest.approx(2 / 3, abs=0.03)


class TestRandomSlices:
    def test_skips_constant_slices(self):
        data = np.zeros((6, 4, 4))
        data[2] = np.random.default_rng(0).normal(size=(4, 4))
        data[4] = np.random.default_rng(1).normal(size=(4, 4))
        for seed in range(10):
            out = random_slices(data, 0, [], 1, np.random.default_rng(seed))
            assert out[0] in (2, 4)

    def test_respects_labeled_set(self):
        data = np.random.default_rng(0).normal(size=(5, 4, 4))
        out = random_slices(data, 0, [0, 1, 2, 3], 2, np.random.default_rng(0))
        assert out == [4]

    def test_slice_masses_shape(self):
        r = np.ones((3, 4, 5))
        assert slice_masses(r, 0).shape == (3,)
        assert slice_masses(r, 2).tolist() == [12.0] * 5
