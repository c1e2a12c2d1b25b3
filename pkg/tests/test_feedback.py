import math

import numpy as np
import pytest

from conftest import make_masked, make_realization, make_scenario
from jtcomp.errors import DimensionError
from jtcomp.system.feedback import CooperationMap, backhaul_load, full_cooperation, mask_csi, relative_threshold
from jtcomp.system.metrics import Precoder, SinrMode, design_sinr
from jtcomp.system.scenario import draw_drop


def gains_realization(gains_db):
    """One user per column with the given long-term link powers in dB, N_T = 1."""
    lambda_sq = 10 ** (np.asarray(gains_db, dtype=float) / 10)
    return make_realization(np.sqrt(lambda_sq), lambda_sq=lambda_sq)


class TestRelativeThreshold:
    def test_threshold_selects_close_links(self):
        coop = relative_threshold(gains_realization([[-100], [-102], [-110]]), 3.0)
        assert coop.serving_sets == (frozenset({0, 1}),)

    def test_infinite_threshold_is_full(self):
        coop = relative_threshold(gains_realization([[-100, -90], [-102, -130], [-110, -95]]), math.inf)
        assert coop.is_full
        assert coop.serving_sets == (frozenset({0, 1, 2}),) * 2

    def test_equality_is_included(self):
        coop = relative_threshold(gains_realization([[-100], [-100], [-110]]), 0.0)
        assert coop.serving_sets == (frozenset({0, 1}),)

    @pytest.mark.parametrize("threshold", [-1.0, math.nan])
    def test_invalid_threshold(self, threshold):
        with pytest.raises(ValueError):
            relative_threshold(gains_realization([[-100], [-102]]), threshold)

    def test_monotone_in_threshold_and_keeps_strongest(self):
        scenario = make_scenario(n_t=2)
        for seed in range(20):
            drop = draw_drop(scenario, seed)
            previous = None
            for threshold in (0, 3, 6, 9, 12, math.inf):
                coop = relative_threshold(drop, threshold)
                assert coop.mask[np.argmax(drop.lambda_sq, axis=0), np.arange(3)].all()
                if previous is not None:
                    assert not (previous.mask & ~coop.mask).any()
                previous = coop

    def test_served_sets_transpose_serving_sets(self, drop):
        coop = relative_threshold(drop, 6.0)
        pairs = {(b, u) for u, bs in enumerate(coop.serving_sets) for b in bs}
        assert pairs == {(b, u) for b, us in enumerate(coop.served_sets) for u in us}


class TestCooperationMap:
    def test_every_user_needs_a_bs(self):
        with pytest.raises(ValueError):
            CooperationMap(np.array([[True, False], [True, False]]))

    def test_equality(self):
        assert full_cooperation(2, 3) == CooperationMap(np.ones((2, 3), dtype=bool))
        assert hash(full_cooperation(2, 3)) == hash(CooperationMap(np.ones((2, 3), dtype=bool)))


class TestMaskCsi:
    def test_known_only_on_the_map(self, drop):
        coop = CooperationMap(np.eye(3, dtype=bool))
        masked = mask_csi(drop, coop)
        assert np.count_nonzero(np.any(masked.known != 0, axis=2)) == 3
        assert len(masked.known_channels()) == 3
        np.testing.assert_array_equal(masked.lambda_sq, drop.lambda_sq)

    def test_dimension_mismatch(self, drop):
        with pytest.raises(DimensionError):
            mask_csi(drop, full_cooperation(2, 3))
        with pytest.raises(DimensionError):
            mask_csi(drop, full_cooperation(3, 3), weights=[1, 1])

    def test_normalized_keeps_every_sinr(self, rng):
        mask = [[True, False], [True, True]]
        _, masked = make_masked(np.array([[1e-5, 3e-6], [2e-6, 4e-6j]]), noise=1e-13, max_power=40.0, mask=mask)
        normalized, scale = masked.normalized()
        assert normalized.max_power == 1.0
        assert normalized.lambda_sq.min() == pytest.approx(40.0)
        assert scale == pytest.approx(math.sqrt(40.0))
        weights = rng.standard_normal((2, 2, 1)) + 1j * rng.standard_normal((2, 2, 1))
        v = Precoder.on_support(weights, np.array(mask))
        for mode in (SinrMode.LIMITED_ZERO, SinrMode.LIMITED_LAMBDA, SinrMode.LIMITED_NAIVE):
            np.testing.assert_allclose(design_sinr(normalized, v, mode), design_sinr(masked, v.scaled(scale), mode),
                                       rtol=1e-10)


class TestBackhaul:
    def test_two_links_per_user(self):
        mask = np.array([[1, 0, 1], [1, 1, 0], [0, 1, 1]], dtype=bool)
        assert backhaul_load(CooperationMap(mask), 1) == (6, 6)

    def test_full_mesh(self):
        assert backhaul_load(full_cooperation(3, 3), 3) == (27, 27)

    def test_single_link(self):
        assert backhaul_load(full_cooperation(1, 1), 4) == (4, 4)

    def test_uneven_serving_sets(self):
        # |B_u| = 1, 1, 2 and |U_b| = 3, 1
        mask = np.array([[1, 1, 1], [0, 0, 1]], dtype=bool)
        assert backhaul_load(CooperationMap(mask), 2) == (8, 8)

    def test_matches_link_count_of_thresholded_drop(self, drop):
        coop = relative_threshold(drop, 3.0)
        csi, weights = backhaul_load(coop, drop.n_t)
        assert csi == weights == drop.n_t * int(coop.mask.sum())


class TestMaskedCsiArrays:
    def test_caller_arrays_stay_writeable(self, drop):
        weights = np.ones(drop.num_users)
        masked = mask_csi(drop, relative_threshold(drop, 3.0), weights)
        assert weights.flags.writeable
        assert not masked.weights.flags.writeable
        weights[0] = 5.0
        assert masked.weights[0] == 1.0
