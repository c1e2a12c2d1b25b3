import math

import numpy as np
import pytest

from conftest import SCENARIO_CONFIG, make_realization, make_scenario
from jtcomp.errors import ConfigurationError
from jtcomp.system.feedback import full_cooperation, mask_csi, relative_threshold
from jtcomp.system.metrics import Precoder, pessimistic_sinr, true_sinr
from jtcomp.system.scenario import build_scenario, calibrate_power, draw_drop, noise_power, pathloss_gain, \
    redraw_fast_fading, rescale_for_conditioning, scenario_with


class TestBuildScenario:
    def test_defaults(self):
        scenario = make_scenario()
        assert (scenario.num_bs, scenario.n_t, scenario.num_users) == (3, 1, 3)
        assert scenario.user_weights == (1.0, 1.0, 1.0)
        assert scenario.max_power > 0

    def test_explicit_weights_are_kept(self):
        assert make_scenario(user_weights=[1, 1, 1]).user_weights == (1.0, 1.0, 1.0)
        assert make_scenario(user_weights=[2, 0, 0.5]).user_weights == (2.0, 0.0, 0.5)

    @pytest.mark.parametrize("key, value", [("num_users", 0), ("num_bs", 0), ("n_t", -1),
                                            ("drop_radius_m", 600), ("user_weights", [1, -1, 1])])
    def test_invalid_values_name_the_key(self, key, value):
        with pytest.raises(ConfigurationError) as e:
            make_scenario(**{key: value})
        assert e.value.key in (key, "drop_radius_m")

    def test_missing_key(self):
        config = dict(SCENARIO_CONFIG)
        del config["pathloss_exponent"]
        with pytest.raises(ConfigurationError) as e:
            build_scenario(config)
        assert e.value.key == "pathloss_exponent"

    def test_wrong_weight_count(self):
        with pytest.raises(ConfigurationError):
            make_scenario(user_weights=[1, 1])


class TestLinkBudget:
    def test_noise_power(self):
        assert noise_power(290, 1e7) == pytest.approx(4.002e-14, rel=1e-4)
        assert noise_power(580, 1e7) == pytest.approx(8.004e-14, rel=1e-4)
        with pytest.raises(ValueError):
            noise_power(290, 0)

    def test_unit_snr_calibration(self):
        scenario = make_scenario(cell_edge_snr_db=0)
        expected = scenario.noise_power / pathloss_gain(scenario.cell_radius, scenario.pathloss_exponent)
        assert calibrate_power(scenario) == pytest.approx(expected, rel=1e-12)

    def test_edge_snr_round_trip(self):
        scenario = make_scenario()
        snr = calibrate_power(scenario) * pathloss_gain(500, 3.5) / scenario.noise_power
        assert 10 * math.log10(snr) == pytest.approx(15.0, abs=1e-9)

    def test_minus_infinite_snr_is_rejected(self):
        with pytest.raises(ConfigurationError):
            make_scenario(cell_edge_snr_db=-math.inf)

    def test_snr_sweep_recalibrates(self):
        scenario = make_scenario()
        louder = scenario_with(scenario, cell_edge_snr_db=25)
        assert louder.max_power == pytest.approx(10 * scenario.max_power, rel=1e-12)


class TestDrop:
    def test_deterministic(self, scenario):
        assert draw_drop(scenario, 11).to_bytes() == draw_drop(scenario, 11).to_bytes()
        assert draw_drop(scenario, 11).to_bytes() != draw_drop(scenario, 12).to_bytes()

    def test_shapes_and_positive_gains(self, drop):
        assert drop.h.shape == (3, 3, 1)
        assert drop.lambda_sq.shape == (3, 3)
        assert np.all(drop.lambda_sq > 0)
        assert np.all(np.linalg.norm(drop.user_positions, axis=1) <= 50)

    def test_users_at_center_see_equal_gains(self):
        scenario = make_scenario(shadow_sigma_db=0, drop_radius_m=0)
        drop = draw_drop(scenario, 3)
        np.testing.assert_allclose(drop.lambda_sq, drop.lambda_sq[0:1, :], rtol=1e-9)

    def test_ring_drop(self):
        scenario = make_scenario(user_drop="ring", drop_inner_radius_m=40, num_users=20, user_weights=[])
        radius = np.linalg.norm(draw_drop(scenario, 5).user_positions, axis=1)
        assert np.all((radius >= 40 - 1e-9) & (radius <= 50 + 1e-9))

    def test_fading_statistics(self, drop):
        rng = np.random.default_rng(42)
        power = np.mean([np.abs(redraw_fast_fading(drop, rng).h) ** 2 for _ in range(10000)], axis=0)
        ratio = (power[:, :, 0] / drop.lambda_sq).mean()
        assert 0.98 <= ratio <= 1.02


class TestRescale:
    def test_weakest_link_gets_unit_gain(self, drop):
        scaled, factor = rescale_for_conditioning(drop)
        assert scaled.lambda_sq.min() == pytest.approx(1.0)
        assert factor == pytest.approx(math.sqrt(drop.lambda_sq.min()))

    def test_single_link(self):
        realization = make_realization([[math.sqrt(1e-13)]], noise=1e-14, lambda_sq=[[1e-13]])
        scaled, _ = rescale_for_conditioning(realization)
        assert scaled.lambda_sq[0, 0] == pytest.approx(1.0)
        assert scaled.noise_power == pytest.approx(1e-14 * 1e13)

    def test_sinr_invariance(self, drop):
        rng = np.random.default_rng(42)
        scaled, factor = rescale_for_conditioning(drop)
        coop = relative_threshold(drop, 3.0)
        for _ in range(100):
            weights = rng.standard_normal((3, 3, 1)) + 1j * rng.standard_normal((3, 3, 1))
            precoder = Precoder.on_support(weights * math.sqrt(drop.max_power), coop.mask)
            np.testing.assert_allclose(true_sinr(scaled, precoder), true_sinr(drop, precoder), rtol=1e-10)
            np.testing.assert_allclose(pessimistic_sinr(mask_csi(scaled, coop), precoder),
                                       pessimistic_sinr(mask_csi(drop, coop), precoder), rtol=1e-10)

    def test_full_map_round_trip(self, drop):
        coop = full_cooperation(3, 3)
        np.testing.assert_array_equal(mask_csi(drop, coop).known, drop.h)
