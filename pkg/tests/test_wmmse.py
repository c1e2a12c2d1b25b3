import math

import numpy as np
import pytest

from conftest import make_masked
from jtcomp.errors import ConfigurationError
from jtcomp.solvers.ssocp import SsocpOptions, init_precoder, ssocp_solve
from jtcomp.solvers.wmmse import WmmseOptions, receiver_update, wmmse_solve, wmmse_subproblem
from jtcomp.system.feedback import mask_csi, relative_threshold
from jtcomp.system.metrics import Precoder, SinrMode, design_sinr, evaluate, user_mse, weighted_sum_rate
from jtcomp.system.scenario import draw_drop


def weighted_mse(masked, precoder, state, mode):
    return sum(masked.weights[u] * state.coefficient[u] * user_mse(masked, precoder, state.receiver[u], u, mode)
               for u in range(masked.num_users))


class TestReceiverUpdate:
    def test_mse_matches_sinr(self, limited, rng):
        _, masked = limited
        masked, _ = masked.normalized()
        for mode in (SinrMode.LIMITED_ZERO, SinrMode.LIMITED_LAMBDA, SinrMode.LIMITED_NAIVE):
            precoder = init_precoder(masked.coop, 1.0, masked.n_t, rng)
            state = receiver_update(masked, precoder, mode)
            gamma = design_sinr(masked, precoder, mode)
            np.testing.assert_allclose(state.mse, 1 / (1 + gamma), rtol=1e-9)
            assert state.metric(masked.weights) == pytest.approx(weighted_sum_rate(gamma, masked.weights))

    def test_accepts_raw_weights(self, limited, rng):
        _, masked = limited
        precoder = init_precoder(masked.coop, masked.max_power, masked.n_t, rng)
        np.testing.assert_allclose(receiver_update(masked, precoder.weights).mse, receiver_update(masked, precoder).mse)


class TestSubproblem:
    def test_zero_receivers_give_zero_precoder(self, limited):
        _, masked = limited
        precoder, solution = wmmse_subproblem(masked, np.zeros(3), np.ones(3))
        assert solution is None
        assert not precoder.weights.any()
        np.testing.assert_array_equal(precoder.support, masked.coop.mask)

    def test_does_not_increase_weighted_mse(self, limited, rng):
        _, masked = limited
        masked, _ = masked.normalized()
        mode = SinrMode.LIMITED_LAMBDA
        precoder = init_precoder(masked.coop, 1.0, masked.n_t, rng)
        state = receiver_update(masked, precoder, mode)
        candidate, solution = wmmse_subproblem(masked, state.receiver, state.coefficient, mode)
        assert solution.ok
        assert weighted_mse(masked, candidate, state, mode) <= weighted_mse(masked, precoder, state, mode) + 1e-6
        assert candidate.per_antenna_power().max() <= 1.0 + 1e-9

    def test_single_weighted_user_gets_matched_full_power(self):
        h = np.array([[[0.8 + 0.6j, -0.3 + 0.4j], [0.2 - 0.5j, 0.7 + 0.1j]]])
        _, masked = make_masked(h, noise=0.5)
        # a small receiver keeps the unconstrained optimum 1 / a out of reach, so power is binding
        precoder, solution = wmmse_subproblem(masked, [0.01, 0.01], [1.0, 0.0], SinrMode.FULL)
        assert solution.ok
        matched = np.conj(h[0, 0]) / np.abs(h[0, 0])
        np.testing.assert_allclose(precoder.weights[0, 0], matched, atol=1e-4)
        np.testing.assert_allclose(precoder.weights[0, 1], 0, atol=1e-4)

    def test_negative_coefficients(self, limited):
        _, masked = limited
        with pytest.raises(ValueError):
            wmmse_subproblem(masked, np.ones(3), [1.0, -1.0, 1.0])


class TestWmmseSolve:
    def test_single_user_matched_filter(self):
        h = np.array([[[0.8 + 0.6j, -0.3 + 0.4j]]])
        _, masked = make_masked(h, noise=0.5)
        precoder, trace = wmmse_solve(masked, WmmseOptions(mode=SinrMode.FULL))
        rate = weighted_sum_rate(design_sinr(masked, precoder, SinrMode.FULL), masked.weights)
        assert rate == pytest.approx(math.log2(1 + 1.5 ** 2 / 0.5), rel=1e-4)
        assert trace.status == "converged"

    def test_metric_is_monotone(self, limited):
        _, masked = limited
        precoder, trace = wmmse_solve(masked, WmmseOptions(max_retries=2, max_iter=50, rng_seed=2))
        for objectives in trace.objectives:
            assert np.all(np.diff(objectives) >= 0)
        rate = weighted_sum_rate(design_sinr(masked, precoder, SinrMode.LIMITED_LAMBDA), masked.weights)
        assert rate == pytest.approx(trace.best, rel=1e-6)
        assert isinstance(precoder, Precoder)
        np.testing.assert_array_equal(precoder.support, masked.coop.mask)

    def test_invalid_options(self):
        with pytest.raises(ConfigurationError) as e:
            WmmseOptions(max_iter=0)
        assert e.value.key == "wmmse.max_iter"


@pytest.mark.slow
class TestWmmseAgainstSsocp:
    @pytest.mark.parametrize("mode, threshold_db", [(SinrMode.FULL, math.inf), (SinrMode.LIMITED_LAMBDA, 3.0)])
    def test_mean_actual_rates_agree(self, scenario, mode, threshold_db):
        wmmse_rates, ssocp_rates = [], []
        for seed in range(10):
            drop = draw_drop(scenario, seed)
            masked = mask_csi(drop, relative_threshold(drop, threshold_db))
            wmmse, _ = wmmse_solve(masked, WmmseOptions(max_retries=3, mode=mode, rng_seed=seed))
            ssocp, _ = ssocp_solve(masked, SsocpOptions(max_retries=3, mode=mode, rng_seed=seed))
            wmmse_rates.append(evaluate(drop, masked, wmmse, mode).rate_true)
            ssocp_rates.append(evaluate(drop, masked, ssocp, mode).rate_true)
        assert abs(np.mean(wmmse_rates) - np.mean(ssocp_rates)) <= 0.02 * np.mean(ssocp_rates)
