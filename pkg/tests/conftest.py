import math

import numpy as np
import pytest

from jtcomp.system.feedback import CooperationMap, full_cooperation, mask_csi, relative_threshold
from jtcomp.system.scenario import ChannelRealization, build_scenario, draw_drop

SCENARIO_CONFIG = dict(num_bs=3, n_t=1, num_users=3, cell_radius_m=500, drop_radius_m=50, cell_edge_snr_db=15,
                       shadow_sigma_db=8, pathloss_exponent=3.5, bandwidth_hz=10e6, temperature_k=290)


def make_scenario(**changes):
    return build_scenario(dict(SCENARIO_CONFIG, **changes))


def make_realization(h, noise=1.0, max_power=1.0, lambda_sq=None, seed=0):
    """Realization from explicit channels h[b, u, k]; lambda^2 defaults to the per-antenna channel power."""
    h = np.array(h, dtype=complex)
    if h.ndim == 2:
        h = h[:, :, None]
    if lambda_sq is None:
        lambda_sq = np.maximum(np.mean(np.abs(h) ** 2, axis=2), 1e-12)
    num_bs, num_users, _ = h.shape
    return ChannelRealization(bs_positions=np.zeros((num_bs, 2)), user_positions=np.zeros((num_users, 2)), h=h,
                              lambda_sq=np.array(lambda_sq, dtype=float), noise_power=float(noise),
                              max_power=float(max_power), seed=seed)


def make_masked(h, noise=1.0, max_power=1.0, mask=None, weights=None, lambda_sq=None):
    realization = make_realization(h, noise, max_power, lambda_sq)
    coop = full_cooperation(realization.num_bs, realization.num_users) if mask is None \
        else CooperationMap(np.asarray(mask, dtype=bool), 0.0)
    return realization, mask_csi(realization, coop, weights)


def random_channels(rng, num_bs, num_users, n_t):
    shape = (num_bs, num_users, n_t)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def scenario():
    return make_scenario()


@pytest.fixture
def drop(scenario):
    return draw_drop(scenario, 7)


@pytest.fixture
def limited(drop):
    """The drop at a 3 dB threshold."""
    return drop, mask_csi(drop, relative_threshold(drop, 3.0))
