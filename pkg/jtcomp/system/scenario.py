"""Cluster geometry, channel synthesis and link-budget calibration.

A drop places `num_bs` base stations on a circle of radius `cell_radius` around the cluster
center and scatters the cell-edge users around that center. Every link gets a pathloss power
gain, a log-normal shadow gain drawn once per drop, and i.i.d. CN(0, 1) fast fading per antenna.
"""
import dataclasses
import logging
import math

import numpy as np

from jtcomp.errors import ConfigurationError
from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)

BOLTZMANN = 1.38e-23
REFERENCE_DISTANCE = 1.0
USER_DROPS = ("disk", "ring")

_REQUIRED_KEYS = ("num_bs", "n_t", "num_users", "cell_radius_m", "drop_radius_m", "cell_edge_snr_db",
                  "shadow_sigma_db", "pathloss_exponent", "bandwidth_hz", "temperature_k")


@dataclasses.dataclass(frozen=True)
class Scenario:
    num_bs: int
    n_t: int
    num_users: int
    cell_radius: float
    drop_radius: float
    cell_edge_snr_db: float
    shadow_sigma_db: float
    pathloss_exponent: float
    noise_power: float
    max_power: float
    user_weights: tuple
    drop_inner_radius: float = 0.0
    user_drop: str = "disk"
    bs_angle_offset_deg: float = 0.0

    def __post_init__(self):
        for key, value in (("num_bs", self.num_bs), ("n_t", self.n_t), ("num_users", self.num_users)):
            if int(value) != value or value < 1:
                raise ConfigurationError(key, "{} must be a positive integer, got {}".format(key, value))
        if not self.cell_radius > 0:
            raise ConfigurationError("cell_radius_m", "cell radius must be positive")
        if not 0 <= self.drop_inner_radius <= self.drop_radius < self.cell_radius:
            raise ConfigurationError("drop_radius_m", "need 0 <= drop_inner_radius <= drop_radius < cell_radius")
        if self.user_drop not in USER_DROPS:
            raise ConfigurationError("user_drop", "user_drop must be one of {}".format(USER_DROPS))
        if not self.noise_power > 0:
            raise ConfigurationError("noise_power_w", "noise power must be positive")
        if not self.max_power > 0 or math.isinf(self.max_power):
            raise ConfigurationError("cell_edge_snr_db", "per-antenna power must be positive and finite")
        if self.shadow_sigma_db < 0:
            raise ConfigurationError("shadow_sigma_db", "shadow fading deviation must be >= 0 dB")
        if len(self.user_weights) != self.num_users:
            raise ConfigurationError("user_weights", "expected {} user weights, got {}".format(
                self.num_users, len(self.user_weights)))
        if any(w < 0 for w in self.user_weights):
            raise ConfigurationError("user_weights", "user weights must be non-negative")

    @property
    def weights(self):
        return np.asarray(self.user_weights, dtype=float)


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One drop. Arrays are indexed [b, u] (and [b, u, k] for the antenna k of BS b)."""
    bs_positions: np.ndarray
    user_positions: np.ndarray
    h: np.ndarray
    lambda_sq: np.ndarray
    noise_power: float
    max_power: float
    seed: int

    def __post_init__(self):
        for arr in (self.bs_positions, self.user_positions, self.h, self.lambda_sq):
            arr.setflags(write=False)

    @property
    def num_bs(self):
        return self.h.shape[0]

    @property
    def num_users(self):
        return self.h.shape[1]

    @property
    def n_t(self):
        return self.h.shape[2]

    def to_bytes(self):
        """Canonical serialization; identical drops give identical bytes."""
        header = np.array([self.seed, self.num_bs, self.num_users, self.n_t], dtype=np.uint64).tobytes()
        scalars = np.array([self.noise_power, self.max_power], dtype=np.float64).tobytes()
        return b"".join([header, scalars] + [np.ascontiguousarray(a).tobytes() for a in
                                            (self.bs_positions, self.user_positions, self.h, self.lambda_sq)])


def noise_power(temperature, bandwidth):
    """Thermal noise power k*T*B in Watts."""
    if not temperature > 0 or not bandwidth > 0:
        raise ValueError("temperature and bandwidth must be positive")
    return BOLTZMANN * temperature * bandwidth


def pathloss_gain(distance, exponent, d_ref=REFERENCE_DISTANCE):
    """Power gain (d / d_ref)^-exponent; distances below d_ref are clamped to d_ref."""
    return np.power(np.maximum(np.asarray(distance, dtype=float), d_ref) / d_ref, -exponent)


def _edge_power(snr_db, noise, radius, exponent):
    if math.isinf(snr_db) and snr_db < 0:
        raise ConfigurationError("cell_edge_snr_db", "a cell-edge SNR of -inf dB leaves no transmit power")
    return 10 ** (snr_db / 10) * noise / float(pathloss_gain(radius, exponent))


def calibrate_power(scenario):
    """Per-antenna power such that one antenna at full power, unit shadow and no fading
    reaches the configured SNR at the cell edge."""
    return _edge_power(scenario.cell_edge_snr_db, scenario.noise_power, scenario.cell_radius,
                       scenario.pathloss_exponent)


def build_scenario(config):
    """Build a Scenario from a flat key-value mapping (a pyhocon ConfigTree or a dict)."""
    missing = [key for key in _REQUIRED_KEYS if config.get(key, None) is None]
    if missing:
        raise ConfigurationError(missing[0], "missing configuration key '{}'".format(missing[0]))

    def number(key, cast=float):
        try:
            return cast(config.get(key))
        except (TypeError, ValueError):
            raise ConfigurationError(key, "configuration key '{}' must be numeric".format(key))

    num_users = number("num_users", int)
    weights = config.get("user_weights", None) or [1.0] * max(num_users, 0)
    try:
        weights = tuple(float(w) for w in weights)
    except (TypeError, ValueError):
        raise ConfigurationError("user_weights", "user weights must be numeric")

    if config.get("noise_power_w", None) is not None:
        noise = number("noise_power_w")
    else:
        try:
            noise = noise_power(number("temperature_k"), number("bandwidth_hz"))
        except ValueError as e:
            raise ConfigurationError("temperature_k", str(e))
    snr_db = number("cell_edge_snr_db")
    radius = number("cell_radius_m")
    exponent = number("pathloss_exponent")
    if config.get("max_power_w", None) is not None:
        power = number("max_power_w")
    elif radius > 0:
        power = _edge_power(snr_db, noise, radius, exponent)
    else:
        raise ConfigurationError("cell_radius_m", "cell radius must be positive")

    scenario = Scenario(
        num_bs=number("num_bs", int), n_t=number("n_t", int), num_users=num_users,
        cell_radius=radius, drop_radius=number("drop_radius_m"),
        cell_edge_snr_db=snr_db, shadow_sigma_db=number("shadow_sigma_db"), pathloss_exponent=exponent,
        noise_power=noise, max_power=power, user_weights=weights,
        drop_inner_radius=float(config.get("drop_inner_radius_m", 0.0)),
        user_drop=str(config.get("user_drop", "disk")),
        bs_angle_offset_deg=float(config.get("bs_angle_offset_deg", 0.0)))
    logger.debug(__("Built scenario {}", scenario))
    return scenario


def scenario_with(scenario, **changes):
    """Copy of `scenario` with `changes`; P_max is recalibrated when the edge SNR changes
    unless `max_power` is given explicitly."""
    recalibrate = "cell_edge_snr_db" in changes and "max_power" not in changes
    updated = dataclasses.replace(scenario, **changes)
    if recalibrate:
        updated = dataclasses.replace(updated, max_power=calibrate_power(updated))
    return updated


def bs_layout(scenario):
    angles = np.deg2rad(scenario.bs_angle_offset_deg) + 2 * np.pi * np.arange(scenario.num_bs) / scenario.num_bs
    return scenario.cell_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _fast_fading(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def draw_drop(scenario, seed):
    """Draw the user positions, shadow gains and fast fading of one drop, deterministically from `seed`."""
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    rng = np.random.default_rng(seed)
    num_bs, num_users, n_t = scenario.num_bs, scenario.num_users, scenario.n_t

    inner = scenario.drop_inner_radius if scenario.user_drop == "ring" else 0.0
    radius = np.sqrt(rng.uniform(inner ** 2, scenario.drop_radius ** 2, size=num_users))
    angle = rng.uniform(0, 2 * np.pi, size=num_users)
    users = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    bss = bs_layout(scenario)

    distance = np.linalg.norm(bss[:, None, :] - users[None, :, :], axis=2)
    shadow_db = scenario.shadow_sigma_db * rng.standard_normal((num_bs, num_users))
    lambda_sq = pathloss_gain(distance, scenario.pathloss_exponent) * 10 ** (shadow_db / 10)
    h = np.sqrt(lambda_sq)[:, :, None] * _fast_fading(rng, (num_bs, num_users, n_t))

    return ChannelRealization(bs_positions=bss, user_positions=users, h=h, lambda_sq=lambda_sq,
                              noise_power=scenario.noise_power, max_power=scenario.max_power, seed=int(seed))


def redraw_fast_fading(realization, rng):
    """Same long-term statistics, fresh CN(0, 1) fast fading."""
    f = _fast_fading(rng, realization.h.shape)
    return dataclasses.replace(realization, h=np.sqrt(realization.lambda_sq)[:, :, None] * f)


def rescale_for_conditioning(realization):
    """Divide all channels by the weakest link amplitude and the noise power by its square.

    Every SINR is unchanged. Returns the scaled realization and the amplitude factor.
    """
    factor = float(np.sqrt(np.min(realization.lambda_sq)))
    scaled = dataclasses.replace(realization, h=realization.h / factor,
                                 lambda_sq=realization.lambda_sq / factor ** 2,
                                 noise_power=realization.noise_power / factor ** 2)
    return scaled, factor
