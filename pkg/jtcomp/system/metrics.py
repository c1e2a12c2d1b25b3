"""SINR models, weighted sum rate and the MSE-side quantities.

Weights are stored densely as w[b, u, k] (BS b, user u, antenna k) together with a boolean
support; entries outside the support are exact zeros. Cross terms are
cross[u, i] = sum_b h[b, u] . w[b, i], the amplitude user u receives of user i's stream.

Design models of the interference seen by user u from stream i:
- full / limited_zero: only the fed-back channels, unknown links count as zero,
- limited_lambda:      fed-back part plus |B_i \\ B_u| * sum_{b in B_i \\ B_u} lambda_bu^2 ||w_bi||^2,
- limited_naive:       unknown channels replaced by sqrt(lambda_bu^2) * (1, ..., 1).
"""
import dataclasses
import enum
import logging

import numpy as np

from jtcomp.errors import DimensionError, SupportError

logger = logging.getLogger(__name__)

POWER_SLACK = 1e-6


class SinrMode(str, enum.Enum):
    FULL = "full"
    LIMITED_ZERO = "limited_zero"
    LIMITED_LAMBDA = "limited_lambda"
    LIMITED_NAIVE = "limited_naive"

    @classmethod
    def parse(cls, value):
        try:
            return cls(value) if not isinstance(value, cls) else value
        except ValueError:
            raise ValueError("unknown SINR mode '{}', expected one of {}".format(value, [m.value for m in cls]))


@dataclasses.dataclass(frozen=True, eq=False)
class Precoder:
    weights: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=complex)
        support = np.array(self.support, dtype=bool)
        if weights.ndim != 3 or weights.shape[:2] != support.shape:
            raise DimensionError("precoder weights must be num_bs x num_users x n_t matching the support")
        outside = np.abs(weights[~support]).max(initial=0.0)
        if outside > 0:
            raise SupportError("precoder has weights outside its support (max magnitude {:g})".format(outside))
        weights.setflags(write=False)
        support.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "support", support)

    @classmethod
    def zeros(cls, coop, n_t):
        return cls(np.zeros(coop.mask.shape + (n_t,), dtype=complex), coop.mask)

    @classmethod
    def on_support(cls, weights, support):
        """Build a precoder from dense weights, zeroing everything outside `support`."""
        support = np.asarray(support, dtype=bool)
        return cls(np.where(support[:, :, None], weights, 0), support)

    @property
    def n_t(self):
        return self.weights.shape[2]

    @property
    def weight_count(self):
        """Number of complex precoding weights that have to be sent over the backhaul."""
        return int(self.support.sum()) * self.n_t

    def per_antenna_power(self):
        """sum_{u in U_b} |w_bu^(k)|^2 for every BS b and antenna k."""
        return np.sum(np.abs(self.weights) ** 2, axis=1)

    def scaled(self, factor):
        return Precoder(self.weights * factor, self.support)

    def scaled_to_power(self, max_power):
        """Scale the whole matrix so that the loudest antenna transmits at exactly `max_power`."""
        loudest = self.per_antenna_power().max()
        if loudest <= 0:
            return self
        return self.scaled(np.sqrt(max_power / loudest))

    def validate(self, coop, max_power):
        if self.support.shape != coop.mask.shape:
            raise DimensionError("precoder and cooperation map have different shapes")
        if (self.support & ~coop.mask).any():
            raise SupportError("precoder support is not contained in the cooperation map")
        loudest = self.per_antenna_power().max(initial=0.0)
        if loudest > max_power * (1 + POWER_SLACK):
            raise ValueError("per-antenna power {:g} exceeds P_max {:g}".format(loudest, max_power))
        return self


@dataclasses.dataclass(frozen=True)
class SinrReport:
    gamma_true: np.ndarray
    gamma_design: np.ndarray
    rate_true: float
    rate_design: float
    mode: SinrMode


def _check_support(masked, precoder):
    if precoder.support.shape != masked.coop.mask.shape or precoder.n_t != masked.n_t:
        raise DimensionError("precoder does not match the CSI dimensions")
    if (precoder.support & ~masked.coop.mask).any():
        raise SupportError("precoder has weights on links without fed-back CSI")


def _cross(h, weights):
    return np.einsum('buk,...bik->...ui', h, weights)


def _offdiag_power(cross):
    power = np.abs(cross) ** 2
    num_users = power.shape[-1]
    return np.sum(power * (1 - np.eye(num_users)), axis=-1)


def _diag(cross):
    return np.diagonal(cross, axis1=-2, axis2=-1)


def unknown_links(coop):
    """unknown[b, u, i]: BS b serves user i but user u never fed back its channel to b (b in B_i \\ B_u)."""
    return coop.mask[:, None, :] & ~coop.mask[:, :, None]


def _lambda_term(masked, weights):
    unknown = unknown_links(masked.coop)
    count = unknown.sum(axis=0)
    power = np.sum(np.abs(weights) ** 2, axis=-1)
    return np.einsum('bui,bu,...bi->...u', unknown * count[None, :, :], masked.lambda_sq, power)


def _naive_cross(masked, weights):
    unknown = unknown_links(masked.coop)
    substitute = np.einsum('bui,bu,...bi->...ui', unknown, np.sqrt(masked.lambda_sq), weights.sum(axis=-1))
    return _cross(masked.known, weights) + substitute


def _design_terms(masked, weights, mode):
    """(signal amplitude, interference power) per user under the design model `mode`."""
    mode = SinrMode.parse(mode)
    if mode is SinrMode.FULL and not masked.coop.is_full:
        raise ValueError("mode 'full' needs full CSI feedback (threshold +inf)")
    cross = _cross(masked.known, weights)
    signal = _diag(cross)
    if mode is SinrMode.LIMITED_NAIVE:
        interference = _offdiag_power(_naive_cross(masked, weights))
    else:
        interference = _offdiag_power(cross)
        if mode is SinrMode.LIMITED_LAMBDA:
            interference = interference + _lambda_term(masked, weights)
    return signal, interference


def design_sinr_batch(masked, weights, mode):
    """Design-model SINR of a stack of weight arrays [..., B, U, N_T]; support is taken from the weights."""
    signal, interference = _design_terms(masked, weights, mode)
    return np.abs(signal) ** 2 / (interference + masked.noise_power)


def design_interference(masked, weights, mode):
    """Interference plus noise power per user under the design model `mode`."""
    return _design_terms(masked, weights, mode)[1] + masked.noise_power


def design_sinr(masked, precoder, mode):
    _check_support(masked, precoder)
    return design_sinr_batch(masked, precoder.weights, mode)


def pessimistic_sinr(masked, precoder):
    """SINR with the unknown interference replaced by its Cauchy-Schwarz bound on the long-term statistics."""
    return design_sinr(masked, precoder, SinrMode.LIMITED_LAMBDA)


def naive_pl_sinr(masked, precoder):
    return design_sinr(masked, precoder, SinrMode.LIMITED_NAIVE)


def true_sinr(realization, precoder):
    """SINR actually experienced over the full channels, including links that were never fed back."""
    if precoder.weights.shape != realization.h.shape:
        raise DimensionError("precoder is {}, channel is {}".format(precoder.weights.shape, realization.h.shape))
    cross = _cross(realization.h, precoder.weights)
    return np.abs(_diag(cross)) ** 2 / (_offdiag_power(cross) + realization.noise_power)


def weighted_sum_rate(gamma, weights):
    gamma = np.asarray(gamma, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if (gamma < 0).any() or (weights < 0).any():
        raise ValueError("SINRs and user weights must be non-negative")
    return float(np.sum(weights * np.log2(1 + gamma), axis=-1))


def rate_batch(gamma, weights):
    return np.sum(np.asarray(weights) * np.log2(1 + gamma), axis=-1)


def signals(masked, precoder):
    """sum_{b in B_u} h_bu w_bu for every user."""
    _check_support(masked, precoder)
    return _diag(_cross(masked.known, precoder.weights))


def receive_variances(masked, precoder, mode=SinrMode.LIMITED_LAMBDA):
    """Pessimistic receive variance c_u = N_0 + |signal|^2 + interference for every user."""
    _check_support(masked, precoder)
    signal, interference = _design_terms(masked, precoder.weights, mode)
    return masked.noise_power + np.abs(signal) ** 2 + interference


def receive_variance(masked, precoder, user, mode=SinrMode.LIMITED_LAMBDA):
    return float(receive_variances(masked, precoder, mode)[user])


def mmse_receiver(masked, precoder, user, mode=SinrMode.LIMITED_LAMBDA):
    """a*_u = conj(signal_u) / c_u."""
    signal = signals(masked, precoder)[user]
    return complex(np.conj(signal) / receive_variance(masked, precoder, user, mode))


def user_mse(masked, precoder, receiver, user, mode=SinrMode.LIMITED_LAMBDA):
    """xi_u = 1 - 2 Re{a_u s_u} + |a_u|^2 c_u."""
    signal = signals(masked, precoder)[user]
    variance = receive_variance(masked, precoder, user, mode)
    return float(1 - 2 * np.real(receiver * signal) + abs(receiver) ** 2 * variance)


def linearizing_coefficient(mse):
    if not mse > 0:
        raise ValueError("the MSE must be positive to be linearized, got {}".format(mse))
    return 1.0 / mse


def evaluate(realization, masked, precoder, mode):
    """Actual rate over the full channels and expected rate under the design model."""
    gamma_true = true_sinr(realization, precoder)
    gamma_design = design_sinr(masked, precoder, mode)
    return SinrReport(gamma_true=gamma_true, gamma_design=gamma_design,
                      rate_true=weighted_sum_rate(gamma_true, masked.weights),
                      rate_design=weighted_sum_rate(gamma_design, masked.weights),
                      mode=SinrMode.parse(mode))
