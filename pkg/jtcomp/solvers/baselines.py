"""Zero-forcing and particle-swarm reference precoders.

Both only ever rescale the whole precoding matrix to meet the per-antenna power limit, so the
loudest antenna transmits at P_max and the direction of the matrix is kept.
"""
import dataclasses
import logging

import numpy as np
import scipy.linalg

from jtcomp.errors import ConfigurationError, RankDeficientError
from jtcomp.solvers.ssocp import SolveTrace, init_precoder
from jtcomp.solvers.variables import design_channels
from jtcomp.system.metrics import Precoder, SinrMode, design_sinr_batch, rate_batch
from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


def aggregated_channel(h):
    """num_users x (num_bs * n_t) matrix, column b * n_t + k holding antenna k of BS b."""
    num_bs, num_users, n_t = h.shape
    return np.transpose(h, (1, 0, 2)).reshape(num_users, num_bs * n_t)


def zf_precoder(realization, max_power=None):
    """W = H^H (H H^H)^-1 with full support, scaled so the loudest antenna is at `max_power`."""
    max_power = realization.max_power if max_power is None else max_power
    h = aggregated_channel(realization.h)
    num_users, antennas = h.shape
    if num_users > antennas:
        raise RankDeficientError("zero forcing needs num_users <= total antennas ({} > {})".format(
            num_users, antennas))
    gram = h @ h.conj().T
    if np.linalg.cond(gram) > MAX_CONDITION:
        raise RankDeficientError("aggregated channel is ill-conditioned (cond {:.3g})".format(np.linalg.cond(gram)))
    try:
        w = h.conj().T @ scipy.linalg.solve(gram, np.eye(num_users), assume_a="her")
    except scipy.linalg.LinAlgError as e:
        raise RankDeficientError("aggregated channel is rank deficient: {}".format(e))
    weights = np.transpose(w.reshape(realization.num_bs, realization.n_t, num_users), (0, 2, 1))
    support = np.ones((realization.num_bs, num_users), dtype=bool)
    return Precoder(weights, support).scaled_to_power(max_power)


@dataclasses.dataclass(frozen=True)
class PsoOptions:
    swarm: int = 40
    iterations: int = 300
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    restarts: int = 5
    mode: SinrMode = SinrMode.LIMITED_ZERO
    rng_seed: object = 0
    velocity_clamp: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", SinrMode.parse(self.mode))
        for key in ("swarm", "iterations", "restarts"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigurationError("pso." + key, "pso.{} must be a positive integer".format(key))
        if not 0 < self.velocity_clamp <= 1:
            raise ConfigurationError("pso.velocity_clamp", "pso.velocity_clamp is a fraction of the box width")

    @classmethod
    def from_config(cls, config, **overrides):
        keys = ("swarm", "iterations", "inertia", "cognitive", "social", "restarts", "mode", "velocity_clamp")
        values = {key: config.get(key) for key in keys if key in config}
        values.update(overrides)
        return cls(**values)


class _Swarm(object):
    """Particles are the stacked real and imaginary parts of the active precoder entries."""

    def __init__(self, masked, mode):
        self.masked = masked
        self.mode = mode
        self.entries = tuple(np.nonzero(np.broadcast_to(masked.coop.mask[:, :, None], masked.known.shape)))
        self.dimensions = 2 * len(self.entries[0])

    def weights(self, positions):
        positions = np.atleast_2d(positions)
        weights = np.zeros((positions.shape[0],) + self.masked.known.shape, dtype=complex)
        weights[(slice(None),) + self.entries] = positions[:, 0::2] + 1j * positions[:, 1::2]
        return weights

    def positions(self, precoder):
        values = precoder.weights[self.entries]
        return np.stack([values.real, values.imag], axis=-1).reshape(-1)

    def scaled(self, positions):
        weights = self.weights(positions)
        loudest = np.max(np.sum(np.abs(weights) ** 2, axis=2), axis=(1, 2))
        scale = np.sqrt(self.masked.max_power / np.where(loudest > 0, loudest, 1.0))
        return weights * scale[:, None, None, None]

    def fitness(self, positions):
        gamma = design_sinr_batch(self.masked, self.scaled(positions), self.mode)
        return rate_batch(gamma, self.masked.weights)


def _run_restart(swarm, options, rng):
    masked = swarm.masked
    low, high = -np.sqrt(masked.max_power), np.sqrt(masked.max_power)
    v_max = options.velocity_clamp * (high - low)
    x = np.stack([swarm.positions(init_precoder(masked.coop, masked.max_power, masked.n_t, rng))
                  for _ in range(options.swarm)])
    v = np.zeros_like(x)
    y = swarm.fitness(x)
    pbest_x, pbest_y = x.copy(), y.copy()
    gbest = int(np.argmax(pbest_y))
    gbest_x, gbest_y = pbest_x[gbest].copy(), float(pbest_y[gbest])
    history = [gbest_y]

    for _ in range(options.iterations):
        pv = options.cognitive * rng.uniform(0.0, 1.0, x.shape) * (pbest_x - x)
        gv = options.social * rng.uniform(0.0, 1.0, x.shape) * (gbest_x - x)
        v = np.clip(options.inertia * v + pv + gv, -v_max, v_max)
        x = np.clip(x + v, low, high)
        y = swarm.fitness(x)

        better = y > pbest_y
        pbest_x[better] = x[better]
        pbest_y[better] = y[better]
        gbest = int(np.argmax(pbest_y))
        if pbest_y[gbest] > gbest_y:
            gbest_x, gbest_y = pbest_x[gbest].copy(), float(pbest_y[gbest])
        history.append(gbest_y)
    return gbest_x, history


def pso_solve(masked, options=None):
    """Multi-start global-best PSO on the design-model weighted sum rate."""
    options = options or PsoOptions()
    design_channels(masked, options.mode)
    normalized, scale = masked.normalized()
    swarm = _Swarm(normalized, options.mode)
    seed = options.rng_seed if isinstance(options.rng_seed, np.random.SeedSequence) \
        else np.random.SeedSequence(options.rng_seed)

    trace = SolveTrace()
    best = None
    for restart, restart_seed in enumerate(seed.spawn(options.restarts)):
        position, history = _run_restart(swarm, options, np.random.default_rng(restart_seed))
        trace.add_restart(history, False)
        logger.debug(__("PSO restart {}: rate {:.6f}", restart, history[-1]))
        if best is None or trace.restart_best[restart] > trace.best:
            best, trace.best_restart = position, restart
    trace.status = "converged"
    weights = swarm.scaled(best)[0] * scale
    return Precoder(weights, masked.coop.mask).validate(masked.coop, masked.max_power), trace
