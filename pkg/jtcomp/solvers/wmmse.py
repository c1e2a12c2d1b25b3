"""Weighted-MSE alternating optimization.

Each outer iteration updates, in order, the precoder (a convex program for fixed receivers and
MSE weights), the receive variances c_u, the MMSE receivers a_u and the weights d_u = 1 / xi_u.
At the MMSE receiver xi_u = 1 / (1 + gamma_u), so -sum_u alpha_u log2 xi_u is the design rate of
the current precoder and never decreases.
"""
import dataclasses
import logging
import math

import numpy as np

from jtcomp.errors import ConfigurationError, SolverFailure
from jtcomp.solvers.conic import Affine, ConicProgram, solve
from jtcomp.solvers.ssocp import SolveTrace, init_precoder
from jtcomp.solvers.variables import PrecoderVariables, design_channels, interference_terms, signal_of
from jtcomp.system.metrics import Precoder, SinrMode, design_interference
from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class WmmseOptions:
    max_retries: int = 1
    max_iter: int = 200
    rel_tol: float = 1e-4
    mode: SinrMode = SinrMode.LIMITED_LAMBDA
    rng_seed: object = 0
    backend: object = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SinrMode.parse(self.mode))
        for key in ("max_retries", "max_iter"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigurationError("wmmse." + key, "wmmse.{} must be a positive integer".format(key))
        if not self.rel_tol > 0:
            raise ConfigurationError("wmmse.rel_tol", "wmmse.rel_tol must be positive")

    @classmethod
    def from_config(cls, config, **overrides):
        values = {key: config.get(key) for key in ("max_retries", "max_iter", "rel_tol", "mode") if key in config}
        values.update(overrides)
        return cls(**values)


@dataclasses.dataclass(frozen=True)
class ReceiverState:
    variance: np.ndarray
    receiver: np.ndarray
    mse: np.ndarray
    coefficient: np.ndarray

    def metric(self, weights):
        """-sum_u alpha_u log2 xi_u"""
        return float(-np.sum(weights * np.log2(self.mse)))


def receiver_update(masked, precoder, mode=SinrMode.LIMITED_LAMBDA):
    """Receive variances, MMSE receivers, their MSEs and the linearizing coefficients d_u = 1 / xi_u."""
    weights = precoder.weights if isinstance(precoder, Precoder) else np.asarray(precoder)
    signal = np.einsum('buk,buk->u', masked.known, weights)
    variance = design_interference(masked, weights, mode) + np.abs(signal) ** 2
    receiver = np.conj(signal) / variance
    mse = 1 - 2 * np.real(receiver * signal) + np.abs(receiver) ** 2 * variance
    return ReceiverState(variance, receiver, mse, 1 / mse)


def wmmse_subproblem(masked, receivers, coefficients, mode=SinrMode.LIMITED_LAMBDA, backend=None):
    """Precoder minimizing sum_u alpha_u d_u xi_u(w) for fixed receivers a_u, under per-antenna power.

    Returns (Precoder or None, ConicSolution); None when the solver did not report an optimum.
    """
    receivers = np.asarray(receivers, dtype=complex)
    coefficients = np.asarray(coefficients, dtype=float)
    if (coefficients < 0).any():
        raise ValueError("MSE weights d_u must be non-negative")
    design_channels(masked, mode)
    if not np.any(receivers):
        return Precoder.zeros(masked.coop, masked.n_t), None

    program = ConicProgram("wmmse")
    variables = PrecoderVariables(program, masked.coop, masked.n_t)
    variables.add_power_constraints(program, masked.max_power)
    objective = Affine()
    for u in range(masked.num_users):
        factor = masked.weights[u] * coefficients[u]
        a = complex(receivers[u])
        if factor <= 0 or a == 0:
            continue
        t = Affine.var(program.add_variable())
        signal = signal_of(masked, variables, u)
        # t >= factor * (1 - 2 Re(a s) + |a|^2 (|s|^2 + interference + N_0))
        linear = (signal.times(a).re * -2.0 + 1.0 + abs(a) ** 2 * masked.noise_power) * factor
        root = math.sqrt(factor) * abs(a)
        quadratic = [e * root for e in signal.parts() + interference_terms(masked, mode, variables, u)]
        program.add_rotated_soc(quadratic, t - linear, Affine(const=1.0))
        objective = objective + t
    program.minimize(objective)
    solution = solve(program, backend)
    if not solution.ok:
        return None, solution
    weights = variables.extract(solution.x)
    loudest = np.max(np.sum(np.abs(weights) ** 2, axis=1))
    if loudest > masked.max_power:
        weights = weights * math.sqrt(masked.max_power / loudest)
    return Precoder(weights, masked.coop.mask), solution


def _run_restart(masked, options, restart, seed):
    precoder = init_precoder(masked.coop, masked.max_power, masked.n_t, np.random.default_rng(seed))
    state = receiver_update(masked, precoder, options.mode)
    metric = state.metric(masked.weights)
    objectives = [metric]
    for iteration in range(1, options.max_iter + 1):
        candidate, solution = wmmse_subproblem(masked, state.receiver, state.coefficient, options.mode,
                                               options.backend)
        if candidate is None:
            logger.warning(__("WMMSE restart {} abandoned: {} in iteration {}", restart, solution.status.value,
                              iteration))
            return None, objectives
        new_state = receiver_update(masked, candidate, options.mode)
        new_metric = new_state.metric(masked.weights)
        if new_metric < metric:
            break
        improvement = (new_metric - metric) / max(abs(metric), 1e-12)
        precoder, state, metric = candidate, new_state, new_metric
        objectives.append(metric)
        if improvement < options.rel_tol:
            break
    logger.debug(__("WMMSE restart {}: {} iterations, rate {:.6f}", restart, len(objectives) - 1, metric))
    return precoder.weights, objectives


def wmmse_solve(masked, options=None):
    options = options or WmmseOptions()
    design_channels(masked, options.mode)
    normalized, scale = masked.normalized()
    seed = options.rng_seed if isinstance(options.rng_seed, np.random.SeedSequence) \
        else np.random.SeedSequence(options.rng_seed)

    trace = SolveTrace()
    best = None
    for restart, restart_seed in enumerate(seed.spawn(options.max_retries)):
        weights, objectives = _run_restart(normalized, options, restart, restart_seed)
        trace.add_restart(objectives, weights is None)
        if weights is not None and (best is None or trace.restart_best[restart] > trace.best):
            best, trace.best_restart = weights, restart
    if best is None:
        trace.status = "failed"
        raise SolverFailure("all {} WMMSE restarts failed".format(options.max_retries))
    trace.status = "converged"
    return Precoder(best * scale, masked.coop.mask).validate(masked.coop, masked.max_power), trace
