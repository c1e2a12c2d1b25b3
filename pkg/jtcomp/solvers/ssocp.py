"""Successive SOCP maximization of the weighted sum rate.

Every iteration replaces the non-convex SINR constraint of each user by an inner convex
approximation around the current precoder: the quadratic-over-linear signal term is
under-estimated by its first-order expansion, the interference plus noise is bounded by a
second-order cone, and the weighted objective prod_u (1 + gamma_u)^alpha_u is maximized through
the geometric mean of the epigraph variables t_u. The current precoder is feasible for the next
program, so the recomputed design rate never decreases within a restart.
"""
import concurrent.futures
import dataclasses
import logging
import math
from fractions import Fraction

import numpy as np

from jtcomp.errors import ConfigurationError, SolverFailure
from jtcomp.solvers.conic import Affine, ConicProgram, geo_mean_epigraph, solve
from jtcomp.solvers.variables import PrecoderVariables, design_channels, interference_terms, signal_of
from jtcomp.system.metrics import Precoder, SinrMode, design_interference, rate_batch
from jtcomp.util.async_lookahead_iterator import AsyncLookaheadIterator
from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)

MIN_GAMMA = 1e-6
MONOTONE_SLACK = 1e-6


@dataclasses.dataclass(frozen=True)
class SsocpOptions:
    max_retries: int = 5
    max_iter: int = 30
    rel_tol: float = 1e-3
    mode: SinrMode = SinrMode.LIMITED_LAMBDA
    rng_seed: object = 0
    workers: int = 1
    backend: object = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SinrMode.parse(self.mode))
        for key in ("max_retries", "max_iter", "workers"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigurationError("ssocp." + key, "ssocp.{} must be a positive integer".format(key))
        if not self.rel_tol > 0:
            raise ConfigurationError("ssocp.rel_tol", "ssocp.rel_tol must be positive")

    @classmethod
    def from_config(cls, config, **overrides):
        values = {key: config.get(key) for key in ("max_retries", "max_iter", "rel_tol", "mode") if key in config}
        values.update(overrides)
        return cls(**values)


@dataclasses.dataclass
class SolveTrace:
    """Design-model weighted sum rate after every iteration of every restart (iteration 0 is the start point)."""
    objectives: list = dataclasses.field(default_factory=list)
    restart_best: list = dataclasses.field(default_factory=list)
    failures: list = dataclasses.field(default_factory=list)
    best_restart: int = -1
    status: str = "pending"

    @property
    def iterations(self):
        return sum(max(len(o) - 1, 0) for o in self.objectives)

    @property
    def restarts_used(self):
        return sum(1 for best in self.restart_best if not math.isnan(best))

    @property
    def best(self):
        return self.restart_best[self.best_restart] if self.best_restart >= 0 else math.nan

    def rows(self):
        """(restart, iteration, objective) for every recorded iterate."""
        for restart, objectives in enumerate(self.objectives):
            for iteration, objective in enumerate(objectives):
                yield restart, iteration, objective

    def add_restart(self, objectives, failed):
        self.objectives.append(list(objectives))
        self.restart_best.append(math.nan if failed or not objectives else max(objectives))
        if failed:
            self.failures.append((len(self.objectives) - 1, len(objectives)))


def init_precoder(coop, max_power, n_t, rng):
    """Random CN(0, 1) weights on the cooperation map, each BS scaled so its loudest antenna is at `max_power`."""
    shape = coop.mask.shape + (n_t,)
    weights = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    weights = np.where(coop.mask[:, :, None], weights, 0)
    loudest = np.max(np.sum(np.abs(weights) ** 2, axis=1), axis=1)
    scale = np.sqrt(max_power / np.where(loudest > 0, loudest, 1.0))
    return Precoder(weights * scale[:, None, None], coop.mask)


@dataclasses.dataclass(frozen=True)
class SignalLinearization:
    """First-order under-estimator of (p^2 + q^2) / beta + 1 around (p_tilde, q_tilde, beta_tilde),
    and the tangent over-estimator of t^(1/alpha) around t_tilde."""
    p: np.ndarray
    q: np.ndarray
    beta: np.ndarray
    t: np.ndarray
    alpha: np.ndarray

    def __call__(self, p, q, beta):
        return 2 * (self.p * p + self.q * q) / self.beta - (self.p ** 2 + self.q ** 2) * beta / self.beta ** 2 + 1

    def lhs(self, user, p, q, beta):
        """The expansion of `user` as an affine form in the affine forms p, q and beta."""
        pt, qt, bt = float(self.p[user]), float(self.q[user]), float(self.beta[user])
        return p * (2 * pt / bt) + q * (2 * qt / bt) - beta * ((pt ** 2 + qt ** 2) / bt ** 2) + 1.0

    def rhs(self, user, t):
        """t^(1/alpha) for alpha = 1, its tangent upper bound for alpha > 1."""
        alpha = float(self.alpha[user])
        if alpha == 1:
            return t
        if alpha < 1:
            raise ValueError("no affine upper bound of t^(1/alpha) for alpha < 1")
        tt = float(self.t[user])
        return (t - tt) * (tt ** (1 / alpha - 1) / alpha) + tt ** (1 / alpha)

    def tightness(self):
        """LHS minus t^(1/alpha) at the expansion point; zero when t_tilde = 1 + gamma_tilde."""
        return (self.p ** 2 + self.q ** 2) / self.beta + 1 - self.t ** (1 / self.alpha)


def linearize_signal(p_tilde, q_tilde, beta_tilde, t_tilde=None, alpha=None):
    beta_tilde = np.atleast_1d(np.asarray(beta_tilde, dtype=float))
    if (beta_tilde <= 0).any():
        raise ValueError("expansion point needs beta > 0, got {}".format(beta_tilde))
    p_tilde = np.atleast_1d(np.asarray(p_tilde, dtype=float))
    q_tilde = np.atleast_1d(np.asarray(q_tilde, dtype=float))
    if t_tilde is None:
        t_tilde = (p_tilde ** 2 + q_tilde ** 2) / beta_tilde + 1
    t_tilde = np.atleast_1d(np.asarray(t_tilde, dtype=float))
    if (t_tilde < 1).any():
        raise ValueError("expansion point needs t >= 1, got {}".format(t_tilde))
    alpha = np.ones_like(t_tilde) if alpha is None else np.atleast_1d(np.asarray(alpha, dtype=float))
    return SignalLinearization(p_tilde, q_tilde, beta_tilde, t_tilde, alpha)


def interference_soc(masked, mode, user, variables, beta):
    """(head, bound) of ||(r, sqrt(N_0), (beta - 1) / 2)|| <= (beta + 1) / 2, i.e. |r|^2 + N_0 <= beta."""
    beta = Affine.of(beta)
    head = interference_terms(masked, mode, variables, user)
    head += [Affine(const=math.sqrt(masked.noise_power)), (beta - 1.0) * 0.5]
    return head, (beta + 1.0) * 0.5


def expansion_point(masked, weights, mode):
    """(p, q, beta, gamma) of the current precoder under the design model."""
    signal = np.einsum('buk,buk->u', masked.known, weights)
    beta = design_interference(masked, weights, mode)
    return signal.real, signal.imag, beta, np.abs(signal) ** 2 / beta


def _build_program(masked, mode, linearization, name):
    program = ConicProgram(name)
    variables = PrecoderVariables(program, masked.coop, masked.n_t)
    variables.add_power_constraints(program, masked.max_power)
    t_vars = []
    for u, alpha in enumerate(masked.weights):
        if alpha <= 0:
            continue
        beta = Affine.var(program.add_variable(lower=masked.noise_power))
        t = Affine.var(program.add_variable(lower=0.0))
        signal = signal_of(masked, variables, u)
        lhs = linearization.lhs(u, signal.re, signal.im, beta)
        if alpha >= 1:
            program.add_le(linearization.rhs(u, t), lhs)
        else:
            exponent = Fraction(float(alpha)).limit_denominator(64)
            root = geo_mean_epigraph(program, [lhs, Affine(const=1.0)],
                                     [exponent.numerator, exponent.denominator - exponent.numerator])
            program.add_le(t, Affine.var(root))
        program.add_soc(*interference_soc(masked, mode, u, variables, beta))
        t_vars.append(t)
    if t_vars:
        program.maximize(Affine.var(geo_mean_epigraph(program, t_vars)))
    return program, variables


def _clip_power(weights, max_power):
    loudest = np.max(np.sum(np.abs(weights) ** 2, axis=1))
    return weights * math.sqrt(max_power / loudest) if loudest > max_power else weights


def _design_rate(masked, weights, mode):
    _, _, _, gamma = expansion_point(masked, weights, mode)
    return float(rate_batch(gamma, masked.weights))


def ssocp_iteration(masked, weights, mode, backend=None, name="ssocp"):
    """One convex approximation step from `weights` on normalized CSI.

    Returns (candidate weights or None, SOCP objective, ConicSolution). The objective is reported as the
    weighted rate sum_u log2 t_u, which never exceeds the recomputed design rate of the candidate.
    """
    p, q, beta, gamma = expansion_point(masked, weights, mode)
    t = np.power(1 + np.maximum(gamma, MIN_GAMMA), np.maximum(masked.weights, 0))
    t = np.where(gamma < MIN_GAMMA, 1 + MIN_GAMMA, t)
    linearization = linearize_signal(p, q, beta, t, np.where(masked.weights > 0, masked.weights, 1.0))
    program, variables = _build_program(masked, mode, linearization, name)
    solution = solve(program, backend)
    if not solution.ok:
        return None, math.nan, solution
    active = int(np.sum(masked.weights > 0))
    bound = active * math.log2(max(solution.objective, 1e-300)) if active else 0.0
    return _clip_power(variables.extract(solution.x), masked.max_power), bound, solution


def _run_restart(masked, options, restart, seed):
    """One restart on normalized CSI; returns (weights or None, objectives)."""
    mode = options.mode
    weights = init_precoder(masked.coop, masked.max_power, masked.n_t, np.random.default_rng(seed)).weights
    rate = _design_rate(masked, weights, mode)
    objectives = [rate]
    for iteration in range(1, options.max_iter + 1):
        candidate, bound, solution = ssocp_iteration(masked, weights, mode, options.backend,
                                                     "ssocp[{}.{}]".format(restart, iteration))
        if candidate is None:
            logger.warning(__("SSOCP restart {} abandoned: {} in iteration {}", restart, solution.status.value,
                              iteration))
            return None, objectives
        new_rate = _design_rate(masked, candidate, mode)
        logger.debug(__("SSOCP restart {} iteration {}: rate {:.6f}, SOCP objective {:.6f}", restart, iteration,
                        new_rate, bound))
        if new_rate < rate:
            if new_rate < rate - MONOTONE_SLACK:
                logger.debug(__("SSOCP restart {}: iterate lost {:.3g}, keeping the previous one", restart,
                                rate - new_rate))
            break
        improvement = (new_rate - rate) / max(abs(rate), 1e-12)
        weights, rate = candidate, new_rate
        objectives.append(rate)
        if improvement < options.rel_tol:
            break
    return weights, objectives


def ssocp_solve(masked, options=None):
    """Best precoder over `options.max_retries` random restarts and the trace of all restarts."""
    options = options or SsocpOptions()
    design_channels(masked, options.mode)
    normalized, scale = masked.normalized()
    seed = options.rng_seed if isinstance(options.rng_seed, np.random.SeedSequence) \
        else np.random.SeedSequence(options.rng_seed)
    seeds = seed.spawn(options.max_retries)

    def run(restart):
        return _run_restart(normalized, options, restart, seeds[restart])

    trace = SolveTrace()
    best = None
    executor = concurrent.futures.ThreadPoolExecutor(options.workers) if options.workers > 1 else None
    try:
        results = AsyncLookaheadIterator(executor, run, range(options.max_retries), logger=logger,
                                         parallelism=options.workers)
        for restart, (weights, objectives) in enumerate(results):
            trace.add_restart(objectives, weights is None)
            if weights is not None and (best is None or trace.restart_best[restart] > trace.best):
                best, trace.best_restart = weights, restart
    finally:
        if executor is not None:
            executor.shutdown()

    if best is None:
        trace.status = "failed"
        raise SolverFailure("all {} SSOCP restarts failed".format(options.max_retries))
    trace.status = "converged"
    logger.debug(__("SSOCP best rate {:.4f} from restart {} of {}", trace.best, trace.best_restart,
                    options.max_retries))
    precoder = Precoder(best * scale, masked.coop.mask)
    return precoder.validate(masked.coop, masked.max_power), trace
