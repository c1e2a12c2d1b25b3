"""Branch and bound over per-user SINR boxes, bracketing the optimal weighted sum rate.

A box [gamma_min, gamma_max] is bounded from above by the rate of its gamma_max corner and from
below by the recomputed rate of a precoder that the SOCP feasibility oracle certified inside it.
Boxes are split along their longest edge until the global bounds are within `epsilon`.
"""
import dataclasses
import enum
import logging
import math

import numpy as np

from jtcomp.errors import ConfigurationError
from jtcomp.solvers.conic import Affine, ConicProgram, ConicStatus, solve
from jtcomp.solvers.variables import PrecoderVariables, design_channels, interference_terms, signal_of
from jtcomp.system.metrics import Precoder, SinrMode, design_sinr, rate_batch
from jtcomp.util.log import BraceMessage as __, log_table

logger = logging.getLogger(__name__)


class Feasibility(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    FAILED = "failed"


@dataclasses.dataclass(frozen=True)
class FeasibilityResult:
    status: Feasibility
    precoder: Precoder = None

    @property
    def feasible(self):
        return self.status is Feasibility.FEASIBLE


@dataclasses.dataclass(eq=False)
class BnbBox:
    gamma_min: np.ndarray
    gamma_max: np.ndarray
    b_ub: float = math.inf
    b_lb: float = 0.0
    best_precoder: Precoder = None

    def __post_init__(self):
        self.gamma_min = np.asarray(self.gamma_min, dtype=float)
        self.gamma_max = np.asarray(self.gamma_max, dtype=float)
        if (self.gamma_min < 0).any() or (self.gamma_min > self.gamma_max).any():
            raise ValueError("need 0 <= gamma_min <= gamma_max")

    def split(self):
        """Two halves along the longest edge."""
        edge = int(np.argmax(self.gamma_max - self.gamma_min))
        middle = 0.5 * (self.gamma_min[edge] + self.gamma_max[edge])
        lower_max, upper_min = self.gamma_max.copy(), self.gamma_min.copy()
        lower_max[edge] = upper_min[edge] = middle
        return BnbBox(self.gamma_min.copy(), lower_max), BnbBox(upper_min, self.gamma_max.copy())


@dataclasses.dataclass(frozen=True)
class Certificate:
    precoder: Precoder
    rate: float


@dataclasses.dataclass
class BnbResult:
    upper: float
    lower: float
    precoder: Precoder
    rounds: int
    feasibility_calls: int
    converged: bool
    history: list

    @property
    def gap(self):
        return self.upper - self.lower


@dataclasses.dataclass(frozen=True)
class BnbOptions:
    epsilon: float = 0.1
    max_iter: int = 100
    bisection_epsilon: float = 0.01
    alternate_bound_orientation: bool = False
    backend: object = None

    def __post_init__(self):
        if not self.epsilon > 0 or not self.bisection_epsilon > 0:
            raise ConfigurationError("bnb.epsilon", "bnb tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError("bnb.max_iter", "bnb.max_iter must be a positive integer")

    @classmethod
    def from_config(cls, config, **overrides):
        keys = ("epsilon", "max_iter", "bisection_epsilon", "alternate_bound_orientation")
        values = {key: config.get(key) for key in keys if key in config}
        values.update(overrides)
        return cls(**values)


def initial_box(masked):
    """gamma_min = 0 and the Cauchy-Schwarz bound |B_u| N_T P_max sum_{b in B_u} ||h_bu||^2 / N_0."""
    gain = np.sum(np.abs(masked.known) ** 2, axis=2)
    serving = masked.coop.mask.sum(axis=0)
    gamma_max = serving * masked.n_t * masked.max_power * gain.sum(axis=0) / masked.noise_power
    return BnbBox(np.zeros(masked.num_users), gamma_max, b_ub=_rate(masked, gamma_max))


def _rate(masked, gamma):
    return float(rate_batch(np.asarray(gamma, dtype=float), masked.weights))


def feasibility_check(gamma, masked, mode, backend=None):
    """Whether per-user SINR targets `gamma` are jointly achievable under the design model `mode`.

    Each user's signal is rotated to be real and non-negative, which loses nothing since a common
    phase of a user's weights changes no SINR.
    """
    gamma = np.asarray(gamma, dtype=float)
    if (gamma < 0).any():
        raise ValueError("SINR targets must be non-negative")
    design_channels(masked, mode)
    if not gamma.any():
        return FeasibilityResult(Feasibility.FEASIBLE, Precoder.zeros(masked.coop, masked.n_t))

    program = ConicProgram("feasibility")
    variables = PrecoderVariables(program, masked.coop, masked.n_t)
    variables.add_power_constraints(program, masked.max_power)
    for u in np.flatnonzero(gamma > 0):
        signal = signal_of(masked, variables, u)
        program.add_eq(signal.im)
        head = [signal.re] + interference_terms(masked, mode, variables, u)
        head.append(Affine(const=math.sqrt(masked.noise_power)))
        program.add_soc(head, signal.re * math.sqrt(1 + 1 / gamma[u]))
    solution = solve(program, backend)
    if solution.status is ConicStatus.INFEASIBLE:
        return FeasibilityResult(Feasibility.INFEASIBLE)
    if not solution.ok:
        logger.warning(__("Feasibility check of {} failed numerically ({})", gamma, solution.status.value))
        return FeasibilityResult(Feasibility.FAILED)
    weights = variables.extract(solution.x)
    loudest = np.max(np.sum(np.abs(weights) ** 2, axis=1))
    if loudest > masked.max_power:
        weights = weights * math.sqrt(masked.max_power / loudest)
    return FeasibilityResult(Feasibility.FEASIBLE, Precoder(weights, masked.coop.mask))


class _Oracle(object):
    """Counts feasibility checks of one branch-and-bound run."""

    def __init__(self, masked, mode, backend=None):
        self.masked = masked
        self.mode = SinrMode.parse(mode)
        self.backend = backend
        self.calls = 0

    def __call__(self, gamma):
        self.calls += 1
        return feasibility_check(gamma, self.masked, self.mode, self.backend)

    def certificate(self, result):
        if not result.feasible:
            return None
        gamma = design_sinr(self.masked, result.precoder, self.mode)
        return Certificate(result.precoder, _rate(self.masked, gamma))


def _oracle(masked, mode, backend):
    return mode if isinstance(mode, _Oracle) else _Oracle(masked, mode, backend)


def bisection_tighten(box, masked, mode, epsilon=0.01, backend=None):
    """Per-coordinate upper ends of the feasible set starting from gamma_min; a failed check counts as feasible."""
    oracle = _oracle(masked, mode, backend)
    tightened = box.gamma_max.copy()
    for u in range(len(tightened)):
        point = box.gamma_min.copy()
        point[u] = box.gamma_max[u]
        if oracle(point).status is not Feasibility.INFEASIBLE:
            continue
        low, high = box.gamma_min[u], box.gamma_max[u]
        while high - low > epsilon:
            point[u] = 0.5 * (low + high)
            if oracle(point).status is Feasibility.INFEASIBLE:
                high = point[u]
            else:
                low = point[u]
        tightened[u] = high
    return tightened


def _diagonal_certificate(box, oracle, at_min, epsilon):
    """Best certificate on the segment gamma_min -> gamma_max, bisected until the longest edge step is <= epsilon."""
    best = oracle.certificate(at_min)
    span = box.gamma_max - box.gamma_min
    low, high = 0.0, 1.0
    while (high - low) * span.max(initial=0.0) > epsilon:
        middle = 0.5 * (low + high)
        result = oracle(box.gamma_min + middle * span)
        if result.feasible:
            low = middle
            certificate = oracle.certificate(result)
            if best is None or certificate.rate > best.rate:
                best = certificate
        else:
            high = middle
    return best


def box_bounds(box, masked, mode, backend=None, alternate_bound_orientation=False, epsilon=0.01):
    """(b_ub, b_lb, certificate) of a tightened box; (0, 0, None) if even gamma_min is infeasible.

    When the gamma_max corner is not certified, the certificate comes from a bisection along the
    box diagonal. Its rate is the recomputed design rate of its precoder and may exceed b_lb,
    which is capped at b_ub.
    """
    oracle = _oracle(masked, mode, backend)
    at_min = oracle(box.gamma_min)
    if at_min.status is Feasibility.INFEASIBLE:
        return 0.0, 0.0, None
    at_max = oracle(box.gamma_max)
    certificate = oracle.certificate(at_max) or _diagonal_certificate(box, oracle, at_min, epsilon)
    if alternate_bound_orientation:
        b_ub = _rate(masked, box.gamma_min)
        b_lb = _rate(masked, box.gamma_max) if at_max.feasible else b_ub
        return b_ub, b_lb, certificate
    b_ub = _rate(masked, box.gamma_max)
    b_lb = min(certificate.rate, b_ub) if certificate else 0.0
    return b_ub, b_lb, certificate


def _process(box, oracle, options):
    """Tighten and bound `box` in place; False if it holds no feasible point."""
    box.gamma_max = np.maximum(bisection_tighten(box, oracle.masked, oracle, options.bisection_epsilon),
                               box.gamma_min)
    box.b_ub, box.b_lb, certificate = box_bounds(box, oracle.masked, oracle,
                                                 alternate_bound_orientation=options.alternate_bound_orientation,
                                                 epsilon=options.bisection_epsilon)
    box.best_precoder = certificate.precoder if certificate else None
    return certificate, not (box.b_ub == 0 and box.b_lb == 0 and certificate is None)


def branch_and_bound(masked, mode, options=None):
    """Bracket the optimal design-model weighted sum rate of `masked` under `mode`."""
    options = options or BnbOptions()
    normalized, scale = masked.normalized()
    oracle = _Oracle(normalized, mode, options.backend)
    design_channels(normalized, oracle.mode)
    pick, aggregate = (min, min) if options.alternate_bound_orientation else (max, max)

    best = Certificate(Precoder.zeros(masked.coop, masked.n_t), 0.0)
    root = initial_box(normalized)
    certificate, feasible = _process(root, oracle, options)
    if certificate and certificate.rate > best.rate:
        best = certificate
    active = [root] if feasible else []
    lower = best.rate
    upper = aggregate([b.b_ub for b in active] + [lower]) if active else lower
    history = [(0, upper, lower)]

    rounds = 0
    while active and abs(upper - lower) > options.epsilon and rounds < options.max_iter:
        rounds += 1
        box = pick(active, key=lambda b: b.b_ub)
        active.remove(box)
        for child in box.split():
            certificate, feasible = _process(child, oracle, options)
            if certificate and certificate.rate > best.rate:
                best = certificate
            if feasible:
                active.append(child)
        lower = max(lower, best.rate)
        if not options.alternate_bound_orientation:
            active = [b for b in active if b.b_ub > lower]
            upper = min(upper, max([b.b_ub for b in active] + [lower]))
        elif active:
            upper = aggregate(b.b_ub for b in active)
        history.append((rounds, upper, lower))
        logger.debug(__("BnB round {}: UB {:.4f} LB {:.4f}, {} active boxes, {} feasibility checks", rounds, upper,
                        lower, len(active), oracle.calls))

    if not active and not options.alternate_bound_orientation:
        upper = lower
    converged = abs(upper - lower) <= options.epsilon
    log_table(logger, logging.DEBUG, "BnB bounds per round", history, headers=["round", "UB", "LB"])
    if not converged:
        logger.info(__("BnB stopped after {} rounds with gap {:.4f}", rounds, upper - lower))
    precoder = Precoder(best.precoder.weights * scale, masked.coop.mask).validate(masked.coop, masked.max_power)
    return BnbResult(upper=upper, lower=lower, precoder=precoder, rounds=rounds,
                     feasibility_calls=oracle.calls, converged=converged, history=history)
