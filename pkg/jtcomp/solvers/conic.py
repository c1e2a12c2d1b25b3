"""A small second-order cone program description and its solver backends.

Programs are built from `Affine` forms over real variables: linear inequalities/equalities,
cones ||head||_2 <= bound, variable bounds and a linear objective. Complex quantities enter
through `RealEmbedding`, which stores the real and imaginary part of complex coordinate k at
real indices (offset + 2k, offset + 2k + 1).
"""
import dataclasses
import enum
import logging
import math
import numbers

import numpy as np
import scipy.sparse as sp

from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-7
GAP_TOL = 1e-8


class ConicStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class Affine(object):
    """sum_j coefs[j] * x_j + const."""
    __slots__ = ("coefs", "const")

    def __init__(self, coefs=None, const=0.0):
        self.coefs = dict(coefs) if coefs else {}
        self.const = float(const)

    @classmethod
    def var(cls, index, coef=1.0):
        return cls({int(index): float(coef)})

    @classmethod
    def of(cls, value):
        if isinstance(value, Affine):
            return value
        if isinstance(value, numbers.Integral) and not isinstance(value, bool):
            return cls.var(value)
        raise TypeError("cannot turn {!r} into an affine form (use Affine(const=...) for constants)".format(value))

    def _combine(self, other, sign):
        if isinstance(other, numbers.Real):
            return Affine(self.coefs, self.const + sign * other)
        coefs = dict(self.coefs)
        for j, c in other.coefs.items():
            coefs[j] = coefs.get(j, 0.0) + sign * c
        return Affine(coefs, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if not isinstance(scalar, numbers.Real):
            return NotImplemented
        return Affine({j: c * scalar for j, c in self.coefs.items()}, self.const * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def value(self, x):
        return self.const + sum(c * x[j] for j, c in self.coefs.items())

    def __repr__(self):
        return "Affine({}, {})".format(self.coefs, self.const)


class ComplexAffine(object):
    """re + i*im with both parts affine in the real variables."""
    __slots__ = ("re", "im")

    def __init__(self, re=None, im=None):
        self.re = re if re is not None else Affine()
        self.im = im if im is not None else Affine()

    def __add__(self, other):
        return ComplexAffine(self.re + other.re, self.im + other.im)

    def times(self, scalar):
        """Multiply by a complex constant."""
        a, b = float(np.real(scalar)), float(np.imag(scalar))
        return ComplexAffine(self.re * a - self.im * b, self.im * a + self.re * b)

    def parts(self):
        return [self.re, self.im]

    def value(self, x):
        return complex(self.re.value(x), self.im.value(x))


def complex_sum(terms):
    total = ComplexAffine()
    for term in terms:
        total = total + term
    return total


@dataclasses.dataclass(frozen=True)
class RealEmbedding:
    offset: int
    size: int

    def indices(self, k):
        if not 0 <= k < self.size:
            raise IndexError("complex coordinate {} out of range {}".format(k, self.size))
        return self.offset + 2 * k, self.offset + 2 * k + 1

    def variable(self, k):
        re, im = self.indices(k)
        return ComplexAffine(Affine.var(re), Affine.var(im))

    def embed(self, z):
        z = np.asarray(z, dtype=complex)
        return np.stack([z.real, z.imag], axis=-1).reshape(z.shape[:-1] + (2 * self.size,))

    def extract(self, x):
        x = np.asarray(x, dtype=float)
        block = x[..., self.offset:self.offset + 2 * self.size].reshape(x.shape[:-1] + (self.size, 2))
        return block[..., 0] + 1j * block[..., 1]


def complex_to_real_embedding(n_complex, offset=0):
    if n_complex < 1:
        raise ValueError("need at least one complex coordinate")
    return RealEmbedding(offset, n_complex)


@dataclasses.dataclass
class SocConstraint:
    head: list
    bound: Affine


class ConicProgram(object):
    """Maximize (or minimize) a linear objective subject to linear rows and second-order cones."""

    def __init__(self, name="program"):
        self.name = name
        self.num_vars = 0
        self.lower = []
        self.upper = []
        self.objective = Affine()
        self.maximize_objective = True
        self.linear_le = []
        self.linear_eq = []
        self.soc_constraints = []

    def add_variables(self, count, lower=-math.inf, upper=math.inf):
        first = self.num_vars
        self.num_vars += count
        self.lower.extend([float(lower)] * count)
        self.upper.extend([float(upper)] * count)
        return list(range(first, first + count))

    def add_variable(self, lower=-math.inf, upper=math.inf):
        return self.add_variables(1, lower, upper)[0]

    def add_complex_variables(self, count):
        return complex_to_real_embedding(count, self.add_variables(2 * count)[0])

    def add_le(self, lhs, rhs=0.0):
        """lhs <= rhs"""
        self.linear_le.append(_as_affine(lhs) - _as_affine(rhs))

    def add_eq(self, lhs, rhs=0.0):
        self.linear_eq.append(_as_affine(lhs) - _as_affine(rhs))

    def add_soc(self, head, bound):
        """||head||_2 <= bound"""
        head = [_as_affine(e) for e in head]
        if not head:
            raise ValueError("a second-order cone needs a non-empty head")
        self.soc_constraints.append(SocConstraint(head, _as_affine(bound)))

    def add_rotated_soc(self, head, x, y):
        """||head||_2^2 <= x * y with x, y >= 0, as ||(2 head, x - y)|| <= x + y."""
        x, y = _as_affine(x), _as_affine(y)
        self.add_soc([_as_affine(e) * 2.0 for e in head] + [x - y], x + y)

    def maximize(self, objective):
        self.objective, self.maximize_objective = _as_affine(objective), True

    def minimize(self, objective):
        self.objective, self.maximize_objective = _as_affine(objective), False

    def validate(self):
        rows = self.linear_le + self.linear_eq + [self.objective]
        rows += [e for soc in self.soc_constraints for e in soc.head + [soc.bound]]
        for row in rows:
            if any(not 0 <= j < self.num_vars for j in row.coefs):
                raise IndexError("{}: constraint references a variable outside 0..{}".format(self.name, self.num_vars))
        return self


def _as_affine(value):
    if isinstance(value, Affine):
        return value
    if isinstance(value, numbers.Real):
        return Affine(const=value)
    raise TypeError("expected an Affine or a number, got {!r}".format(value))


@dataclasses.dataclass
class ConicSolution:
    status: ConicStatus
    x: np.ndarray = None
    objective: float = math.nan
    iterations: int = 0
    max_violation: float = math.nan

    @property
    def ok(self):
        return self.status is ConicStatus.OPTIMAL


def max_violation(program, x):
    """Largest absolute residual of all constraints of `program` at `x`, rebuilt from the description."""
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for row in program.linear_le:
        worst = max(worst, row.value(x))
    for row in program.linear_eq:
        worst = max(worst, abs(row.value(x)))
    for soc in program.soc_constraints:
        worst = max(worst, math.sqrt(sum(e.value(x) ** 2 for e in soc.head)) - soc.bound.value(x))
    lower, upper = np.asarray(program.lower), np.asarray(program.upper)
    if program.num_vars:
        worst = max(worst, float(np.max(lower - x)), float(np.max(x - upper)))
    return worst


def _sparse_rows(rows, n):
    data, indices, indptr, const = [], [], [0], []
    for row in rows:
        for j, c in row.coefs.items():
            indices.append(j)
            data.append(c)
        indptr.append(len(indices))
        const.append(row.const)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n)), np.asarray(const)


class CvxpyBackend(object):
    """Solve through cvxpy; CLARABEL when installed, cvxpy's own default conic solver otherwise."""

    _TOLERANCES = {
        "CLARABEL": lambda feas, gap: {"tol_feas": feas, "tol_gap_abs": gap, "tol_gap_rel": gap},
        "ECOS": lambda feas, gap: {"feastol": feas, "abstol": gap, "reltol": gap},
        "SCS": lambda feas, gap: {"eps": feas},
    }

    def __init__(self, solver="CLARABEL", feasibility_tol=FEASIBILITY_TOL, gap_tol=GAP_TOL, options=None):
        self.solver = solver
        self.feasibility_tol = feasibility_tol
        self.gap_tol = gap_tol
        self.options = dict(options or {})

    @classmethod
    def from_config(cls, config):
        return cls(solver=config.get("solver", "CLARABEL"),
                   feasibility_tol=float(config.get("feasibility_tol", FEASIBILITY_TOL)),
                   gap_tol=float(config.get("gap_tol", GAP_TOL)))

    def _solver_args(self):
        import cvxpy as cp
        if not self.solver or self.solver.upper() not in cp.installed_solvers():
            return {}
        name = self.solver.upper()
        args = {"solver": name}
        if name in self._TOLERANCES:
            args.update(self._TOLERANCES[name](min(1e-8, self.feasibility_tol / 10), self.gap_tol))
        args.update(self.options)
        return args

    def solve(self, program):
        import cvxpy as cp
        program.validate()
        n = program.num_vars
        x = cp.Variable(n)
        constraints = []
        if program.linear_le:
            a, c = _sparse_rows(program.linear_le, n)
            constraints.append(a @ x + c <= 0)
        if program.linear_eq:
            a, c = _sparse_rows(program.linear_eq, n)
            constraints.append(a @ x + c == 0)
        lower, upper = np.asarray(program.lower), np.asarray(program.upper)
        finite = np.flatnonzero(np.isfinite(lower))
        if finite.size:
            constraints.append(x[finite] >= lower[finite])
        finite = np.flatnonzero(np.isfinite(upper))
        if finite.size:
            constraints.append(x[finite] <= upper[finite])
        for soc in program.soc_constraints:
            head, head_const = _sparse_rows(soc.head, n)
            bound, bound_const = _sparse_rows([soc.bound], n)
            constraints.append(cp.SOC(cp.reshape(bound @ x + bound_const, ()), head @ x + head_const))

        objective, objective_const = _sparse_rows([program.objective], n)
        expr = cp.reshape(objective @ x + objective_const, ())
        problem = cp.Problem(cp.Maximize(expr) if program.maximize_objective else cp.Minimize(expr), constraints)
        try:
            problem.solve(**self._solver_args())
        except (cp.error.SolverError, ArithmeticError, ValueError) as e:
            logger.debug(__("{}: solver error {}", program.name, e))
            return ConicSolution(ConicStatus.NUMERICAL_FAILURE)

        iterations = getattr(problem.solver_stats, "num_iters", None) or 0
        if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return ConicSolution(ConicStatus.INFEASIBLE, iterations=iterations)
        if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or x.value is None:
            logger.debug(__("{}: solver status {}", program.name, problem.status))
            return ConicSolution(ConicStatus.NUMERICAL_FAILURE, iterations=iterations)

        values = np.asarray(x.value, dtype=float)
        status, violation = self.check_residuals(program, values)
        return ConicSolution(status, x=values, objective=program.objective.value(values),
                             iterations=iterations, max_violation=violation)

    def check_residuals(self, program, values):
        """(status, largest residual) of `values`; optimal only if every constraint holds to `feasibility_tol`."""
        violation = max_violation(program, values)
        if violation > self.feasibility_tol:
            logger.debug(__("{}: residual {:.3g} above tolerance", program.name, violation))
            return ConicStatus.NUMERICAL_FAILURE, violation
        return ConicStatus.OPTIMAL, violation


_default_backend = CvxpyBackend()


def set_default_backend(backend):
    global _default_backend
    _default_backend = backend


def get_default_backend():
    return _default_backend


def solve(program, backend=None):
    return (backend or _default_backend).solve(program)


def geo_mean_epigraph(program, var_indices, multiplicities=None):
    """Add a variable t with t <= (prod_i x_i^m_i)^(1 / sum m_i) and return its index.

    The inputs (variable indices or Affine forms, all required to be non-negative) are the leaves
    of a binary tree of hyperbolic constraints z^2 <= x * y; the leaf count is padded to the next
    power of two with copies of t.
    """
    inputs = [Affine.of(v) for v in var_indices]
    if not inputs:
        raise ValueError("the geometric mean needs at least one input")
    if multiplicities is None:
        multiplicities = [1] * len(inputs)
    if len(multiplicities) != len(inputs) or any(int(m) != m or m < 0 for m in multiplicities):
        raise ValueError("multiplicities must be non-negative integers, one per input")
    leaves = [x for x, m in zip(inputs, multiplicities) for _ in range(int(m))]
    if not leaves:
        raise ValueError("all multiplicities are zero")

    t = program.add_variable(lower=0.0)
    width = 1
    while width < len(leaves):
        width *= 2
    level = leaves + [Affine.var(t)] * (width - len(leaves))
    while len(level) > 1:
        parents = []
        for x, y in zip(level[0::2], level[1::2]):
            z = Affine.var(program.add_variable(lower=0.0))
            program.add_rotated_soc([z], x, y)
            parents.append(z)
        level = parents
    program.add_le(Affine.var(t), level[0])
    return t


def dump_triplets(program, stream):
    """Plain-text dump, one line per nonzero, for cross-checking against external solvers."""
    stream.write("# {} vars={} sense={}\n".format(program.name, program.num_vars,
                                                 "max" if program.maximize_objective else "min"))
    for j, (lo, hi) in enumerate(zip(program.lower, program.upper)):
        if math.isfinite(lo) or math.isfinite(hi):
            stream.write("bound {} {!r} {!r}\n".format(j, lo, hi))

    def rows(kind, nr, row):
        for j, c in sorted(row.coefs.items()):
            stream.write("{} {} {} {!r}\n".format(kind, nr, j, c))
        if row.const:
            stream.write("{} {} const {!r}\n".format(kind, nr, row.const))

    rows("obj", 0, program.objective)
    for nr, row in enumerate(program.linear_le):
        rows("le", nr, row)
    for nr, row in enumerate(program.linear_eq):
        rows("eq", nr, row)
    for nr, soc in enumerate(program.soc_constraints):
        for r, row in enumerate(soc.head):
            rows("soc{}.head{}".format(nr, r), nr, row)
        rows("soc{}.bound".format(nr), nr, soc.bound)
