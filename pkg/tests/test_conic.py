import io
import math

import numpy as np
import pytest

from jtcomp.solvers.conic import Affine, ConicProgram, ConicStatus, CvxpyBackend, complex_to_real_embedding, \
    dump_triplets, geo_mean_epigraph, max_violation, solve


def fixed_geo_mean(values, multiplicities=None):
    program = ConicProgram("geo")
    inputs = []
    for value in values:
        x = program.add_variable(lower=0.0)
        program.add_eq(Affine.var(x), value)
        inputs.append(x)
    t = geo_mean_epigraph(program, inputs, multiplicities)
    program.maximize(Affine.var(t))
    solution = solve(program)
    assert solution.status is ConicStatus.OPTIMAL
    return solution.x[t]


class TestEmbedding:
    def test_single_coordinate(self):
        assert complex_to_real_embedding(1).indices(0) == (0, 1)

    def test_round_trip(self, rng):
        embedding = complex_to_real_embedding(5, offset=3)
        z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        x = np.concatenate([np.zeros(3), embedding.embed(z)])
        np.testing.assert_array_equal(embedding.extract(x), z)

    def test_norm_bound(self):
        program = ConicProgram()
        embedding = program.add_complex_variables(1)
        z = embedding.variable(0)
        program.add_eq(z.re, 3.0)
        program.add_eq(z.im, 4.0)
        bound = program.add_variable()
        program.add_soc(z.parts(), Affine.var(bound))
        program.minimize(Affine.var(bound))
        solution = solve(program)
        assert solution.ok
        assert solution.x[bound] == pytest.approx(5.0, abs=1e-6)

    def test_empty(self):
        with pytest.raises(ValueError):
            complex_to_real_embedding(0)


class TestGeoMean:
    def test_two_inputs(self):
        assert fixed_geo_mean([4.0, 1.0]) == pytest.approx(2.0, abs=1e-6)

    def test_identity(self):
        assert fixed_geo_mean([3.5]) == pytest.approx(3.5, abs=1e-6)

    def test_powers_of_two(self):
        assert fixed_geo_mean([1.0, 2.0, 4.0, 8.0]) == pytest.approx(64 ** 0.25, abs=1e-6)

    def test_random_inputs(self, rng):
        for _ in range(50):
            values = rng.uniform(0.1, 10.0, size=rng.integers(1, 9))
            expected = float(np.exp(np.mean(np.log(values))))
            assert fixed_geo_mean(values.tolist()) == pytest.approx(expected, abs=1e-6)

    def test_multiplicities(self):
        # (8^1 * 1^2)^(1/3)
        assert fixed_geo_mean([8.0, 1.0], [1, 2]) == pytest.approx(2.0, abs=1e-6)

    def test_empty(self):
        with pytest.raises(ValueError):
            geo_mean_epigraph(ConicProgram(), [])


class TestSolve:
    def test_soc_lower_bound(self):
        program = ConicProgram()
        x = program.add_variable()
        program.add_soc([Affine(const=1.0)], Affine.var(x))
        program.minimize(Affine.var(x))
        solution = solve(program)
        assert solution.ok
        assert solution.x[x] == pytest.approx(1.0, abs=1e-6)

    def test_infeasible(self):
        program = ConicProgram()
        x = program.add_variable()
        program.add_le(Affine.var(x), 0.0)
        program.add_le(1.0, Affine.var(x))
        assert solve(program).status is ConicStatus.INFEASIBLE

    def test_power_cone_boundary(self):
        program = ConicProgram()
        w = program.add_complex_variables(1).variable(0)
        program.add_soc(w.parts(), Affine(const=math.sqrt(2.5)))
        program.maximize(w.re)
        solution = solve(program)
        assert solution.ok
        assert abs(w.value(solution.x)) == pytest.approx(math.sqrt(2.5), abs=1e-6)

    def test_optimal_solutions_pass_the_residual_check(self, rng):
        for _ in range(10):
            program = ConicProgram()
            xs = program.add_variables(4, lower=-5.0, upper=5.0)
            c = rng.standard_normal(4)
            program.add_soc([Affine.var(j) for j in xs[:3]], Affine.var(xs[3]) + 1.0)
            program.maximize(sum((Affine.var(j) * float(cj) for j, cj in zip(xs, c)), Affine()))
            solution = solve(program)
            assert solution.ok
            assert max_violation(program, solution.x) <= 1e-7

    def test_residual_gate_is_absolute(self):
        program = ConicProgram()
        small, large = program.add_variable(), program.add_variable()
        program.add_le(Affine.var(small), 1.0)
        program.add_le(Affine.var(large), 1e3)
        backend = CvxpyBackend(feasibility_tol=1e-7)
        status, violation = backend.check_residuals(program, np.array([1.0 + 5e-7, 1e3]))
        assert status is ConicStatus.NUMERICAL_FAILURE
        assert violation == pytest.approx(5e-7)
        assert backend.check_residuals(program, np.array([1.0 + 5e-8, 1e3]))[0] is ConicStatus.OPTIMAL

    def test_out_of_range_index(self):
        program = ConicProgram()
        program.add_variable()
        program.add_le(Affine.var(3), 1.0)
        with pytest.raises(IndexError):
            program.validate()

    def test_empty_head(self):
        with pytest.raises(ValueError):
            ConicProgram().add_soc([], 1.0)

    def test_triplet_dump(self):
        program = ConicProgram("dump")
        x, y = program.add_variables(2, lower=0.0)
        program.add_soc([Affine.var(x)], Affine.var(y) + 2.0)
        program.maximize(Affine.var(x) - Affine.var(y))
        out = io.StringIO()
        dump_triplets(program, out)
        lines = out.getvalue().splitlines()
        assert lines[0].startswith("# dump vars=2 sense=max")
        assert "obj 0 0 1.0" in lines
        assert "obj 0 1 -1.0" in lines
        assert "soc0.bound 0 const 2.0" in lines
