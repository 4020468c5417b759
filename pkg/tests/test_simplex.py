import numpy as np
import pytest
from pydantic import ValidationError

from models.lp import LpModel, LpStatus, Relation
from repository.lp.simplex_repo import SimplexRepo, simplex_repo

from conftest import vertex_enumeration_optimum

LE, GE, EQ = Relation.LE, Relation.GE, Relation.EQ


def textbook_lp():
    # max 3x + 5y  s.t.  x <= 4, 2y <= 12, 3x + 2y <= 18
    return LpModel.from_rows([3.0, 5.0], [({0: 1.0}, LE, 4.0), ({1: 2.0}, LE, 12.0), ({0: 3.0, 1: 2.0}, LE, 18.0)])


def random_feasible_lp(rng):
    """Feasible by construction around a random point x0, bounded by a sum row and a box on the free variable."""
    n = int(rng.integers(2, 6))
    m = int(rng.integers(1, 6))
    free = rng.random() < 0.3
    x0 = rng.uniform(0.0, 2.0, n)
    if free:
        x0[0] = rng.uniform(-2.0, 2.0)
    rows = []
    for _ in range(m):
        coef = rng.uniform(-1.0, 1.0, n)
        coef[rng.random(n) < 0.3] = 0.0
        if not coef.any():
            coef[0] = 1.0
        relation = Relation(rng.choice(["<=", ">=", "="], p=[0.6, 0.25, 0.15]))
        activity = float(coef @ x0)
        if relation == LE:
            rhs = activity + rng.uniform(0.0, 1.0)
        elif relation == GE:
            rhs = activity - rng.uniform(0.0, 1.0)
        else:
            rhs = activity
        rows.append(({j: float(c) for j, c in enumerate(coef) if c != 0.0}, relation, rhs))
    rows.append(({j: 1.0 for j in range(n)}, LE, float(x0.sum()) + 5.0))
    if free:
        rows.append(({0: 1.0}, LE, 5.0))
        rows.append(({0: 1.0}, GE, -5.0))
    return LpModel.from_rows(rng.uniform(-1.0, 1.0, n), rows, free_variables=[0] if free else [])


def assert_optimality_certificate(model, solution, tol=1e-6):
    x, y = solution.primal, solution.dual
    a = model.matrix.toarray()
    scale = 1.0 + abs(solution.objective_value)
    # dual signs
    for i, relation in enumerate(model.relations):
        if relation == LE:
            assert y[i] >= -tol
        elif relation == GE:
            assert y[i] <= tol
    # dual feasibility and complementary slackness on columns
    reduced = model.objective - a.T @ y
    free = np.isneginf(model.lower_bounds)
    assert np.all(reduced[~free] <= tol)
    assert np.all(np.abs(reduced[free]) <= tol)
    assert np.all(np.abs(x[~free] * reduced[~free]) <= tol)
    # complementary slackness on rows and a zero duality gap
    assert np.all(np.abs(y * solution.slack) <= tol)
    assert abs(model.objective @ x - model.rhs @ y) <= tol * scale


class TestTextbook:
    def test_optimum_and_duals(self):
        solution = simplex_repo.solve(textbook_lp())
        assert solution.status == LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(36.0)
        np.testing.assert_allclose(solution.primal, [2.0, 6.0], atol=1e-9)
        np.testing.assert_allclose(solution.dual, [0.0, 1.5, 1.0], atol=1e-9)
        np.testing.assert_allclose(solution.slack, [2.0, 0.0, 0.0], atol=1e-9)
        assert not solution.phase_one_used

    def test_equality_and_greater_equal_rows(self):
        model = LpModel.from_rows([1.0, 1.0], [({0: 1.0, 1: 1.0}, LE, 4.0), ({0: 1.0}, GE, 1.0), ({1: 1.0}, EQ, 2.0)])
        solution = simplex_repo.solve(model)
        assert solution.status == LpStatus.OPTIMAL
        assert solution.phase_one_used
        assert solution.objective_value == pytest.approx(4.0)
        assert solution.primal[1] == pytest.approx(2.0)
        assert_optimality_certificate(model, solution)

    def test_negative_rhs(self):
        model = LpModel.from_rows([-1.0], [({0: -1.0}, LE, -2.0)])
        solution = simplex_repo.solve(model)
        assert solution.objective_value == pytest.approx(-2.0)
        assert solution.dual[0] == pytest.approx(1.0)

    def test_free_variable(self):
        model = LpModel.from_rows([1.0], [({0: 1.0}, LE, -3.0)], free_variables=[0])
        solution = simplex_repo.solve(model)
        assert solution.objective_value == pytest.approx(-3.0)
        assert solution.primal[0] == pytest.approx(-3.0)
        assert solution.dual[0] == pytest.approx(1.0)

    def test_infeasible(self):
        model = LpModel.from_rows([1.0], [({0: 1.0}, LE, 1.0), ({0: 1.0}, GE, 2.0)])
        assert simplex_repo.solve(model).status == LpStatus.INFEASIBLE

    def test_unbounded(self):
        model = LpModel.from_rows([1.0, 0.0], [({0: 1.0, 1: -1.0}, LE, 1.0)])
        assert simplex_repo.solve(model).status == LpStatus.UNBOUNDED

    def test_no_constraints(self):
        assert simplex_repo.solve(LpModel.from_rows([-1.0, 0.0], [])).objective_value == 0.0
        assert simplex_repo.solve(LpModel.from_rows([1.0], [])).status == LpStatus.UNBOUNDED

    def test_redundant_equality(self):
        model = LpModel.from_rows([1.0, 2.0], [({0: 1.0, 1: 1.0}, EQ, 1.0), ({0: 2.0, 1: 2.0}, EQ, 2.0)])
        solution = simplex_repo.solve(model)
        assert solution.objective_value == pytest.approx(2.0)
        assert vertex_enumeration_optimum(model) == pytest.approx(2.0)

    def test_more_equalities_than_variables(self):
        # x + y = 1, x - y = 0, 2x = 1 pin x = y = 0.5
        model = LpModel.from_rows([1.0, 2.0], [
            ({0: 1.0, 1: 1.0}, EQ, 1.0),
            ({0: 1.0, 1: -1.0}, EQ, 0.0),
            ({0: 2.0}, EQ, 1.0),
        ])
        solution = simplex_repo.solve(model)
        assert solution.status == LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(1.5)
        assert vertex_enumeration_optimum(model) == pytest.approx(1.5)

    @pytest.mark.parametrize("bland_after", [1, 500])
    def test_cycling_example_terminates(self, bland_after):
        # Beale's example cycles under a naive largest-coefficient rule
        model = LpModel.from_rows(
            [0.75, -20.0, 0.5, -6.0],
            [
                ({0: 0.25, 1: -8.0, 2: -1.0, 3: 9.0}, LE, 0.0),
                ({0: 0.5, 1: -12.0, 2: -0.5, 3: 3.0}, LE, 0.0),
                ({2: 1.0}, LE, 1.0),
            ],
        )
        solution = SimplexRepo(bland_after=bland_after).solve(model)
        assert solution.objective_value == pytest.approx(1.25)
        assert_optimality_certificate(model, solution)


class TestBasisHint:
    def test_slack_basis_skips_phase_one(self):
        solution = simplex_repo.solve(textbook_lp(), basis_hint=[("slack", 0), ("slack", 1), ("slack", 2)])
        assert not solution.phase_one_used
        assert solution.objective_value == pytest.approx(36.0)

    def test_optimal_basis_needs_no_pivots(self):
        hint = [("slack", 0), ("var", 1), ("var", 0)]
        solution = simplex_repo.solve(textbook_lp(), basis_hint=hint)
        assert solution.iterations == 0
        assert solution.objective_value == pytest.approx(36.0)

    @pytest.mark.parametrize(
        "hint",
        [
            [("slack", 0)],
            [("var", 0), ("var", 0), ("slack", 2)],
            [("var", 7), ("slack", 1), ("slack", 2)],
            [("var", 1), ("slack", 1), ("slack", 2)],
            [("slack", 0), ("slack", 1), ("var", 1)],
        ],
    )
    def test_unusable_hint_falls_back(self, hint):
        solution = simplex_repo.solve(textbook_lp(), basis_hint=hint)
        assert solution.status == LpStatus.OPTIMAL
        assert solution.objective_value == pytest.approx(36.0)


class TestRandomLps:
    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            model = random_feasible_lp(rng)
            solution = simplex_repo.solve(model)
            expected = vertex_enumeration_optimum(model)
            assert solution.status == LpStatus.OPTIMAL
            assert expected is not None
            assert solution.objective_value == pytest.approx(expected, abs=1e-8 * (1.0 + abs(expected)))
            assert_optimality_certificate(model, solution)

    def test_primal_is_feasible(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            model = random_feasible_lp(rng)
            solution = simplex_repo.solve(model)
            x = solution.primal
            activity = model.matrix @ x
            for i, relation in enumerate(model.relations):
                if relation == LE:
                    assert activity[i] <= model.rhs[i] + 1e-8
                elif relation == GE:
                    assert activity[i] >= model.rhs[i] - 1e-8
                else:
                    assert activity[i] == pytest.approx(model.rhs[i], abs=1e-8)
            assert np.all(x[model.lower_bounds == 0.0] >= -1e-9)


class TestLpModel:
    def test_rejects_unknown_variable(self):
        with pytest.raises(ValueError):
            LpModel.from_rows([1.0], [({3: 1.0}, LE, 1.0)])

    def test_rejects_finite_nonzero_lower_bound(self):
        with pytest.raises(ValidationError):
            LpModel(objective=[1.0], lower_bounds=[2.0], matrix=[[1.0]], relations=[LE], rhs=[1.0],
                    tags=textbook_lp().tags[:1])


class TestLpDump:
    def test_dump_dir_writes_every_model(self, tmp_path):
        solver = SimplexRepo(dump_dir=str(tmp_path))
        solver.solve(textbook_lp())
        solver.solve(textbook_lp())
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["lp_000000.lp", "lp_000001.lp"]
        text = (tmp_path / files[0]).read_text()
        assert text.splitlines()[1] == "Maximize"
        assert " obj: 3.0 x0 + 5.0 x1" in text
        assert " c2: 3.0 x0 + 2.0 x1 <= 18.0" in text
        assert text.rstrip().endswith("End")

    def test_free_variables_listed_in_bounds(self, tmp_path):
        model = LpModel.from_rows([1.0, -1.0], [({0: 1.0, 1: 1.0}, LE, 2.0)], free_variables=[0],
                                  variable_names=["eps", "psi_0"])
        path = tmp_path / "model.lp"
        simplex_repo.write_lp_file(model, str(path))
        text = path.read_text()
        assert "obj: 1.0 eps - 1.0 psi_0" in text
        assert "Bounds\n eps free\nEnd" in text
