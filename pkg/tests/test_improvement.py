import numpy as np
import pytest

from models.bpi import ParamSet
from models.controller import ValueFunction
from models.lp import ConstraintKind, Relation
from repository.bpi.improvement_repo import improvement_repo
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from repository.lp.simplex_repo import simplex_repo
from utility.errors import InputError

from conftest import linprog_optimum, make_pomdp, random_controller, random_pomdp, random_suite, \
    single_node_controller, vertex_enumeration_optimum


@pytest.fixture
def one_state_problem():
    """Action 0 pays nothing, action 1 pays 1."""
    return make_pomdp([[[1.0], [1.0]]], [[[1.0]], [[1.0]]], [[0.0, 1.0]], discount=0.5)


class TestBuildNodeLp:
    def test_full_layout(self, rng):
        pomdp = random_pomdp(seed=3, num_states=3, num_actions=2, num_observations=2)
        controller = random_controller(pomdp, 4, rng)
        v = evaluation_repo.evaluate(controller, pomdp)
        node_lp = improvement_repo.build_node_lp(0, v, pomdp, improvement_repo.full_param_set(pomdp, 4))
        model = node_lp.model
        assert model.num_variables == 1 + 2 + 2 * 2 * 4
        assert model.num_constraints == 3 + 1 + 2 * 2
        kinds = [tag.kind for tag in model.tags]
        assert kinds == [ConstraintKind.IMPROVEMENT] * 3 + [ConstraintKind.ACTION_NORMALIZATION] \
            + [ConstraintKind.ETA_SUM] * 4
        assert model.relations == [Relation.LE] * 3 + [Relation.EQ] * 5
        assert np.isneginf(model.lower_bounds[0]) and np.all(model.lower_bounds[1:] == 0.0)
        assert model.variable_names[:4] == ["eps", "psi_0", "psi_1", "w_0_0_0"]
        np.testing.assert_allclose(model.rhs[:3], -v.vectors[0])
        assert node_lp.hint is None

    def test_slotted_aloha_sized_parameter_count(self):
        pomdp = random_pomdp(seed=0, num_states=30, num_actions=9, num_observations=3)
        v = ValueFunction(vectors=np.zeros((50, 30)))
        node_lp = improvement_repo.build_node_lp(0, v, pomdp, improvement_repo.full_param_set(pomdp, 50))
        assert node_lp.num_variables == 1 + 1359
        assert node_lp.model.num_constraints == 30 + 1 + 27

    def test_improvement_coefficients(self, rng):
        pomdp = random_pomdp(seed=4, num_states=2, num_actions=2, num_observations=2, discount=0.8)
        v = ValueFunction(vectors=rng.normal(size=(2, 2)))
        params = ParamSet(action_vars={1}, transition_vars={(1, 0, 1), (1, 1, 0)})
        node_lp = improvement_repo.build_node_lp(0, v, pomdp, params)
        row = node_lp.model.matrix.toarray()[1]
        expected_w = [
            -0.8 * sum(pomdp.transition[1, 1, t] * pomdp.observation[1, t, 0] * v.vectors[1, t] for t in range(2)),
            -0.8 * sum(pomdp.transition[1, 1, t] * pomdp.observation[1, t, 1] * v.vectors[0, t] for t in range(2)),
        ]
        np.testing.assert_allclose(row, [1.0, -pomdp.reward[1, 1]] + expected_w)

    def test_rejects_incomplete_param_set(self):
        pomdp = random_pomdp(seed=3)
        v = ValueFunction(vectors=np.zeros((2, 3)))
        with pytest.raises(InputError):
            improvement_repo.build_node_lp(0, v, pomdp, ParamSet(action_vars={0}, transition_vars={(0, 0, 1)}))
        with pytest.raises(InputError):
            improvement_repo.build_node_lp(0, v, pomdp, ParamSet())
        with pytest.raises(InputError):
            improvement_repo.build_node_lp(0, v, pomdp, ParamSet(action_vars={0}, transition_vars={(0, 0, 5), (0, 1, 0)}))

    def test_crash_basis_is_feasible(self):
        for pomdp, controller, v in random_suite(20, seed=5):
            for n, node in enumerate(controller.nodes):
                node_lp = improvement_repo.build_node_lp(
                    n, v, pomdp, improvement_repo.full_param_set(pomdp, controller.size),
                    incumbent=(node.action_probs, node.joint_transition),
                )
                solution = simplex_repo.solve(node_lp.model, basis_hint=node_lp.hint)
                assert not solution.phase_one_used


class TestImproveNodeFull:
    def test_switches_to_the_paying_action(self, one_state_problem):
        controller = single_node_controller(0, 1)
        v = evaluation_repo.evaluate(controller, one_state_problem)
        result = improvement_repo.improve_node_full(controller, 0, v, one_state_problem)
        assert result.epsilon == pytest.approx(1.0)
        assert result.new_action_probs == pytest.approx({1: 1.0})
        np.testing.assert_allclose(result.tangent_belief.probs, [1.0])

    def test_no_improvement_at_the_optimum(self, one_state_problem):
        controller = single_node_controller(1, 1)
        v = evaluation_repo.evaluate(controller, one_state_problem)
        assert improvement_repo.improve_node_full(controller, 0, v, one_state_problem).epsilon <= 1e-9

    def test_improving_twice_finds_nothing_more(self, one_state_problem):
        controller = single_node_controller(0, 1)
        v = evaluation_repo.evaluate(controller, one_state_problem)
        result = improvement_repo.improve_node_full(controller, 0, v, one_state_problem)
        controller_repo.replace_node_params(controller, one_state_problem, 0, result.new_action_probs,
                                            result.new_joint_transition)
        v = evaluation_repo.evaluate(controller, one_state_problem)
        np.testing.assert_allclose(v.vectors, [[2.0]])
        assert improvement_repo.improve_node_full(controller, 0, v, one_state_problem).epsilon <= 1e-9

    def test_matches_linprog(self):
        for pomdp, controller, v in random_suite(40, seed=17):
            params = improvement_repo.full_param_set(pomdp, controller.size)
            for n in range(controller.size):
                result = improvement_repo.improve_node_full(controller, n, v, pomdp)
                expected = linprog_optimum(improvement_repo.build_node_lp(n, v, pomdp, params).model)
                assert result.epsilon == pytest.approx(max(expected, 0.0), abs=1e-7)

    def test_matches_vertex_enumeration_on_tiny_instances(self):
        for i in range(25):
            pomdp = random_pomdp(seed=500 + i, num_states=2, num_actions=2, num_observations=1, discount=0.7)
            controller = random_controller(pomdp, 1, np.random.default_rng(i))
            v = evaluation_repo.evaluate(controller, pomdp)
            node_lp = improvement_repo.build_node_lp(0, v, pomdp, improvement_repo.full_param_set(pomdp, 1))
            result = improvement_repo.improve_node_full(controller, 0, v, pomdp)
            assert result.epsilon == pytest.approx(vertex_enumeration_optimum(node_lp.model), abs=1e-8)

    def test_results_are_valid_nodes(self):
        for pomdp, controller, v in random_suite(20, seed=23):
            for n in range(controller.size):
                result = improvement_repo.improve_node_full(controller, n, v, pomdp)
                assert result.epsilon >= 0.0
                assert result.tangent_belief.probs.min() >= 0.0
                assert result.tangent_belief.probs.sum() == pytest.approx(1.0, abs=1e-6)
                assert result.lp_variable_counts == [1 + pomdp.num_actions * (1 + pomdp.num_observations * controller.size)]
                controller_repo.clean_params(result.new_action_probs, result.new_joint_transition,
                                             pomdp.num_observations)

    def test_lifted_vector_is_dominated_by_new_parameters(self):
        """After replacing a node, re-evaluation gives at least V_n + eps everywhere."""
        for pomdp, controller, v in random_suite(15, seed=29):
            result = improvement_repo.improve_node_full(controller, 0, v, pomdp)
            controller_repo.replace_node_params(controller, pomdp, 0, result.new_action_probs,
                                                result.new_joint_transition)
            improved = evaluation_repo.evaluate(controller, pomdp)
            assert np.all(improved.vectors[0] >= v.vectors[0] + result.epsilon - 1e-7)
            assert np.all(improved.vectors >= v.vectors - 1e-7)
