import numpy as np
import pytest

from models.bpi import BpiSettings, ImprovementMode
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from services.bpi_service import bpi_service
from utility.errors import InputError

from conftest import grid_value_upper_bound, random_pomdp, random_suite, single_node_controller


def assert_monotone(trace, tol=1e-7):
    values = [record.value_at_b0 for record in trace.records]
    assert all(later >= earlier - tol for earlier, later in zip(values, values[1:]))


class TestSweep:
    @pytest.mark.parametrize("mode", list(ImprovementMode))
    def test_node_values_never_decrease(self, mode):
        config = BpiSettings(mode=mode, gap_tolerance=0.01)
        for pomdp, controller, v in random_suite(40, seed=31):
            before = v.clone()
            bpi_service.sweep(controller, v, pomdp, config)
            after = evaluation_repo.evaluate(controller, pomdp)
            assert np.all(after.vectors >= before.vectors - 1e-7)
            # lifted vectors stay below the true values of the new controller
            assert np.all(after.vectors >= v.vectors - 1e-7)

    def test_frozen_sweep_is_also_monotone(self):
        config = BpiSettings(frozen_sweep=True)
        for pomdp, controller, v in random_suite(20, seed=37):
            before = v.clone()
            outcome = bpi_service.sweep(controller, v, pomdp, config)
            after = evaluation_repo.evaluate(controller, pomdp)
            assert np.all(after.vectors >= before.vectors - 1e-7)
            assert len(outcome.timings_ms) == len(outcome.tangents) == controller.size

    def test_full_mode_counts_no_reduced_lps(self, tiger):
        controller = controller_repo.initial_controller(tiger)
        v = evaluation_repo.evaluate(controller, tiger)
        outcome = bpi_service.sweep(controller, v, tiger, BpiSettings(mode=ImprovementMode.FULL))
        assert outcome.lp_solves == 0
        assert outcome.max_epsilon >= 0.0


class TestRunBpi:
    def test_single_action_problem_converges_immediately(self):
        pomdp = random_pomdp(seed=9, num_states=3, num_actions=1, num_observations=2)
        controller, v, trace = bpi_service.run_bpi(pomdp, BpiSettings())
        assert trace.converged and not trace.truncated
        assert controller.size == 1
        assert len(trace.records) == 1
        assert trace.records[0].nodes_added == 0

    def test_tiger_values_are_monotone_and_bounded(self, tiger):
        controller, v, trace = bpi_service.run_bpi(tiger, BpiSettings(add_k=2, max_nodes=15))
        assert_monotone(trace)
        # listening forever is in the initial controller
        assert trace.records[0].value_at_b0 >= -20.0 - 1e-6
        upper = grid_value_upper_bound(tiger)
        value, _ = evaluation_repo.belief_value(v, tiger.initial_belief)
        assert value <= upper(0.5) + 1e-6
        assert value == pytest.approx(trace.records[-1].value_at_b0, abs=1e-9)
        assert controller.size <= 15

    def test_records_describe_each_iteration(self, tiger):
        controller, _, trace = bpi_service.run_bpi(tiger, BpiSettings(add_k=1, max_nodes=6))
        for i, record in enumerate(trace.records):
            assert record.iteration == i
            assert record.sweeps == len(record.max_epsilon_per_sweep) >= 1
            assert record.num_reduced_lps_solved > 0
            assert record.per_node_improve_ms.min <= record.per_node_improve_ms.avg <= record.per_node_improve_ms.max
            assert 1 <= record.sparsity.max_nonzero
        sizes = [record.num_nodes for record in trace.records]
        assert sizes == sorted(sizes)
        assert trace.total_seconds >= 0.0

    def test_two_state_problems_stay_below_the_optimum(self):
        for seed in range(5):
            pomdp = random_pomdp(seed=700 + seed, num_states=2, num_actions=3, num_observations=2, discount=0.85)
            _, v, trace = bpi_service.run_bpi(pomdp, BpiSettings(add_k=3, max_nodes=20))
            assert_monotone(trace)
            upper = grid_value_upper_bound(pomdp)
            value, _ = evaluation_repo.belief_value(v, pomdp.initial_belief)
            assert value <= upper(float(pomdp.initial_belief.probs[0])) + 1e-6

    @pytest.mark.parametrize("mode", list(ImprovementMode))
    def test_every_mode_improves_on_the_initial_controller(self, tiger, mode):
        _, v, trace = bpi_service.run_bpi(tiger, BpiSettings(mode=mode, gap_tolerance=0.1, max_nodes=10))
        assert_monotone(trace)
        value, _ = evaluation_repo.belief_value(v, tiger.initial_belief)
        assert value >= trace.records[0].value_at_b0 - 1e-7
        if mode == ImprovementMode.FULL:
            assert all(record.num_reduced_lps_solved == 0 for record in trace.records)

    def test_node_cap_stops_the_run(self, tiger):
        controller, _, trace = bpi_service.run_bpi(tiger, BpiSettings(max_nodes=3))
        assert controller.size == 3
        assert trace.converged != trace.truncated
        if trace.truncated:
            assert "node cap" in trace.truncation_reason

    def test_outer_iteration_cap(self, tiger):
        _, _, trace = bpi_service.run_bpi(tiger, BpiSettings(max_outer_iterations=1, max_nodes=50))
        assert len(trace.records) == 1
        assert trace.converged != trace.truncated
        if trace.truncated:
            assert "outer iteration" in trace.truncation_reason

    def test_sweep_cap_is_recorded(self):
        pomdp = random_pomdp(seed=41, num_states=4, num_actions=3, num_observations=2)
        _, _, trace = bpi_service.run_bpi(pomdp, BpiSettings(max_sweeps=1, max_nodes=8))
        assert all(record.sweeps == 1 for record in trace.records)
        assert all(record.sweep_cap_hit == (record.max_epsilon_per_sweep[0] > 1e-8) for record in trace.records)
        assert_monotone(trace)

    def test_starts_from_a_given_controller(self, tiger):
        start = single_node_controller(0, 2)
        controller, _, trace = bpi_service.run_bpi(tiger, BpiSettings(max_nodes=4), controller=start)
        assert trace.records[0].value_at_b0 == pytest.approx(-20.0, abs=1e-6)
        assert controller.size <= 4

    def test_rejects_a_controller_for_another_problem(self, tiger):
        with pytest.raises(InputError):
            bpi_service.run_bpi(tiger, BpiSettings(), controller=single_node_controller(0, 3))
