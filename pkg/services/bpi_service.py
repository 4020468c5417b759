import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

from models.bpi import BpiSettings, BpiTrace, ImprovementMode, ImprovementResult, IterationRecord, TimingSummary
from models.controller import Controller, ValueFunction
from models.pomdp import BeliefState, Pomdp
from repository.bpi.escape_repo import escape_repo
from repository.bpi.improvement_repo import improvement_repo
from repository.bpi.sparse_repo import sparse_repo
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo

logger = logging.getLogger(__name__)


class _SweepOutcome:
    def __init__(self):
        self.improved = False
        self.max_epsilon = 0.0
        self.tangents: List[BeliefState] = []
        self.timings_ms: List[float] = []
        self.lp_solves = 0


class BpiService:
    """Bounded policy iteration: evaluate, improve node by node, add nodes at local optima."""

    @staticmethod
    def clock(cpu_time: bool) -> Callable[[], float]:
        return time.process_time if cpu_time else time.perf_counter

    def improve_node(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp,
                     config: BpiSettings) -> ImprovementResult:
        """
        Improve one node with the LP variant selected by config.mode

        Args:
            controller: Controller holding the node
            n: Index of the node to improve
            v: Current value function of the controller
            pomdp: Model the controller runs on
            config: Run settings; mode and gap_tolerance are read

        Returns:
            The improvement, with epsilon, new parameters and the tangent belief
        """
        if config.mode == ImprovementMode.FULL:
            return improvement_repo.improve_node_full(controller, n, v, pomdp)
        if config.mode == ImprovementMode.SPARSE_EARLY:
            return sparse_repo.improve_node_sparse_early(controller, n, v, pomdp, config.gap_tolerance)
        return sparse_repo.improve_node_sparse(controller, n, v, pomdp)

    def _timed_improve(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp,
                       config: BpiSettings) -> Tuple[ImprovementResult, float]:
        clock = self.clock(config.cpu_time)
        start = clock()
        result = self.improve_node(controller, n, v, pomdp, config)
        return result, (clock() - start) * 1000.0

    def _apply(self, controller: Controller, v: ValueFunction, pomdp: Pomdp, n: int,
               result: ImprovementResult, config: BpiSettings, outcome: _SweepOutcome) -> None:
        outcome.tangents.append(result.tangent_belief)
        outcome.max_epsilon = max(outcome.max_epsilon, result.epsilon)
        if config.mode != ImprovementMode.FULL:
            outcome.lp_solves += result.lp_solves
        if result.epsilon > config.epsilon_tolerance:
            controller_repo.replace_node_params(
                controller, pomdp, n, result.new_action_probs, result.new_joint_transition
            )
            v.lift(n, result.epsilon)
            outcome.improved = True
            logger.debug(f"Node {n} improved by {result.epsilon:.3e}")

    def sweep(self, controller: Controller, v: ValueFunction, pomdp: Pomdp, config: BpiSettings) -> _SweepOutcome:
        """
        Improve every node in index order.

        Accepted improvements replace the node's parameters and lift its vector
        right away, so later nodes in the same sweep see the lifted vector.
        """
        outcome = _SweepOutcome()
        if config.frozen_sweep:
            frozen = v.clone()
            pomdp.joint  # computed once before worker threads read it
            with ThreadPoolExecutor() as pool:
                results = list(pool.map(
                    lambda n: self._timed_improve(controller, n, frozen, pomdp, config), range(controller.size)
                ))
            for n, (result, elapsed) in enumerate(results):
                outcome.timings_ms.append(elapsed)
                self._apply(controller, v, pomdp, n, result, config, outcome)
            return outcome

        for n in range(controller.size):
            result, elapsed = self._timed_improve(controller, n, v, pomdp, config)
            outcome.timings_ms.append(elapsed)
            self._apply(controller, v, pomdp, n, result, config, outcome)
        return outcome

    def run_bpi(
        self,
        pomdp: Pomdp,
        config: BpiSettings,
        controller: Optional[Controller] = None,
    ) -> Tuple[Controller, ValueFunction, BpiTrace]:
        """
        Run bounded policy iteration until convergence or a cap

        Args:
            pomdp: Model to solve
            config: Improvement mode, node cap, sweep and iteration caps
            controller: Controller to continue from; one self-looping node per action if None

        Returns:
            Tuple of (final controller, its value function, per-iteration trace)
        """
        clock = self.clock(config.cpu_time)
        started = clock()
        if controller is None:
            controller = controller_repo.initial_controller(pomdp)
        else:
            controller_repo.validate_against(controller, pomdp)
        b0 = pomdp.initial_belief
        trace = BpiTrace()
        logger.info(
            f"Running BPI ({config.mode.value}) from {controller.size} nodes, "
            f"k={config.add_k}, node cap {config.max_nodes}"
        )

        v = evaluation_repo.evaluate(controller, pomdp)
        for iteration in range(config.max_outer_iterations):
            timings: List[float] = []
            max_eps: List[float] = []
            lp_solves = 0
            sweeps = 0
            cap_hit = False
            tangents: List[BeliefState] = []
            while True:
                outcome = self.sweep(controller, v, pomdp, config)
                sweeps += 1
                timings += outcome.timings_ms
                max_eps.append(outcome.max_epsilon)
                lp_solves += outcome.lp_solves
                tangents = outcome.tangents
                if not outcome.improved:
                    break
                v = evaluation_repo.evaluate(controller, pomdp, initial=v)
                if sweeps >= config.max_sweeps:
                    cap_hit = True
                    logger.info(f"Iteration {iteration}: sweep cap {config.max_sweeps} reached")
                    break

            value_at_b0, _ = evaluation_repo.belief_value(v, b0)
            record = IterationRecord(
                iteration=iteration,
                num_nodes=controller.size,
                value_at_b0=value_at_b0,
                sparsity=controller_repo.sparsity_stats(controller, pomdp),
                per_node_improve_ms=TimingSummary.from_samples(timings),
                num_reduced_lps_solved=lp_solves,
                sweeps=sweeps,
                sweep_cap_hit=cap_hit,
                max_epsilon_per_sweep=max_eps,
            )
            trace.records.append(record)

            room = config.max_nodes - controller.size
            if room <= 0:
                if cap_hit or escape_repo.find_candidates(v, pomdp, tangents):
                    trace.truncated = True
                    trace.truncation_reason = f"node cap {config.max_nodes} reached"
                else:
                    trace.converged = True
                break

            _, added = escape_repo.add_nodes(controller, v, pomdp, tangents, min(config.add_k, room))
            record.nodes_added = added
            logger.info(
                f"Iteration {iteration}: {record.num_nodes} nodes, V(b0)={value_at_b0:.6f}, "
                f"{sweeps} sweeps, {added} nodes added"
            )
            if added == 0 and not cap_hit:
                trace.converged = True
                break
            if added:
                v = evaluation_repo.evaluate(controller, pomdp, initial=v)
        else:
            trace.truncated = True
            trace.truncation_reason = f"outer iteration cap {config.max_outer_iterations} reached"

        trace.total_seconds = clock() - started
        status = "converged" if trace.converged else f"truncated ({trace.truncation_reason})"
        logger.info(f"BPI {status}: {controller.size} nodes, {len(trace.records)} iterations, "
                    f"{trace.total_seconds:.2f}s")
        return controller, v, trace


bpi_service = BpiService()
