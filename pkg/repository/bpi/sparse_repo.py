import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import settings
from models.bpi import BackupResult, ImprovementResult, ParamSet, SparseIteration
from models.controller import Controller, TransitionKey, ValueFunction
from models.pomdp import BeliefState, Pomdp
from repository.bpi.improvement_repo import improvement_repo
from repository.lp.simplex_repo import simplex_repo
from utility.errors import InputError, InternalError

logger = logging.getLogger(__name__)


class SparseRepo:
    """Node improvement through a growing sequence of reduced LPs, priced by belief backups."""

    def __init__(
        self,
        zero_tolerance: float = settings.ZERO_PROB_TOLERANCE,
        gap_tolerance: float = settings.BACKUP_GAP_TOLERANCE,
        stall_tolerance: float = settings.STALL_GAP_TOLERANCE,
    ):
        self.zero_tolerance = zero_tolerance
        self.gap_tolerance = gap_tolerance
        self.stall_tolerance = stall_tolerance

    def backup_belief(self, b: BeliefState, v: ValueFunction, pomdp: Pomdp) -> BackupResult:
        """
        One-step lookahead value at b with the controller's vectors as continuation.

        Impossible observations contribute 0 and get no successor; ties go to the
        lowest action index, then the lowest node index per observation.
        """
        if b.num_states != pomdp.num_states or v.num_states != pomdp.num_states:
            raise InputError("belief, value function and POMDP disagree on the number of states")
        # u[a, z, s'] = sum_s b(s) J[a, z, s, s']; its sum over s' is P(z|b,a)
        successors = np.einsum("s,azst->azt", b.probs, pomdp.joint)
        obs_probs = successors.sum(axis=2)
        scores = successors @ v.vectors.T
        best_nodes = np.argmax(scores, axis=2)
        best_scores = np.take_along_axis(scores, best_nodes[..., None], axis=2)[..., 0]
        possible = obs_probs > self.zero_tolerance
        q_values = b.probs @ pomdp.reward + pomdp.discount * np.where(possible, best_scores, 0.0).sum(axis=1)

        best_action = int(np.argmax(q_values))
        best_successor = {int(z): int(best_nodes[best_action, z])
                          for z in np.flatnonzero(possible[best_action])}
        return BackupResult(value=float(q_values[best_action]), best_action=best_action, best_successor=best_successor)

    @staticmethod
    def initial_param_set(controller: Controller, n: int, num_observations: int) -> ParamSet:
        """The node's current support, with a self-loop for any (a, z) left without a successor."""
        node = controller.nodes[n]
        params = ParamSet(action_vars=set(node.action_probs), transition_vars=set(node.joint_transition))
        covered = {(a, z) for (a, z, _) in params.transition_vars}
        for a in node.action_probs:
            for z in range(num_observations):
                if (a, z) not in covered:
                    params.transition_vars.add((a, z, n))
        return params

    @staticmethod
    def add_backup_variables(params: ParamSet, backup: BackupResult, n: int, num_observations: int) -> int:
        """Add the backup's action and successors (self-loop where none was recorded); return how many were new."""
        before = params.size
        a = backup.best_action
        params.action_vars.add(a)
        for z in range(num_observations):
            params.transition_vars.add((a, z, backup.best_successor.get(z, n)))
        return params.size - before

    def improve_node_sparse(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp) -> ImprovementResult:
        return self._improve(controller, n, v, pomdp, early_gap=None)

    def improve_node_sparse_early(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp,
                                  gap_tolerance: float) -> ImprovementResult:
        if not gap_tolerance >= 0:
            raise InputError(f"gap_tolerance must be >= 0, got {gap_tolerance}")
        return self._improve(controller, n, v, pomdp, early_gap=gap_tolerance)

    def _improve(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp,
                 early_gap: Optional[float]) -> ImprovementResult:
        if not 0 <= n < controller.size:
            raise InputError(f"node index {n} out of range [0, {controller.size})")
        node = controller.nodes[n]
        num_z = pomdp.num_observations
        params = self.initial_param_set(controller, n, num_z)
        cap = 1 + pomdp.num_actions + pomdp.num_actions * num_z * controller.size

        threshold = 0.0
        incumbent: Optional[Tuple[Dict[int, float], Dict[TransitionKey, float]]] = None
        warm_start = (node.action_probs, node.joint_transition)
        iterations: List[SparseIteration] = []
        variable_counts: List[int] = []
        tangent = None

        for _ in range(cap):
            node_lp = improvement_repo.build_node_lp(n, v, pomdp, params, incumbent=warm_start)
            solution = simplex_repo.solve(node_lp.model, basis_hint=node_lp.hint)
            epsilon, action_probs, joint, tangent = improvement_repo.read_solution(node_lp, solution, pomdp.num_states)
            variable_counts.append(node_lp.num_variables)
            if incumbent is None or epsilon > threshold:
                incumbent = (action_probs, joint)
                threshold = epsilon
            warm_start = incumbent

            backup = self.backup_belief(tangent, v, pomdp)
            gap = backup.value - float(tangent.probs @ v.vectors[n]) - threshold

            done = gap <= self.gap_tolerance or (early_gap is not None and gap < early_gap)
            added = 0 if done else self.add_backup_variables(params, backup, n, num_z)
            iterations.append(SparseIteration(
                epsilon=epsilon, threshold=threshold, backup_gap=gap,
                variables_added=added, num_variables=node_lp.num_variables, tangent_belief=tangent,
            ))
            if done:
                break
            if added == 0:
                if gap <= self.stall_tolerance:
                    logger.debug(f"Node {n}: backup gap {gap:.2e} with no new variables, treated as round-off")
                    break
                raise InternalError(
                    f"node {n}: backup gap {gap:.3e} at the tangent belief but every backup variable is already in the LP"
                )
        else:
            raise InternalError(f"node {n}: reduced-LP loop exceeded {cap} iterations")

        logger.debug(f"Sparse improvement of node {n}: eps={threshold:.3e} after {len(iterations)} reduced LPs "
                     f"(final size {variable_counts[-1]})")
        action_probs, joint = incumbent
        return ImprovementResult(
            epsilon=threshold,
            new_action_probs=action_probs,
            new_joint_transition=joint,
            tangent_belief=tangent,
            lp_solves=len(iterations),
            lp_variable_counts=variable_counts,
            iterations=iterations,
        )


sparse_repo = SparseRepo()
