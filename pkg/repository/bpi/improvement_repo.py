import logging
from collections import defaultdict
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse

from models.bpi import ImprovementResult, ParamSet
from models.controller import Controller, TransitionKey, ValueFunction
from models.lp import ConstraintKind, ConstraintTag, LpModel, LpSolution, Relation
from models.pomdp import BeliefState, Pomdp
from repository.lp.simplex_repo import BasisHint, simplex_repo
from utility.errors import InputError, InternalError

logger = logging.getLogger(__name__)

_TANGENT_NEGATIVE_LIMIT = 1e-7
_EPSILON_FLOOR = -1e-9


class NodeLp(NamedTuple):
    """An improvement LP together with the variable layout needed to read its solution."""

    model: LpModel
    actions: List[int]
    transitions: List[TransitionKey]
    hint: Optional[BasisHint]

    @property
    def num_variables(self) -> int:
        return self.model.num_variables


class ImprovementRepo:
    """
    Node-improvement LP: maximize eps over (eps, psi, w) subject to

        V_n(s) + eps <= sum_a psi(a) R(s,a) + beta sum_{a,z,n'} w(a,z,n') sum_{s'} J[a,z,s,s'] V_n'(s')
        sum_a psi(a) = 1
        sum_n' w(a,z,n') = psi(a)   for every action variable a and every z
    """

    def __init__(self, epsilon_floor: float = _EPSILON_FLOOR):
        self.epsilon_floor = epsilon_floor

    @staticmethod
    def full_param_set(pomdp: Pomdp, num_nodes: int) -> ParamSet:
        return ParamSet(
            action_vars=set(range(pomdp.num_actions)),
            transition_vars={(a, z, n2) for a in range(pomdp.num_actions)
                             for z in range(pomdp.num_observations) for n2 in range(num_nodes)},
        )

    def build_node_lp(
        self,
        n: int,
        v: ValueFunction,
        pomdp: Pomdp,
        params: ParamSet,
        incumbent: Optional[Tuple[Mapping[int, float], Mapping[TransitionKey, float]]] = None,
    ) -> NodeLp:
        if not params.action_vars:
            raise InputError("parameter set is empty")
        problems = params.violations(pomdp.num_observations)
        if problems:
            raise InputError("invalid parameter set: " + "; ".join(problems[:5]))
        if not 0 <= n < v.num_nodes:
            raise InputError(f"node index {n} out of range [0, {v.num_nodes})")
        for (a, z, n2) in params.transition_vars:
            if not 0 <= n2 < v.num_nodes:
                raise InputError(f"transition variable ({a},{z},{n2}) references a node without a value vector")
        for a in params.action_vars:
            pomdp.check_action(a)

        actions = params.sorted_actions()
        transitions = params.sorted_transitions()
        num_s, num_z = pomdp.num_states, pomdp.num_observations
        num_vars = 1 + len(actions) + len(transitions)
        beta = pomdp.discount

        # improvement rows, dense over states
        improve = np.zeros((num_s, num_vars))
        improve[:, 0] = 1.0
        improve[:, 1:1 + len(actions)] = -pomdp.reward[:, actions]
        continuation = self._continuation_values(v, pomdp, transitions)
        improve[:, 1 + len(actions):] = -beta * continuation

        # probability rows
        data, rows, cols = [], [], []
        data += [1.0] * len(actions)
        rows += [0] * len(actions)
        cols += list(range(1, 1 + len(actions)))
        eta_row = {}
        for ai, a in enumerate(actions):
            for z in range(num_z):
                r = 1 + ai * num_z + z
                eta_row[(a, z)] = r
                data.append(-1.0)
                rows.append(r)
                cols.append(1 + ai)
        for k, (a, z, _) in enumerate(transitions):
            data.append(1.0)
            rows.append(eta_row[(a, z)])
            cols.append(1 + len(actions) + k)
        probability = sparse.csr_matrix((data, (rows, cols)), shape=(1 + len(actions) * num_z, num_vars))

        tags = [ConstraintTag(kind=ConstraintKind.IMPROVEMENT, state=s) for s in range(num_s)]
        tags.append(ConstraintTag(kind=ConstraintKind.ACTION_NORMALIZATION))
        tags += [ConstraintTag(kind=ConstraintKind.ETA_SUM, action=a, observation=z)
                 for a in actions for z in range(num_z)]
        relations = [Relation.LE] * num_s + [Relation.EQ] * (1 + len(actions) * num_z)
        rhs = np.concatenate([-v.vectors[n], [1.0], np.zeros(len(actions) * num_z)])
        objective = np.zeros(num_vars)
        objective[0] = 1.0
        lower = np.zeros(num_vars)
        lower[0] = -np.inf

        model = LpModel(
            objective=objective,
            lower_bounds=lower,
            matrix=sparse.vstack([sparse.csr_matrix(improve), probability], format="csr"),
            relations=relations,
            rhs=rhs,
            tags=tags,
            variable_names=["eps"] + [f"psi_{a}" for a in actions] + [f"w_{a}_{z}_{n2}" for (a, z, n2) in transitions],
        )
        hint = None
        if incumbent is not None:
            hint = self._crash_basis(n, v, pomdp, actions, transitions, continuation, incumbent)
        return NodeLp(model=model, actions=actions, transitions=transitions, hint=hint)

    @staticmethod
    def _continuation_values(v: ValueFunction, pomdp: Pomdp, transitions: List[TransitionKey]) -> np.ndarray:
        """Column k holds sum_{s'} J[a,z,s,s'] V_n'(s') for transitions[k] = (a, z, n')."""
        result = np.zeros((pomdp.num_states, len(transitions)))
        grouped: Dict[Tuple[int, int], List[int]] = defaultdict(list)
        for k, (a, z, _) in enumerate(transitions):
            grouped[(a, z)].append(k)
        for (a, z), ks in grouped.items():
            successors = [transitions[k][2] for k in ks]
            result[:, ks] = pomdp.joint[a, z] @ v.vectors[successors].T
        return result

    @staticmethod
    def _crash_basis(
        n: int,
        v: ValueFunction,
        pomdp: Pomdp,
        actions: List[int],
        transitions: List[TransitionKey],
        continuation: np.ndarray,
        incumbent: Tuple[Mapping[int, float], Mapping[TransitionKey, float]],
    ) -> Optional[BasisHint]:
        """
        Feasible starting vertex from the incumbent's dominant action and successors.

        eps, psi(a*) and one w per eta row are basic; every improvement slack is
        basic except the one of the row that fixes eps.
        """
        action_probs, joint = incumbent
        candidates = [a for a in actions if a in action_probs]
        if not candidates:
            return None
        best_action = max(candidates, key=lambda a: (action_probs[a], -a))

        column_of = {key: 1 + len(actions) + k for k, key in enumerate(transitions)}
        chosen: Dict[Tuple[int, int], TransitionKey] = {}
        for key in transitions:
            a, z, _ = key
            if (a, z) not in chosen:
                chosen[(a, z)] = key
            elif a == best_action and joint.get(key, 0.0) > joint.get(chosen[(a, z)], 0.0):
                chosen[(a, z)] = key

        one_step = pomdp.reward[:, best_action].copy()
        for z in range(pomdp.num_observations):
            one_step += pomdp.discount * continuation[:, column_of[chosen[(best_action, z)]] - 1 - len(actions)]
        tight = int(np.argmin(one_step - v.vectors[n]))

        hint: List[Tuple[str, int]] = [("var", 0), ("var", 1 + actions.index(best_action))]
        hint += [("var", column_of[chosen[(a, z)]]) for a in actions for z in range(pomdp.num_observations)]
        hint += [("slack", s) for s in range(pomdp.num_states) if s != tight]
        return hint

    def read_solution(
        self, node_lp: NodeLp, solution: LpSolution, num_states: int
    ) -> Tuple[float, Dict[int, float], Dict[TransitionKey, float], BeliefState]:
        """Return (eps, psi, w, tangent belief) from an optimal node LP solution."""
        if not solution.is_optimal:
            raise InternalError(f"node improvement LP ended with status {solution.status.value}")
        epsilon = float(solution.objective_value)
        if epsilon < self.epsilon_floor:
            raise InternalError(f"node improvement LP returned eps = {epsilon:.3e} below the incumbent's 0")
        epsilon = max(epsilon, 0.0)

        x = solution.primal
        k = len(node_lp.actions)
        action_probs = {a: float(x[1 + i]) for i, a in enumerate(node_lp.actions) if x[1 + i] > 0.0}
        joint = {key: float(x[1 + k + i]) for i, key in enumerate(node_lp.transitions) if x[1 + k + i] > 0.0}
        return epsilon, action_probs, joint, self.tangent_belief(solution, num_states)

    @staticmethod
    def tangent_belief(solution: LpSolution, num_states: int) -> BeliefState:
        """Normalized duals of the improvement rows; they sum to 1 through the eps column."""
        duals = np.asarray(solution.dual[:num_states], dtype=np.float64)
        if duals.min() < -_TANGENT_NEGATIVE_LIMIT:
            raise InternalError(f"improvement-row dual {duals.min():.3e} is negative; tangent belief is invalid")
        duals = np.clip(duals, 0.0, None)
        total = duals.sum()
        if total <= 0.0:
            raise InternalError("improvement-row duals are all zero; no tangent belief")
        return BeliefState.normalized(duals / total)

    def improve_node_full(self, controller: Controller, n: int, v: ValueFunction, pomdp: Pomdp) -> ImprovementResult:
        node = controller.nodes[n]
        params = self.full_param_set(pomdp, controller.size)
        node_lp = self.build_node_lp(n, v, pomdp, params, incumbent=(node.action_probs, node.joint_transition))
        solution = simplex_repo.solve(node_lp.model, basis_hint=node_lp.hint)
        epsilon, action_probs, joint, tangent = self.read_solution(node_lp, solution, pomdp.num_states)
        logger.debug(f"Full LP for node {n}: eps={epsilon:.3e}, {node_lp.num_variables} variables, "
                     f"{solution.iterations} pivots")
        return ImprovementResult(
            epsilon=epsilon,
            new_action_probs=action_probs,
            new_joint_transition=joint,
            tangent_belief=tangent,
            lp_solves=1,
            lp_variable_counts=[node_lp.num_variables],
        )


improvement_repo = ImprovementRepo()
