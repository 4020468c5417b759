import logging
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from config.settings import settings
from models.controller import Controller, ValueFunction
from models.pomdp import BeliefState, Pomdp
from utility.errors import InputError, InternalError

logger = logging.getLogger(__name__)

_METHODS = ("auto", "direct", "iterative")


class EvaluationRepo:
    """
    Exact controller evaluation.

    Solves V_n(s) = sum_a psi_n(a) R(s,a)
                    + beta * sum_{a,z,n'} w_n(a,z,n') sum_{s'} J[a,z,s,s'] V_n'(s')
    as the sparse linear system (I - beta M) V = r over the stacked vector V[n*S + s].
    """

    def __init__(
        self,
        direct_limit: int = settings.DIRECT_SOLVE_LIMIT,
        gs_tolerance: float = settings.GAUSS_SEIDEL_TOLERANCE,
        gs_max_sweeps: int = settings.GAUSS_SEIDEL_MAX_SWEEPS,
        residual_limit: float = settings.EVALUATION_RESIDUAL_LIMIT,
        column_ordering: str = settings.DIRECT_SOLVE_ORDERING,
    ):
        self.direct_limit = direct_limit
        self.column_ordering = column_ordering
        self.gs_tolerance = gs_tolerance
        self.gs_max_sweeps = gs_max_sweeps
        self.residual_limit = residual_limit

    def _check_dimensions(self, controller: Controller, pomdp: Pomdp) -> None:
        for i, node in enumerate(controller.nodes):
            for a in node.action_probs:
                if not 0 <= a < pomdp.num_actions:
                    raise InputError(f"node {i} uses action {a} outside [0, {pomdp.num_actions})")
            for (_, z, _) in node.joint_transition:
                if not 0 <= z < pomdp.num_observations:
                    raise InputError(f"node {i} uses observation {z} outside [0, {pomdp.num_observations})")

    def assemble(self, controller: Controller, pomdp: Pomdp) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """Return (M, r) with M the (N*S x N*S) expected-transition matrix and r the stacked rewards."""
        self._check_dimensions(controller, pomdp)
        num_s = pomdp.num_states
        size = controller.size * num_s
        joint = pomdp.joint
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []
        r = np.empty(size)

        for n, node in enumerate(controller.nodes):
            psi_a = np.fromiter(node.action_probs.keys(), dtype=int)
            psi_p = np.fromiter(node.action_probs.values(), dtype=float)
            r[n * num_s:(n + 1) * num_s] = pomdp.reward[:, psi_a] @ psi_p

            by_successor: Dict[int, List[Tuple[int, int, float]]] = defaultdict(list)
            for (a, z, n2), w in node.joint_transition.items():
                by_successor[n2].append((a, z, w))
            for n2, entries in sorted(by_successor.items()):
                a_idx = np.array([e[0] for e in entries])
                z_idx = np.array([e[1] for e in entries])
                weights = np.array([e[2] for e in entries])
                block = np.tensordot(weights, joint[a_idx, z_idx], axes=1)
                s, s2 = np.nonzero(block)
                rows.append(n * num_s + s)
                cols.append(n2 * num_s + s2)
                vals.append(block[s, s2])

        if rows:
            matrix = sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
            )
        else:
            matrix = sparse.csr_matrix((size, size))
        return matrix, r

    def evaluate(self, controller: Controller, pomdp: Pomdp, method: str = "auto",
                 initial: Optional[ValueFunction] = None) -> ValueFunction:
        """
        Solve for the controller's value vectors.

        Args:
            controller: Controller to evaluate
            pomdp: Model the controller runs on
            method: "direct" (sparse LU), "iterative" (Gauss-Seidel) or "auto" (direct up to direct_limit unknowns)
            initial: Starting point for the iterative path, usually the previous value function;
                nodes beyond its size start at zero

        Returns:
            The value function, with the Bellman residual checked against residual_limit
        """
        if method not in _METHODS:
            raise InputError(f"unknown evaluation method {method!r}; expected one of {_METHODS}")
        matrix, r = self.assemble(controller, pomdp)
        size = r.shape[0]
        if method == "auto":
            method = "direct" if size <= self.direct_limit else "iterative"

        if method == "direct":
            values = self._solve_direct(matrix, r, pomdp.discount)
        else:
            start = self._starting_point(initial, controller.size, pomdp.num_states)
            values = self._solve_gauss_seidel(matrix, r, pomdp.discount, controller.size, pomdp.num_states, start)

        residual = float(np.max(np.abs(r + pomdp.discount * (matrix @ values) - values))) if size else 0.0
        logger.debug(f"Evaluated {controller.size} nodes ({size} unknowns, {method}); residual {residual:.2e}")
        if not np.all(np.isfinite(values)) or residual > self.residual_limit:
            raise InternalError(f"policy evaluation residual {residual:.3e} exceeds {self.residual_limit:.1e}")
        return ValueFunction(vectors=values.reshape(controller.size, pomdp.num_states))

    @staticmethod
    def _starting_point(initial: Optional[ValueFunction], num_nodes: int, num_states: int) -> np.ndarray:
        start = np.zeros((num_nodes, num_states))
        if initial is not None:
            if initial.num_states != num_states:
                raise InputError(f"initial values have {initial.num_states} states, POMDP has {num_states}")
            kept = min(initial.num_nodes, num_nodes)
            start[:kept] = initial.vectors[:kept]
        return start.reshape(-1)

    def _solve_direct(self, matrix: sparse.csr_matrix, r: np.ndarray, discount: float) -> np.ndarray:
        system = (sparse.identity(r.shape[0], format="csc") - discount * matrix.tocsc()).tocsc()
        try:
            return splu(system, permc_spec=self.column_ordering).solve(r)
        except RuntimeError as e:
            raise InternalError(f"evaluation system is singular: {e}")

    def _solve_gauss_seidel(self, matrix: sparse.csr_matrix, r: np.ndarray, discount: float,
                            num_nodes: int, num_states: int, start: Optional[np.ndarray] = None) -> np.ndarray:
        """Node-block Gauss-Seidel; later blocks in a sweep see the values updated earlier in it."""
        values = np.zeros_like(r) if start is None else start.copy()
        blocks = [matrix[n * num_states:(n + 1) * num_states] for n in range(num_nodes)]
        for sweep in range(1, self.gs_max_sweeps + 1):
            change = 0.0
            for n, block in enumerate(blocks):
                span = slice(n * num_states, (n + 1) * num_states)
                updated = r[span] + discount * (block @ values)
                change = max(change, float(np.max(np.abs(updated - values[span]))))
                values[span] = updated
            if change <= self.gs_tolerance:
                logger.debug(f"Gauss-Seidel converged after {sweep} sweeps")
                return values
        raise InternalError(f"Gauss-Seidel did not converge in {self.gs_max_sweeps} sweeps (last change {change:.3e})")

    def bellman_residual(self, controller: Controller, pomdp: Pomdp, v: ValueFunction) -> float:
        """Max-norm of (r + beta M V) - V."""
        if v.num_nodes != controller.size or v.num_states != pomdp.num_states:
            raise InputError("value function does not match the controller/POMDP dimensions")
        matrix, r = self.assemble(controller, pomdp)
        flat = v.vectors.reshape(-1)
        return float(np.max(np.abs(r + pomdp.discount * (matrix @ flat) - flat)))

    def belief_value(self, v: ValueFunction, b: BeliefState) -> Tuple[float, int]:
        if b.num_states != v.num_states:
            raise InputError(f"belief has {b.num_states} entries, value vectors have {v.num_states}")
        scores = v.vectors @ b.probs
        best = int(np.argmax(scores))
        return float(scores[best]), best

    def start_node(self, v: ValueFunction, b0: BeliefState) -> int:
        return self.belief_value(v, b0)[1]


evaluation_repo = EvaluationRepo()
