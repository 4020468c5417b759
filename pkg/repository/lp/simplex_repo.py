import itertools
import logging
import threading
import warnings
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from config.settings import settings
from models.lp import LpModel, LpSolution, LpStatus, Relation
from utility.errors import InternalError, LpStallError

logger = logging.getLogger(__name__)

# ("var", j) for structural column j, ("slack", i) for the slack of row i
BasisHint = Sequence[Tuple[str, int]]

_SINGULAR_PIVOT = 1e-11


class _StandardForm:
    """
    Equality form of an LpModel: rows with negative rhs are negated, inequality
    rows get a slack (+1 for <=, -1 for >=) and rows without a +1 slack get an
    artificial column. Column order: structural, slack, artificial.
    """

    def __init__(self, model: LpModel):
        m, n = model.num_constraints, model.num_variables
        self.num_rows = m
        self.num_structural = n
        self.row_sign = np.where(model.rhs < 0, -1.0, 1.0)
        self.b = self.row_sign * model.rhs

        self.slack_of_row = {}
        slack_rows, slack_coefs = [], []
        for i, relation in enumerate(model.relations):
            if relation == Relation.EQ:
                continue
            coef = 1.0 if relation == Relation.LE else -1.0
            self.slack_of_row[i] = n + len(slack_rows)
            slack_rows.append(i)
            slack_coefs.append(coef * self.row_sign[i])
        num_slack = len(slack_rows)

        art_rows = [i for i in range(m)
                    if i not in self.slack_of_row or slack_coefs[self.slack_of_row[i] - n] < 0]
        num_art = len(art_rows)
        self.num_columns = n + num_slack + num_art

        structural = sparse.diags(self.row_sign) @ model.matrix
        slack = sparse.csr_matrix((slack_coefs, (slack_rows, range(num_slack))), shape=(m, num_slack))
        art = sparse.csr_matrix((np.ones(num_art), (art_rows, range(num_art))), shape=(m, num_art))
        self.A = sparse.hstack([structural, slack, art], format="csc")

        self.free = np.zeros(self.num_columns, dtype=bool)
        self.free[:n] = np.isneginf(model.lower_bounds)
        self.artificial = np.zeros(self.num_columns, dtype=bool)
        self.artificial[n + num_slack:] = True

        self.cost = np.zeros(self.num_columns)
        self.cost[:n] = model.objective

        art_of_row = {i: n + num_slack + k for k, i in enumerate(art_rows)}
        self.initial_basis = np.array(
            [art_of_row.get(i, self.slack_of_row.get(i, -1)) for i in range(m)], dtype=int
        )

    def column(self, j: int) -> np.ndarray:
        return self.A[:, j].toarray().ravel()

    def hint_columns(self, hint: BasisHint) -> Optional[np.ndarray]:
        columns = []
        for kind, index in hint:
            if kind == "var" and 0 <= index < self.num_structural:
                columns.append(index)
            elif kind == "slack" and index in self.slack_of_row:
                columns.append(self.slack_of_row[index])
            else:
                return None
        if len(columns) != self.num_rows or len(set(columns)) != len(columns):
            return None
        return np.array(columns, dtype=int)


class _Factor:
    """LU factorization of the current basis matrix."""

    def __init__(self, form: _StandardForm, basis: np.ndarray):
        dense = form.A[:, basis].toarray()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            self.lu = lu_factor(dense, check_finite=False)
        pivots = np.abs(np.diag(self.lu[0]))
        scale = max(1.0, float(np.max(np.abs(dense)))) if dense.size else 1.0
        self.singular = bool(dense.size) and float(np.min(pivots)) <= _SINGULAR_PIVOT * scale

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu, rhs, check_finite=False)

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu, rhs, trans=1, check_finite=False)


class SimplexRepo:
    """
    Two-phase revised simplex for maximization with free and non-negative variables.

    Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
    Free variables may enter in either direction and never leave the basis.
    Duals are returned per original row, so <= rows of a maximization carry
    non-negative duals.
    """

    def __init__(
        self,
        feasibility_tolerance: float = settings.LP_FEASIBILITY_TOLERANCE,
        optimality_tolerance: float = settings.LP_OPTIMALITY_TOLERANCE,
        pivot_tolerance: float = settings.LP_PIVOT_TOLERANCE,
        bland_after: int = settings.LP_BLAND_AFTER,
        dump_dir: Optional[str] = settings.LP_DUMP_DIR,
    ):
        self.feasibility_tolerance = feasibility_tolerance
        self.optimality_tolerance = optimality_tolerance
        self.pivot_tolerance = pivot_tolerance
        self.bland_after = bland_after
        self.dump_dir = dump_dir
        self._dump_counter = itertools.count()
        self._dump_lock = threading.Lock()

    def solve(self, model: LpModel, basis_hint: Optional[BasisHint] = None) -> LpSolution:
        if self.dump_dir:
            with self._dump_lock:
                index = next(self._dump_counter)
            self.write_lp_file(model, str(Path(self.dump_dir) / f"lp_{index:06d}.lp"))

        if model.num_constraints == 0:
            return self._solve_unconstrained(model)
        form = _StandardForm(model)
        m = form.num_rows
        cap = 10 * (m + form.num_columns) * max(m, form.num_columns)
        iterations = 0
        phase_one_used = False

        basis = self._warm_basis(form, basis_hint) if basis_hint is not None else None
        if basis is None and not form.artificial.any():
            basis = form.initial_basis.copy()
        if basis is None:
            phase_one_used = True
            basis = form.initial_basis.copy()
            phase_one_cost = np.where(form.artificial, -1.0, 0.0)
            status, basis, used = self._iterate(form, basis, phase_one_cost, ~form.artificial, cap, cap_artificials=False)
            iterations += used
            factor = _Factor(form, basis)
            x_basic = factor.solve(form.b)
            infeasibility = float(np.sum(x_basic[form.artificial[basis]]))
            if infeasibility > self.feasibility_tolerance * max(1.0, float(np.max(np.abs(form.b)))):
                logger.debug(f"LP infeasible: phase 1 ended with artificial mass {infeasibility:.3e}")
                return LpSolution(status=LpStatus.INFEASIBLE, iterations=iterations, phase_one_used=True)
            basis = self._drive_out_artificials(form, basis)

        status, basis, used = self._iterate(form, basis, form.cost, ~form.artificial, cap - iterations, cap_artificials=True)
        iterations += used
        if status == LpStatus.UNBOUNDED:
            logger.debug(f"LP unbounded after {iterations} iterations")
            return LpSolution(status=LpStatus.UNBOUNDED, iterations=iterations, phase_one_used=phase_one_used)

        factor = _Factor(form, basis)
        x = np.zeros(form.num_columns)
        x[basis] = factor.solve(form.b)
        y = factor.solve_transposed(form.cost[basis])

        primal = x[:form.num_structural]
        bounded = ~form.free[:form.num_structural]
        primal[bounded & (primal < 0) & (primal > -self.feasibility_tolerance)] = 0.0
        objective = float(model.objective @ primal)
        logger.debug(
            f"LP optimal: {model.num_variables} vars, {m} rows, {iterations} iterations, "
            f"phase 1 {'used' if phase_one_used else 'skipped'}, objective {objective:.10g}"
        )
        return LpSolution(
            status=LpStatus.OPTIMAL,
            objective_value=objective,
            primal=primal,
            dual=form.row_sign * y,
            slack=model.rhs - model.matrix @ primal,
            iterations=iterations,
            phase_one_used=phase_one_used,
        )

    def _solve_unconstrained(self, model: LpModel) -> LpSolution:
        c = model.objective
        free = np.isneginf(model.lower_bounds)
        if np.any(c > self.optimality_tolerance) or np.any(free & (np.abs(c) > self.optimality_tolerance)):
            return LpSolution(status=LpStatus.UNBOUNDED)
        primal = np.zeros(model.num_variables)
        return LpSolution(status=LpStatus.OPTIMAL, objective_value=0.0, primal=primal,
                          dual=np.zeros(0), slack=np.zeros(0))

    def _warm_basis(self, form: _StandardForm, hint: BasisHint) -> Optional[np.ndarray]:
        basis = form.hint_columns(hint)
        if basis is None:
            logger.debug("Basis hint does not describe a basis; running phase 1")
            return None
        factor = _Factor(form, basis)
        if factor.singular:
            logger.debug("Basis hint is singular; running phase 1")
            return None
        x_basic = factor.solve(form.b)
        bounded = ~form.free[basis]
        if np.any(x_basic[bounded] < -self.feasibility_tolerance):
            logger.debug(f"Basis hint is infeasible (min {x_basic[bounded].min():.3e}); running phase 1")
            return None
        return basis

    def _iterate(self, form: _StandardForm, basis: np.ndarray, cost: np.ndarray, enterable: np.ndarray,
                 cap: int, cap_artificials: bool) -> Tuple[LpStatus, np.ndarray, int]:
        basis = basis.copy()
        degenerate_run = 0
        bland = False
        iterations = 0
        while True:
            factor = _Factor(form, basis)
            if factor.singular:
                raise InternalError("simplex basis became singular")
            x_basic = factor.solve(form.b)
            y = factor.solve_transposed(cost[basis])
            reduced = cost - form.A.T @ y

            eligible = enterable.copy()
            eligible[basis] = False
            increase = eligible & (reduced > self.optimality_tolerance)
            decrease = eligible & form.free & (reduced < -self.optimality_tolerance)
            candidates = increase | decrease
            if not candidates.any():
                return LpStatus.OPTIMAL, basis, iterations

            if iterations >= cap:
                primal = np.zeros(form.num_columns)
                primal[basis] = x_basic
                raise LpStallError(
                    f"simplex reached its iteration cap ({cap})",
                    primal=primal[:form.num_structural],
                    objective_value=float(form.cost @ primal),
                )

            if bland:
                entering = int(np.flatnonzero(candidates)[0])
            else:
                entering = int(np.argmax(np.where(candidates, np.abs(reduced), -np.inf)))
            direction = 1.0 if reduced[entering] > 0 else -1.0

            delta = direction * factor.solve(form.column(entering))
            basic_free = form.free[basis]
            basic_art = form.artificial[basis] & cap_artificials
            blocking = (~basic_free & (delta > self.pivot_tolerance)) | (basic_art & (np.abs(delta) > self.pivot_tolerance))
            if not blocking.any():
                return LpStatus.UNBOUNDED, basis, iterations

            ratios = np.full(form.num_rows, np.inf)
            ratios[blocking] = np.maximum(x_basic[blocking], 0.0) / np.abs(delta[blocking])
            step = float(ratios.min())
            ties = np.flatnonzero(blocking & (ratios <= step + 1e-12))
            if bland:
                leaving = int(ties[np.argmin(basis[ties])])
            else:
                leaving = int(ties[np.argmax(np.abs(delta[ties]))])

            basis[leaving] = entering
            iterations += 1
            if step <= self.feasibility_tolerance:
                degenerate_run += 1
                if not bland and degenerate_run >= self.bland_after:
                    logger.debug(f"Switching to Bland's rule after {degenerate_run} degenerate pivots")
                    bland = True
            else:
                degenerate_run = 0

    def _drive_out_artificials(self, form: _StandardForm, basis: np.ndarray) -> np.ndarray:
        """Pivot zero-valued artificials out of the basis where a non-artificial column allows it."""
        basis = basis.copy()
        for row in np.flatnonzero(form.artificial[basis]):
            factor = _Factor(form, basis)
            unit = np.zeros(form.num_rows)
            unit[row] = 1.0
            pivot_row = form.A.T @ factor.solve_transposed(unit)
            allowed = ~form.artificial.copy()
            allowed[basis] = False
            scores = np.where(allowed, np.abs(pivot_row), 0.0)
            best = int(np.argmax(scores))
            if scores[best] > self.pivot_tolerance:
                basis[row] = best
            else:
                logger.debug(f"Row {row} is redundant; its artificial stays basic at zero")
        return basis

    def write_lp_file(self, model: LpModel, path: str) -> None:
        """Dump the model in CPLEX LP text format."""
        names = model.variable_names or [f"x{j}" for j in range(model.num_variables)]

        def terms(coefficients: List[Tuple[int, float]]) -> str:
            if not coefficients:
                return "0 " + names[0] if names else "0"
            parts = []
            for k, (j, c) in enumerate(coefficients):
                sign = "-" if c < 0 else ("+" if k else "")
                parts.append(f"{sign} {abs(c)!r} {names[j]}".strip())
            return " ".join(parts)

        lines = ["\\ written by sparse-bpi", "Maximize", " obj: " + terms(
            [(j, float(c)) for j, c in enumerate(model.objective) if c != 0.0])]
        lines.append("Subject To")
        matrix = model.matrix.tocsr()
        seen = set()
        for i in range(model.num_constraints):
            label = model.tags[i].label
            if label in seen or label == "row":
                label = f"c{i}"
            seen.add(label)
            start, end = matrix.indptr[i], matrix.indptr[i + 1]
            row = list(zip(matrix.indices[start:end].tolist(), matrix.data[start:end].tolist()))
            lines.append(f" {label}: {terms(row)} {model.relations[i].value} {float(model.rhs[i])!r}")
        free = [names[j] for j in np.flatnonzero(np.isneginf(model.lower_bounds))]
        if free:
            lines.append("Bounds")
            lines.extend(f" {name} free" for name in free)
        lines.append("End")
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


simplex_repo = SimplexRepo()
