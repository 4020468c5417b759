from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse


class Relation(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class ConstraintKind(str, Enum):
    IMPROVEMENT = "improvement"
    ACTION_NORMALIZATION = "action-normalization"
    ETA_SUM = "eta-sum"
    OTHER = "other"


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class ConstraintTag(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ConstraintKind = ConstraintKind.OTHER
    state: Optional[int] = Field(None, description="State index for improvement rows")
    action: Optional[int] = Field(None, description="Action index for eta-sum rows")
    observation: Optional[int] = Field(None, description="Observation index for eta-sum rows")

    @property
    def label(self) -> str:
        if self.kind == ConstraintKind.IMPROVEMENT:
            return f"improve_s{self.state}"
        if self.kind == ConstraintKind.ACTION_NORMALIZATION:
            return "psi_sum"
        if self.kind == ConstraintKind.ETA_SUM:
            return f"eta_a{self.action}_z{self.observation}"
        return "row"


class LpModel(BaseModel):
    """
    maximize objective @ x  subject to  matrix @ x (relation) rhs,  x >= lower_bounds.

    lower_bounds entries are 0 or -inf (free variable). The matrix is kept in
    compressed sparse row form without explicit zeros.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    objective: np.ndarray
    lower_bounds: np.ndarray
    matrix: sparse.csr_matrix
    relations: List[Relation]
    rhs: np.ndarray
    tags: List[ConstraintTag]
    variable_names: Optional[List[str]] = None

    @field_validator("objective", "lower_bounds", "rhs", mode="before")
    @classmethod
    def as_vector(cls, v):
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @field_validator("matrix", mode="before")
    @classmethod
    def as_csr(cls, v):
        m = sparse.csr_matrix(v, dtype=np.float64)
        m.eliminate_zeros()
        return m

    @model_validator(mode="after")
    def check_shapes(self):
        num_rows, num_vars = self.matrix.shape
        if self.objective.shape[0] != num_vars or self.lower_bounds.shape[0] != num_vars:
            raise ValueError(f"objective/bounds length does not match {num_vars} variables")
        if self.rhs.shape[0] != num_rows or len(self.relations) != num_rows or len(self.tags) != num_rows:
            raise ValueError(f"rhs/relations/tags length does not match {num_rows} rows")
        if not np.all((self.lower_bounds == 0.0) | np.isneginf(self.lower_bounds)):
            raise ValueError("lower bounds must be 0 or -inf")
        if self.variable_names is not None and len(self.variable_names) != num_vars:
            raise ValueError("variable_names length does not match the number of variables")
        return self

    @property
    def num_variables(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def num_constraints(self) -> int:
        return int(self.matrix.shape[0])

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        rows: Sequence[Tuple[Dict[int, float], Relation, float]],
        free_variables: Sequence[int] = (),
        tags: Optional[Sequence[ConstraintTag]] = None,
        variable_names: Optional[List[str]] = None,
    ) -> "LpModel":
        """Build a model from per-row coefficient maps {variable index: coefficient}."""
        num_vars = len(objective)
        data, indices, indptr = [], [], [0]
        for coefficients, _, _ in rows:
            for j in sorted(coefficients):
                if not 0 <= j < num_vars:
                    raise ValueError(f"row references unknown variable {j}")
                if coefficients[j] != 0.0:
                    indices.append(j)
                    data.append(float(coefficients[j]))
            indptr.append(len(indices))
        matrix = sparse.csr_matrix((data, indices, indptr), shape=(len(rows), num_vars))
        lower = np.zeros(num_vars)
        lower[list(free_variables)] = -np.inf
        return cls(
            objective=np.asarray(objective, dtype=np.float64),
            lower_bounds=lower,
            matrix=matrix,
            relations=[Relation(r) for _, r, _ in rows],
            rhs=np.array([b for _, _, b in rows], dtype=np.float64),
            tags=list(tags) if tags is not None else [ConstraintTag() for _ in rows],
            variable_names=variable_names,
        )


class LpSolution(BaseModel):
    """Primal values per variable, dual values per constraint (>= 0 on <= rows of a maximization)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: LpStatus
    objective_value: float = float("nan")
    primal: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    slack: Optional[np.ndarray] = Field(None, description="rhs - row activity per constraint")
    iterations: int = 0
    phase_one_used: bool = False

    @property
    def is_optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL
