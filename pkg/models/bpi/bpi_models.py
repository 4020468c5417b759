from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, Field, model_validator

from models.controller.controller_models import SparsityStats, TransitionKey
from models.pomdp.pomdp_models import BeliefState


class ImprovementMode(str, Enum):
    FULL = "full"
    SPARSE = "sparse"
    SPARSE_EARLY = "sparse-early"


class ParamSet(BaseModel):
    """Variables of a (possibly reduced) node-improvement LP."""

    action_vars: Set[int] = Field(default_factory=set)
    transition_vars: Set[TransitionKey] = Field(default_factory=set)

    def violations(self, num_observations: int) -> List[str]:
        problems = []
        covered: Set[Tuple[int, int]] = set()
        for (a, z, _) in self.transition_vars:
            if a not in self.action_vars:
                problems.append(f"transition variable for action {a} without its action variable")
            covered.add((a, z))
        for a in sorted(self.action_vars):
            for z in range(num_observations):
                if (a, z) not in covered:
                    problems.append(f"no successor variable for (a={a}, z={z})")
        return problems

    @property
    def size(self) -> int:
        return len(self.action_vars) + len(self.transition_vars)

    def sorted_actions(self) -> List[int]:
        return sorted(self.action_vars)

    def sorted_transitions(self) -> List[TransitionKey]:
        return sorted(self.transition_vars)


class BackupResult(BaseModel):
    value: float = Field(..., description="Backed-up value at the belief")
    best_action: int
    best_successor: Dict[int, int] = Field(
        default_factory=dict, description="Best successor node per possible observation"
    )


class SparseIteration(BaseModel):
    """One reduced LP solved while improving a node."""

    epsilon: float
    threshold: float
    backup_gap: float = Field(..., description="backup value - current value - threshold, at the tangent belief")
    variables_added: int
    num_variables: int
    tangent_belief: BeliefState


class ImprovementResult(BaseModel):
    epsilon: float
    new_action_probs: Dict[int, float]
    new_joint_transition: Dict[TransitionKey, float]
    tangent_belief: BeliefState
    lp_solves: int = 1
    lp_variable_counts: List[int] = Field(default_factory=list)
    iterations: List[SparseIteration] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_epsilon(self):
        if self.epsilon < -1e-9:
            raise ValueError(f"improvement epsilon {self.epsilon} is negative")
        return self


class TimingSummary(BaseModel):
    min: float = 0.0
    avg: float = 0.0
    max: float = 0.0

    @classmethod
    def from_samples(cls, samples: List[float]) -> "TimingSummary":
        if not samples:
            return cls()
        return cls(min=min(samples), avg=sum(samples) / len(samples), max=max(samples))


class BpiSettings(BaseModel):
    """Knobs of the outer loop; RunConfig maps onto this."""

    mode: ImprovementMode = ImprovementMode.SPARSE
    gap_tolerance: float = Field(0.0, ge=0.0)
    add_k: int = Field(5, ge=1)
    max_nodes: int = Field(300, ge=1)
    max_outer_iterations: int = Field(1000, ge=1)
    max_sweeps: int = Field(200, ge=1)
    epsilon_tolerance: float = Field(1e-8, ge=0.0)
    frozen_sweep: bool = False
    cpu_time: bool = False


class IterationRecord(BaseModel):
    iteration: int
    num_nodes: int
    value_at_b0: float
    sparsity: SparsityStats
    per_node_improve_ms: TimingSummary
    num_reduced_lps_solved: int = 0
    sweeps: int = 0
    sweep_cap_hit: bool = False
    max_epsilon_per_sweep: List[float] = Field(default_factory=list)
    nodes_added: int = 0


class BpiTrace(BaseModel):
    records: List[IterationRecord] = Field(default_factory=list)
    converged: bool = False
    truncated: bool = False
    truncation_reason: Optional[str] = None
    total_seconds: float = 0.0
