import time
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

from models.bpi.bpi_models import BpiSettings, ImprovementMode, IterationRecord, TimingSummary
from models.controller.controller_models import SparsityStats


class RunConfig(BaseModel):
    problem_path: str = Field(..., description="POMDP file in the standard text format, or random:S,A,Z[,discount]")
    mode: ImprovementMode = Field(ImprovementMode.SPARSE, description="full, sparse or sparse-early")
    gap_tolerance: float = Field(0.0, ge=0.0, description="Early-termination gap (sparse-early only)")
    add_k: int = Field(5, ge=1, description="Nodes added per local optimum")
    max_nodes: int = Field(300, ge=1)
    max_outer_iterations: int = Field(1000, ge=1)
    max_sweeps: int = Field(200, ge=1, description="Improvement sweeps per outer iteration")
    epsilon_tolerance: float = Field(1e-8, ge=0.0)
    report_path: str = Field("report.json")
    save_policy_path: Optional[str] = None
    seed: int = Field(0, description="Random-POMDP generation only")
    frozen_sweep: bool = False
    cpu_time: bool = False

    def to_bpi_settings(self) -> BpiSettings:
        return BpiSettings(
            mode=self.mode,
            gap_tolerance=self.gap_tolerance,
            add_k=self.add_k,
            max_nodes=self.max_nodes,
            max_outer_iterations=self.max_outer_iterations,
            max_sweeps=self.max_sweeps,
            epsilon_tolerance=self.epsilon_tolerance,
            frozen_sweep=self.frozen_sweep,
            cpu_time=self.cpu_time,
        )


class ControllerSummary(BaseModel):
    num_nodes: int
    value_at_b0: float
    start_node: int
    sparsity: SparsityStats
    deterministic_nodes: int


class RunReport(BaseModel):
    schema_version: str
    command: str = "solve"
    problem: Dict[str, Union[int, float]] = Field(default_factory=dict, description="num_states, num_actions, num_observations, discount")
    config: RunConfig
    records: List[IterationRecord] = Field(default_factory=list)
    final_controller: ControllerSummary
    converged: bool
    truncated: bool
    truncation_reason: Optional[str] = None
    wall_clock_seconds: float = 0.0
    created_at: int = Field(default_factory=lambda: int(time.time()))


class BenchRow(BaseModel):
    target_nodes: int
    num_nodes: int
    full_ms: TimingSummary
    sparse_ms: TimingSummary
    full_lp_variables: int
    sparse_lp_variables_median: float
    sparse_lp_variables_max: int
    sparse_lps_per_node_avg: float
    sparsity: SparsityStats
    max_epsilon_mismatch: float = Field(..., description="max |eps_full - eps_sparse| over timed nodes")
    nodes_timed: int


class BenchReport(BaseModel):
    schema_version: str
    command: str = "bench-compare"
    problem: Dict[str, Union[int, float]] = Field(default_factory=dict)
    config: RunConfig
    ladder: List[int]
    bench_sweeps: int
    rows: List[BenchRow] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
    created_at: int = Field(default_factory=lambda: int(time.time()))


class EvalReport(BaseModel):
    exact_value: float
    start_node: int
    mc_estimate: float
    mc_std_error: float
    truncation_bias_bound: float
    rollouts: int
    horizon: int
    seed: int


class PolicyNodeDocument(BaseModel):
    action_probs: Dict[str, float]
    transitions: Dict[str, Dict[str, float]] = Field(
        default_factory=dict, description='"a,z" -> {successor node: joint probability}'
    )


class PolicyDocument(BaseModel):
    version: str
    transition_form: str = Field("joint", description="transitions hold psi(a) * P(n'|n,a,z)")
    num_actions: Optional[int] = None
    num_observations: Optional[int] = None
    nodes: List[PolicyNodeDocument]
