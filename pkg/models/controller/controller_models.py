import math
from collections import defaultdict
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings

TransitionKey = Tuple[int, int, int]

# Stands in for the node's own index in deterministic keys.
SELF_LOOP = -1


class Node(BaseModel):
    """
    One controller node.

    joint_transition stores w(a, z, n') = psi(a) * P(n'|n, a, z); the conditional
    successor distribution is w / psi(a).
    """

    action_probs: Dict[int, float] = Field(default_factory=dict, description="psi(a) for actions with positive probability")
    joint_transition: Dict[TransitionKey, float] = Field(
        default_factory=dict, description="w(a, z, n') for stored (positive) entries"
    )

    @field_validator("action_probs")
    @classmethod
    def sort_actions(cls, v: Dict[int, float]) -> Dict[int, float]:
        return {a: float(v[a]) for a in sorted(v)}

    @field_validator("joint_transition")
    @classmethod
    def sort_transitions(cls, v: Dict[TransitionKey, float]) -> Dict[TransitionKey, float]:
        return {tuple(k): float(v[k]) for k in sorted(v)}

    @model_validator(mode="after")
    def check_invariants(self):
        problems = self.invariant_violations(settings.STOCHASTIC_TOLERANCE)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def invariant_violations(self, tol: float) -> List[str]:
        problems: List[str] = []
        if not self.action_probs:
            return ["node has no action"]
        for a, p in self.action_probs.items():
            if not p > 0:
                problems.append(f"stored psi({a}) = {p} is not positive")
        total = sum(self.action_probs.values())
        if abs(total - 1.0) > tol:
            problems.append(f"action probabilities sum to {total!r}")

        sums: Dict[Tuple[int, int], float] = defaultdict(float)
        for (a, z, n2), w in self.joint_transition.items():
            if a not in self.action_probs:
                problems.append(f"transition ({a},{z},{n2}) stored for action with zero probability")
            if not w > 0:
                problems.append(f"stored w({a},{z},{n2}) = {w} is not positive")
            sums[(a, z)] += w
        observations = {z for (_, z) in sums}
        for a, p in self.action_probs.items():
            for z in observations:
                if abs(sums.get((a, z), 0.0) - p) > tol:
                    problems.append(f"successor mass for (a={a}, z={z}) is {sums.get((a, z), 0.0)!r}, expected psi={p!r}")
        return problems

    @property
    def nonzero_count(self) -> int:
        return len(self.action_probs) + len(self.joint_transition)

    @property
    def is_deterministic(self) -> bool:
        if len(self.action_probs) != 1:
            return False
        per_obs = defaultdict(int)
        for (_, z, _) in self.joint_transition:
            per_obs[z] += 1
        return all(count == 1 for count in per_obs.values())

    def successor_nodes(self) -> List[int]:
        return sorted({n2 for (_, _, n2) in self.joint_transition})

    def conditional_transition(self, a: int, z: int) -> Dict[int, float]:
        """P(n'|n, a, z) for an action with positive probability."""
        psi = self.action_probs.get(a, 0.0)
        if psi <= 0:
            return {}
        return {n2: w / psi for (a2, z2, n2), w in self.joint_transition.items() if a2 == a and z2 == z}

    def deterministic_key(self, own_index: int):
        """(action, successors per observation) with self-loops written as SELF_LOOP; None if stochastic."""
        if not self.is_deterministic:
            return None
        (action,) = self.action_probs
        successors = {z: (SELF_LOOP if n2 == own_index else n2) for (_, z, n2) in self.joint_transition}
        return action, tuple(sorted(successors.items()))


class Controller(BaseModel):
    """Stochastic finite-state controller; node order defines node indices."""

    nodes: List[Node] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_references(self):
        if not self.nodes:
            raise ValueError("controller must have at least one node")
        size = len(self.nodes)
        for i, node in enumerate(self.nodes):
            successors = node.successor_nodes()
            outside = [n2 for n2 in (successors[0], successors[-1]) if not 0 <= n2 < size] if successors else []
            if outside:
                raise ValueError(f"node {i} references node {outside[0]} outside [0, {size})")
        return self

    @property
    def size(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)


class SparsityStats(BaseModel):
    total_params_per_node: int = Field(..., description="|A| + |A||Z||N|")
    min_nonzero: int
    max_nonzero: int
    avg_nonzero: int = Field(..., description="Average non-zero parameters per node, rounded up")

    @classmethod
    def from_counts(cls, counts: List[int], total: int) -> "SparsityStats":
        return cls(
            total_params_per_node=total,
            min_nonzero=min(counts),
            max_nonzero=max(counts),
            avg_nonzero=math.ceil(sum(counts) / len(counts) - 1e-12),
        )


class ValueFunction(BaseModel):
    """One |S|-vector per controller node; vectors[n] is V_n."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vectors: np.ndarray = Field(..., description="Shape (|N|, |S|)")

    @field_validator("vectors", mode="before")
    @classmethod
    def validate_vectors(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"value vectors must have shape (N, S), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("value vectors contain non-finite entries")
        return arr

    @property
    def num_nodes(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def num_states(self) -> int:
        return int(self.vectors.shape[1])

    def lift(self, n: int, epsilon: float) -> None:
        """Raise V_n by epsilon in every state."""
        self.vectors[n] += epsilon

    def clone(self) -> "ValueFunction":
        return ValueFunction(vectors=self.vectors.copy())
