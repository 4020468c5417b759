from functools import cached_property
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings
from utility.errors import InputError


def _as_float_array(v, ndim: int, name: str) -> np.ndarray:
    arr = np.array(v, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class BeliefState(BaseModel):
    """Probability vector over states."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray = Field(..., description="Probability of each state, length |S|")

    @field_validator("probs", mode="before")
    @classmethod
    def validate_probs(cls, v):
        arr = _as_float_array(v, 1, "belief")
        if arr.size == 0:
            raise ValueError("belief must have at least one state")
        if np.any(arr < -settings.ZERO_PROB_TOLERANCE):
            raise ValueError(f"belief has negative entry {arr.min():.3e}")
        arr = np.clip(arr, 0.0, None)
        total = arr.sum()
        if abs(total - 1.0) > settings.STOCHASTIC_TOLERANCE:
            raise ValueError(f"belief sums to {total!r}, expected 1")
        arr.setflags(write=False)
        return arr

    @property
    def num_states(self) -> int:
        return int(self.probs.shape[0])

    @classmethod
    def uniform(cls, num_states: int) -> "BeliefState":
        return cls(probs=np.full(num_states, 1.0 / num_states))

    @classmethod
    def point(cls, num_states: int, state: int) -> "BeliefState":
        probs = np.zeros(num_states)
        probs[state] = 1.0
        return cls(probs=probs)

    @classmethod
    def normalized(cls, weights: np.ndarray) -> "BeliefState":
        """Normalize non-negative weights (tiny negatives from round-off are clipped)."""
        w = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
        return cls(probs=w / w.sum())


class Pomdp(BaseModel):
    """
    Discrete discounted POMDP.

    transition[s, a, s'] = P(s'|s,a), observation[a, s', z] = P(z|s',a),
    reward[s, a] = R(s,a). Arrays are made read-only after validation.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transition: np.ndarray = Field(..., description="P(s'|s,a), shape (S, A, S)")
    observation: np.ndarray = Field(..., description="P(z|s',a), shape (A, S, Z)")
    reward: np.ndarray = Field(..., description="Expected immediate reward R(s,a), shape (S, A)")
    discount: float = Field(..., description="Discount factor, 0 < beta < 1")
    start_belief: Optional[BeliefState] = Field(None, description="Initial belief; uniform when absent")
    state_names: Optional[List[str]] = None
    action_names: Optional[List[str]] = None
    observation_names: Optional[List[str]] = None

    @field_validator("transition", "observation", mode="before")
    @classmethod
    def validate_probability_table(cls, v, info):
        return _as_float_array(v, 3, info.field_name)

    @field_validator("reward", mode="before")
    @classmethod
    def validate_reward(cls, v):
        return _as_float_array(v, 2, "reward")

    @field_validator("discount")
    @classmethod
    def validate_discount(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"discount must satisfy 0 < discount < 1, got {v}")
        return v

    @model_validator(mode="after")
    def validate_tables(self):
        num_s, num_a, num_s2 = self.transition.shape
        if num_s != num_s2:
            raise ValueError(f"transition shape {self.transition.shape} is not (S, A, S)")
        if self.observation.shape[:2] != (num_a, num_s):
            raise ValueError(f"observation shape {self.observation.shape} does not match (A={num_a}, S={num_s}, Z)")
        if self.reward.shape != (num_s, num_a):
            raise ValueError(f"reward shape {self.reward.shape} does not match (S={num_s}, A={num_a})")
        if self.observation.shape[2] < 1:
            raise ValueError("at least one observation is required")

        if np.any(self.transition < 0):
            s, a, s2 = np.argwhere(self.transition < 0)[0]
            raise ValueError(f"negative transition probability P({s2}|{s},{a})")
        row_sums = self.transition.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > settings.STOCHASTIC_TOLERANCE)
        if bad.size:
            s, a = bad[0]
            raise ValueError(f"transition row (s={s}, a={a}) sums to {row_sums[s, a]!r}")

        if np.any(self.observation < 0):
            a, s2, z = np.argwhere(self.observation < 0)[0]
            raise ValueError(f"negative observation probability P({z}|{s2},{a})")
        obs_sums = self.observation.sum(axis=2)
        bad = np.argwhere(np.abs(obs_sums - 1.0) > settings.STOCHASTIC_TOLERANCE)
        if bad.size:
            a, s2 = bad[0]
            raise ValueError(f"observation row (s'={s2}, a={a}) sums to {obs_sums[a, s2]!r}")

        if self.start_belief is not None and self.start_belief.num_states != num_s:
            raise ValueError("start belief length does not match the number of states")
        for names, expected, label in (
            (self.state_names, num_s, "state"),
            (self.action_names, num_a, "action"),
            (self.observation_names, self.observation.shape[2], "observation"),
        ):
            if names is not None and len(names) != expected:
                raise ValueError(f"{len(names)} {label} names given for {expected} {label}s")

        for arr in (self.transition, self.observation, self.reward):
            arr.setflags(write=False)
        return self

    @property
    def num_states(self) -> int:
        return int(self.transition.shape[0])

    @property
    def num_actions(self) -> int:
        return int(self.transition.shape[1])

    @property
    def num_observations(self) -> int:
        return int(self.observation.shape[2])

    @property
    def initial_belief(self) -> BeliefState:
        return self.start_belief if self.start_belief is not None else BeliefState.uniform(self.num_states)

    @cached_property
    def joint(self) -> np.ndarray:
        """J[a, z, s, s'] = P(s'|s,a) * P(z|s',a)."""
        trans = np.transpose(self.transition, (1, 0, 2))  # (A, S, S')
        obs = np.transpose(self.observation, (0, 2, 1))  # (A, Z, S')
        joint = trans[:, None, :, :] * obs[:, :, None, :]
        joint.setflags(write=False)
        return joint

    @cached_property
    def reward_bound(self) -> float:
        return float(np.max(np.abs(self.reward))) if self.reward.size else 0.0

    def check_action(self, a: int) -> None:
        if not 0 <= a < self.num_actions:
            raise InputError(f"action index {a} out of range [0, {self.num_actions})")

    def check_observation(self, z: int) -> None:
        if not 0 <= z < self.num_observations:
            raise InputError(f"observation index {z} out of range [0, {self.num_observations})")

    def value_bound(self) -> float:
        return self.reward_bound / (1.0 - self.discount)
