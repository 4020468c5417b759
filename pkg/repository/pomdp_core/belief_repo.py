import logging
from typing import Optional

import numpy as np

from config.settings import settings
from models.pomdp import BeliefState, Pomdp
from utility.errors import InputError

logger = logging.getLogger(__name__)


class BeliefRepo:
    """Belief-state arithmetic: P(z|b,a), R(b,a) and the Bayes update b_z^a."""

    def __init__(self, zero_tolerance: float = settings.ZERO_PROB_TOLERANCE):
        self.zero_tolerance = zero_tolerance

    def _check(self, pomdp: Pomdp, b: BeliefState, a: int, z: Optional[int] = None) -> None:
        pomdp.check_action(a)
        if z is not None:
            pomdp.check_observation(z)
        if b.num_states != pomdp.num_states:
            raise InputError(f"belief has {b.num_states} entries, POMDP has {pomdp.num_states} states")

    def unnormalized_successor(self, pomdp: Pomdp, probs: np.ndarray, a: int, z: int) -> np.ndarray:
        """u(s') = sum_s b(s) P(s'|s,a) P(z|s',a); its sum is P(z|b,a)."""
        return probs @ pomdp.joint[a, z]

    def obs_prob(self, pomdp: Pomdp, b: BeliefState, a: int, z: int) -> float:
        self._check(pomdp, b, a, z)
        predicted = b.probs @ pomdp.transition[:, a, :]
        return float(np.clip(predicted @ pomdp.observation[a, :, z], 0.0, 1.0))

    def belief_reward(self, pomdp: Pomdp, b: BeliefState, a: int) -> float:
        self._check(pomdp, b, a)
        return float(b.probs @ pomdp.reward[:, a])

    def belief_update(self, pomdp: Pomdp, b: BeliefState, a: int, z: int) -> Optional[BeliefState]:
        """Bayes update; None when the observation is impossible under (b, a)."""
        self._check(pomdp, b, a, z)
        unnormalized = self.unnormalized_successor(pomdp, b.probs, a, z)
        total = unnormalized.sum()
        if total <= self.zero_tolerance:
            logger.debug(f"Observation {z} impossible after action {a} (P={total:.3e})")
            return None
        return BeliefState.normalized(unnormalized / total)


belief_repo = BeliefRepo()
