import logging
import math
from typing import Optional, Tuple

import numpy as np

from config.settings import settings
from models.cli import EvalReport
from models.controller import Controller
from models.pomdp import Pomdp
from repository.controller.controller_repo import controller_repo
from repository.evaluation.evaluation_repo import evaluation_repo
from utility.errors import InputError

logger = logging.getLogger(__name__)


def _sample(cumulative: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling; cumulative has shape (k, m), u shape (k,)."""
    index = (cumulative < u[:, None]).sum(axis=1)
    return np.minimum(index, cumulative.shape[1] - 1)


class SimulationService:
    """Monte Carlo estimate of a controller's discounted return, vectorized across rollouts."""

    @staticmethod
    def truncation_bias(pomdp: Pomdp, horizon: int) -> float:
        return pomdp.reward_bound * pomdp.discount ** horizon / (1.0 - pomdp.discount)

    def default_horizon(self, pomdp: Pomdp, target: float = settings.MC_BIAS_TARGET) -> int:
        """Smallest horizon whose truncation bias is below target."""
        if pomdp.reward_bound == 0.0:
            return 1
        horizon = math.ceil(math.log(target * (1.0 - pomdp.discount) / pomdp.reward_bound) / math.log(pomdp.discount))
        horizon = max(horizon, 1)
        while self.truncation_bias(pomdp, horizon) >= target:
            horizon += 1
        return horizon

    @staticmethod
    def _tables(controller: Controller, pomdp: Pomdp) -> Tuple[np.ndarray, np.ndarray]:
        """Cumulative psi (N, A) and conditional successor tables (N, A, Z, N)."""
        num_n, num_a, num_z = controller.size, pomdp.num_actions, pomdp.num_observations
        psi = np.zeros((num_n, num_a))
        eta = np.zeros((num_n, num_a, num_z, num_n))
        for n, node in enumerate(controller.nodes):
            for a, p in node.action_probs.items():
                psi[n, a] = p
            for (a, z, n2), w in node.joint_transition.items():
                eta[n, a, z, n2] = w / node.action_probs[a]
        return np.cumsum(psi, axis=1), np.cumsum(eta, axis=3)

    def simulate(self, controller: Controller, pomdp: Pomdp, start_node: int, rollouts: int, horizon: int,
                 seed: int) -> Tuple[float, float]:
        """Return (mean discounted return, standard error of the mean)."""
        if rollouts < 1 or horizon < 1:
            raise InputError("rollouts and horizon must be at least 1")
        rng = np.random.default_rng(seed)
        psi_cdf, eta_cdf = self._tables(controller, pomdp)
        transition_cdf = np.cumsum(pomdp.transition, axis=2)
        observation_cdf = np.cumsum(pomdp.observation, axis=2)
        start_cdf = np.cumsum(pomdp.initial_belief.probs)[None, :]

        states = _sample(np.broadcast_to(start_cdf, (rollouts, pomdp.num_states)), rng.random(rollouts))
        nodes = np.full(rollouts, start_node)
        returns = np.zeros(rollouts)
        discount = 1.0
        for _ in range(horizon):
            actions = _sample(psi_cdf[nodes], rng.random(rollouts))
            returns += discount * pomdp.reward[states, actions]
            next_states = _sample(transition_cdf[states, actions], rng.random(rollouts))
            observations = _sample(observation_cdf[actions, next_states], rng.random(rollouts))
            nodes = _sample(eta_cdf[nodes, actions, observations], rng.random(rollouts))
            states = next_states
            discount *= pomdp.discount

        mean = float(returns.mean())
        std_error = float(returns.std(ddof=1) / math.sqrt(rollouts)) if rollouts > 1 else 0.0
        return mean, std_error

    def evaluate_policy(self, controller: Controller, pomdp: Pomdp, rollouts: int = settings.DEFAULT_ROLLOUTS,
                        horizon: Optional[int] = None, seed: int = 0) -> EvalReport:
        """
        Exact value at the start belief next to a Monte Carlo estimate

        Args:
            controller: Controller to evaluate
            pomdp: Model the controller was solved for
            rollouts: Number of simulated trajectories
            horizon: Steps per trajectory; the smallest horizon with truncation bias below 1e-6 if None
            seed: Seed of the rollout generator

        Returns:
            EvalReport with the exact value, the estimate, its standard error and the bias bound
        """
        controller_repo.validate_against(controller, pomdp)
        v = evaluation_repo.evaluate(controller, pomdp)
        exact, start = evaluation_repo.belief_value(v, pomdp.initial_belief)
        horizon = horizon if horizon is not None else self.default_horizon(pomdp)
        estimate, std_error = self.simulate(controller, pomdp, start, rollouts, horizon, seed)
        bias = self.truncation_bias(pomdp, horizon)
        logger.info(f"Exact V(b0)={exact:.6f} (node {start}); Monte Carlo {estimate:.6f} +/- {std_error:.6f}, "
                    f"horizon {horizon}, bias <= {bias:.2e}")
        return EvalReport(
            exact_value=exact,
            start_node=start,
            mc_estimate=estimate,
            mc_std_error=std_error,
            truncation_bias_bound=bias,
            rollouts=rollouts,
            horizon=horizon,
            seed=seed,
        )


simulation_service = SimulationService()
