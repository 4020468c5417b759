import numpy as np
import pytest
from pydantic import ValidationError

from config.settings import settings
from models.pomdp import BeliefState
from repository.pomdp_core.belief_repo import belief_repo
from utility.errors import InputError

from conftest import make_pomdp, random_belief, random_pomdp

LISTEN, OPEN_LEFT = 0, 1


class TestBeliefState:
    def test_uniform_and_point(self):
        np.testing.assert_allclose(BeliefState.uniform(4).probs, [0.25] * 4)
        np.testing.assert_array_equal(BeliefState.point(3, 1).probs, [0.0, 1.0, 0.0])

    def test_rejects_negative_entry(self):
        with pytest.raises(ValidationError):
            BeliefState(probs=[1.2, -0.2])

    def test_rejects_wrong_sum(self):
        with pytest.raises(ValidationError):
            BeliefState(probs=[0.5, 0.4])

    def test_sum_tolerance_comes_from_settings(self, monkeypatch):
        with pytest.raises(ValidationError):
            BeliefState(probs=[0.5, 0.5 + 1e-7])
        monkeypatch.setattr(settings, "STOCHASTIC_TOLERANCE", 1e-6)
        assert BeliefState(probs=[0.5, 0.5 + 1e-7]).num_states == 2
        with pytest.raises(ValidationError):
            make_pomdp([[[0.5, 0.5 + 1e-5]], [[0.5, 0.5]]], [[[1.0], [1.0]]], [[0.0], [0.0]], discount=0.9)
        make_pomdp([[[0.5, 0.5 + 1e-7]], [[0.5, 0.5]]], [[[1.0], [1.0]]], [[0.0], [0.0]], discount=0.9)

    def test_clips_round_off(self):
        b = BeliefState(probs=[1.0 + 1e-13, -1e-13])
        assert b.probs.min() >= 0.0

    def test_is_read_only(self):
        b = BeliefState.uniform(2)
        with pytest.raises(ValueError):
            b.probs[0] = 1.0


class TestTigerBeliefs:
    def test_listen_observation_probability(self, tiger):
        b = tiger.initial_belief
        assert belief_repo.obs_prob(tiger, b, LISTEN, 0) == pytest.approx(0.5)

    def test_listen_update(self, tiger):
        b = belief_repo.belief_update(tiger, tiger.initial_belief, LISTEN, 0)
        np.testing.assert_allclose(b.probs, [0.85, 0.15])

    def test_open_door_resets_belief(self, tiger):
        b = BeliefState(probs=[0.9, 0.1])
        updated = belief_repo.belief_update(tiger, b, OPEN_LEFT, 1)
        np.testing.assert_allclose(updated.probs, [0.5, 0.5])

    def test_expected_reward(self, tiger):
        assert belief_repo.belief_reward(tiger, tiger.initial_belief, OPEN_LEFT) == pytest.approx(-45.0)
        assert belief_repo.belief_reward(tiger, tiger.initial_belief, LISTEN) == pytest.approx(-1.0)


class TestBeliefOperations:
    def test_observation_probabilities_sum_to_one(self, rng):
        pomdp = random_pomdp(seed=3, num_states=4, num_actions=3, num_observations=3)
        for _ in range(20):
            b = random_belief(rng, 4)
            for a in range(3):
                total = sum(belief_repo.obs_prob(pomdp, b, a, z) for z in range(3))
                assert total == pytest.approx(1.0, abs=1e-12)

    def test_update_matches_direct_bayes(self, rng):
        pomdp = random_pomdp(seed=11, num_states=3, num_actions=2, num_observations=2)
        b = random_belief(rng, 3)
        a, z = 1, 0
        unnormalized = np.zeros(3)
        for s2 in range(3):
            for s in range(3):
                unnormalized[s2] += b.probs[s] * pomdp.transition[s, a, s2]
            unnormalized[s2] *= pomdp.observation[a, s2, z]
        updated = belief_repo.belief_update(pomdp, b, a, z)
        np.testing.assert_allclose(updated.probs, unnormalized / unnormalized.sum(), atol=1e-12)
        assert belief_repo.obs_prob(pomdp, b, a, z) == pytest.approx(unnormalized.sum())

    def test_reward_matches_dot_product(self, rng):
        pomdp = random_pomdp(seed=5, num_states=4, num_actions=2, num_observations=2)
        b = random_belief(rng, 4)
        expected = sum(b.probs[s] * pomdp.reward[s, 1] for s in range(4))
        assert belief_repo.belief_reward(pomdp, b, 1) == pytest.approx(expected)

    def test_impossible_observation_returns_none(self):
        pomdp = make_pomdp(
            transition=[[[1.0, 0.0]], [[0.0, 1.0]]],
            observation=[[[1.0, 0.0], [0.0, 1.0]]],
            reward=[[0.0], [1.0]],
            discount=0.9,
        )
        b = BeliefState.point(2, 0)
        assert belief_repo.obs_prob(pomdp, b, 0, 1) == 0.0
        assert belief_repo.belief_update(pomdp, b, 0, 1) is None

    def test_out_of_range_indices(self, tiger):
        with pytest.raises(InputError):
            belief_repo.obs_prob(tiger, tiger.initial_belief, 3, 0)
        with pytest.raises(InputError):
            belief_repo.belief_update(tiger, tiger.initial_belief, 0, 2)

    def test_belief_length_mismatch(self, tiger):
        with pytest.raises(InputError):
            belief_repo.belief_reward(tiger, BeliefState.uniform(3), 0)


class TestPomdpModel:
    def test_joint_rows_are_distributions(self):
        pomdp = random_pomdp(seed=2, num_states=3, num_actions=2, num_observations=3)
        np.testing.assert_allclose(pomdp.joint.sum(axis=(1, 3)), np.ones((2, 3)))

    def test_rejects_discount_of_one(self):
        with pytest.raises(ValidationError):
            make_pomdp([[[1.0]]], [[[1.0]]], [[0.0]], discount=1.0)

    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(ValidationError):
            make_pomdp([[[0.5, 0.4]], [[0.0, 1.0]]], [[[1.0], [1.0]]], [[0.0], [0.0]], discount=0.5)
