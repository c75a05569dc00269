import numpy as np
import pytest

from rewardlab import dynamics as dyn, encoders as enc, planner as pl, simworld as sw
from rewardlab.errors import BadConfigError
from rewardlab.simworld import TASK_NAMES


@pytest.fixture(scope="module")
def gt_model():
    return dyn.ground_truth_model()


def initial_state(task, seed):
    return sw.initial_state_array(task, np.random.default_rng(seed))


class TestVmpcPlan:
    def test_oracle_reward_finds_a_success_when_one_exists(self, gt_model):
        task = sw.TASK_FAUCET
        config = pl.PlanConfig(n_candidates=400, seed=3)
        s0 = initial_state(task, 1)
        result = pl.vmpc_plan(pl.OracleReward(task), gt_model, s0, config)
        # with 400 samples at the measured ~13% random rate, a success exists
        assert result.score == 1.0
        states = sw.rollout_states(s0, result.actions)
        assert sw.success_states(task, states)

    def test_single_candidate_is_returned_regardless_of_score(self, gt_model):
        task = sw.TASK_CUP_AWAY
        config = pl.PlanConfig(n_candidates=1, seed=0)
        s0 = initial_state(task, 2)
        result = pl.vmpc_plan(pl.OracleReward(task), gt_model, s0, config)
        assert result.index == 0
        expected = pl.sample_action_sequences(np.random.default_rng(0), 1, 60)[0]
        assert np.array_equal(result.actions, expected)

    def test_score_matches_independent_rescoring(self, gt_model):
        task = sw.TASK_CLOSE_DRAWER
        config = pl.PlanConfig(n_candidates=64, seed=11)
        s0 = initial_state(task, 3)
        reward = pl.OracleReward(task)
        result = pl.vmpc_plan(reward, gt_model, s0, config)
        # independent rescoring: regenerate the candidate set, score each by
        # rolling it out one at a time
        candidates = pl.sample_action_sequences(np.random.default_rng(11), 64, 60)
        rescored = []
        for cand in candidates:
            states = sw.rollout_states(np.asarray(s0), cand)
            rescored.append(1.0 if sw.success_states(task, states[::4]) else 0.0)
        assert result.score == max(rescored)
        assert result.index == int(np.argmax(rescored))
        assert result.score >= max(rescored) - 1e-12

    def test_deterministic_given_seed(self, gt_model):
        task = sw.TASK_CUP_LEFT_TO_RIGHT
        config = pl.PlanConfig(n_candidates=32, seed=7)
        s0 = initial_state(task, 4)
        a = pl.vmpc_plan(pl.OracleReward(task), gt_model, s0, config)
        b = pl.vmpc_plan(pl.OracleReward(task), gt_model, s0, config)
        assert np.array_equal(a.actions, b.actions) and a.score == b.score

    def test_config_validation(self):
        with pytest.raises(BadConfigError):
            pl.PlanConfig(n_candidates=0)
        with pytest.raises(BadConfigError):
            pl.PlanConfig(horizon=61)


class TestLearnedReward:
    def test_scores_are_probabilities_and_deterministic(self, gt_model):
        params = enc.init_video_encoder(np.random.default_rng(0))
        table = enc.TaskTable.build(TASK_NAMES, embed_dim=32, seed=0)
        reward = pl.LearnedReward(params, table, sw.TASK_FAUCET)
        states, _ = dyn.generate_random_episodes(5, seed=0)
        scores = reward.score_batch(states[:, ::4, :])
        assert scores.shape == (5,)
        assert np.all((scores > 0) & (scores < 1))
        again = reward.score_batch(states[:, ::4, :])
        assert np.array_equal(scores, again)


class TestCemRefine:
    def test_converges_to_reachable_quadratic_target(self):
        horizon = 8
        rng = np.random.default_rng(5)
        initial = pl.sample_action_sequences(rng, 1, horizon)[0]
        target = initial.copy()
        target[:, :2] = np.clip(target[:, :2] + rng.normal(scale=0.008, size=(horizon, 2)), -0.05, 0.05)

        def scorer(seqs):
            diff = seqs[:, :, :2] - target[None, :, :2]
            return -np.sum(diff**2, axis=(1, 2))

        result = pl.cem_refine(initial, scorer, pl.CemConfig(), seed=1)
        assert np.max(np.abs(result.final_mean[:, :2] - target[:, :2])) < 0.01

    def test_constant_scorer_returns_initial_score(self):
        initial = pl.sample_action_sequences(np.random.default_rng(0), 1, 12)[0]
        result = pl.cem_refine(initial, lambda seqs: np.zeros(len(seqs)), pl.CemConfig(), seed=0)
        assert result.score == 0.0
        assert np.array_equal(result.actions, initial)

    def test_elite_fraction_one_uses_population_mean(self):
        initial = pl.sample_action_sequences(np.random.default_rng(1), 1, 8)[0]
        cem = pl.CemConfig(iterations=1, population=16, elite_fraction=1.0)
        seen = {}

        def scorer(seqs):
            if len(seqs) > 1:
                seen["pop"] = seqs.copy()
            return np.arange(len(seqs), dtype=float)

        result = pl.cem_refine(initial, scorer, cem, seed=2)
        np.testing.assert_allclose(
            result.final_mean[:, :2], seen["pop"][:, :, :2].mean(axis=0), atol=1e-12
        )

    def test_best_score_history_non_decreasing(self, gt_model):
        task = sw.TASK_OPEN_DRAWER
        s0 = initial_state(task, 6)
        initial = pl.sample_action_sequences(np.random.default_rng(3), 1, 60)[0]
        scorer = pl.make_sequence_scorer(pl.OracleReward(task), gt_model, s0)
        result = pl.cem_refine(initial, scorer, pl.CemConfig(iterations=6), seed=4)
        history = np.array(result.best_score_history)
        assert np.all(np.diff(history) >= 0)
        assert result.score == history[-1]

    def test_grip_channel_kept_from_initial(self):
        initial = pl.sample_action_sequences(np.random.default_rng(4), 1, 8)[0]
        result = pl.cem_refine(initial, lambda s: s[:, 0, 0], pl.CemConfig(), seed=5)
        assert np.array_equal(result.actions[:, 2], initial[:, 2])
        assert np.array_equal(result.final_mean[:, 2], initial[:, 2])
