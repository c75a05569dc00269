import math

import numpy as np
import pytest

import helpers
from rewardlab import losses
from rewardlab.embeddings import finite_diff_grad_check
from rewardlab.errors import (
    BadClusterIndexError,
    BadConfigError,
    EmptyPositiveSetError,
    MissingFailureTextsError,
    ShapeMismatchError,
)

LOG2 = math.log(2.0)


class TestCrossDomain:
    def test_two_identical_samples_give_two_log_two(self):
        v = np.array([[1.0, 0.0], [1.0, 0.0]])
        val, _ = losses.cross_domain_loss(v, np.array([7, 7]), tau=1.0)
        assert abs(val - 2 * LOG2) < 1e-9

    def test_large_tau_limit_is_log_b(self):
        rng = np.random.default_rng(0)
        v = helpers.random_unit_rows(rng, 6, 4)
        labels = np.array([0, 0, 1, 1, 2, 2])
        val, _ = losses.cross_domain_loss(v, labels, tau=1e9)
        assert abs(val - 6 * math.log(6)) < 1e-6

    def test_against_direct_evaluation_oracle(self):
        v = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
        labels = np.array([0, 0, 1])
        val, _ = losses.cross_domain_loss(v, labels, tau=0.5)
        expected = helpers.oracle_cross_domain(v, labels, 0.5)
        assert abs(val - expected) < 1e-10

    def test_self_exclusion_variant_matches_oracle(self):
        rng = np.random.default_rng(1)
        v = helpers.random_unit_rows(rng, 4, 3)
        labels = np.array([0, 0, 1, 1])
        val, _ = losses.cross_domain_loss(v, labels, 0.3, exclude_anchor=True)
        expected = helpers.oracle_cross_domain(v, labels, 0.3, exclude_anchor=True)
        assert abs(val - expected) < 1e-10

    def test_empty_positive_set_with_exclusion(self):
        v = np.eye(2)
        with pytest.raises(EmptyPositiveSetError):
            losses.cross_domain_loss(v, np.array([0, 1]), 1.0, exclude_anchor=True)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        v = helpers.random_unit_rows(rng, 5, 4)
        labels = np.array([0, 0, 1, 1, 0])
        _, grad = losses.cross_domain_loss(v, labels, 0.5)
        err = finite_diff_grad_check(
            lambda flat: losses.cross_domain_loss(flat.reshape(v.shape), labels, 0.5)[0],
            v.ravel().copy(),
            grad.ravel(),
        )
        assert err < 1e-4


class TestVideoText:
    def test_orthogonal_pairs_frozen_value(self):
        v = np.eye(2)
        val, _ = losses.video_text_loss(v, v, np.array([0, 1]), tau=1.0)
        # each of the four directional terms is -log(e / (e + 1))
        per_term = 0.3132616875182228  # frozen from the mpmath oracle
        assert abs(val - 4 * per_term) < 1e-12
        assert abs(val - helpers.oracle_video_text(v, v, [0, 1], 1.0)) < 1e-10

    def test_uniform_similarities_give_log_b(self):
        d = 6
        v = np.tile(np.eye(1, d), (4, 1))
        val, _ = losses.video_text_loss(v, v, np.arange(4), tau=0.7)
        assert abs(val - 8 * math.log(4)) < 1e-9

    def test_failure_negatives_added_to_video_to_text_only(self):
        v = np.eye(2)
        # K=3 failure features orthogonal to both videos and texts
        fail = {0: np.zeros((3, 2)), 1: np.zeros((3, 2))}
        val, _ = losses.video_text_loss(v, v, np.array([0, 1]), 1.0, failure_texts=fail)
        v2t = -math.log(math.e / (math.e + 1 + 3))
        t2v = -math.log(math.e / (math.e + 1))
        assert abs(val - (2 * v2t + 2 * t2v)) < 1e-12
        assert abs(val - helpers.oracle_video_text(v, v, [0, 1], 1.0, fail)) < 1e-10

    def test_missing_failure_texts(self):
        v = np.eye(2)
        with pytest.raises(MissingFailureTextsError):
            losses.video_text_loss(v, v, np.array([0, 5]), 1.0, failure_texts={0: np.zeros((2, 2))})

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            losses.video_text_loss(np.eye(2), np.eye(3), np.arange(2), 1.0)

    def test_failure_negatives_never_decrease_loss(self):
        for seed in range(8):
            rng = np.random.default_rng(seed)
            v = helpers.random_unit_rows(rng, 4, 6)
            t = helpers.random_unit_rows(rng, 4, 6)
            labels = np.array([0, 1, 0, 1])
            fail = {0: helpers.random_unit_rows(rng, 3, 6), 1: helpers.random_unit_rows(rng, 3, 6)}
            plain, _ = losses.video_text_loss(v, t, labels, 0.3)
            with_fail, _ = losses.video_text_loss(v, t, labels, 0.3, failure_texts=fail)
            assert with_fail >= plain - 1e-12

    @pytest.mark.parametrize("with_fail", [False, True])
    def test_gradient_matches_central_differences(self, with_fail):
        rng = np.random.default_rng(11)
        v = helpers.random_unit_rows(rng, 4, 5)
        t = helpers.random_unit_rows(rng, 4, 5)
        labels = np.array([0, 1, 1, 0])
        fail = (
            {0: helpers.random_unit_rows(rng, 2, 5), 1: helpers.random_unit_rows(rng, 2, 5)}
            if with_fail else None
        )

        def unpack(flat):
            vv = flat[:20].reshape(4, 5)
            tt = flat[20:40].reshape(4, 5)
            ff = None
            if with_fail:
                ff = {0: flat[40:50].reshape(2, 5), 1: flat[50:60].reshape(2, 5)}
            return vv, tt, ff

        def f(flat):
            vv, tt, ff = unpack(flat)
            return losses.video_text_loss(vv, tt, labels, 0.4, failure_texts=ff)[0]

        _, grads = losses.video_text_loss(v, t, labels, 0.4, failure_texts=fail)
        parts = [v.ravel(), t.ravel()]
        grad_parts = [grads["videos"].ravel(), grads["texts"].ravel()]
        if with_fail:
            parts += [fail[0].ravel(), fail[1].ravel()]
            grad_parts += [grads["fail_texts"][0].ravel(), grads["fail_texts"][1].ravel()]
        err = finite_diff_grad_check(
            f, np.concatenate(parts).copy(), np.concatenate(grad_parts)
        )
        assert err < 1e-4


class TestBce:
    def test_orthogonal_gives_ln2_per_sample(self):
        v = np.array([[1.0, 0.0]])
        t = np.array([[0.0, 1.0]])
        for r in (0.0, 1.0):
            val, _ = losses.bce_loss(v, t, [r])
            assert abs(val - LOG2) < 1e-12

    def test_aligned_pair_values(self):
        v = np.array([[1.0, 0.0]])
        val_hit, _ = losses.bce_loss(v, v, [1.0])
        val_miss, _ = losses.bce_loss(v, v, [0.0])
        assert abs(val_hit - 0.3132616875182228) < 1e-12   # softplus(-1)
        assert abs(val_miss - 1.3132616875182228) < 1e-12  # softplus(+1)
        assert abs(val_hit - helpers.oracle_bce(v, v, [1.0])) < 1e-10
        assert abs(val_miss - helpers.oracle_bce(v, v, [0.0])) < 1e-10

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(2)
        v = helpers.random_unit_rows(rng, 5, 4)
        t = helpers.random_unit_rows(rng, 5, 4)
        r = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        _, grads = losses.bce_loss(v, t, r)

        def f(flat):
            return losses.bce_loss(flat[:20].reshape(5, 4), flat[20:].reshape(5, 4), r)[0]

        err = finite_diff_grad_check(
            f,
            np.concatenate([v.ravel(), t.ravel()]).copy(),
            np.concatenate([grads["videos"].ravel(), grads["texts"].ravel()]),
        )
        assert err < 1e-4


class TestFailurePrompt:
    def test_uniform_similarities_give_log_k_plus_one(self):
        d = 8
        v = np.zeros((1, d))
        v[0, 0] = 1.0
        task_texts = {0: np.eye(d)[1]}
        fail = {0: np.eye(d)[2:5]}  # K = 3, all orthogonal to v
        val, _ = losses.failure_prompt_loss(v, [0], [1], task_texts, fail, tau=0.9)
        assert abs(val - math.log(4)) < 1e-9

    def test_aligned_with_assigned_cluster_frozen_value(self):
        d = 5
        v = np.eye(1, d)
        task_texts = {0: np.eye(d)[1]}
        block = np.vstack([np.eye(d)[0], np.eye(d)[2], np.eye(d)[3]])
        val, _ = losses.failure_prompt_loss(v, [0], [0], task_texts, {0: block}, tau=1.0)
        # -log(e / (1 + e + 2)), frozen from the mpmath oracle
        assert abs(val - 0.7436683806286792) < 1e-12
        assert abs(val - helpers.oracle_failure_prompt(v, [0], [0], task_texts, {0: block}, 1.0)) < 1e-10

    def test_bad_cluster_index(self):
        v = np.eye(1, 4)
        with pytest.raises(BadClusterIndexError):
            losses.failure_prompt_loss(
                v, [0], [5], {0: np.eye(4)[1]}, {0: np.eye(4)[1:3]}, 1.0
            )

    def test_push_pull_direction(self):
        # uniform start: one small step must raise v.t_f(k*) and lower v.t_T
        d = 8
        v = np.zeros((1, d))
        v[0, 0] = 1.0
        task_texts = {0: np.eye(d)[1]}
        fail = {0: np.eye(d)[2:5]}
        _, grads = losses.failure_prompt_loss(v, [0], [1], task_texts, fail, tau=0.5)
        stepped = v[0] - 0.01 * grads["fail_videos"][0]
        assert stepped @ fail[0][1] > v[0] @ fail[0][1]
        assert stepped @ task_texts[0] < v[0] @ task_texts[0]

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(4)
        d = 5
        v = helpers.random_unit_rows(rng, 3, d)
        task_texts = {0: helpers.random_unit_rows(rng, 1, d)[0], 1: helpers.random_unit_rows(rng, 1, d)[0]}
        fail = {0: helpers.random_unit_rows(rng, 2, d), 1: helpers.random_unit_rows(rng, 2, d)}
        labels = [0, 1, 0]
        clusters = [1, 0, 0]
        _, grads = losses.failure_prompt_loss(v, labels, clusters, task_texts, fail, 0.4)

        sizes = [15, d, d, 10, 10]
        def f(flat):
            parts = np.split(flat, np.cumsum(sizes)[:-1])
            return losses.failure_prompt_loss(
                parts[0].reshape(3, d), labels, clusters,
                {0: parts[1], 1: parts[2]},
                {0: parts[3].reshape(2, d), 1: parts[4].reshape(2, d)},
                0.4,
            )[0]

        theta = np.concatenate([
            v.ravel(), task_texts[0], task_texts[1], fail[0].ravel(), fail[1].ravel()
        ]).copy()
        analytic = np.concatenate([
            grads["fail_videos"].ravel(),
            grads["task_texts"][0], grads["task_texts"][1],
            grads["fail_texts"][0].ravel(), grads["fail_texts"][1].ravel(),
        ])
        assert finite_diff_grad_check(f, theta, analytic) < 1e-4


class TestTotalLoss:
    def test_no_failure_is_exact_sum_of_parts(self):
        batch, task_texts, failure_texts = helpers.build_random_batch(0, n_fail=0)
        val, _, comps = losses.total_loss(batch, task_texts, failure_texts, mode="no_failure")
        cdc, _ = losses.cross_domain_loss(batch.videos, batch.labels, batch.tau)
        vlc, _ = losses.video_text_loss(batch.videos, batch.texts, batch.labels, batch.tau)
        assert val == pytest.approx(cdc + vlc, abs=1e-12)
        assert comps["cross_domain"] == cdc and comps["video_text"] == vlc

    def test_fvlc_uniform_case_is_sum_of_uniform_parts(self):
        # identical same-task clips make every similarity group uniform
        d = 12
        videos = np.stack([np.eye(d)[0], np.eye(d)[0]])
        texts = np.stack([np.eye(d)[2], np.eye(d)[2]])
        batch = losses.Batch(
            videos=videos,
            labels=np.array([0, 0]),
            domains=np.array([0, 1]),
            texts=texts,
            fail_videos=np.eye(d)[4][None],
            fail_labels=np.array([0]),
            fail_clusters=np.array([2]),
            tau=0.8,
        )
        task_texts = {0: np.eye(d)[2]}
        failure_texts = {0: np.eye(d)[5:8]}
        val, _, comps = losses.total_loss(batch, task_texts, failure_texts, mode="fvlc")
        assert abs(comps["cross_domain"] - 2 * math.log(2)) < 1e-9
        # video->text rows carry the K=3 orthogonal failure negatives
        assert abs(comps["video_text"] - (2 * math.log(5) + 2 * math.log(2))) < 1e-9
        assert abs(comps["failure_prompt"] - math.log(4)) < 1e-9
        assert abs(val - sum(
            (2 * math.log(2), 2 * math.log(5) + 2 * math.log(2), math.log(4))
        )) < 1e-9

    def test_weight_scaling_is_linear(self):
        batch, task_texts, failure_texts = helpers.build_random_batch(3)
        base, grads, _ = losses.total_loss(batch, task_texts, failure_texts, mode="fvlc")
        scaled, grads2, _ = losses.total_loss(
            batch, task_texts, failure_texts, mode="fvlc", weights=(2.5, 2.5, 2.5)
        )
        assert scaled == pytest.approx(2.5 * base, rel=1e-12)
        np.testing.assert_allclose(grads2["videos"], 2.5 * grads["videos"], rtol=1e-12)

    def test_bce_mode_adds_bce_component(self):
        batch, task_texts, failure_texts = helpers.build_random_batch(5)
        val, grads, comps = losses.total_loss(batch, task_texts, failure_texts, mode="bce")
        assert "bce" in comps and comps["bce"] > 0
        assert "fail_videos" in grads

    def test_unknown_mode(self):
        batch, task_texts, failure_texts = helpers.build_random_batch(6)
        with pytest.raises(BadConfigError):
            losses.total_loss(batch, task_texts, failure_texts, mode="nope")

    @pytest.mark.parametrize("mode", losses.MODES)
    def test_value_matches_oracles_on_random_batches(self, mode):
        for seed in range(6):
            batch, task_texts, failure_texts = helpers.build_random_batch(seed + 20)
            val, _, _ = losses.total_loss(batch, task_texts, failure_texts, mode=mode)
            expected = helpers.oracle_cross_domain(batch.videos, batch.labels, batch.tau)
            expected += helpers.oracle_video_text(
                batch.videos, batch.texts, batch.labels, batch.tau,
                failure_texts if mode == "fvlc" else None,
            )
            if mode == "bce":
                robot = batch.domains == 1
                videos = np.concatenate([batch.videos[robot], batch.fail_videos])
                texts = np.concatenate([
                    batch.texts[robot],
                    np.stack([task_texts[int(t)] for t in batch.fail_labels]),
                ])
                outcomes = [1.0] * int(robot.sum()) + [0.0] * batch.n_fail
                expected += helpers.oracle_bce(videos, texts, outcomes)
            elif mode == "fvlc":
                expected += helpers.oracle_failure_prompt(
                    batch.fail_videos, batch.fail_labels, batch.fail_clusters,
                    task_texts, failure_texts, batch.tau,
                )
            assert abs(val - expected) < 1e-9

    @pytest.mark.parametrize("mode", losses.MODES)
    def test_nonnegative_and_finite_across_tau_range(self, mode):
        for tau in (1e-3, 0.07, 1.0, 1e3):
            batch, task_texts, failure_texts = helpers.build_random_batch(9, tau=tau)
            val, grads, _ = losses.total_loss(batch, task_texts, failure_texts, mode=mode)
            assert np.isfinite(val) and val >= 0.0
            assert np.all(np.isfinite(grads["videos"]))
