"""Shared test utilities: batch builders and independent loss oracles.

The oracles transcribe the loss definitions directly in high-precision
arithmetic (mpmath, explicit exp ratios, no log-sum-exp rearrangement) so
they share no code path with the implementation.
"""

import mpmath
import numpy as np

from rewardlab.embeddings import l2_normalize_rows
from rewardlab.losses import Batch

mpmath.mp.dps = 40


def _mp(x):
    return mpmath.mpf(repr(float(x)))


def random_unit_rows(rng, n, d):
    return l2_normalize_rows(rng.normal(size=(n, d)))


def build_random_batch(seed, n_human=3, n_robot=3, n_fail=2, k=3, d=8, n_tasks=2, tau=0.5):
    """Random embedding-level batch with guaranteed nonempty positive sets."""
    rng = np.random.default_rng(seed)
    b = n_human + n_robot
    # assign tasks in pairs so every label appears at least twice
    labels = np.array([(i // 2) % n_tasks for i in range(b)])
    rng.shuffle(labels)
    task_texts = {t: random_unit_rows(rng, 1, d)[0] for t in range(n_tasks)}
    videos = random_unit_rows(rng, b, d)
    texts = np.stack([task_texts[int(t)] for t in labels])
    fail_labels = np.array([i % n_tasks for i in range(n_fail)])
    batch = Batch(
        videos=videos,
        labels=labels,
        domains=np.array([0] * n_human + [1] * n_robot),
        texts=texts,
        fail_videos=random_unit_rows(rng, n_fail, d) if n_fail else np.zeros((0, d)),
        fail_labels=fail_labels,
        fail_clusters=np.array([rng.integers(0, k) for _ in range(n_fail)]),
        tau=tau,
    )
    failure_texts = {t: random_unit_rows(rng, k, d) for t in range(n_tasks)}
    return batch, task_texts, failure_texts


def oracle_cross_domain(videos, labels, tau, exclude_anchor=False):
    b = len(videos)
    total = mpmath.mpf(0)
    for i in range(b):
        positives = [
            p for p in range(b)
            if labels[p] == labels[i] and not (exclude_anchor and p == i)
        ]
        denom_idx = [j for j in range(b) if not (exclude_anchor and j == i)]
        denom = mpmath.fsum(
            mpmath.e ** (_mp(np.dot(videos[i], videos[j])) / _mp(tau))
            for j in denom_idx
        )
        anchor = mpmath.mpf(0)
        for p in positives:
            num = mpmath.e ** (_mp(np.dot(videos[i], videos[p])) / _mp(tau))
            anchor += -mpmath.log(num / denom)
        total += anchor / len(positives)
    return float(total)


def oracle_video_text(videos, texts, labels, tau, failure_texts=None):
    b = len(videos)
    total = mpmath.mpf(0)
    for i in range(b):
        num = mpmath.e ** (_mp(np.dot(videos[i], texts[i])) / _mp(tau))
        denom = mpmath.fsum(
            mpmath.e ** (_mp(np.dot(videos[i], texts[j])) / _mp(tau)) for j in range(b)
        )
        if failure_texts is not None:
            for f in failure_texts[int(labels[i])]:
                denom += mpmath.e ** (_mp(np.dot(videos[i], f)) / _mp(tau))
        total += -mpmath.log(num / denom)
        denom2 = mpmath.fsum(
            mpmath.e ** (_mp(np.dot(texts[i], videos[j])) / _mp(tau)) for j in range(b)
        )
        total += -mpmath.log(num / denom2)
    return float(total)


def oracle_bce(videos, texts, outcomes):
    total = mpmath.mpf(0)
    for v, t, r in zip(videos, texts, outcomes):
        p = 1 / (1 + mpmath.e ** (-_mp(np.dot(v, t))))
        total += -(_mp(r) * mpmath.log(p) + _mp(1 - r) * mpmath.log(1 - p))
    return float(total)


def oracle_failure_prompt(fail_videos, fail_labels, fail_clusters, task_texts, failure_texts, tau):
    total = mpmath.mpf(0)
    for v, task, k_star in zip(fail_videos, fail_labels, fail_clusters):
        task = int(task)
        block = failure_texts[task]
        num = mpmath.e ** (_mp(np.dot(v, block[int(k_star)])) / _mp(tau))
        denom = mpmath.e ** (_mp(np.dot(v, task_texts[task])) / _mp(tau))
        for f in block:
            denom += mpmath.e ** (_mp(np.dot(v, f)) / _mp(tau))
        total += -mpmath.log(num / denom)
    return float(total)
