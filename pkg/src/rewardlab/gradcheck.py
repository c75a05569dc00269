"""Finite-difference gradient suite over every trainable operation.

Each entry builds seeded random inputs, evaluates the hand-written
gradient, and compares it against central differences (eps 1e-5 by
default). Used by the `grad-check` CLI subcommand and the acceptance
suite.
"""

import numpy as np

from . import encoders as enc, losses
from .embeddings import finite_diff_grad_check, l2_normalize_rows
from .simworld import TASK_NAMES


def _unit_rows(rng, n, d):
    return l2_normalize_rows(rng.normal(size=(n, d)))


def _check_cdc(rng, eps):
    videos = _unit_rows(rng, 6, 12)
    labels = np.array([0, 0, 1, 1, 2, 2])
    _, grad = losses.cross_domain_loss(videos, labels, 0.3)
    return finite_diff_grad_check(
        lambda flat: losses.cross_domain_loss(flat.reshape(videos.shape), labels, 0.3)[0],
        videos.ravel().copy(), grad.ravel(), eps=eps,
    )


def _vlc_theta(videos, texts, fail):
    parts = [videos.ravel(), texts.ravel()]
    if fail is not None:
        parts += [fail[t].ravel() for t in sorted(fail)]
    return np.concatenate(parts)


def _check_vlc(rng, eps, with_failure):
    b, d, k = 5, 10, 2
    videos = _unit_rows(rng, b, d)
    texts = _unit_rows(rng, b, d)
    labels = np.array([0, 1, 0, 1, 0])
    fail = {0: _unit_rows(rng, k, d), 1: _unit_rows(rng, k, d)} if with_failure else None

    def f(flat):
        vv = flat[: b * d].reshape(b, d)
        tt = flat[b * d: 2 * b * d].reshape(b, d)
        ff = None
        if with_failure:
            blocks = flat[2 * b * d:].reshape(2, k, d)
            ff = {0: blocks[0], 1: blocks[1]}
        return losses.video_text_loss(vv, tt, labels, 0.4, failure_texts=ff)[0]

    _, grads = losses.video_text_loss(videos, texts, labels, 0.4, failure_texts=fail)
    analytic = [grads["videos"].ravel(), grads["texts"].ravel()]
    if with_failure:
        analytic += [grads["fail_texts"][t].ravel() for t in sorted(fail)]
    return finite_diff_grad_check(
        f, _vlc_theta(videos, texts, fail).copy(), np.concatenate(analytic), eps=eps
    )


def _check_bce(rng, eps):
    videos = _unit_rows(rng, 6, 12)
    texts = _unit_rows(rng, 6, 12)
    outcomes = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    _, grads = losses.bce_loss(videos, texts, outcomes)

    def f(flat):
        vv, tt = flat[:72].reshape(6, 12), flat[72:].reshape(6, 12)
        return losses.bce_loss(vv, tt, outcomes)[0]

    return finite_diff_grad_check(
        f,
        np.concatenate([videos.ravel(), texts.ravel()]).copy(),
        np.concatenate([grads["videos"].ravel(), grads["texts"].ravel()]),
        eps=eps,
    )


def _check_fvlc(rng, eps):
    d, k = 10, 3
    fail_videos = _unit_rows(rng, 4, d)
    labels = np.array([0, 1, 0, 1])
    clusters = np.array([rng.integers(0, k) for _ in range(4)])
    task_texts = {0: _unit_rows(rng, 1, d)[0], 1: _unit_rows(rng, 1, d)[0]}
    fail = {0: _unit_rows(rng, k, d), 1: _unit_rows(rng, k, d)}
    _, grads = losses.failure_prompt_loss(fail_videos, labels, clusters, task_texts, fail, 0.35)

    sizes = [4 * d, d, d, k * d, k * d]

    def f(flat):
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        return losses.failure_prompt_loss(
            parts[0].reshape(4, d), labels, clusters,
            {0: parts[1], 1: parts[2]},
            {0: parts[3].reshape(k, d), 1: parts[4].reshape(k, d)},
            0.35,
        )[0]

    theta = np.concatenate([
        fail_videos.ravel(), task_texts[0], task_texts[1], fail[0].ravel(), fail[1].ravel()
    ])
    analytic = np.concatenate([
        grads["fail_videos"].ravel(),
        grads["task_texts"][0], grads["task_texts"][1],
        grads["fail_texts"][0].ravel(), grads["fail_texts"][1].ravel(),
    ])
    return finite_diff_grad_check(f, theta.copy(), analytic, eps=eps)


def _check_encoder(rng, eps):
    params = enc.init_video_encoder(rng, frames=4, frame_width=8, hidden=10, embed_dim=8)
    clip = rng.normal(size=(4, 8))
    target = _unit_rows(rng, 1, 8)[0]

    def f(vec):
        v = enc.encode_video(clip, enc.vec_to_video_params(vec, params))
        return float(np.sum((v - target) ** 2))

    v, cache = enc.encode_clips_cached(clip[None], params)
    grads = enc.encode_clips_backward(cache, 2.0 * (v - target[None]))
    return finite_diff_grad_check(
        f, enc.video_params_to_vec(params), enc.video_params_to_vec(grads), eps=eps
    )


def _check_compose(rng, eps):
    d = 8
    table = enc.TaskTable.build({0: TASK_NAMES[0]}, embed_dim=d, seed=int(rng.integers(2**31)))
    pool = enc.init_prompt_pool([0], rng, k=2, prompt_len=2, embed_dim=d)
    probe = rng.normal(size=d)
    block = pool.prompts[0][1]

    def f(vec):
        saved = block.copy(), pool.proj.copy(), pool.bias.copy()
        parts = enc.unflatten_like(vec, [block, pool.proj, pool.bias])
        block[...], pool.proj, pool.bias = parts[0], parts[1], parts[2]
        try:
            return float(enc.compose_failure_context(pool, table, 0, 1) @ probe)
        finally:
            block[...], pool.proj, pool.bias = saved

    _, cache = enc.compose_failure_context_cached(pool, table, 0, 1)
    d_prompt, d_proj, d_bias = enc.compose_failure_context_backward(cache, probe)
    theta = enc.flatten_arrays([block, pool.proj, pool.bias])
    analytic = enc.flatten_arrays([d_prompt, d_proj, d_bias])
    return finite_diff_grad_check(f, theta, analytic, eps=eps)


SUITE = {
    "cross_domain_loss": _check_cdc,
    "video_text_loss": lambda rng, eps: _check_vlc(rng, eps, with_failure=False),
    "video_text_loss_with_failure_negatives": lambda rng, eps: _check_vlc(rng, eps, with_failure=True),
    "bce_loss": _check_bce,
    "failure_prompt_loss": _check_fvlc,
    "encode_video": _check_encoder,
    "compose_failure_context": _check_compose,
}


def run_gradient_suite(n_batches: int = 20, seed: int = 0, eps: float = 1e-5) -> dict:
    """Max relative error per operation over n_batches seeded random inputs."""
    worst = {}
    for op_index, (name, check) in enumerate(SUITE.items()):
        errs = []
        for batch in range(n_batches):
            rng = np.random.default_rng([seed, 71, batch, op_index])
            errs.append(check(rng, eps))
        worst[name] = max(errs)
    return worst
