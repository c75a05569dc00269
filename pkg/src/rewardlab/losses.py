"""Training objectives, each returning a scalar value plus gradients.

Four losses over embedding batches:

* cross_domain_loss: supervised contrastive pull between same-task clips
  across the human and robot domains. Each anchor averages -log softmax
  ratios over its positive set (same task, either domain); the denominator
  runs over the whole success batch. The anchor is included in its own
  positive set and denominator by default; supcon-style self-exclusion is
  available behind a flag.
* video_text_loss: bidirectional InfoNCE between clip and task-text
  embeddings. When failure-text features are supplied, the video->text
  direction's denominator also includes them as negatives (text->video is
  unchanged).
* bce_loss: binary cross-entropy on sigmoid(v . t) over robot successes
  and failures.
* failure_prompt_loss: pulls each failure clip toward its assigned
  failure-text feature and away from the task's success text and the other
  failure features.

All softmax ratios are wrapped in -log (InfoNCE convention) and computed
via max-subtracted log-sum-exp. Gradients are hand-derived and covered by
central-difference checks in the test suite.
"""

from dataclasses import dataclass, field

import numpy as np

from .embeddings import logsumexp, softmax
from .errors import (
    BadClusterIndexError,
    BadConfigError,
    EmptyPositiveSetError,
    MissingFailureTextsError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
)

MODES = ("no_failure", "bce", "fvlc")
DEFAULT_TAU = 0.07

HUMAN, ROBOT = 0, 1


@dataclass
class Batch:
    """Embedding-level training batch: human rows first, then robot successes."""

    videos: np.ndarray         # (B, D) success clips
    labels: np.ndarray         # (B,) task ids
    domains: np.ndarray        # (B,) HUMAN or ROBOT
    texts: np.ndarray          # (B, D) frozen task text per sample
    fail_videos: np.ndarray    # (Bf, D)
    fail_labels: np.ndarray    # (Bf,)
    fail_clusters: np.ndarray  # (Bf,) assigned pseudo-label k*
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        self.videos = np.asarray(self.videos, dtype=np.float64)
        self.texts = np.asarray(self.texts, dtype=np.float64)
        self.fail_videos = np.asarray(self.fail_videos, dtype=np.float64).reshape(-1, self.videos.shape[1])
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domains = np.asarray(self.domains, dtype=np.int64)
        self.fail_labels = np.asarray(self.fail_labels, dtype=np.int64)
        self.fail_clusters = np.asarray(self.fail_clusters, dtype=np.int64)
        if self.videos.shape != self.texts.shape:
            raise ShapeMismatchError("videos and texts must have matching shape")
        if not self.tau > 0:
            raise NonPositiveTemperatureError(f"tau must be > 0, got {self.tau}")

    @property
    def size(self) -> int:
        return self.videos.shape[0]

    @property
    def n_human(self) -> int:
        return int(np.sum(self.domains == HUMAN))

    @property
    def n_robot(self) -> int:
        return int(np.sum(self.domains == ROBOT))

    @property
    def n_fail(self) -> int:
        return self.fail_videos.shape[0]


def cross_domain_loss(videos, labels, tau: float, exclude_anchor: bool = False):
    """Supervised contrastive loss over the pooled success batch.

    Returns (value, d_videos).
    """
    videos = np.asarray(videos, dtype=np.float64)
    labels = np.asarray(labels)
    if not tau > 0:
        raise NonPositiveTemperatureError(f"tau must be > 0, got {tau}")
    b = videos.shape[0]
    logits = (videos @ videos.T) / tau
    grad_s = np.zeros((b, b))
    total = 0.0
    for i in range(b):
        same = labels == labels[i]
        keep = np.ones(b, dtype=bool)
        if exclude_anchor:
            same = same.copy()
            same[i] = False
            keep[i] = False
        pos = np.flatnonzero(same)
        if pos.size == 0:
            raise EmptyPositiveSetError(f"anchor {i} has no positive sample")
        denom_idx = np.flatnonzero(keep)
        z = logits[i, denom_idx]
        total += logsumexp(z) - float(np.mean(logits[i, pos]))
        grad_s[i, denom_idx] += softmax(z) / tau
        grad_s[i, pos] -= 1.0 / (tau * pos.size)
    d_videos = (grad_s + grad_s.T) @ videos
    return total, d_videos


def video_text_loss(videos, texts, labels, tau: float, failure_texts=None):
    """Bidirectional clip<->text InfoNCE; failure features join the
    video->text denominators when given.

    Returns (value, grads) with grads keys "videos", "texts", and
    (when failure_texts is given) "fail_texts" as task -> (K, D).
    """
    videos = np.asarray(videos, dtype=np.float64)
    texts = np.asarray(texts, dtype=np.float64)
    labels = np.asarray(labels)
    if videos.shape != texts.shape:
        raise ShapeMismatchError("one text embedding per video is required")
    if not tau > 0:
        raise NonPositiveTemperatureError(f"tau must be > 0, got {tau}")
    b = videos.shape[0]
    sims = videos @ texts.T
    d_videos = np.zeros_like(videos)
    d_texts = np.zeros_like(texts)
    d_fail = None
    if failure_texts is not None:
        d_fail = {t: np.zeros_like(f) for t, f in failure_texts.items()}
    total = 0.0
    for i in range(b):
        # video -> text, optionally with failure negatives for this task
        z = sims[i] / tau
        fail_block = None
        if failure_texts is not None:
            task = int(labels[i])
            if task not in failure_texts:
                raise MissingFailureTextsError(
                    f"task {task} has no failure-text features"
                )
            fail_block = np.asarray(failure_texts[task], dtype=np.float64)
            z = np.concatenate([z, (videos[i] @ fail_block.T) / tau])
        total += logsumexp(z) - float(z[i])
        coef = softmax(z)
        coef[i] -= 1.0
        d_videos[i] += (coef[:b] @ texts) / tau
        d_texts += np.outer(coef[:b], videos[i]) / tau
        if fail_block is not None:
            d_videos[i] += (coef[b:] @ fail_block) / tau
            d_fail[task] += np.outer(coef[b:], videos[i]) / tau

        # text -> video
        z2 = sims[:, i] / tau
        total += logsumexp(z2) - float(z2[i])
        coef2 = softmax(z2)
        coef2[i] -= 1.0
        d_texts[i] += (coef2 @ videos) / tau
        d_videos += np.outer(coef2, texts[i]) / tau

    grads = {"videos": d_videos, "texts": d_texts}
    if d_fail is not None:
        grads["fail_texts"] = d_fail
    return total, grads


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_loss(videos, texts, outcomes):
    """-sum_i [r log p + (1-r) log(1-p)] with p = sigmoid(v . t).

    Returns (value, grads) with keys "videos" and "texts".
    """
    videos = np.asarray(videos, dtype=np.float64)
    texts = np.asarray(texts, dtype=np.float64)
    outcomes = np.asarray(outcomes, dtype=np.float64)
    if videos.shape != texts.shape or outcomes.shape[0] != videos.shape[0]:
        raise ShapeMismatchError("videos, texts, outcomes must align")
    x = np.sum(videos * texts, axis=1)
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    value = float(np.sum(_softplus(np.where(outcomes > 0.5, -x, x))))
    dx = _sigmoid(x) - outcomes
    return value, {"videos": dx[:, None] * texts, "texts": dx[:, None] * videos}


def failure_prompt_loss(fail_videos, fail_labels, fail_clusters, task_texts, failure_texts, tau: float):
    """Contrast each failure clip against [success text; K failure features].

    The positive is the failure feature at the clip's assigned cluster k*.
    Returns (value, grads) with keys "fail_videos", "task_texts" (task ->
    (D,)), and "fail_texts" (task -> (K, D)).
    """
    fail_videos = np.asarray(fail_videos, dtype=np.float64)
    fail_labels = np.asarray(fail_labels)
    fail_clusters = np.asarray(fail_clusters)
    if not tau > 0:
        raise NonPositiveTemperatureError(f"tau must be > 0, got {tau}")
    d_videos = np.zeros_like(fail_videos)
    d_task_texts = {t: np.zeros_like(v) for t, v in task_texts.items()}
    d_fail = {t: np.zeros_like(f) for t, f in failure_texts.items()}
    total = 0.0
    for i in range(fail_videos.shape[0]):
        task = int(fail_labels[i])
        if task not in failure_texts:
            raise MissingFailureTextsError(f"task {task} has no failure-text features")
        block = np.asarray(failure_texts[task], dtype=np.float64)
        k_star = int(fail_clusters[i])
        if not 0 <= k_star < block.shape[0]:
            raise BadClusterIndexError(f"k*={k_star} outside [0, {block.shape[0]})")
        text = np.asarray(task_texts[task], dtype=np.float64)
        v = fail_videos[i]
        z = np.concatenate([[v @ text], v @ block.T]) / tau
        pos = 1 + k_star
        total += logsumexp(z) - float(z[pos])
        coef = softmax(z)
        coef[pos] -= 1.0
        d_videos[i] += (coef[0] * text + coef[1:] @ block) / tau
        d_task_texts[task] += coef[0] * v / tau
        d_fail[task] += np.outer(coef[1:], v) / tau
    return total, {
        "fail_videos": d_videos,
        "task_texts": d_task_texts,
        "fail_texts": d_fail,
    }


def _accumulate(target: dict, grads: dict, weight: float) -> None:
    for key, val in grads.items():
        if isinstance(val, dict):
            slot = target.setdefault(key, {})
            for sub, arr in val.items():
                if sub in slot:
                    slot[sub] = slot[sub] + weight * arr
                else:
                    slot[sub] = weight * arr
        else:
            if key in target:
                target[key] = target[key] + weight * val
            else:
                target[key] = weight * val


def total_loss(
    batch: Batch,
    task_texts=None,
    failure_texts=None,
    mode: str = "fvlc",
    weights=(1.0, 1.0, 1.0),
    exclude_anchor: bool = False,
):
    """Combined objective for one batch under the given training mode.

    no_failure: cross-domain + video-text.
    bce:        adds binary cross-entropy over robot successes + failures.
    fvlc:       adds failure negatives to video->text and the failure
                prompt contrast term.

    Returns (value, grads, components). Unit weights by default.
    """
    if mode not in MODES:
        raise BadConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if batch.n_human < 1 or batch.n_robot < 1:
        raise EmptyPositiveSetError("need at least one human and one robot success sample")

    w_cdc, w_vlc, w_extra = weights
    grads: dict = {}
    components: dict = {}

    cdc_val, cdc_grad = cross_domain_loss(
        batch.videos, batch.labels, batch.tau, exclude_anchor=exclude_anchor
    )
    components["cross_domain"] = cdc_val
    _accumulate(grads, {"videos": cdc_grad}, w_cdc)

    vlc_fail = failure_texts if mode == "fvlc" else None
    vlc_val, vlc_grads = video_text_loss(
        batch.videos, batch.texts, batch.labels, batch.tau, failure_texts=vlc_fail
    )
    components["video_text"] = vlc_val
    _accumulate(grads, vlc_grads, w_vlc)

    extra_val = 0.0
    if mode == "bce":
        robot = batch.domains == ROBOT
        videos = np.concatenate([batch.videos[robot], batch.fail_videos])
        texts = np.concatenate(
            [batch.texts[robot]]
            + ([np.stack([task_texts[int(t)] for t in batch.fail_labels])]
               if batch.n_fail else [np.zeros((0, batch.videos.shape[1]))])
        )
        outcomes = np.concatenate([np.ones(int(robot.sum())), np.zeros(batch.n_fail)])
        extra_val, bce_grads = bce_loss(videos, texts, outcomes)
        n_r = int(robot.sum())
        d_videos = np.zeros_like(batch.videos)
        d_videos[robot] = bce_grads["videos"][:n_r]
        d_texts = np.zeros_like(batch.texts)
        d_texts[robot] = bce_grads["texts"][:n_r]
        task_text_grads = {}
        for j, t in enumerate(batch.fail_labels):
            t = int(t)
            cur = task_text_grads.setdefault(t, np.zeros(batch.videos.shape[1]))
            task_text_grads[t] = cur + bce_grads["texts"][n_r + j]
        _accumulate(
            grads,
            {
                "videos": d_videos,
                "texts": d_texts,
                "fail_videos": bce_grads["videos"][n_r:],
                "task_texts": task_text_grads,
            },
            w_extra,
        )
        components["bce"] = extra_val
    elif mode == "fvlc":
        extra_val, fp_grads = failure_prompt_loss(
            batch.fail_videos,
            batch.fail_labels,
            batch.fail_clusters,
            task_texts,
            failure_texts,
            batch.tau,
        )
        _accumulate(grads, fp_grads, w_extra)
        components["failure_prompt"] = extra_val

    value = w_cdc * cdc_val + w_vlc * vlc_val + w_extra * extra_val
    components["total"] = value
    return value, grads, components
