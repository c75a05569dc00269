"""Batch sampling and the training loop with end-of-epoch clustering.

Per step: sample a stratified clip batch, encode, evaluate the mode's
total loss, backprop by hand through the encoders, clip the global
gradient norm, and apply plain gradient descent (prompts get their own
learning rate). In failure-prompt mode, every epoch ends by re-embedding
all failure clips with the current encoder, re-clustering per task,
aligning the clusters to the previous epoch, and refreshing pseudo-labels.

Rng streams are separated per concern so, e.g., all modes share the same
encoder initialization under one seed.
"""

import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import clustering as cl, encoders as enc, losses
from .config import ExperimentConfig
from .datagen import Dataset
from .errors import InsufficientStratumError, MissingFailureTextsError
from .simworld import TASK_NAMES

_STREAM_VIDEO, _STREAM_POOL, _STREAM_SAMPLER, _STREAM_CLUSTER = 1, 2, 3, 4


@dataclass
class ModelParams:
    video: enc.VideoEncoderParams
    pool: enc.FailurePromptPool | None
    table: enc.TaskTable


@dataclass
class ClipBatch:
    clips: np.ndarray          # (B, L, F)
    labels: np.ndarray
    domains: np.ndarray
    fail_clips: np.ndarray     # (Bf, L, F)
    fail_labels: np.ndarray
    fail_clusters: np.ndarray


class _IndexedData:
    """Dataset views the sampler draws from."""

    def __init__(self, dataset: Dataset, config: ExperimentConfig):
        human = dataset.subset("human")
        robot_success = dataset.subset("robot", success=1)
        self.human_frames = dataset.frames_array(human) if human else np.zeros((0,))
        self.human_labels = np.array([c.task_id for c in human], dtype=np.int64)
        self.robot_frames = dataset.frames_array(robot_success) if robot_success else np.zeros((0,))
        self.robot_labels = np.array([c.task_id for c in robot_success], dtype=np.int64)
        self.fail_clips_by_task = {}
        for task in sorted({c.task_id for c in dataset.subset("robot", success=0)}):
            clips = dataset.subset("robot", task_id=task, success=0)
            self.fail_clips_by_task[task] = dataset.frames_array(clips)

    @property
    def fail_tasks(self):
        return sorted(self.fail_clips_by_task)


def sample_batch(
    data: _IndexedData,
    config: ExperimentConfig,
    rng: np.random.Generator,
    pseudo_labels: dict,
) -> ClipBatch:
    """Stratified draw with every success sample guaranteed a same-task partner."""
    n_h, n_r = len(data.human_labels), len(data.robot_labels)
    if n_h < config.batch_human or n_r < config.batch_robot:
        raise InsufficientStratumError(
            f"need {config.batch_human} human / {config.batch_robot} robot successes, "
            f"have {n_h} / {n_r}"
        )
    for _ in range(100):
        h_idx = rng.choice(n_h, size=config.batch_human, replace=False)
        r_idx = rng.choice(n_r, size=config.batch_robot, replace=False)
        labels = np.concatenate([data.human_labels[h_idx], data.robot_labels[r_idx]])
        counts = {t: int(np.sum(labels == t)) for t in set(labels.tolist())}
        if all(c >= 2 for c in counts.values()):
            break
    else:
        raise InsufficientStratumError("could not satisfy positive-set constraint")

    clips = np.concatenate([data.human_frames[h_idx], data.robot_frames[r_idx]])
    domains = np.array([losses.HUMAN] * config.batch_human + [losses.ROBOT] * config.batch_robot)

    b_f = 0 if config.mode == "no_failure" else config.batch_failure
    fail_clips, fail_labels, fail_clusters = [], [], []
    if b_f:
        tasks = data.fail_tasks
        total = sum(len(data.fail_clips_by_task[t]) for t in tasks)
        if total < b_f:
            raise InsufficientStratumError(f"need {b_f} failure clips, have {total}")
        flat = [(t, i) for t in tasks for i in range(len(data.fail_clips_by_task[t]))]
        for pick in rng.choice(len(flat), size=b_f, replace=False):
            task, i = flat[int(pick)]
            fail_clips.append(data.fail_clips_by_task[task][i])
            fail_labels.append(task)
            plabels = pseudo_labels.get(task)
            fail_clusters.append(int(plabels[i]) if plabels is not None else 0)
    l, f = clips.shape[1], clips.shape[2]
    return ClipBatch(
        clips=clips,
        labels=labels,
        domains=domains,
        fail_clips=np.array(fail_clips).reshape(len(fail_clips), l, f),
        fail_labels=np.array(fail_labels, dtype=np.int64),
        fail_clusters=np.array(fail_clusters, dtype=np.int64),
    )


def _failure_text_bundle(params: ModelParams, config: ExperimentConfig):
    """(K, D) features for pooled tasks, empty blocks for the rest."""
    feats, caches = {}, {}
    for task in params.table.task_ids():
        if params.pool is not None and task in params.pool.prompts:
            feats[task], caches[task] = enc.failure_text_features(params.pool, params.table, task)
        else:
            feats[task] = np.zeros((0, config.embed_dim))
    return feats, caches


def _global_grad_norm(arrays) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list                      # per-epoch records
    cluster_states: dict               # task -> ClusterState (final epoch)
    initial_loss: float
    final_loss: float


def init_params(config: ExperimentConfig, pooled_tasks) -> ModelParams:
    video = enc.init_video_encoder(
        np.random.default_rng([config.seed, _STREAM_VIDEO]),
        frames=config.clip_frames,
        frame_width=config.frame_width,
        hidden=config.hidden_width,
        embed_dim=config.embed_dim,
    )
    pool = enc.init_prompt_pool(
        pooled_tasks,
        np.random.default_rng([config.seed, _STREAM_POOL]),
        k=config.k_clusters,
        prompt_len=config.prompt_len,
        embed_dim=config.embed_dim,
    ) if pooled_tasks else None
    names = {t: TASK_NAMES[t] for t in sorted(set(TASK_NAMES) | set(pooled_tasks))}
    table = enc.TaskTable.build(names, embed_dim=config.embed_dim, seed=config.seed)
    return ModelParams(video=video, pool=pool, table=table)


def _cluster_failures(params: ModelParams, data: _IndexedData, config: ExperimentConfig, epoch: int):
    """Re-embed failure clips per task and run spherical k-means."""
    states = {}
    for task in data.fail_tasks:
        feats = enc.encode_clips(data.fail_clips_by_task[task], params.video)
        seed = int(np.random.SeedSequence(
            [config.seed, _STREAM_CLUSTER, epoch + 1, task]
        ).generate_state(1, np.uint64)[0] % (2**31))
        states[task] = cl.spherical_kmeans(
            feats, k=config.k_clusters, seed=seed, task_id=task
        )
    return states


def train(config: ExperimentConfig, dataset: Dataset) -> TrainResult:
    data = _IndexedData(dataset, config)
    pooled_tasks = data.fail_tasks if config.mode == "fvlc" else []
    params = init_params(config, pooled_tasks)
    sampler_rng = np.random.default_rng([config.seed, _STREAM_SAMPLER])

    # pseudo-labels before the first epoch (failure-prompt mode only)
    cluster_states = {}
    pseudo_labels = {}
    if config.mode == "fvlc":
        cluster_states = _cluster_failures(params, data, config, epoch=-1)
        pseudo_labels = {t: s.assignments for t, s in cluster_states.items()}

    steps = config.steps_per_epoch or max(1, math.ceil(2 * len(data.human_labels) / config.batch_human))
    task_texts = {t: params.table.text_embed(t) for t in params.table.task_ids()}

    metrics = []
    initial_loss = None
    final_loss = None
    for epoch in range(config.epochs):
        sums = {}
        for _ in range(steps):
            batch = sample_batch(data, config, sampler_rng, pseudo_labels)
            videos, video_cache = enc.encode_clips_cached(batch.clips, params.video)
            if batch.fail_clips.shape[0]:
                fail_videos, fail_cache = enc.encode_clips_cached(batch.fail_clips, params.video)
            else:
                fail_videos, fail_cache = np.zeros((0, config.embed_dim)), None
            fail_texts, fail_caches = _failure_text_bundle(params, config)

            emb_batch = losses.Batch(
                videos=videos,
                labels=batch.labels,
                domains=batch.domains,
                texts=np.stack([task_texts[int(t)] for t in batch.labels]),
                fail_videos=fail_videos,
                fail_labels=batch.fail_labels,
                fail_clusters=batch.fail_clusters,
                tau=config.tau,
            )
            value, grads, comps = losses.total_loss(
                emb_batch, task_texts, fail_texts,
                mode=config.mode, exclude_anchor=config.exclude_anchor,
            )
            if initial_loss is None:
                initial_loss = value
            final_loss = value
            for key, v in comps.items():
                sums[key] = sums.get(key, 0.0) + v

            # backprop into the trainable parameters
            video_grads = enc.encode_clips_backward(video_cache, grads["videos"])
            if fail_cache is not None and "fail_videos" in grads:
                extra = enc.encode_clips_backward(fail_cache, grads["fail_videos"])
                for name in ("frame_proj", "frame_bias", "temporal_logits", "out_proj", "out_bias"):
                    setattr(video_grads, name, getattr(video_grads, name) + getattr(extra, name))
            pool_grads = None
            if params.pool is not None and "fail_texts" in grads:
                pool_grads = enc.zeros_like_pool(params.pool)
                for task, block_grad in grads["fail_texts"].items():
                    if task not in fail_caches:
                        continue
                    for k in range(block_grad.shape[0]):
                        d_prompt, d_proj, d_bias = enc.compose_failure_context_backward(
                            fail_caches[task][k], block_grad[k]
                        )
                        pool_grads.prompts[task][k] += d_prompt
                        pool_grads.proj += d_proj
                        pool_grads.bias += d_bias

            # global norm clip, then per-group step
            all_grads = list(video_grads.arrays())
            if pool_grads is not None:
                all_grads += [pool_grads.proj, pool_grads.bias]
                all_grads += [pool_grads.prompts[t] for t in sorted(pool_grads.prompts)]
            norm = _global_grad_norm(all_grads)
            scale = min(1.0, config.grad_clip / norm) if norm > 0 else 1.0
            for name in ("frame_proj", "frame_bias", "temporal_logits", "out_proj", "out_bias"):
                getattr(params.video, name)[...] -= config.lr_encoder * scale * getattr(video_grads, name)
            if pool_grads is not None:
                params.pool.proj[...] -= config.lr_encoder * scale * pool_grads.proj
                params.pool.bias[...] -= config.lr_encoder * scale * pool_grads.bias
                for task in pool_grads.prompts:
                    params.pool.prompts[task][...] -= config.lr_prompts * scale * pool_grads.prompts[task]

        record = {"epoch": epoch, "steps": steps}
        for key in sorted(sums):
            record[f"loss_{key}"] = sums[key] / steps
        if config.mode == "fvlc":
            new_states = _cluster_failures(params, data, config, epoch=epoch)
            cluster_info = []
            for task in data.fail_tasks:
                state = new_states[task]
                if task in cluster_states:
                    pi = cl.align_clusters(cluster_states[task].centers, state.centers)
                    state = cl.relabel_state(state, pi)
                churn = cl.label_churn(pseudo_labels[task], state.assignments) \
                    if task in pseudo_labels else 1.0
                sizes = np.bincount(state.assignments, minlength=config.k_clusters)
                cluster_info.append({
                    "task": task,
                    "objective": state.objective,
                    "churn": churn,
                    "sizes": sizes.tolist(),
                })
                cluster_states[task] = state
                pseudo_labels[task] = state.assignments
            record["clusters"] = cluster_info
        metrics.append(record)

    del initial_loss, final_loss
    return TrainResult(
        params=params,
        metrics=metrics,
        cluster_states=cluster_states,
        initial_loss=metrics[0]["loss_total"] if metrics else 0.0,
        final_loss=metrics[-1]["loss_total"] if metrics else 0.0,
    )


# --- checkpoint mapping ---

def params_to_arrays(params: ModelParams) -> dict:
    out = {}
    for f in dc_fields(params.video):
        out[f"video.{f.name}"] = getattr(params.video, f.name)
    if params.pool is not None:
        out["pool.proj"] = params.pool.proj
        out["pool.bias"] = params.pool.bias
        for task, block in params.pool.prompts.items():
            for k in range(block.shape[0]):
                out[f"pool.prompt.{task}.{k}"] = block[k]
    for task in params.table.task_ids():
        out[f"task.{task}.text"] = params.table.text_embed(task)
    return out


def params_from_arrays(arrays: dict) -> ModelParams:
    video = enc.VideoEncoderParams(
        frame_proj=arrays["video.frame_proj"],
        frame_bias=arrays["video.frame_bias"],
        temporal_logits=arrays["video.temporal_logits"],
        out_proj=arrays["video.out_proj"],
        out_bias=arrays["video.out_bias"],
    )
    prompt_keys = sorted(k for k in arrays if k.startswith("pool.prompt."))
    pool = None
    if prompt_keys:
        blocks = {}
        for key in prompt_keys:
            _, _, task, k = key.split(".")
            blocks.setdefault(int(task), {})[int(k)] = arrays[key]
        prompts = {
            task: np.stack([by_k[k] for k in sorted(by_k)])
            for task, by_k in blocks.items()
        }
        pool = enc.FailurePromptPool(
            prompts=prompts, proj=arrays["pool.proj"], bias=arrays["pool.bias"]
        )
    specs = []
    for key in sorted(k for k in arrays if k.startswith("task.")):
        task = int(key.split(".")[1])
        specs.append(enc.TaskSpec(task, TASK_NAMES.get(task, f"task {task}"), arrays[key]))
    return ModelParams(video=video, pool=pool, table=enc.TaskTable(specs))
