"""Trainable video encoder, frozen task-text table, failure prompt pool.

The video encoder is small enough for cheap finite-difference checks:
per-frame linear projection -> tanh -> learned softmax-weighted temporal
average -> linear -> l2 normalization. Backward passes are written by hand
and validated against central differences.

Task text embeddings stand in for a frozen language encoder: one seeded
unit Gaussian vector per task expression, never updated (arrays are marked
read-only to enforce this).

A failure prompt is a trainable (prompt_len, D) block per (task, cluster).
Its feature is the token-mean of [prompt; task text] through a shared
trainable linear map, then normalized, so the feature stays differentiable
in the prompt while the text stays frozen.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from .embeddings import l2_normalize
from .errors import (
    BadClusterIndexError,
    ShapeMismatchError,
    UnknownTaskError,
    ZeroVectorError,
)

# default desk-scale dimensions
CLIP_FRAMES = 4
FRAME_WIDTH = 16
HIDDEN_WIDTH = 32
EMBED_DIM = 32
PROMPT_LEN = 2

_TEXT_STREAM = 101  # rng stream tag for frozen text embeddings


@dataclass
class VideoEncoderParams:
    frame_proj: np.ndarray      # (F, H)
    frame_bias: np.ndarray      # (H,)
    temporal_logits: np.ndarray  # (L, H): softmax over frames, per channel
    out_proj: np.ndarray        # (H, D)
    out_bias: np.ndarray        # (D,)

    @property
    def frames(self) -> int:
        return self.temporal_logits.shape[0]

    def copy(self) -> "VideoEncoderParams":
        return VideoEncoderParams(*(getattr(self, f.name).copy() for f in fields(self)))

    def arrays(self):
        return [getattr(self, f.name) for f in fields(self)]


def init_video_encoder(
    rng: np.random.Generator,
    frames: int = CLIP_FRAMES,
    frame_width: int = FRAME_WIDTH,
    hidden: int = HIDDEN_WIDTH,
    embed_dim: int = EMBED_DIM,
) -> VideoEncoderParams:
    # temporal logits start spread out so channels already prefer different
    # frames; uniform averaging cannot express frame-to-frame displacement
    return VideoEncoderParams(
        frame_proj=rng.normal(size=(frame_width, hidden)) / np.sqrt(frame_width),
        frame_bias=np.zeros(hidden),
        temporal_logits=rng.normal(scale=1.5, size=(frames, hidden)),
        out_proj=rng.normal(size=(hidden, embed_dim)) / np.sqrt(hidden),
        out_bias=np.zeros(embed_dim),
    )


def zeros_like_video(params: VideoEncoderParams) -> VideoEncoderParams:
    return VideoEncoderParams(*(np.zeros_like(a) for a in params.arrays()))


def encode_clips_cached(clips: np.ndarray, params: VideoEncoderParams):
    """Encode (N, L, F) clips to unit-norm (N, D) embeddings, keeping a cache."""
    clips = np.asarray(clips, dtype=np.float64)
    if clips.ndim != 3:
        raise ShapeMismatchError(f"clips must be (N, L, F), got {clips.shape}")
    n, l, f = clips.shape
    if (l, f) != (params.temporal_logits.shape[0], params.frame_proj.shape[0]):
        raise ShapeMismatchError(
            f"clip shape ({l},{f}) does not match encoder "
            f"({params.temporal_logits.shape[0]},{params.frame_proj.shape[0]})"
        )
    if not all(np.all(np.isfinite(a)) for a in params.arrays()):
        raise ShapeMismatchError("encoder parameters contain non-finite values")

    pre = clips @ params.frame_proj + params.frame_bias          # (N, L, H)
    hidden = np.tanh(pre)
    tl = params.temporal_logits
    w = np.exp(tl - tl.max(axis=0, keepdims=True))
    w /= w.sum(axis=0, keepdims=True)                            # (L, H)
    pooled = np.einsum("lh,nlh->nh", w, hidden)                  # (N, H)
    z = pooled @ params.out_proj + params.out_bias               # (N, D)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroVectorError("pre-normalization embedding collapsed to zero")
    v = z / norms[:, None]
    cache = (clips, hidden, w, pooled, z, norms, v, params)
    return v, cache


def encode_clips(clips: np.ndarray, params: VideoEncoderParams) -> np.ndarray:
    return encode_clips_cached(clips, params)[0]


def encode_video(clip: np.ndarray, params: VideoEncoderParams) -> np.ndarray:
    """Encode one (L, F) clip to a unit-norm width-D embedding."""
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim != 2:
        raise ShapeMismatchError(f"clip must be (L, F), got {clip.shape}")
    return encode_clips(clip[None], params)[0]


def encode_clips_backward(cache, d_v: np.ndarray) -> VideoEncoderParams:
    """Accumulate d(loss)/d(params) given d(loss)/d(embeddings)."""
    clips, hidden, w, pooled, z, norms, v, params = cache
    d_v = np.asarray(d_v, dtype=np.float64)
    # through z / ||z||
    inner = np.sum(v * d_v, axis=1, keepdims=True)
    d_z = (d_v - v * inner) / norms[:, None]
    d_out_bias = d_z.sum(axis=0)
    d_out_proj = pooled.T @ d_z
    d_pooled = d_z @ params.out_proj.T                            # (N, H)
    d_hidden = w[None, :, :] * d_pooled[:, None, :]               # (N, L, H)
    d_w = np.einsum("nlh,nh->lh", hidden, d_pooled)               # (L, H)
    # softmax over frames, independently per channel
    d_tl = w * (d_w - np.sum(w * d_w, axis=0, keepdims=True))
    d_pre = d_hidden * (1.0 - hidden * hidden)
    d_frame_proj = np.einsum("nlf,nlh->fh", clips, d_pre)
    d_frame_bias = d_pre.sum(axis=(0, 1))
    return VideoEncoderParams(
        frame_proj=d_frame_proj,
        frame_bias=d_frame_bias,
        temporal_logits=d_tl,
        out_proj=d_out_proj,
        out_bias=d_out_bias,
    )


# --- frozen task text embeddings ---

@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    expression: str
    text_embedding: np.ndarray  # unit norm, read-only


class TaskTable:
    """Registry of tasks with frozen text embeddings."""

    def __init__(self, specs):
        self._specs = {}
        for spec in specs:
            if spec.task_id in self._specs:
                raise ShapeMismatchError(f"duplicate task id {spec.task_id}")
            spec.text_embedding.setflags(write=False)
            self._specs[spec.task_id] = spec

    @classmethod
    def build(cls, task_names: dict, embed_dim: int, seed: int) -> "TaskTable":
        """Seeded near-orthogonal initializer: unit Gaussian per expression."""
        specs = []
        for task_id in sorted(task_names):
            rng = np.random.default_rng([seed, _TEXT_STREAM, task_id])
            emb = l2_normalize(rng.normal(size=embed_dim))
            specs.append(TaskSpec(task_id, task_names[task_id], emb))
        return cls(specs)

    def __contains__(self, task_id: int) -> bool:
        return task_id in self._specs

    def task_ids(self):
        return sorted(self._specs)

    def spec(self, task_id: int) -> TaskSpec:
        if task_id not in self._specs:
            raise UnknownTaskError(f"task {task_id} is not registered")
        return self._specs[task_id]

    def text_embed(self, task_id: int) -> np.ndarray:
        return self.spec(task_id).text_embedding


# --- failure prompt pool ---

@dataclass
class FailurePromptPool:
    """K trainable prompts per task plus the shared pooling map."""

    prompts: dict          # task_id -> (K, prompt_len, D)
    proj: np.ndarray       # (D, D)
    bias: np.ndarray       # (D,)

    @property
    def k(self) -> int:
        first = next(iter(self.prompts.values()))
        return first.shape[0]

    @property
    def prompt_len(self) -> int:
        first = next(iter(self.prompts.values()))
        return first.shape[1]

    def copy(self) -> "FailurePromptPool":
        return FailurePromptPool(
            prompts={t: p.copy() for t, p in self.prompts.items()},
            proj=self.proj.copy(),
            bias=self.bias.copy(),
        )


def init_prompt_pool(
    task_ids,
    rng: np.random.Generator,
    k: int = 3,
    prompt_len: int = PROMPT_LEN,
    embed_dim: int = EMBED_DIM,
    prompt_scale: float = 0.5,
) -> FailurePromptPool:
    if k < 1 or prompt_len < 1:
        raise BadClusterIndexError("need k >= 1 and prompt_len >= 1")
    prompts = {
        t: rng.normal(scale=prompt_scale, size=(k, prompt_len, embed_dim))
        for t in sorted(task_ids)
    }
    return FailurePromptPool(prompts=prompts, proj=np.eye(embed_dim), bias=np.zeros(embed_dim))


def zeros_like_pool(pool: FailurePromptPool) -> FailurePromptPool:
    return FailurePromptPool(
        prompts={t: np.zeros_like(p) for t, p in pool.prompts.items()},
        proj=np.zeros_like(pool.proj),
        bias=np.zeros_like(pool.bias),
    )


def compose_failure_context_cached(
    pool: FailurePromptPool, table: TaskTable, task_id: int, k: int
):
    """Feature of [prompt_k; task text]: token mean -> shared map -> normalize."""
    if task_id not in pool.prompts:
        raise UnknownTaskError(f"task {task_id} has no failure prompt pool")
    block = pool.prompts[task_id]
    if not 0 <= k < block.shape[0]:
        raise BadClusterIndexError(f"cluster {k} outside [0, {block.shape[0]})")
    text = table.text_embed(task_id)
    rows = np.vstack([block[k], text[None, :]])
    mean = rows.mean(axis=0)
    u = mean @ pool.proj + pool.bias
    norm = float(np.linalg.norm(u))
    if norm <= 1e-12:
        raise ZeroVectorError("failure context collapsed to zero")
    t_f = u / norm
    cache = (task_id, k, rows.shape[0], mean, u, norm, t_f, pool)
    return t_f, cache


def compose_failure_context(
    pool: FailurePromptPool, table: TaskTable, task_id: int, k: int
) -> np.ndarray:
    return compose_failure_context_cached(pool, table, task_id, k)[0]


def compose_failure_context_backward(cache, d_t: np.ndarray):
    """Returns (d_prompt_block (prompt_len, D), d_proj, d_bias)."""
    task_id, k, n_rows, mean, u, norm, t_f, pool = cache
    d_t = np.asarray(d_t, dtype=np.float64)
    d_u = (d_t - t_f * float(t_f @ d_t)) / norm
    d_bias = d_u
    d_proj = np.outer(mean, d_u)
    d_mean = pool.proj @ d_u
    d_row = d_mean / n_rows
    d_prompt = np.tile(d_row, (n_rows - 1, 1))
    return d_prompt, d_proj, d_bias


def failure_text_features(pool: FailurePromptPool, table: TaskTable, task_id: int):
    """All K features for a task, as a (K, D) array plus per-k caches."""
    if task_id not in pool.prompts:
        raise UnknownTaskError(f"task {task_id} has no failure prompt pool")
    k_total = pool.prompts[task_id].shape[0]
    feats, caches = [], []
    for k in range(k_total):
        t_f, cache = compose_failure_context_cached(pool, table, task_id, k)
        feats.append(t_f)
        caches.append(cache)
    return np.stack(feats), caches


# --- parameter flattening (finite-difference checks, checkpoints) ---

def flatten_arrays(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def unflatten_like(vec: np.ndarray, arrays):
    total = sum(a.size for a in arrays)
    if total != vec.size:
        raise ShapeMismatchError(
            f"flat vector has {vec.size} entries, templates need {total}"
        )
    out, pos = [], 0
    for a in arrays:
        out.append(np.asarray(vec[pos: pos + a.size]).reshape(a.shape))
        pos += a.size
    return out


def video_params_to_vec(params: VideoEncoderParams) -> np.ndarray:
    return flatten_arrays(params.arrays())

def vec_to_video_params(vec: np.ndarray, template: VideoEncoderParams) -> VideoEncoderParams:
    return VideoEncoderParams(*unflatten_like(vec, template.arrays()))
