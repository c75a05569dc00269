"""Chunked action-conditioned state prediction for the planner.

Predictions happen once per 4-action chunk: 60 actions in, the initial
state plus 15 post-chunk states out. Two kinds:

* ground_truth - wraps the simulator and samples its rollout at chunk
  boundaries (exact by construction).
* learned - a shared per-chunk regressor applied autoregressively. The
  regressor is affine-plus-tanh: a linear part plus fixed random tanh
  features, fit in closed form by sample-normalized ridge least squares.
  The affine part represents the no-contact (linear) transitions exactly;
  the random features soak up contact effects. The normalized normal
  equations make the fit invariant to duplicating the dataset.
"""

from dataclasses import dataclass, field

import numpy as np

from . import simworld as sw
from .errors import BadHorizonError, InsufficientDataError

CHUNK = 4
INPUT_DIM = sw.STATE_DIM + CHUNK * sw.ACTION_DIM  # 19
N_FEATURES = 256

GROUND_TRUTH = "ground_truth"
LEARNED = "learned"

# per-column clamps applied to learned predictions
_LOW = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
_HIGH = np.array([1.0, 1.0, 1.0, sw.DRAWER_MAX, np.inf, 1.0, 1.0])


@dataclass
class DynamicsModel:
    kind: str
    feature_w: np.ndarray | None = None   # (INPUT_DIM, R)
    feature_b: np.ndarray | None = None   # (R,)
    weights: np.ndarray | None = None     # (1 + INPUT_DIM + R, STATE_DIM)
    loss_history: list = field(default_factory=list)


def ground_truth_model() -> DynamicsModel:
    return DynamicsModel(kind=GROUND_TRUTH)


def _check_horizon(n_actions: int) -> int:
    if n_actions < CHUNK or n_actions % CHUNK != 0:
        raise BadHorizonError(
            f"need a positive multiple of {CHUNK} actions, got {n_actions}"
        )
    return n_actions // CHUNK


def _design(x: np.ndarray, model: DynamicsModel) -> np.ndarray:
    ones = np.ones((x.shape[0], 1))
    feats = np.tanh(x @ model.feature_w + model.feature_b)
    return np.concatenate([ones, x, feats], axis=1)


def chunked_predict_batch(model: DynamicsModel, s0: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """(N,7) initial states + (N,H,3) actions -> (N, H/4 + 1, 7) states."""
    s0 = np.atleast_2d(np.asarray(s0, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim == 2:
        actions = actions[None, :, :]
    n_chunks = _check_horizon(actions.shape[1])
    if s0.shape[0] == 1 and actions.shape[0] > 1:
        s0 = np.broadcast_to(s0, (actions.shape[0], sw.STATE_DIM)).copy()

    if model.kind == GROUND_TRUTH:
        states = sw.rollout_batch(s0, actions)
        return states[:, ::CHUNK, :]

    out = np.empty((s0.shape[0], n_chunks + 1, sw.STATE_DIM))
    out[:, 0] = s0
    cur = s0
    for c in range(n_chunks):
        chunk = actions[:, c * CHUNK: (c + 1) * CHUNK, :].reshape(s0.shape[0], -1)
        x = np.concatenate([cur, chunk], axis=1)
        delta = _design(x, model) @ model.weights
        cur = np.clip(cur + delta, _LOW, _HIGH)
        out[:, c + 1] = cur
    return out


def chunked_predict(model: DynamicsModel, s0: sw.SimState, actions) -> list:
    """SimState-level surface: returns s0 plus one state per 4-action chunk."""
    arr = chunked_predict_batch(
        model, sw.state_to_array(s0)[None, :], sw.actions_to_array(actions)[None, :, :]
    )[0]
    return [sw.array_to_state(row, s0.camera_offset) for row in arr]


def chunk_transitions(states: np.ndarray, actions: np.ndarray):
    """Split episodes into per-chunk (input, delta) training pairs.

    states (N, H+1, 7), actions (N, H, 3) -> x (N*H/4, 19), y (N*H/4, 7).
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    n_chunks = _check_horizon(actions.shape[1])
    xs, ys = [], []
    for c in range(n_chunks):
        start = states[:, c * CHUNK, :]
        chunk = actions[:, c * CHUNK: (c + 1) * CHUNK, :].reshape(states.shape[0], -1)
        end = states[:, (c + 1) * CHUNK, :]
        xs.append(np.concatenate([start, chunk], axis=1))
        ys.append(end - start)
    return np.concatenate(xs), np.concatenate(ys)


def train_dynamics(
    episodes,
    epochs: int = 1,
    seed: int = 0,
    ridge: float = 1e-8,
    n_features: int = N_FEATURES,
) -> DynamicsModel:
    """Fit the chunk regressor on (states, actions) episode pairs.

    The solve is closed-form, so it converges in a single pass; extra
    epochs just re-record the same training loss.
    """
    episodes = list(episodes)
    if not episodes:
        raise InsufficientDataError("no episodes given")
    x_all, y_all = [], []
    for states, actions in episodes:
        x, y = chunk_transitions(np.asarray(states)[None, ...], np.asarray(actions)[None, ...])
        x_all.append(x)
        y_all.append(y)
    x = np.concatenate(x_all)
    y = np.concatenate(y_all)
    if x.shape[0] < 100:
        raise InsufficientDataError(f"{x.shape[0]} chunk transitions < 100")

    rng = np.random.default_rng(seed)
    model = DynamicsModel(
        kind=LEARNED,
        feature_w=rng.normal(size=(INPUT_DIM, n_features)) / np.sqrt(INPUT_DIM),
        feature_b=rng.uniform(-1.0, 1.0, size=n_features),
    )
    phi = _design(x, model)
    n = phi.shape[0]
    gram = phi.T @ phi / n + ridge * np.eye(phi.shape[1])
    model.weights = np.linalg.solve(gram, phi.T @ y / n)
    mse = float(np.mean((phi @ model.weights - y) ** 2))
    model.loss_history = [mse] * max(1, int(epochs))
    return model


def generate_random_episodes(n_episodes: int, seed: int, horizon: int = sw.HORIZON):
    """Random-policy episodes cycling over task initial-state distributions."""
    rng = np.random.default_rng([seed, 41])
    tasks = sw.ALL_TASKS
    s0 = np.stack([
        sw.initial_state_array(tasks[i % len(tasks)], rng) for i in range(n_episodes)
    ])
    actions = np.stack([sw.random_action_array(rng, horizon) for _ in range(n_episodes)])
    states = sw.rollout_batch(s0, actions)
    return states, actions


def train_on_random_episodes(n_episodes: int = 2000, seed: int = 0, **kwargs) -> DynamicsModel:
    states, actions = generate_random_episodes(n_episodes, seed)
    return train_dynamics(
        [(states[i], actions[i]) for i in range(n_episodes)], seed=seed, **kwargs
    )
