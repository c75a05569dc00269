"""State -> frame-feature rendering, the human-domain transform, and
environment variants.

A frame feature is a fixed nonlinear map of the state (positions, degrees
of freedom, camera offset): tanh(W r + b) with constants drawn once from a
fixed seed. The human domain applies an invertible affine transform
(a rotation built from a fixed skew generator, plus a constant offset) on
top, which models the embodiment/viewpoint gap as a controllable shift.

Environment variants change rendering only (color bias inside the
nonlinearity, camera offset, feature permutation) and never touch dynamics
or predicates.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import simworld as sw
from .errors import BadConfigError, ShapeMismatchError

FRAME_WIDTH = 16
RAW_WIDTH = 9  # gripper xy, grip, drawer ext, faucet angle, cup xy, camera xy

_RENDER_SEED = 137
_rng = np.random.default_rng(_RENDER_SEED)
_W_RENDER = _rng.normal(scale=0.6, size=(FRAME_WIDTH, RAW_WIDTH))
_B_RENDER = _rng.normal(scale=0.3, size=FRAME_WIDTH)
_SKEW_BASE = _rng.normal(size=(FRAME_WIDTH, FRAME_WIDTH))
_SKEW = (_SKEW_BASE - _SKEW_BASE.T) / np.sqrt(FRAME_WIDTH)
_OFFSET_DIR = _rng.normal(size=FRAME_WIDTH)
_OFFSET_DIR /= np.linalg.norm(_OFFSET_DIR)
_COLOR_BIAS = _rng.normal(scale=0.35, size=FRAME_WIDTH)
_PERM = _rng.permutation(FRAME_WIDTH)
del _rng, _SKEW_BASE


@dataclass(frozen=True)
class DomainShift:
    """Parameters of the robot->human frame-feature transform."""

    mix: float = 0.7        # rotation amount; 0 disables the linear part
    offset: float = 0.35    # constant shift magnitude; 0 disables
    viewpoint_sigma: float = 0.08  # per-clip camera offset spread (human)
    feature_noise_sigma: float = 0.05  # per-frame Gaussian feature noise (human)

    @property
    def is_identity(self) -> bool:
        return self.mix == 0.0 and self.offset == 0.0


@lru_cache(maxsize=8)
def _shift_matrix(mix: float) -> np.ndarray:
    return expm(mix * _SKEW)


def apply_domain_shift(features: np.ndarray, shift: DomainShift) -> np.ndarray:
    """Affine human-domain transform of robot-domain frame features."""
    a = _shift_matrix(shift.mix)
    return features @ a.T + shift.offset * _OFFSET_DIR


# variant name -> (color bias scale, camera offset, permute features)
VARIANTS = {
    "train": (0.0, (0.0, 0.0), False),
    "shifted-color": (1.0, (0.0, 0.0), False),
    "shifted-view": (1.0, (0.06, -0.05), False),
    "shifted-arrangement": (1.0, (0.06, -0.05), True),
}


def render_frames(
    states: np.ndarray,
    camera: np.ndarray = (0.0, 0.0),
    domain: str = "robot",
    shift: DomainShift | None = None,
    variant: str = "train",
) -> np.ndarray:
    """Render (N,7) state arrays to (N,F) frame features."""
    if variant not in VARIANTS:
        raise BadConfigError(f"unknown environment variant {variant!r}")
    if domain not in ("robot", "human"):
        raise BadConfigError(f"domain must be 'robot' or 'human', got {domain!r}")
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if states.shape[1] != sw.STATE_DIM:
        raise ShapeMismatchError(f"states must be (N,{sw.STATE_DIM})")
    camera = np.asarray(camera, dtype=np.float64)
    if camera.ndim == 1:
        camera = np.broadcast_to(camera, (states.shape[0], 2))

    color_scale, cam_off, permute = VARIANTS[variant]
    raw = np.empty((states.shape[0], RAW_WIDTH))
    raw[:, 0:2] = states[:, (sw.GX, sw.GY)]
    raw[:, 2] = states[:, sw.GRIP]
    # scale the small degrees of freedom so they register in the features
    raw[:, 3] = states[:, sw.EXT] * 10.0
    raw[:, 4] = states[:, sw.ANGLE] * 10.0
    raw[:, 5:7] = states[:, (sw.CUPX, sw.CUPY)]
    raw[:, 7] = camera[:, 0] + cam_off[0]
    raw[:, 8] = camera[:, 1] + cam_off[1]

    pre = raw @ _W_RENDER.T + _B_RENDER + color_scale * _COLOR_BIAS
    feats = np.tanh(pre)
    if permute:
        feats = feats[:, _PERM]
    if domain == "human":
        feats = apply_domain_shift(feats, shift if shift is not None else DomainShift())
    return feats


def render_features(
    state: sw.SimState,
    domain: str = "robot",
    shift: DomainShift | None = None,
    variant: str = "train",
) -> np.ndarray:
    """Render one SimState to a width-F frame feature vector."""
    return render_frames(
        sw.state_to_array(state)[None, :],
        camera=np.asarray(state.camera_offset),
        domain=domain,
        shift=shift,
        variant=variant,
    )[0]


def clip_frame_indices(n_states: int, n_frames: int) -> np.ndarray:
    """Uniform temporal subsampling indices (first and last always kept)."""
    return np.round(np.linspace(0, n_states - 1, n_frames)).astype(int)
