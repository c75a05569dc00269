"""Experiment configuration: one flat dataclass, addressable from a plain
`key = value` text file. Unknown keys are errors; seed precedence is
CLI flag > REWARD_SEED environment variable > config file > default.
"""

import os
from dataclasses import dataclass, fields, replace

from . import simworld as sw
from .errors import BadConfigError

SEED_ENV_VAR = "REWARD_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    # training objective
    mode: str = "fvlc"                  # no_failure | bce | fvlc
    k_clusters: int = 3
    prompt_len: int = 2
    tau: float = 0.07
    exclude_anchor: bool = False        # supcon-style self-exclusion
    # batch strata
    batch_human: int = 8
    batch_robot: int = 8
    batch_failure: int = 8
    # schedule
    epochs: int = 30
    steps_per_epoch: int = 0            # 0: two passes over the human stratum
    lr_encoder: float = 1e-3
    lr_prompts: float = 1e-2
    grad_clip: float = 5.0
    seed: int = 0
    # model dimensions
    clip_frames: int = 4
    frame_width: int = 16
    hidden_width: int = 32
    embed_dim: int = 32
    # task split and environment
    train_tasks: tuple = sw.TRAIN_TASKS
    heldout_tasks: tuple = sw.TARGET_TASKS
    env_variant: str = "train"
    # dataset counts
    human_per_task: int = 60
    robot_success_per_task: int = 20
    robot_failure_per_task: int = 20
    eval_success_per_task: int = 16
    eval_failure_per_task: int = 16
    failure_sources: tuple = ("random", "near_success")
    noise: float = 0.05
    # planning
    plan_candidates: int = 300
    plan_horizon: int = 60
    plan_trials: int = 50
    plan_seeds: int = 3

    def __post_init__(self):
        if self.mode not in ("no_failure", "bce", "fvlc"):
            raise BadConfigError(f"unknown mode {self.mode!r}")
        if self.k_clusters < 1 or self.prompt_len < 1:
            raise BadConfigError("k_clusters and prompt_len must be >= 1")
        if self.env_variant not in ("train", "shifted-color", "shifted-view", "shifted-arrangement"):
            raise BadConfigError(f"unknown env_variant {self.env_variant!r}")
        if self.plan_horizon % 4 != 0:
            raise BadConfigError("plan_horizon must be divisible by 4")

    @property
    def all_tasks(self) -> tuple:
        return tuple(sorted(set(self.train_tasks) | set(self.heldout_tasks)))


_FIELD_TYPES = {
    f.name: (f.type if isinstance(f.type, str) else f.type.__name__)
    for f in fields(ExperimentConfig)
}


def _parse_value(name: str, text: str):
    kind = _FIELD_TYPES[name]
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise BadConfigError(f"{name}: expected a boolean, got {text!r}")
    if kind == "tuple":
        if not text:
            return ()
        items = [t.strip() for t in text.split(",") if t.strip()]
        if name == "failure_sources":
            return tuple(items)
        return tuple(int(t) for t in items)
    return text  # str fields


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys error."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise BadConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            overrides[key] = _parse_value(key, value)
        except ValueError as exc:
            raise BadConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    base = base if base is not None else ExperimentConfig()
    return replace(base, **overrides)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="ascii") as fh:
        return parse_config_text(fh.read(), base)


def resolve_seed(config: ExperimentConfig, flag_seed: int | None = None) -> ExperimentConfig:
    """Apply the documented precedence: flag > environment > config file."""
    if flag_seed is not None:
        return replace(config, seed=int(flag_seed))
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return replace(config, seed=int(env))
        except ValueError as exc:
            raise BadConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return config
