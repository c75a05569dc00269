"""Synthetic clip datasets: human/robot domains with controlled shift and
three scripted failure archetypes.

Robot clips come straight from the simulator's feature renderer. Human
clips are the same kind of task motion rendered through the fixed affine
domain transform with a per-clip random viewpoint offset and Gaussian
feature noise, so the embodiment gap is a measurable, tunable shift.

Failure archetypes:
  wander     - random motion that never touches the task object
  revert     - achieves the predicate mid-episode, then undoes it
  incomplete - makes contact but the predicate never holds

Scripted policies add uniform action noise in [-noise, +noise]; if the
draw violates the requested label the generator retries, halving the noise
every few attempts, and the zero-noise script is correct by construction.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import render, simworld as sw
from .errors import ArchetypeUnsupportedError, BadConfigError
from .render import DomainShift

ARCHETYPES = ("wander", "revert", "incomplete")
FAILURE_SOURCES = ("random", "near_success")
ACTION_NOISE = 0.03
_CLIP_STREAMS = {"human": 11, "robot_success": 12, "robot_failure": 13}

# archetypes that cannot exist for a task: the faucet's displacement only
# accumulates (nothing to revert), and any first touch of the cup already
# satisfies the poke predicate (nothing can be incomplete)
UNSUPPORTED = {
    (sw.TASK_FAUCET, "revert"),
    (sw.TASK_POKE_CUP, "incomplete"),
}


@dataclass(frozen=True)
class LabeledClip:
    frames: np.ndarray            # (L, F)
    domain: str                   # "human" | "robot"
    task_id: int
    success: int                  # r in {0, 1}
    failure_archetype: str | None  # present iff success == 0
    seed: int

    def __post_init__(self):
        if (self.failure_archetype is None) != (self.success == 1):
            raise BadConfigError("archetype must be present exactly when r = 0")


@dataclass
class Dataset:
    clips: list

    def __len__(self):
        return len(self.clips)

    def subset(self, domain=None, task_id=None, success=None):
        out = self.clips
        if domain is not None:
            out = [c for c in out if c.domain == domain]
        if task_id is not None:
            out = [c for c in out if c.task_id == task_id]
        if success is not None:
            out = [c for c in out if c.success == success]
        return out

    def frames_array(self, clips=None) -> np.ndarray:
        clips = self.clips if clips is None else clips
        return np.stack([c.frames for c in clips])


@dataclass(frozen=True)
class DataConfig:
    tasks: tuple = sw.ALL_TASKS
    robot_tasks: tuple | None = None      # None: robot data for every task
    human_per_task: int = 60
    robot_success_per_task: int = 20
    robot_failure_per_task: int = 20
    failure_sources: tuple = FAILURE_SOURCES
    noise: float = 0.05                   # human feature-noise sigma
    action_noise: float = ACTION_NOISE
    shift: DomainShift = field(default_factory=DomainShift)
    clip_frames: int = 4
    seed: int = 0

    def effective_robot_tasks(self):
        return self.tasks if self.robot_tasks is None else self.robot_tasks


def _clip_seed(master: int, stream: int, task_id: int, index: int) -> int:
    return int(np.random.SeedSequence([master, stream, task_id, index]).generate_state(1, np.uint64)[0])


# --- scripted controllers ---

def _approach(state, target):
    return (
        float(np.clip(target[0] - state[sw.GX], -sw.VEL_LIMIT, sw.VEL_LIMIT)),
        float(np.clip(target[1] - state[sw.GY], -sw.VEL_LIMIT, sw.VEL_LIMIT)),
    )


def _near(state, target, slack=0.035):
    return (state[sw.GX] - target[0]) ** 2 + (state[sw.GY] - target[1]) ** 2 <= slack**2


def _drawer_handle(state):
    return (sw.DRAWER_BASE[0], sw.DRAWER_BASE[1] + state[sw.EXT])


def _cup(state):
    return (state[sw.CUPX], state[sw.CUPY])


def make_policy(task_id: int, style: str):
    """Closed-loop controller returning (vx, vy, grip) per step.

    style is "success" or a failure archetype other than "wander".
    """
    phase = {"n": 0, "mark": 0}

    def drawer(state, t, closing):
        ext = state[sw.EXT]
        handle = _drawer_handle(state)
        do_sign = -1.0 if closing else 1.0
        if style == "success":
            if (ext <= 0.02) if closing else (ext >= 0.045):
                phase["mark"] = 1
            sign = do_sign
        elif style == "revert":
            if phase["n"] == 0 and ((ext <= 0.015) if closing else (ext >= 0.045)):
                phase["n"] = 1
            if phase["n"] == 1 and ((ext >= 0.06) if closing else (ext <= 0.005)):
                phase["mark"] = 1
            sign = do_sign if phase["n"] == 0 else -do_sign
        else:  # incomplete: barely disturb the extension
            if (ext <= 0.058) if closing else (ext >= 0.012):
                phase["mark"] = 1
            sign = do_sign
        if phase["mark"]:
            # retreat off the handle, then idle
            if _near(state, handle, 0.09):
                return (0.05, 0.0, 0.0)
            return (0.0, 0.0, 0.0)
        if not _near(state, handle):
            vx, vy = _approach(state, handle)
            return (vx, vy, 0.0)
        if style == "incomplete":
            # fractional nudge so a single step cannot cross the threshold
            target = 0.056 if closing else 0.014
            return (0.0, float(np.clip(target - ext, -sw.VEL_LIMIT, sw.VEL_LIMIT)), 0.0)
        return (0.0, sign * 0.05, 0.0)

    def faucet(state, t):
        handle = sw.FAUCET_HANDLE
        if style == "success":
            if state[sw.ANGLE] >= 0.08:
                phase["mark"] = 1
            if phase["mark"]:
                if _near(state, handle, 0.09):
                    return (0.0, -0.05, 0.0)
                return (0.0, 0.0, 0.0)
            if not _near(state, handle):
                vx, vy = _approach(state, handle)
                return (vx, vy, 0.0)
            return (0.05 if phase["n"] % 2 == 0 else -0.05, 0.0, 0.0)
        # incomplete: touch, then back straight off without tangential motion
        if _near(state, handle):
            phase["mark"] = 1
        if phase["mark"]:
            if _near(state, handle, 0.09):
                return (0.0, -0.05, 0.0)
            return (0.0, 0.0, 0.0)
        vx, vy = _approach(state, handle)
        return (vx, vy, 0.0)

    def cup_carry(state, t, axis, direction, goal, revert_goal=None, grab=True):
        """Generic carry/push along one axis by a target displacement."""
        cup = _cup(state)
        delta = (cup[axis] - phase.setdefault("cup0", cup[axis])) * direction
        touching = _near(state, cup, sw.CONTACT_RADIUS - 0.005)
        # pushing needs the gripper on the trailing side of the cup
        stand = list(cup)
        if not grab:
            stand[axis] -= direction * 0.03
        if phase["n"] == 0:
            if delta >= goal:
                phase["n"] = 1 if revert_goal is not None else 2
            elif not touching:
                vx, vy = _approach(state, stand)
                return (vx, vy, 1.0 if grab else 0.0)
            else:
                move = [0.0, 0.0]
                move[axis] = direction * 0.05
                return (move[0], move[1], 1.0 if grab else 0.0)
        if phase["n"] == 1:
            if delta <= revert_goal:
                phase["n"] = 2
            else:
                move = [0.0, 0.0]
                move[axis] = -direction * 0.05
                return (move[0], move[1], 1.0)
        # release and retreat away from the cup
        if _near(state, cup, 0.09):
            away_x = -1.0 if cup[0] >= state[sw.GX] else 1.0
            return (away_x * 0.05, 0.0, -1.0)
        return (0.0, 0.0, 0.0)

    def cup_push_tiny(state, t, axis, direction):
        """Incomplete push: one gentle nudge well under the threshold."""
        cup = _cup(state)
        delta = (cup[axis] - phase.setdefault("cup0", cup[axis])) * direction
        touching = _near(state, cup, sw.CONTACT_RADIUS - 0.005)
        stand = list(cup)
        stand[axis] -= direction * 0.03
        if phase["n"] == 0:
            if delta >= 0.015:
                phase["n"] = 1
            elif not touching:
                vx, vy = _approach(state, stand)
                return (vx, vy, 0.0)
            else:
                move = [0.0, 0.0]
                move[axis] = direction * 0.02
                return (move[0], move[1], 0.0)
        if _near(state, cup, 0.09):
            away_x = -1.0 if cup[0] >= state[sw.GX] else 1.0
            return (away_x * 0.05, 0.0, 0.0)
        return (0.0, 0.0, 0.0)

    def poke(state, t):
        cup = _cup(state)
        if style == "success":
            if _near(state, cup, sw.CONTACT_RADIUS - 0.0005):
                phase["mark"] = 1
            if phase["mark"]:
                if _near(state, cup, 0.09):
                    away_x = -1.0 if cup[0] >= state[sw.GX] else 1.0
                    return (away_x * 0.05, 0.0, 0.0)
                return (0.0, 0.0, 0.0)
            vx, vy = _approach(state, cup)
            return (vx, vy, 0.0)
        # revert: gentle touch first, then shove the cup hard
        if _near(state, cup, sw.CONTACT_RADIUS - 0.008):
            phase["mark"] = 1
        if phase["mark"]:
            if phase["n"] < 3:
                phase["n"] += 1
                vx, vy = _approach(state, cup)
                return (0.05 if vx >= 0 else -0.05, vy, 0.0)
            if _near(state, cup, 0.09):
                away_x = -1.0 if cup[0] >= state[sw.GX] else 1.0
                return (away_x * 0.05, 0.0, 0.0)
            return (0.0, 0.0, 0.0)
        vx, vy = _approach(state, cup)
        return (vx, vy, 0.0)

    table = {
        sw.TASK_CLOSE_DRAWER: lambda s, t: drawer(s, t, closing=True),
        sw.TASK_OPEN_DRAWER: lambda s, t: drawer(s, t, closing=False),
        sw.TASK_FAUCET: faucet,
        sw.TASK_POKE_CUP: poke,
        sw.TASK_CUP_AWAY: lambda s, t: cup_carry(
            s, t, axis=1, direction=1.0,
            goal={"success": 0.18, "revert": 0.14, "incomplete": 0.03}[style],
            revert_goal=0.01 if style == "revert" else None,
        ),
        sw.TASK_CUP_LEFT_TO_RIGHT: lambda s, t: (
            cup_push_tiny(s, t, 0, 1.0) if style == "incomplete" else cup_carry(
                s, t, axis=0, direction=1.0,
                goal={"success": 0.08, "revert": 0.07}[style],
                revert_goal=0.0 if style == "revert" else None,
                grab=style == "revert",
            )
        ),
        sw.TASK_CUP_RIGHT_TO_LEFT: lambda s, t: (
            cup_push_tiny(s, t, 0, -1.0) if style == "incomplete" else cup_carry(
                s, t, axis=0, direction=-1.0,
                goal={"success": 0.08, "revert": 0.07}[style],
                revert_goal=0.0 if style == "revert" else None,
                grab=style == "revert",
            )
        ),
    }
    return table[task_id]


def run_policy(s0_arr, policy, rng, noise, horizon=sw.HORIZON):
    """Roll out a controller with uniform action noise; returns (actions, states)."""
    actions = np.empty((horizon, sw.ACTION_DIM))
    states = np.empty((horizon + 1, sw.STATE_DIM))
    states[0] = s0_arr
    cur = np.asarray(s0_arr, dtype=np.float64)[None, :]
    for t in range(horizon):
        vx, vy, grip = policy(cur[0], t)
        if noise > 0:
            vx += rng.uniform(-noise, noise)
            vy += rng.uniform(-noise, noise)
        actions[t] = (
            np.clip(vx, -sw.VEL_LIMIT, sw.VEL_LIMIT),
            np.clip(vy, -sw.VEL_LIMIT, sw.VEL_LIMIT),
            grip,
        )
        cur = sw.step_batch(cur, actions[t][None, :])
        states[t + 1] = cur[0]
    return actions, states


def _wander_actions(task_id, s0_arr, rng, horizon=sw.HORIZON):
    """Random motion biased away from the object for the first few steps."""
    actions = sw.random_action_array(rng, horizon)
    target = {
        sw.TASK_CLOSE_DRAWER: (sw.DRAWER_BASE[0], sw.DRAWER_BASE[1] + s0_arr[sw.EXT]),
        sw.TASK_OPEN_DRAWER: (sw.DRAWER_BASE[0], sw.DRAWER_BASE[1] + s0_arr[sw.EXT]),
        sw.TASK_FAUCET: sw.FAUCET_HANDLE,
    }.get(task_id, (s0_arr[sw.CUPX], s0_arr[sw.CUPY]))
    away = np.array([s0_arr[sw.GX] - target[0], s0_arr[sw.GY] - target[1]])
    norm = np.linalg.norm(away)
    if norm > 1e-9:
        away = away / norm * sw.VEL_LIMIT
        actions[:8, 0] = np.clip(away[0] + actions[:8, 0] * 0.3, -sw.VEL_LIMIT, sw.VEL_LIMIT)
        actions[:8, 1] = np.clip(away[1] + actions[:8, 1] * 0.3, -sw.VEL_LIMIT, sw.VEL_LIMIT)
    return actions


class _GenerationFailed(Exception):
    pass


def _archetype_ok(task_id, archetype, states) -> bool:
    flags = sw.prefix_success_flags(task_id, states)
    contact = bool(np.any(sw.target_contact_mask(task_id, states)))
    if flags[-1]:
        return False
    if archetype == "wander":
        return not contact
    if archetype == "revert":
        return bool(np.any(flags[:-1]))
    return contact and not bool(np.any(flags))


def gen_failure_trajectory(task_id: int, archetype: str, seed, noise: float = ACTION_NOISE):
    """Robot failure rollout realizing one archetype; label checked, seeded."""
    if archetype not in ARCHETYPES:
        raise ArchetypeUnsupportedError(f"unknown archetype {archetype!r}")
    if (task_id, archetype) in UNSUPPORTED:
        raise ArchetypeUnsupportedError(f"{archetype} cannot occur for task {task_id}")
    rng = np.random.default_rng(seed)
    for attempt in range(32):
        level = 0.0 if attempt >= 24 else noise * 0.5 ** (attempt // 8)
        s0 = sw.initial_state_array(task_id, rng)
        if archetype == "wander":
            actions = _wander_actions(task_id, s0, rng)
            states = sw.rollout_states(s0, actions)
        else:
            actions, states = run_policy(s0, make_policy(task_id, archetype), rng, level)
        if _archetype_ok(task_id, archetype, states):
            return actions, states
    raise _GenerationFailed(f"could not realize {archetype} for task {task_id}")


def gen_success_trajectory(task_id: int, seed, noise: float = ACTION_NOISE):
    """Scripted success rollout with uniform action noise; label checked."""
    rng = np.random.default_rng(seed)
    for attempt in range(32):
        level = 0.0 if attempt >= 24 else noise * 0.5 ** (attempt // 8)
        s0 = sw.initial_state_array(task_id, rng)
        actions, states = run_policy(s0, make_policy(task_id, "success"), rng, level)
        if sw.success_states(task_id, states):
            return actions, states
    raise _GenerationFailed(f"could not realize success for task {task_id}")


def render_clip(
    states: np.ndarray,
    domain: str,
    config: DataConfig,
    rng: np.random.Generator | None = None,
    variant: str = "train",
) -> np.ndarray:
    """Subsample a trajectory to clip frames and render it in one domain."""
    idx = render.clip_frame_indices(states.shape[0], config.clip_frames)
    camera = np.zeros(2)
    if domain == "human" and rng is not None and config.shift.viewpoint_sigma > 0:
        camera = rng.uniform(-config.shift.viewpoint_sigma, config.shift.viewpoint_sigma, 2)
    frames = render.render_frames(
        states[idx], camera=camera, domain=domain, shift=config.shift, variant=variant
    )
    if domain == "human" and rng is not None and config.noise > 0:
        frames = frames + rng.normal(0.0, config.noise, frames.shape)
    return frames


def _failure_archetype_plan(task_id: int, count: int, sources) -> list:
    """Deterministic per-index archetype assignment honoring the sources."""
    near = [a for a in ("revert", "incomplete") if (task_id, a) not in UNSUPPORTED]
    plan = []
    for i in range(count):
        if sources == ("random",):
            plan.append("wander")
        elif sources == ("near_success",):
            plan.append(near[i % len(near)])
        else:
            plan.append("wander" if i % 2 == 0 else near[(i // 2) % len(near)])
    return plan


def gen_dataset(config: DataConfig) -> Dataset:
    """Deterministic synthetic dataset per the configured counts."""
    sources = tuple(config.failure_sources)
    if not sources or any(s not in FAILURE_SOURCES for s in sources):
        raise BadConfigError(f"failure_sources must be drawn from {FAILURE_SOURCES}")
    if config.human_per_task < 0 or config.robot_success_per_task < 0 or config.robot_failure_per_task < 0:
        raise BadConfigError("counts must be >= 0")
    unknown = [t for t in config.tasks if t not in sw.TASK_NAMES]
    if unknown:
        raise BadConfigError(f"unknown tasks {unknown}")

    clips = []
    for task_id in config.tasks:
        for i in range(config.human_per_task):
            seed = _clip_seed(config.seed, _CLIP_STREAMS["human"], task_id, i)
            rng = np.random.default_rng(seed)
            _, states = gen_success_trajectory(task_id, rng, noise=config.action_noise)
            frames = render_clip(states, "human", config, rng)
            clips.append(LabeledClip(frames, "human", task_id, 1, None, seed))

    for task_id in config.effective_robot_tasks():
        for i in range(config.robot_success_per_task):
            seed = _clip_seed(config.seed, _CLIP_STREAMS["robot_success"], task_id, i)
            rng = np.random.default_rng(seed)
            _, states = gen_success_trajectory(task_id, rng, noise=config.action_noise)
            frames = render_clip(states, "robot", config)
            clips.append(LabeledClip(frames, "robot", task_id, 1, None, seed))
        plan = _failure_archetype_plan(task_id, config.robot_failure_per_task, sources)
        for i, archetype in enumerate(plan):
            seed = _clip_seed(config.seed, _CLIP_STREAMS["robot_failure"], task_id, i)
            rng = np.random.default_rng(seed)
            _, states = gen_failure_trajectory(task_id, archetype, rng, noise=config.action_noise)
            frames = render_clip(states, "robot", config)
            clips.append(LabeledClip(frames, "robot", task_id, 0, archetype, seed))
    return Dataset(clips)


def domain_pair(task_id: int, seed: int, config: DataConfig):
    """One motion rendered in both domains (for shift diagnostics)."""
    rng = np.random.default_rng([config.seed, 99, task_id, seed])
    _, states = gen_success_trajectory(task_id, rng, noise=config.action_noise)
    robot = render_clip(states, "robot", config)
    human = render_clip(states, "human", config, rng)
    return robot, human


def domain_shift_cosine(config: DataConfig, n_pairs: int = 100) -> float:
    """Mean frame cosine between robot clips and their human counterparts."""
    per_task = [t for t in config.tasks for _ in range((n_pairs // len(config.tasks)) + 1)]
    sims = []
    for i, task_id in enumerate(per_task[:n_pairs]):
        robot, human = domain_pair(task_id, i, config)
        num = np.sum(robot * human, axis=1)
        den = np.linalg.norm(robot, axis=1) * np.linalg.norm(human, axis=1)
        sims.extend((num / den).tolist())
    return float(np.mean(sims))
