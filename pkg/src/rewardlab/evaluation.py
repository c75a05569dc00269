"""Evaluation: success/failure score separation, planning success rates,
and the ablation grid.

Separation is measured as the probability that a uniformly random success
clip outscores (sigmoid(v . t)) a uniformly random failure clip of the
same task, ties counted half — the area under the ROC curve. Planning is
evaluated by executing each planned sequence in the real simulator and
checking the task predicate.
"""

import math
from dataclasses import replace

import numpy as np

from . import datagen as dg, dynamics as dyn, encoders as enc, planner as pl, simworld as sw
from .config import ExperimentConfig
from .errors import OneClassOnlyError
from .losses import _sigmoid
from .training import ModelParams, train

_STREAM_EVAL_DATA = 7
_STREAM_PLAN = 8


def auc_from_scores(success_scores, failure_scores) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    success_scores = np.asarray(success_scores, dtype=np.float64)
    failure_scores = np.asarray(failure_scores, dtype=np.float64)
    n_s, n_f = success_scores.size, failure_scores.size
    if n_s == 0 or n_f == 0:
        raise OneClassOnlyError("need both success and failure scores")
    pooled = np.concatenate([success_scores, failure_scores])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty_like(pooled)
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = float(np.sum(ranks[:n_s])) - n_s * (n_s + 1) / 2.0
    return u / (n_s * n_f)


def score_clips(params: ModelParams, clips) -> np.ndarray:
    """sigmoid(v . t) for each labeled clip."""
    frames = np.stack([c.frames for c in clips])
    videos = enc.encode_clips(frames, params.video)
    texts = np.stack([params.table.text_embed(c.task_id) for c in clips])
    return _sigmoid(np.sum(videos * texts, axis=1))


def evaluate_separation(params: ModelParams, eval_dataset  : dg.Dataset, tasks):
    """Per-task AUC plus normalized score distributions for export."""
    report = {}
    for task in tasks:
        clips = eval_dataset.subset("robot", task_id=task)
        successes = [c for c in clips if c.success == 1]
        failures = [c for c in clips if c.success == 0]
        if not successes or not failures:
            raise OneClassOnlyError(f"task {task} evaluation set has one class only")
        s_scores = score_clips(params, successes)
        f_scores = score_clips(params, failures)
        pooled = np.concatenate([s_scores, f_scores])
        lo, hi = float(pooled.min()), float(pooled.max())
        span = (hi - lo) if hi > lo else 1.0
        report[task] = {
            "auc": auc_from_scores(s_scores, f_scores),
            "success_scores": ((s_scores - lo) / span).tolist(),
            "failure_scores": ((f_scores - lo) / span).tolist(),
        }
    return report


def mean_auc(report: dict) -> float:
    return float(np.mean([entry["auc"] for entry in report.values()]))


def eval_dataset_for(config: ExperimentConfig, tasks=None) -> dg.Dataset:
    """Held-out robot clips (both outcomes) for every evaluated task."""
    tasks = tuple(tasks) if tasks is not None else config.all_tasks
    dcfg = dg.DataConfig(
        tasks=tasks,
        robot_tasks=tasks,
        human_per_task=0,
        robot_success_per_task=config.eval_success_per_task,
        robot_failure_per_task=config.eval_failure_per_task,
        failure_sources=("random", "near_success"),
        noise=config.noise,
        seed=int(np.random.SeedSequence(
            [config.seed, _STREAM_EVAL_DATA]).generate_state(1, np.uint64)[0] % (2**31)),
    )
    return dg.gen_dataset(dcfg)


def train_dataset_for(config: ExperimentConfig) -> dg.Dataset:
    dcfg = dg.DataConfig(
        tasks=config.all_tasks,
        robot_tasks=config.train_tasks,
        human_per_task=config.human_per_task,
        robot_success_per_task=config.robot_success_per_task,
        robot_failure_per_task=config.robot_failure_per_task,
        failure_sources=config.failure_sources,
        noise=config.noise,
        seed=config.seed,
    )
    return dg.gen_dataset(dcfg)


def _plan_seed(config: ExperimentConfig, arm: int, seed_idx: int, task: int, trial: int) -> int:
    return int(np.random.SeedSequence(
        [config.seed, _STREAM_PLAN, arm, seed_idx, task, trial]
    ).generate_state(1, np.uint64)[0] % (2**31))


def evaluate_planning(
    params: ModelParams | None,
    model: dyn.DynamicsModel,
    config: ExperimentConfig,
    tasks=None,
    reward_kind: str = "learned",
    trials: int | None = None,
    refine: bool = False,
):
    """Planning success rates per task and seed; executes plans in the sim.

    reward_kind: "learned" (sigmoid(v.t)), "oracle" (ground-truth
    predicate on predicted states), or "random" (execute a random
    sequence without planning).
    """
    tasks = tuple(tasks) if tasks is not None else tuple(config.heldout_tasks)
    trials = trials if trials is not None else config.plan_trials
    rows = []
    for task in tasks:
        for seed_idx in range(config.plan_seeds):
            wins = 0
            refined_wins = 0
            for trial in range(trials):
                init_seed = _plan_seed(config, 0, seed_idx, task, trial)
                rng = np.random.default_rng(init_seed)
                s0 = sw.initial_state_array(task, rng)
                if reward_kind == "random":
                    actions = sw.random_action_array(rng, config.plan_horizon)
                else:
                    reward = (
                        pl.OracleReward(task) if reward_kind == "oracle"
                        else pl.LearnedReward(
                            params.video, params.table, task, variant=config.env_variant,
                            clip_frames=config.clip_frames,
                        )
                    )
                    plan_cfg = pl.PlanConfig(
                        n_candidates=config.plan_candidates,
                        horizon=config.plan_horizon,
                        seed=_plan_seed(config, 1, seed_idx, task, trial),
                    )
                    result = pl.vmpc_plan(reward, model, s0, plan_cfg)
                    actions = result.actions
                    if refine:
                        scorer = pl.make_sequence_scorer(reward, model, s0)
                        refined = pl.cem_refine(
                            result.actions, scorer, plan_cfg.cem,
                            seed=_plan_seed(config, 2, seed_idx, task, trial),
                        )
                        assert refined.score >= result.score - 1e-12
                        ref_states = sw.rollout_states(s0, refined.actions)
                        refined_wins += int(sw.success_states(task, ref_states))
                states = sw.rollout_states(s0, actions)
                wins += int(sw.success_states(task, states))
            row = {
                "task": task,
                "seed": seed_idx,
                "trials": trials,
                "successes": wins,
                "rate": wins / trials if trials else 0.0,
            }
            if refine:
                row["refined_successes"] = refined_wins
                row["refined_rate"] = refined_wins / trials if trials else 0.0
            rows.append(row)
    summary = {}
    for task in tasks:
        rates = [r["rate"] for r in rows if r["task"] == task]
        summary[task] = float(np.mean(rates)) if rates else 0.0
    return {"rows": rows, "mean_rate_per_task": summary}


# --- ablation grid ---

ABLATION_COLUMNS = ("seed", "mode", "k", "source", "auc_train", "auc_heldout", "planner_success")
_SOURCE_AXES = {"random": ("random",), "near_success": ("near_success",), "both": ("random", "near_success")}


def ablation_cells(modes, k_values, sources):
    """mode x K x source with the K axis collapsed for prompt-free modes."""
    cells = []
    for mode in modes:
        ks = list(k_values) if mode == "fvlc" else [None]
        for k in ks:
            for source in sources:
                cells.append((mode, k, source))
    return cells


def run_ablation(
    base_config: ExperimentConfig,
    modes=("no_failure", "bce", "fvlc"),
    k_values=(1, 2, 3, 4, 5),
    sources=("random", "near_success", "both"),
    seeds=(0, 1, 2),
    planning_trials: int = 0,
):
    """One row per (seed, mode, K, source) cell; shared datasets per seed."""
    rows = []
    for seed in seeds:
        eval_ds = eval_dataset_for(replace(base_config, seed=seed))
        datasets = {}
        for mode, k, source in ablation_cells(modes, k_values, sources):
            cfg = replace(
                base_config,
                seed=seed,
                mode=mode,
                k_clusters=k if k is not None else base_config.k_clusters,
                failure_sources=_SOURCE_AXES[source],
            )
            if source not in datasets:
                datasets[source] = train_dataset_for(cfg)
            result = train(cfg, datasets[source])
            sep_train = evaluate_separation(result.params, eval_ds, cfg.train_tasks)
            sep_held = evaluate_separation(result.params, eval_ds, cfg.heldout_tasks)
            planner_success = ""
            if planning_trials > 0:
                plan = evaluate_planning(
                    result.params, dyn.ground_truth_model(), cfg, trials=planning_trials
                )
                planner_success = float(np.mean(list(plan["mean_rate_per_task"].values())))
            rows.append({
                "seed": seed,
                "mode": mode,
                "k": k if k is not None else "-",
                "source": source,
                "auc_train": mean_auc(sep_train),
                "auc_heldout": mean_auc(sep_held),
                "planner_success": planner_success,
            })
    rows.sort(key=lambda r: (r["seed"], r["mode"], str(r["k"]), r["source"]))
    return rows


def ablation_csv(rows) -> str:
    lines = [",".join(ABLATION_COLUMNS)]
    for row in rows:
        fields = []
        for col in ABLATION_COLUMNS:
            val = row[col]
            fields.append(repr(val) if isinstance(val, float) else str(val))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
