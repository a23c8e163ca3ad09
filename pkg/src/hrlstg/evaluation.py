"""Success rates across environment variants, plan tracing and run comparison."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .env import EnvConfig, reset
from .policy import PolicyStack
from .rollout import PENALTY, PlanTrace, run_policy_episode
from .tasks import Task
from .trainer import StageTrainer, TrainConfig, stream

VARIANTS = ("small_room", "big_room", "distractors", "single_item")


def variant_config(base: EnvConfig, variant: str) -> EnvConfig:
    """Environment for an evaluation protocol, derived from the training environment."""
    if variant == "small_room":
        return replace(base, layout="single_room")
    if variant == "big_room":
        return replace(base, layout="big_room")
    if variant == "distractors":
        return replace(base, blocks_per_episode=4, distractors=True)
    if variant == "single_item":
        return replace(base, blocks_per_episode=1, distractors=False)
    raise ValueError(f"unknown variant {variant!r}; valid variants: {', '.join(VARIANTS)}")


@dataclass
class TaskResult:
    task: Task
    n: int
    successes: int
    penalties: int
    total_len: int

    @property
    def success(self) -> float:
        return self.successes / self.n

    @property
    def penalty_rate(self) -> float:
        return self.penalties / self.n

    @property
    def failure(self) -> float:
        return (self.n - self.successes - self.penalties) / self.n

    @property
    def mean_len(self) -> float:
        return self.total_len / self.n


@dataclass
class EvalReport:
    variant: str
    seeds: tuple[int, ...]
    results: list[TaskResult] = field(default_factory=list)
    log: list[tuple[str, int, float, int]] = field(default_factory=list)

    @property
    def success(self) -> float:
        n = sum(r.n for r in self.results)
        return sum(r.successes for r in self.results) / n if n else 0.0

    def result(self, task: Task) -> TaskResult:
        return next(r for r in self.results if r.task == task)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "variant", "n", "success", "mean_len", "penalty_rate"])
        for r in self.results:
            w.writerow([str(r.task), self.variant, r.n, f"{r.success:.4f}", f"{r.mean_len:.2f}",
                        f"{r.penalty_rate:.4f}"])
        return buf.getvalue()

    def table(self) -> str:
        width = max([len(str(r.task)) for r in self.results] + [4])
        lines = [f"variant: {self.variant}   seeds: {', '.join(map(str, self.seeds))}",
                 f"{'task':<{width}}  {'n':>5}  {'success':>7}  {'len':>6}  {'penalty':>7}"]
        for r in self.results:
            lines.append(f"{str(r.task):<{width}}  {r.n:>5}  {r.success:>7.3f}  {r.mean_len:>6.1f}  "
                         f"{r.penalty_rate:>7.3f}")
        lines.append(f"{'all':<{width}}  {sum(r.n for r in self.results):>5}  {self.success:>7.3f}")
        return "\n".join(lines) + "\n"


def success_rate(stack: PolicyStack, tasks: Sequence[Task], env: EnvConfig, n: int = 200,
                 seeds: Sequence[int] = (0,), variant: str = "custom", greedy: bool = True,
                 use_stg: bool = True) -> EvalReport:
    """``n`` episodes per task and seed; greedy decisions with STG reshaping by default."""
    if n < 1:
        raise ValueError("n must be >= 1")
    report = EvalReport(variant, tuple(seeds))
    for task in tasks:
        res = TaskResult(task, 0, 0, 0, 0)
        for seed in seeds:
            # one stream per (seed, task) so adding a task never shifts another task's episodes
            rng_env = stream(seed, f"eval-env/{task}")
            rng_act = None if greedy else stream(seed, f"eval-sampling/{task}")
            for _ in range(n):
                state = reset(env, task, int(rng_env.integers(2 ** 31)))
                kw = {"greedy": greedy, "max_primitive_steps": env.max_primitive_steps}
                if stack.top > 0:
                    kw.update(use_stg=use_stg, base_T=env.base_max_steps)
                traj = run_policy_episode(stack, task, state, rng_act, env.max_steps, **kw)
                res.n += 1
                res.successes += traj.final_reward == 1.0
                res.penalties += traj.final_reward == PENALTY
                res.total_len += len(traj)
                report.log.append((str(task), seed, traj.final_reward, len(traj)))
        report.results.append(res)
    return report


def trace_plan(stack: PolicyStack, task: Task, env: EnvConfig, seed: int, maps: bool = False) -> PlanTrace:
    """One greedy episode with its full decision tree."""
    state = reset(env, task, int(stream(seed, "trace").integers(2 ** 31)))
    kw = env.budgets if stack.top > 0 else {"max_primitive_steps": env.max_primitive_steps}
    traj = run_policy_episode(stack, task, state, None, env.max_steps, greedy=True, trace=True, maps=maps, **kw)
    return traj.plan


def episodes_to_threshold(trainer: StageTrainer) -> Optional[int]:
    """First episode id after which every pool task's full window mean exceeds ``r_min``."""
    return trainer.threshold_episode


@dataclass
class RunSummary:
    name: str
    seed: int
    episodes_to_threshold: Optional[int]
    episodes: int
    curve: np.ndarray


def compare_runs(configs: dict[str, TrainConfig], seeds: Sequence[int],
                 make_trainer: Callable[[str, TrainConfig, int], StageTrainer],
                 until: Optional[Callable[[StageTrainer], bool]] = None,
                 curve_every: int = 100) -> list[RunSummary]:
    """Train every config on every seed; one summary row per (config, seed)."""
    if len(configs) < 2:
        raise ValueError("compare_runs needs at least two configs")
    rows = []
    for name, config in configs.items():
        for seed in seeds:
            trainer = make_trainer(name, config, seed).train(until)
            rewards = np.array([max(m.final_reward, 0.0) for m in trainer.history])
            curve = rolling_mean(rewards, 200)[::curve_every]
            rows.append(RunSummary(name, seed, episodes_to_threshold(trainer), trainer.episode, curve))
    return rows


def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    if len(values) == 0:
        return np.zeros(0)
    c = np.cumsum(np.insert(np.asarray(values, dtype=np.float64), 0, 0.0))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def comparison_csv(rows: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "seed", "episodes_to_threshold", "episodes", "curve"])
    for r in rows:
        w.writerow([r.name, r.seed, "" if r.episodes_to_threshold is None else r.episodes_to_threshold,
                    r.episodes, " ".join(f"{v:.3f}" for v in r.curve)])
    return buf.getvalue()
