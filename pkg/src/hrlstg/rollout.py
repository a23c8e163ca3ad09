"""Episode execution for flat and hierarchical policies.

At a hierarchical level each decision samples a switch ``e``, an
instruction ``g'`` and an augmented action ``a``. With ``e = 0`` the base
policy is run on ``g'`` until its own episode ends; with ``e = 1`` the
action is executed directly. Only the top level explores (epsilon mixing)
and only the top level's decisions are recorded for learning.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .autodiff import sample_categorical
from .env import Action, N_ACTIONS, WorldState, instruction_executable, observe, render, reward, step
from .policy import PolicyNet, PolicyStack, instruction_dist, net_input
from .stg import StgTable, reshaped_instruction_dist, reshaped_switch_dist
from .tasks import Task, encode_task, parse_task, task_set

PENALTY = -0.5
EXPLORE_HEADS = ("switch", "instruction")


@dataclass
class StepRecord:
    obs: np.ndarray
    e: int
    g_prime: int
    a: int
    r: float
    mu_sw: Optional[np.ndarray]
    mu_inst: Optional[np.ndarray]
    mu_aug: np.ndarray
    task: Task
    executable: Optional[bool] = None


@dataclass
class PlanNode:
    level: int
    t: int
    kind: str  # "instr" | "act"
    label: str
    reward: float = 0.0
    children: list["PlanNode"] = field(default_factory=list)
    snapshot: Optional[str] = None
    executable: Optional[bool] = None


@dataclass
class PlanTrace:
    task: Task
    level: int
    final_reward: float
    children: list[PlanNode]
    initial_state: Optional[WorldState] = None

    def primitive_actions(self) -> list[int]:
        out: list[int] = []

        def walk(nodes):
            for node in nodes:
                if node.kind == "act":
                    out.append(int(Action[node.label.upper().replace(" ", "_")]))
                walk(node.children)

        walk(self.children)
        return out

    def top_instructions(self) -> list[str]:
        return [n.label for n in self.children if n.kind == "instr"]

    def depth(self) -> int:
        def d(nodes):
            return 0 if not nodes else 1 + max(d(n.children) for n in nodes)
        return d(self.children)

    def render(self, maps: bool = False) -> str:
        lines = [f'PLAN "{self.task}" level={self.level} reward={_fmt_r(self.final_reward)}']
        if maps and self.initial_state is not None:
            lines += ["  " + row for row in render(self.initial_state, show_held=True).splitlines()]

        def walk(nodes, depth):
            pad = "  " * depth
            for n in nodes:
                what = f'INSTR "{n.label}"' if n.kind == "instr" else f"ACT {n.label}"
                extra = "" if n.executable is not False else " (not executable)"
                lines.append(f"{pad}[k{n.level} t{n.t}] {what} r={_fmt_r(n.reward)}{extra}")
                if maps and n.snapshot is not None:
                    lines.extend(f"{pad}    {row}" for row in n.snapshot.splitlines())
                walk(n.children, depth + 1)

        walk(self.children, 0)
        return "\n".join(lines) + "\n"


def _fmt_r(r: float) -> str:
    return "0" if r == 0 else f"{r:+g}"


@dataclass
class Trajectory:
    stage: int
    task: Task
    steps: list[StepRecord]
    terminal: bool
    final_reward: float
    flat: bool = False
    final_state: Optional[WorldState] = None
    plan: Optional[PlanTrace] = None
    primitive_steps: int = 0

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def switches(self) -> list[int]:
        return [s.e for s in self.steps]

    @property
    def instructions(self) -> list[int]:
        return [s.g_prime for s in self.steps]

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.r for s in self.steps])

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Column view of the steps used by the replay sampler."""
        enc = encode_task(self.task)
        arr = {
            "x": np.array([net_input(s.obs, enc) for s in self.steps]),
            "e": np.array([s.e for s in self.steps], dtype=np.int64),
            "g": np.array([s.g_prime for s in self.steps], dtype=np.int64),
            "a": np.array([s.a for s in self.steps], dtype=np.int64),
            "r": self.rewards,
            "mu_aug": np.array([s.mu_aug[s.a] for s in self.steps]),
        }
        if not self.flat:
            arr["mu_sw"] = np.array([s.mu_sw[s.e] for s in self.steps])
            arr["mu_inst"] = np.array([s.mu_inst[s.g_prime] for s in self.steps])
        return arr


def discounted_returns(traj, gamma: float) -> np.ndarray:
    """``G_t = r_t + gamma * G_{t+1}`` with ``G_len = 0``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    rewards = traj.rewards if hasattr(traj, "rewards") else np.asarray(traj, dtype=np.float64)
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def mix_uniform(dist: np.ndarray, eps: float) -> np.ndarray:
    """Epsilon-greedy as a distribution: ``(1 - eps) * dist + eps * uniform``."""
    if eps <= 0:
        return dist
    return (1.0 - eps) * dist + eps / dist.size


@dataclass
class _Ctx:
    rng: Optional[np.random.Generator]
    T: int
    eps: float
    greedy: bool
    use_stg: bool
    explore_heads: Sequence[str]
    trace: bool
    maps: bool
    base_level: int
    base_greedy: bool
    base_T: Optional[int] = None
    max_primitive_steps: Optional[int] = None
    primitive_steps: int = 0

    def horizon(self, top: bool) -> int:
        return self.T if top or self.base_T is None else self.base_T

    @property
    def exhausted(self) -> bool:
        return self.max_primitive_steps is not None and self.primitive_steps >= self.max_primitive_steps


def _choose(dist: np.ndarray, ctx: _Ctx, greedy: bool) -> int:
    if greedy:
        return int(np.argmax(dist))
    return sample_categorical(dist, ctx.rng)


def _run_flat(net: PolicyNet, task: Task, state: WorldState, ctx: _Ctx, level: int, top: bool,
              nodes: Optional[list], records: Optional[list]):
    greedy = ctx.greedy or (not top and ctx.base_greedy)
    enc = encode_task(task)
    for t in range(ctx.horizon(top)):
        if ctx.exhausted:
            break
        obs = observe(state)
        out = net.forward(obs, enc)
        mu = mix_uniform(out.action_dist, ctx.eps if top else 0.0)
        a = _choose(mu, ctx, greedy)
        state = step(state, a)
        ctx.primitive_steps += 1
        r = reward(state, task)
        if records is not None:
            records.append(StepRecord(obs, 1, -1, a, r, None, None, mu, task))
        if nodes is not None:
            nodes.append(PlanNode(level, t, "act", Action(a).label, r,
                                  snapshot=render(state, show_held=True) if ctx.maps else None))
        if r != 0:
            return state, r
    return state, 0.0


def _run_level(stack: PolicyStack, k: int, task: Task, state: WorldState, ctx: _Ctx, top: bool,
               nodes: Optional[list], records: Optional[list], stg: Optional[StgTable] = None):
    if k <= ctx.base_level:
        return _run_flat(stack.net(k), task, state, ctx, k, top, nodes, records)
    net = stack.net(k)
    stg = stg if stg is not None else stack.stg(k)
    base_tasks = task_set(k - 1).tasks
    greedy = ctx.greedy or (not top and ctx.base_greedy)
    eps = ctx.eps if top else 0.0
    enc = encode_task(task)
    history = None
    for t in range(ctx.horizon(top)):
        if ctx.exhausted:
            break
        obs = observe(state)
        out = net.forward(obs, enc)
        sw, inst = out.switch_dist, instruction_dist(out)
        if ctx.use_stg and stg is not None:
            sw = reshaped_switch_dist(sw, stg, task, history)
            inst = reshaped_instruction_dist(inst, stg, task, history)
        mu_sw = mix_uniform(sw, eps if "switch" in ctx.explore_heads else 0.0)
        mu_inst = mix_uniform(inst, eps if "instruction" in ctx.explore_heads else 0.0)
        mu_aug = out.action_dist
        e = _choose(mu_sw, ctx, greedy)
        gp = _choose(mu_inst, ctx, greedy)
        a = _choose(mu_aug, ctx, greedy)
        executable = None
        if e == 0:
            sub_task = base_tasks[gp]
            executable = instruction_executable(state, sub_task)
            node = PlanNode(k, t, "instr", str(sub_task), executable=executable) if nodes is not None else None
            if not executable:
                r = PENALTY
            else:
                state, r_base = _run_level(stack, k - 1, sub_task, state, ctx, False,
                                           node.children if node is not None else None, None)
                r = PENALTY if r_base == PENALTY else reward(state, task)
        else:
            state = step(state, a)
            ctx.primitive_steps += 1
            r = reward(state, task)
            node = (PlanNode(k, t, "act", Action(a).label,
                             snapshot=render(state, show_held=True) if ctx.maps else None)
                    if nodes is not None else None)
        if node is not None:
            node.reward = r
            nodes.append(node)
        if records is not None:
            records.append(StepRecord(obs, e, gp, a, r, mu_sw, mu_inst, mu_aug, task, executable))
        history = (e, gp)
        if r != 0:
            return state, r
    return state, 0.0


def _make_ctx(rng, T, eps, greedy, use_stg=True, explore_heads=EXPLORE_HEADS, trace=False, maps=False,
              base_level=0, base_greedy=False, base_T=None, max_primitive_steps=None) -> _Ctx:
    if not greedy and rng is None:
        raise ValueError("sampling rollouts need an rng")
    return _Ctx(rng, T, eps, greedy, use_stg, tuple(explore_heads), trace, maps, base_level, base_greedy,
                base_T, max_primitive_steps)


def run_flat_episode(net: PolicyNet, task: Task, state: WorldState, rng: Optional[np.random.Generator],
                     T: int, eps: float = 0.0, greedy: bool = False, trace: bool = False,
                     maps: bool = False, max_primitive_steps: Optional[int] = None) -> Trajectory:
    """Sample-step-reward loop until a nonzero reward or ``T`` steps."""
    if not net.flat:
        raise ValueError("run_flat_episode needs a flat net")
    if task not in task_set(net.stage):
        raise ValueError(f"{task} is outside the task set of this stage-{net.stage} flat policy")
    ctx = _make_ctx(rng, T, eps, greedy, trace=trace, maps=maps, max_primitive_steps=max_primitive_steps)
    records: list[StepRecord] = []
    nodes = [] if trace else None
    initial = state
    state, r = _run_flat(net, task, state, ctx, 0, True, nodes, records)
    plan = PlanTrace(task, 0, r, nodes, initial) if trace else None
    return Trajectory(net.stage, task, records, True, r, flat=True, final_state=state, plan=plan,
                      primitive_steps=ctx.primitive_steps)


def run_hier_episode(stack: PolicyStack, k: int, task: Task, state: WorldState,
                     rng: Optional[np.random.Generator], T: int, eps: float = 0.0,
                     stg: Optional[StgTable] = None, greedy: bool = False, use_stg: bool = True,
                     explore_heads: Sequence[str] = EXPLORE_HEADS, trace: bool = False, maps: bool = False,
                     base_level: int = 0, base_greedy: bool = False, base_T: Optional[int] = None,
                     max_primitive_steps: Optional[int] = None) -> Trajectory:
    """One top-level episode of the stage-``k`` policy on ``task``.

    Delegated base episodes run for at most ``base_T`` steps (default ``T``);
    ``max_primitive_steps`` caps primitive actions over the whole episode.
    """
    if k < 1:
        raise ValueError("hierarchical episodes need k >= 1")
    if task not in task_set(k):
        raise ValueError(f"{task} is not in G_{k}")
    ctx = _make_ctx(rng, T, eps, greedy, use_stg, explore_heads, trace, maps, base_level, base_greedy,
                    base_T, max_primitive_steps)
    records: list[StepRecord] = []
    nodes = [] if trace else None
    initial = state
    state, r = _run_level(stack, k, task, state, ctx, True, nodes, records, stg=stg)
    plan = PlanTrace(task, k, r, nodes, initial) if trace else None
    return Trajectory(k, task, records, True, r, final_state=state, plan=plan,
                      primitive_steps=ctx.primitive_steps)


def run_policy_episode(stack: PolicyStack, task: Task, state: WorldState, rng, T: int, **kw) -> Trajectory:
    """Dispatch on the stack's top level (flat or hierarchical)."""
    if stack.top == 0:
        kw = {key: kw[key] for key in ("eps", "greedy", "trace", "maps", "max_primitive_steps") if key in kw}
        return run_flat_episode(stack.net(0), task, state, rng, T, **kw)
    return run_hier_episode(stack, stack.top, task, state, rng, T, **kw)


def replay_plan(plan: PlanTrace, initial: Optional[WorldState] = None) -> float:
    """Re-execute a recorded plan through the environment and recompute its final reward."""
    state = initial if initial is not None else plan.initial_state

    def walk(nodes, task: Task) -> float:
        nonlocal state
        r = 0.0
        for node in nodes:
            if node.kind == "act":
                state = step(state, Action[node.label.upper().replace(" ", "_")])
                r = reward(state, task)
            else:
                sub = parse_task(node.label)
                if not instruction_executable(state, sub):
                    return PENALTY
                inner = walk(node.children, sub)
                r = PENALTY if inner == PENALTY else reward(state, task)
            if r != 0:
                return r
        return r

    return walk(plan.children, plan.task)


__all__ = ["StepRecord", "Trajectory", "PlanNode", "PlanTrace", "PENALTY", "N_ACTIONS",
           "run_flat_episode", "run_hier_episode", "run_policy_episode", "discounted_returns",
           "replay_plan", "mix_uniform"]
