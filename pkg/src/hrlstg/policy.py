"""Stage-k policy networks and the stack that composes them.

A hierarchical net has one tanh trunk over ``observation ++ task encoding``
feeding six linear heads: switch (2), skill (4), item (C), action (8),
value V (1) and branch value V^sw (2, indexed by the switch choice). A flat
net keeps only the action and value heads.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ParamStore, ShapeError, Tensor
from .env import N_ACTIONS, OBS_DIM
from .tasks import N_COLORS, N_SKILLS, TASK_ENC_DIM, Task, TaskSet, task_set

log = logging.getLogger(__name__)

LOG_FLOOR = float(np.log(1e-12))
HIER_HEADS = {"switch": 2, "skill": N_SKILLS, "item": N_COLORS, "action": N_ACTIONS, "v": 1, "vsw": 2}
FLAT_HEADS = {"action": N_ACTIONS, "v": 1}
# parameter groups for the alternating updates; the trunk is shared by every loss
GROUPS = {"sw": ("switch",), "inst": ("skill", "item"), "aug": ("action",), "v": ("v",), "vsw": ("vsw",)}

_floor_hits = 0


def floor_hits() -> int:
    """How many log-probabilities have been floored at log(1e-12) so far."""
    return _floor_hits


@dataclass
class PolicyOutput:
    action_dist: np.ndarray
    v: float
    switch_dist: Optional[np.ndarray] = None
    skill_dist: Optional[np.ndarray] = None
    item_dist: Optional[np.ndarray] = None
    v_sw: Optional[np.ndarray] = None
    stage: int = 0


class PolicyNet:
    """Parameters and forward passes for one stage.

    ``stage`` is the task-set index the net is trained on. For a hierarchical
    net the skill head is restricted to the ``stage`` skills present in the
    base task set.
    """

    def __init__(self, stage: int, flat: bool = False, hidden: tuple[int, ...] = (64, 64),
                 rng: Optional[np.random.Generator] = None, params: Optional[ParamStore] = None):
        if not flat and stage < 1:
            raise ValueError("a hierarchical net needs stage >= 1")
        self.stage = stage
        self.flat = flat
        self.hidden = tuple(hidden)
        self.heads = FLAT_HEADS if flat else HIER_HEADS
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = ParamStore()
            fan_in = OBS_DIM + TASK_ENC_DIM
            for i, width in enumerate(self.hidden):
                W, b = ad.init_linear(rng, fan_in, width)
                params.add(f"trunk.{i}.W", W)
                params.add(f"trunk.{i}.b", b)
                fan_in = width
            for head, size in self.heads.items():
                W, b = ad.init_linear(rng, fan_in, size)
                params.add(f"{head}.W", W)
                params.add(f"{head}.b", b)
        self.params = params

    @property
    def base_tasks(self) -> Optional[TaskSet]:
        return None if self.flat else task_set(self.stage - 1)

    @property
    def n_instructions(self) -> int:
        return 0 if self.flat else self.stage * N_COLORS

    def group_of(self, name: str) -> str:
        head = name.split(".")[0]
        if head == "trunk":
            return "trunk"
        for group, heads in GROUPS.items():
            if head in heads:
                return group
        raise KeyError(name)

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.stage, self.flat, self.hidden, params=self.params.copy())

    # --- numpy forward used by rollouts -------------------------------------------------
    def _trunk(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        for i in range(len(self.hidden)):
            x = np.tanh(x @ p[f"trunk.{i}.W"].data + p[f"trunk.{i}.b"].data)
        return x

    def _head(self, h: np.ndarray, name: str) -> np.ndarray:
        return h @ self.params[f"{name}.W"].data + self.params[f"{name}.b"].data

    def forward(self, obs: np.ndarray, task_enc: np.ndarray) -> PolicyOutput:
        if obs.shape != (OBS_DIM,) or task_enc.shape != (TASK_ENC_DIM,):
            raise ShapeError(f"expected obs ({OBS_DIM},) and task encoding ({TASK_ENC_DIM},), "
                             f"got {obs.shape} and {task_enc.shape}")
        h = self._trunk(np.concatenate([obs, task_enc]))
        out = PolicyOutput(ad.numeric_softmax(self._head(h, "action")), float(self._head(h, "v")[0]),
                           stage=self.stage)
        if not self.flat:
            out.switch_dist = ad.numeric_softmax(self._head(h, "switch"))
            skill = np.zeros(N_SKILLS)
            skill[:self.stage] = ad.numeric_softmax(self._head(h, "skill")[:self.stage])
            out.skill_dist = skill
            out.item_dist = ad.numeric_softmax(self._head(h, "item"))
            out.v_sw = self._head(h, "vsw")
        return out

    # --- taped forward used by the learner ----------------------------------------------
    def forward_graph(self, inputs: np.ndarray) -> dict[str, Tensor]:
        """Batched forward on ``(B, obs+task)`` inputs returning log-probs and values."""
        p = self.params
        h = Tensor(inputs, op="const")
        for i in range(len(self.hidden)):
            h = ad.tanh_act(ad.affine(h, p[f"trunk.{i}.W"], p[f"trunk.{i}.b"]))
        out = {"action": ad.log_softmax(ad.affine(h, p["action.W"], p["action.b"])),
               "v": ad.pick(ad.affine(h, p["v.W"], p["v.b"]), np.zeros(len(inputs), dtype=int))}
        if not self.flat:
            out["switch"] = ad.log_softmax(ad.affine(h, p["switch.W"], p["switch.b"]))
            skill_logits = ad.affine(h, p["skill.W"], p["skill.b"])
            out["skill"] = ad.log_softmax(ad.columns(skill_logits, 0, self.stage))
            out["item"] = ad.log_softmax(ad.affine(h, p["item.W"], p["item.b"]))
            out["vsw"] = ad.affine(h, p["vsw.W"], p["vsw.b"])
        return out


def net_input(obs: np.ndarray, task_enc: np.ndarray) -> np.ndarray:
    return np.concatenate([obs, task_enc], axis=-1)


def instruction_dist(out: PolicyOutput) -> np.ndarray:
    """Joint over base tasks (skill-major): ``p_skill[s] * p_item[i]``."""
    k = out.stage
    return np.outer(out.skill_dist[:k], out.item_dist).ravel()


def instruction_index(task: Task) -> int:
    """Position of a base task in the instruction distribution."""
    return task.index


def _safe_log(p: float) -> float:
    global _floor_hits
    if p <= 0.0 or np.log(p) < LOG_FLOOR:
        _floor_hits += 1
        log.warning("log-probability floored at log(1e-12)")
        return LOG_FLOOR
    return float(np.log(p))


def log_prob_switch(out: PolicyOutput, e: int) -> float:
    return _safe_log(out.switch_dist[e])


def log_prob_instruction(out: PolicyOutput, task: Task) -> float:
    if int(task.skill) >= out.stage:
        raise ContractError(f"{task} is not a base task at stage {out.stage}")
    return _safe_log(out.skill_dist[int(task.skill)]) + _safe_log(out.item_dist[task.item])


def log_prob_action(out: PolicyOutput, action: int) -> float:
    return _safe_log(out.action_dist[int(action)])


class PolicyStack:
    """``[pi_0, ..., pi_K]`` with the STG table of each hierarchical level.

    Level 0 is flat. A stack whose only level is a flat net trained on a
    larger task set (the flat baseline) is also allowed.
    """

    def __init__(self, nets: list[PolicyNet], stgs: Optional[list] = None):
        if not nets:
            raise ValueError("empty policy stack")
        if not nets[0].flat:
            raise ValueError("level 0 must be a flat policy")
        for k, net in enumerate(nets[1:], start=1):
            if net.flat or net.stage != k:
                raise ValueError(f"level {k} must be a hierarchical stage-{k} net")
        self.nets = list(nets)
        self.stgs = list(stgs) if stgs is not None else [None] * len(nets)
        if len(self.stgs) != len(self.nets):
            raise ValueError("one STG slot per level required")

    @property
    def top(self) -> int:
        return len(self.nets) - 1

    @property
    def top_tasks(self) -> TaskSet:
        return task_set(self.nets[-1].stage)

    def net(self, k: int) -> PolicyNet:
        return self.nets[k]

    def stg(self, k: int):
        return self.stgs[k]

    def truncated(self, k: int) -> "PolicyStack":
        return PolicyStack(self.nets[:k + 1], self.stgs[:k + 1])

    def push(self, net: PolicyNet, stg) -> "PolicyStack":
        return PolicyStack(self.nets + [net], self.stgs + [stg])
