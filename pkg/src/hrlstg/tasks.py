"""Instruction vocabulary and the staged task sets.

A task is a two-word instruction ``<Skill> <color>``. Stage ``k`` owns every
task whose skill index is at most ``k``, so each stage's set contains the
previous one.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

COLORS: tuple[str, ...] = ("red", "orange", "yellow", "green", "blue", "purple")
N_COLORS = len(COLORS)
MAX_STAGE = 3


class Skill(IntEnum):
    FIND = 0
    GET = 1
    PUT = 2
    STACK = 3

    @property
    def word(self) -> str:
        return self.name.capitalize()


N_SKILLS = len(Skill)


class TaskParseError(ValueError):
    """Raised when an instruction string names an unknown skill or color."""


@dataclass(frozen=True, order=True)
class Task:
    skill: Skill
    item: int

    def __post_init__(self):
        object.__setattr__(self, "skill", Skill(self.skill))
        if not 0 <= self.item < N_COLORS:
            raise ValueError(f"item index {self.item} outside [0, {N_COLORS})")

    @property
    def color(self) -> str:
        return COLORS[self.item]

    @property
    def index(self) -> int:
        """Position of this task in the skill-major ordering of all 24 tasks."""
        return int(self.skill) * N_COLORS + self.item

    @classmethod
    def from_index(cls, index: int) -> "Task":
        return cls(Skill(index // N_COLORS), index % N_COLORS)

    def __str__(self) -> str:
        return f"{self.skill.word} {self.color}"


@dataclass(frozen=True)
class TaskSet:
    stage: int
    tasks: tuple[Task, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __contains__(self, task) -> bool:
        return task in self.tasks

    def index(self, task: Task) -> int:
        return self.tasks.index(task)

    @property
    def skills(self) -> tuple[Skill, ...]:
        return tuple(Skill(s) for s in range(self.stage + 1))


def task_set(stage: int) -> TaskSet:
    """Return ``G_stage``: all tasks with skill index <= ``stage``."""
    if not isinstance(stage, (int, np.integer)) or not 0 <= stage <= MAX_STAGE:
        raise ValueError(f"stage must be in [0, {MAX_STAGE}], got {stage!r}")
    return _task_set(int(stage))


@lru_cache(maxsize=None)
def _task_set(stage: int) -> TaskSet:
    tasks = tuple(Task(Skill(s), c) for s in range(stage + 1) for c in range(N_COLORS))
    return TaskSet(stage, tasks)


def parse_task(text: str) -> Task:
    words = text.split()
    if len(words) != 2:
        raise TaskParseError(f"expected '<skill> <color>', got {text!r}")
    skill_word, color_word = (w.lower() for w in words)
    skills = {s.word.lower(): s for s in Skill}
    if skill_word not in skills:
        raise TaskParseError(f"unknown skill word {words[0]!r}")
    if color_word not in COLORS:
        raise TaskParseError(f"unknown color word {words[1]!r}")
    return Task(skills[skill_word], COLORS.index(color_word))


def color_index(name: str) -> int:
    try:
        return COLORS.index(name.lower())
    except ValueError:
        raise TaskParseError(f"unknown color word {name!r}") from None


def encode_task(task: Task) -> np.ndarray:
    """One-hot skill followed by one-hot color, length ``4 + C``."""
    enc = np.zeros(N_SKILLS + N_COLORS)
    enc[int(task.skill)] = 1.0
    enc[N_SKILLS + task.item] = 1.0
    return enc


TASK_ENC_DIM = N_SKILLS + N_COLORS
