"""Stochastic temporal grammar: a per-goal Markov chain over (switch, instruction).

For each goal task ``g`` of stage ``k`` the table holds an initial
distribution ``q(e, g' | g)`` and a transition table
``rho(e, g' | e_prev, g'_prev, g)`` over symbols ``(e, g')`` with ``g'`` in
the base task set. Both are additive-smoothed maximum-likelihood estimates
from the positive episodes seen so far.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .autodiff import ContractError
from .tasks import Task, task_set


@dataclass
class StgTable:
    stage: int
    alpha: float = 0.1
    collapse_e1: bool = False
    q: np.ndarray = field(default=None, repr=False)
    rho: np.ndarray = field(default=None, repr=False)
    q_counts: np.ndarray = field(default=None, repr=False)
    rho_counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.stage < 1:
            raise ValueError("an STG needs stage >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        S, G = self.n_symbols, self.n_goals
        if self.q_counts is None:
            self.q_counts = np.zeros((G, S))
            self.rho_counts = np.zeros((G, S, S))
        if self.q is None:
            self.q, self.rho = self._estimate(self.q_counts, self.rho_counts)

    @property
    def n_base(self) -> int:
        return len(task_set(self.stage - 1))

    @property
    def n_goals(self) -> int:
        return len(task_set(self.stage))

    @property
    def n_symbols(self) -> int:
        return self.n_base + (1 if self.collapse_e1 else self.n_base)

    def symbol(self, e: int, g_prime: int) -> int:
        if e == 0:
            return int(g_prime)
        return self.n_base + (0 if self.collapse_e1 else int(g_prime))

    def symbol_names(self) -> list[str]:
        base = [str(t) for t in task_set(self.stage - 1)]
        names = [f"0:{b}" for b in base]
        names += ["1:*"] if self.collapse_e1 else [f"1:{b}" for b in base]
        return names

    def _estimate(self, q_counts, rho_counts):
        S = self.n_symbols
        return _normalize(q_counts, self.alpha, S), _normalize(rho_counts, self.alpha, S)

    def prior(self, goal: Task, history: Optional[tuple[int, int]] = None) -> np.ndarray:
        """``q(.|g)`` when ``history`` is None, else the ``rho`` row after ``history``."""
        if history is None:
            return self.q[goal.index]
        return self.rho[goal.index, self.symbol(*history)]

    def add_episode(self, goal: Task, switches: Sequence[int], instructions: Sequence[int]) -> None:
        """Fold one positive episode's counts in and re-normalize.

        Counts are additive, so this equals recomputing from the whole corpus.
        """
        if len(switches) == 0:
            return
        syms = [self.symbol(e, gp) for e, gp in zip(switches, instructions)]
        g = goal.index
        self.q_counts[g, syms[0]] += 1
        for a, b in zip(syms[:-1], syms[1:]):
            self.rho_counts[g, a, b] += 1
        S = self.n_symbols
        self.q[g] = _normalize(self.q_counts[g], self.alpha, S)
        self.rho[g] = _normalize(self.rho_counts[g], self.alpha, S)

    def copy(self) -> "StgTable":
        return StgTable(self.stage, self.alpha, self.collapse_e1, self.q.copy(), self.rho.copy(),
                        self.q_counts.copy(), self.rho_counts.copy())

    def fingerprint(self) -> bytes:
        return self.q.tobytes() + self.rho.tobytes()


def _normalize(counts: np.ndarray, alpha: float, n_symbols: int) -> np.ndarray:
    num = counts + alpha
    den = num.sum(axis=-1, keepdims=True)
    uniform = np.full_like(num, 1.0 / n_symbols)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    # rows with no evidence and no smoothing stay uniform
    return np.where(den > 0, out, uniform)


def init_uniform(stage: int, alpha: float = 0.1, collapse_e1: bool = False) -> StgTable:
    return StgTable(stage, alpha, collapse_e1)


def mle_update(table: StgTable, positive_episodes: Iterable) -> StgTable:
    """Re-estimate ``q`` and ``rho`` from scratch over the whole positive corpus.

    Each episode needs ``task``, ``final_reward``, ``switches`` and
    ``instructions`` attributes.
    """
    fresh = StgTable(table.stage, table.alpha, table.collapse_e1)
    for ep in positive_episodes:
        if ep.final_reward != 1.0:
            raise ContractError(f"episode with final reward {ep.final_reward} in the positive corpus")
        fresh.add_episode(ep.task, ep.switches, ep.instructions)
    return fresh


def _reshape(raw: np.ndarray, weights: np.ndarray) -> np.ndarray:
    prod = np.asarray(raw, dtype=np.float64) * weights
    z = prod.sum()
    if not z > 0:
        raise ContractError("reshaped distribution cannot be normalized (all-zero product)")
    return prod / z


def switch_prior(table: StgTable, goal: Task, history: Optional[tuple[int, int]] = None) -> np.ndarray:
    row = table.prior(goal, history)
    n = table.n_base
    return np.array([row[:n].sum(), row[n:].sum()])


def reshaped_switch_dist(raw: np.ndarray, table: StgTable, goal: Task,
                         history: Optional[tuple[int, int]] = None) -> np.ndarray:
    """``pi_sw'(e) ∝ pi_sw(e) * sum_{g'} prior(e, g')``."""
    return _reshape(raw, switch_prior(table, goal, history))


def reshaped_instruction_dist(raw: np.ndarray, table: StgTable, goal: Task,
                              history: Optional[tuple[int, int]] = None) -> np.ndarray:
    """``pi_inst'(g') ∝ pi_inst(g') * prior(e=0, g')``."""
    return _reshape(raw, table.prior(goal, history)[:table.n_base])


def format_table(table: StgTable, goals: Optional[Sequence[Task]] = None, digits: int = 3) -> str:
    """Aligned human-readable dump of ``q``, ``rho`` and raw counts per goal."""
    names = table.symbol_names()
    width = max(max(len(n) for n in names), digits + 3)
    goals = list(goals) if goals is not None else list(task_set(table.stage))
    lines = [f"STG stage {table.stage}  alpha={table.alpha}  collapse_e1={table.collapse_e1}"]

    def fmt_row(values, counts):
        probs = " ".join(f"{v:>{width}.{digits}f}" for v in values)
        return probs + "  | counts " + " ".join(f"{int(c)}" for c in counts)

    header = " " * (width + 2) + " ".join(f"{n:>{width}}" for n in names)
    for goal in goals:
        g = goal.index
        lines.append("")
        lines.append(f"goal: {goal}")
        lines.append(header)
        lines.append(f"{'q':>{width}}  " + fmt_row(table.q[g], table.q_counts[g]))
        for s, name in enumerate(names):
            lines.append(f"{name:>{width}}  " + fmt_row(table.rho[g, s], table.rho_counts[g, s]))
    return "\n".join(lines) + "\n"


def to_kv(table: StgTable, goals: Optional[Sequence[Task]] = None, header: str = "") -> str:
    """Structured ``key = value`` export with round-trippable floats."""
    goals = list(goals) if goals is not None else list(task_set(table.stage))
    out = [f"# {header}"] if header else []
    out += [f"stage = {table.stage}", f"alpha = {table.alpha!r}",
            f"collapse_e1 = {str(table.collapse_e1).lower()}",
            "symbols = " + "|".join(table.symbol_names())]

    def vec(values):
        return " ".join(repr(float(v)) for v in values)

    for goal in goals:
        g = goal.index
        out.append(f"[{goal}]")
        out.append(f"q = {vec(table.q[g])}")
        out.append(f"q_counts = {vec(table.q_counts[g])}")
        for s in range(table.n_symbols):
            out.append(f"rho.{s} = {vec(table.rho[g, s])}")
            out.append(f"rho_counts.{s} = {vec(table.rho_counts[g, s])}")
    return "\n".join(out) + "\n"


def from_kv(text: str) -> StgTable:
    from .tasks import parse_task

    meta, goal = {}, None
    rows: dict[tuple, list[float]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            goal = parse_task(line[1:-1])
            continue
        key, _, value = (part.strip() for part in line.partition("="))
        if goal is None:
            meta[key] = value
        else:
            rows[(goal.index, key)] = [float(v) for v in value.split()]
    table = StgTable(int(meta["stage"]), float(meta["alpha"]), meta["collapse_e1"] == "true")
    for (g, key), values in rows.items():
        name, _, idx = key.partition(".")
        target = {"q": table.q, "q_counts": table.q_counts, "rho": table.rho, "rho_counts": table.rho_counts}[name]
        if idx:
            target[g, int(idx)] = values
        else:
            target[g] = values
    return table
