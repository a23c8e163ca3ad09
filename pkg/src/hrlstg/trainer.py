"""Off-policy advantage actor-critic training of one stage.

Each episode is appended to a FIFO replay memory; episodes ending in +1
also feed the STG. After every episode a Poisson-distributed number of
minibatch updates is made. A hierarchical update combines the value losses
with one of the three importance-weighted policy-gradient terms (switch,
instruction, augmented action), cycling through the terms every ``M``
updates.
"""
from __future__ import annotations

import csv
import io
import zlib
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import autodiff as ad
from .autodiff import ContractError, RmsProp
from .env import EnvConfig, reset
from .policy import PolicyNet, PolicyStack
from .rollout import Trajectory, discounted_returns, run_flat_episode, run_hier_episode
from .stg import StgTable, init_uniform
from .tasks import N_COLORS, Task, task_set

METRICS_VERSION = 1
BASE_COLUMNS = ["episode_id", "stage", "phase", "task", "final_reward", "episode_len",
                "updates_so_far", "tau", "epsilon"]


class DataCorruptionError(RuntimeError):
    """Replayed step whose stored behavior probability of the taken choice is zero."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    lr: float = 1e-4
    batch_size: int = 36
    clip_norm: float = 1.0
    poisson_lambda: float = 4.0
    alternation_period: int = 500
    max_iterations: int = 100_000
    max_episodes: Optional[int] = None
    r_min: float = 0.9
    window: int = 200
    eps_start: float = 0.1
    eps_end: float = 0.0
    eps_decay_episodes: Optional[int] = None
    iw_clip: float = 10.0
    replay_capacity: int = 5000
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    hidden: tuple[int, ...] = (64, 64)
    stg_alpha: float = 0.1
    stg_collapse_e1: bool = False
    explore_heads: tuple[str, ...] = ("switch", "instruction")
    base_level: int = 0
    base_greedy: bool = False
    no_stg: bool = False
    no_alternating: bool = False
    no_vsw: bool = False
    no_curriculum: bool = False
    flat_baseline: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "explore_heads", tuple(self.explore_heads))
        if self.max_iterations <= 0:
            raise ValueError("max_iterations (N) must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        for name in ("lr", "batch_size", "clip_norm", "poisson_lambda", "alternation_period", "window",
                     "iw_clip", "replay_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.eps_end > self.eps_start:
            raise ValueError("epsilon schedule must be non-increasing")
        if any(h not in ("switch", "instruction") for h in self.explore_heads):
            raise ValueError(f"explore_heads must be drawn from switch/instruction, got {self.explore_heads}")
        if self.max_episodes is not None and self.max_episodes <= 0:
            raise ValueError("max_episodes must be positive")

    @property
    def decay_episodes(self) -> float:
        if self.eps_decay_episodes is not None:
            return float(self.eps_decay_episodes)
        horizon = self.max_episodes if self.max_episodes is not None else self.max_iterations / self.poisson_lambda
        return max(0.4 * horizon, 1.0)

    def epsilon(self, episode: int) -> float:
        frac = min(episode / self.decay_episodes, 1.0)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


def stream(seed: int, name: str, stage: int = 0) -> np.random.Generator:
    """Independent named random stream derived from the root seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()), int(stage)))
    return np.random.Generator(np.random.PCG64(ss))


# --- replay ---------------------------------------------------------------------------

@dataclass
class ReplayEpisode:
    task: Task
    final_reward: float
    arrays: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.arrays["r"])


@dataclass
class Batch:
    x: np.ndarray
    e: np.ndarray
    g: np.ndarray
    a: np.ndarray
    ret: np.ndarray
    mu_aug: np.ndarray
    mu_sw: Optional[np.ndarray] = None
    mu_inst: Optional[np.ndarray] = None


class ReplayMemory:
    """Bounded FIFO of episodes; minibatches are uniform over stored steps."""

    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self.episodes: deque[ReplayEpisode] = deque()
        self._cum: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def n_steps(self) -> int:
        return int(sum(len(ep) for ep in self.episodes))

    def add(self, episode: ReplayEpisode) -> None:
        if len(episode) == 0:
            return
        self.episodes.append(episode)
        while len(self.episodes) > self.capacity:
            self.episodes.popleft()
        self._cum = None

    def sample(self, n: int, rng: np.random.Generator) -> tuple[Batch, list[tuple[int, int]]]:
        if not self.episodes:
            raise ContractError("cannot sample from an empty replay memory")
        if self._cum is None:
            self._cum = np.cumsum([len(ep) for ep in self.episodes])
        picks = rng.integers(self._cum[-1], size=n)
        eps_idx = np.searchsorted(self._cum, picks, side="right")
        refs = []
        rows: dict[str, list] = {}
        for flat_idx, ei in zip(picks, eps_idx):
            start = self._cum[ei - 1] if ei > 0 else 0
            t = int(flat_idx - start)
            refs.append((int(ei), t))
            for key, col in self.episodes[ei].arrays.items():
                rows.setdefault(key, []).append(col[t])
        cols = {k: np.array(v) for k, v in rows.items()}
        batch = Batch(cols["x"], cols["e"], cols["g"], cols["a"], cols["ret"], cols["mu_aug"],
                      cols.get("mu_sw"), cols.get("mu_inst"))
        return batch, refs


def replay_episode(traj: Trajectory, gamma: float) -> ReplayEpisode:
    arrays = dict(traj.arrays)
    arrays["ret"] = discounted_returns(traj, gamma)
    return ReplayEpisode(traj.task, traj.final_reward, arrays)


# --- curriculum -----------------------------------------------------------------------

class CurriculumState:
    """Per-task windows of recent episode rewards mapped to [0, 1]."""

    def __init__(self, tasks: Sequence[Task], base_tasks: Sequence[Task], r_min: float = 0.9,
                 window: int = 200, phase: int = 1):
        self.tasks = list(tasks)
        self.base_tasks = list(base_tasks)
        self.r_min = r_min
        self.window = window
        self.buffers = {t: deque(maxlen=window) for t in self.tasks}
        self.phase = phase

    def record(self, task: Task, final_reward: float) -> None:
        self.buffers[task].append(max(float(final_reward), 0.0))
        if self.phase == 1 and self.base_ready():
            self.phase = 2

    def rolling_mean(self, task: Task) -> float:
        buf = self.buffers[task]
        return float(np.mean(buf)) if buf else 0.0

    def full(self, task: Task) -> bool:
        return len(self.buffers[task]) == self.window

    def base_ready(self) -> bool:
        return all(self.full(t) and self.rolling_mean(t) > self.r_min for t in self.base_tasks)

    def all_ready(self) -> bool:
        return all(self.full(t) and self.rolling_mean(t) > self.r_min for t in self.tasks)


def curriculum_phase(state: CurriculumState, base_tasks: Optional[Sequence[Task]] = None) -> int:
    """2 once every base task's full window mean exceeds the threshold; sticky."""
    if base_tasks is not None and set(base_tasks) != set(state.base_tasks):
        raise ValueError("base tasks do not match the curriculum state")
    if state.phase == 1 and state.base_ready():
        state.phase = 2
    return state.phase


def task_pool(stage: int, colors: Sequence[int]) -> list[Task]:
    return [t for t in task_set(stage) if t.item in colors]


def sample_task(phase: int, stage: int, rng: np.random.Generator, colors: Sequence[int] = tuple(range(N_COLORS))) -> Task:
    if stage < 1:
        raise ValueError("sample_task needs stage >= 1")
    pool = task_pool(stage - 1 if phase == 1 else stage, colors)
    return pool[int(rng.integers(len(pool)))]


def alternation(i: int, M: int = 500) -> int:
    """Policy-gradient term (1 switch, 2 instruction, 3 augmented) active at update ``i``."""
    if i < 0 or M < 1:
        raise ValueError("need i >= 0 and M >= 1")
    return (i // M) % 3 + 1


# --- gradients --------------------------------------------------------------------------

def importance_weights(logp_current: np.ndarray, mu_taken: np.ndarray, clip: float) -> np.ndarray:
    mu_taken = np.asarray(mu_taken, dtype=np.float64)
    if np.any(mu_taken <= 0):
        raise DataCorruptionError("stored behavior probability of a taken choice is zero")
    return np.clip(np.exp(logp_current) / mu_taken, 0.0, clip)


def advantage_estimates(returns, v, v_sw_taken, no_vsw: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """``(G - V, G - V^sw(e_t))``; with ``no_vsw`` both use ``V``."""
    returns = np.asarray(returns, dtype=np.float64)
    a_sw = returns - v
    a_branch = a_sw if no_vsw else returns - v_sw_taken
    return a_sw, a_branch


@dataclass
class LossParts:
    objective: ad.Tensor
    value_loss: ad.Tensor
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    advantages: dict[str, np.ndarray] = field(default_factory=dict)


def build_losses(net: PolicyNet, batch: Batch, tau: int, config: TrainConfig) -> LossParts:
    """Policy objective (to ascend) and value loss (to descend) for one minibatch."""
    out = net.forward_graph(batch.x)
    G = batch.ret
    v = out["v"]
    logp_a = ad.pick(out["action"], batch.a)
    w_aug = importance_weights(logp_a.data, batch.mu_aug, config.iw_clip)
    if net.flat:
        adv = G - v.data
        objective = ad.mean(logp_a * (w_aug * adv))
        value_loss = ad.mean(ad.square(v - G)) * 0.5
        return LossParts(objective, value_loss, {"aug": w_aug}, {"sw": adv, "branch": adv})
    logp_sw = ad.pick(out["switch"], batch.e)
    logp_inst = ad.pick(out["skill"], batch.g // N_COLORS) + ad.pick(out["item"], batch.g % N_COLORS)
    vsw_taken = ad.pick(out["vsw"], batch.e)
    w_sw = importance_weights(logp_sw.data, batch.mu_sw, config.iw_clip)
    w_inst = importance_weights(logp_inst.data, batch.mu_inst, config.iw_clip)
    a_sw, a_branch = advantage_estimates(G, v.data, vsw_taken.data, config.no_vsw)
    e = batch.e.astype(np.float64)
    active = (1, 2, 3) if config.no_alternating else (tau,)
    terms = []
    if 1 in active:
        terms.append(ad.mean(logp_sw * (w_sw * a_sw)))
    if 2 in active:
        terms.append(ad.mean(logp_inst * ((1.0 - e) * w_inst * a_branch)))
    if 3 in active:
        terms.append(ad.mean(logp_a * (e * w_aug * a_branch)))
    objective = terms[0]
    for term in terms[1:]:
        objective = objective + term
    value_loss = ad.mean(ad.square(v - G)) * 0.5
    if not config.no_vsw:
        value_loss = value_loss + ad.mean(ad.square(vsw_taken - G)) * 0.5
    return LossParts(objective, value_loss, {"sw": w_sw, "inst": w_inst, "aug": w_aug},
                     {"sw": a_sw, "branch": a_branch})


def gradients(net: PolicyNet, loss: ad.Tensor) -> dict[str, np.ndarray]:
    net.params.zero_grad()
    ad.backward(loss)
    grads = net.params.grads()
    net.params.zero_grad()
    return grads


def _apply(net: PolicyNet, grads, optimizer: RmsProp, config: TrainConfig) -> None:
    optimizer.step(net.params, ad.clip_global_norm(grads, config.clip_norm))


def policy_gradient_step(batch: Batch, net: PolicyNet, tau: int, config: TrainConfig, optimizer: RmsProp) -> LossParts:
    parts = build_losses(net, batch, tau, config)
    _apply(net, gradients(net, -parts.objective), optimizer, config)
    return parts


def value_gradient_step(batch: Batch, net: PolicyNet, config: TrainConfig, optimizer: RmsProp) -> LossParts:
    parts = build_losses(net, batch, 1, config)
    _apply(net, gradients(net, parts.value_loss), optimizer, config)
    return parts


def minibatch_update(batch: Batch, net: PolicyNet, tau: int, config: TrainConfig, optimizer: RmsProp) -> LossParts:
    """One parameter update from the value losses plus the active policy term(s)."""
    parts = build_losses(net, batch, tau, config)
    _apply(net, gradients(net, parts.value_loss - parts.objective), optimizer, config)
    return parts


# --- the stage loop ---------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    episode_id: int
    stage: int
    phase: int
    task: Task
    final_reward: float
    episode_len: int
    updates_so_far: int
    tau: int
    epsilon: float
    means: dict


class StageTrainer:
    """State and loop for training the stage-``k`` policy.

    ``base`` is the frozen stack ``[pi_0 .. pi_{k-1}]``; it is unused for
    stage 0. With ``config.flat_baseline`` a flat net initialized from
    ``pi_0`` is trained on the stage-``k`` tasks instead.
    """

    def __init__(self, stage: int, env_config: EnvConfig, config: TrainConfig, seed: int,
                 base: Optional[PolicyStack] = None, metrics: Optional[io.TextIOBase] = None):
        if stage < 0:
            raise ValueError("stage must be >= 0")
        if stage > 0 and base is None:
            raise ValueError(f"stage {stage} needs the trained stack below it")
        self.stage = stage
        self.env_config = env_config
        self.config = config
        self.seed = seed
        self.base = base.truncated(stage - 1) if base is not None and stage > 0 else base
        self.flat = stage == 0 or config.flat_baseline
        self.rng_init = stream(seed, "policy-init", stage)
        self.rng_env = stream(seed, "env", stage)
        self.rng_tasks = stream(seed, "tasks", stage)
        self.rng_sampling = stream(seed, "sampling", stage)
        self.rng_replay = stream(seed, "replay", stage)
        if self.flat:
            self.net = PolicyNet(stage, flat=True, hidden=config.hidden, rng=self.rng_init)
            if stage > 0:
                self.net.params.set_values(self.base.net(0).params.values())
            self.stg: Optional[StgTable] = None
        else:
            self.net = PolicyNet(stage, hidden=config.hidden, rng=self.rng_init)
            self.stg = init_uniform(stage, config.stg_alpha, config.stg_collapse_e1)
        self.optimizer = RmsProp(config.lr, config.rms_decay, config.rms_eps)
        colors = env_config.colors_in_play
        self.pool = task_pool(stage, colors)
        self.base_pool = task_pool(stage - 1, colors) if stage > 0 else []
        start_phase = 2 if stage == 0 or config.no_curriculum else 1
        self.curriculum = CurriculumState(self.pool, self.base_pool, config.r_min, config.window, start_phase)
        self.replay = ReplayMemory(config.replay_capacity)
        self.positives: list[tuple[int, list[int], list[int]]] = []
        self.i = 0
        self.tau = 1
        self.episode = 0
        self.history: list[EpisodeMetrics] = []
        self.threshold_episode: Optional[int] = None
        self.metrics = metrics
        self._header_written = False

    # -- bookkeeping
    @property
    def columns(self) -> list[str]:
        return BASE_COLUMNS + [f"mean[{t}]" for t in self.pool]

    def stack(self) -> PolicyStack:
        if self.flat:
            return PolicyStack([self.net])
        return self.base.push(self.net, self.stg)

    def write_header(self) -> None:
        if self.metrics is not None and not self._header_written:
            self.metrics.write(f"# hrlstg {__version__} metrics v{METRICS_VERSION}\n")
            csv.writer(self.metrics, lineterminator="\n").writerow(self.columns)
        self._header_written = True

    def _emit(self, m: EpisodeMetrics) -> None:
        self.history.append(m)
        if self.metrics is None:
            return
        self.write_header()
        row = [m.episode_id, m.stage, m.phase, str(m.task), f"{m.final_reward:g}", m.episode_len,
               m.updates_so_far, m.tau, f"{m.epsilon:.6f}"]
        row += [f"{m.means[t]:.4f}" for t in self.pool]
        csv.writer(self.metrics, lineterminator="\n").writerow(row)

    # -- one episode
    def run_episode(self) -> Trajectory:
        cfg = self.config
        phase = curriculum_phase(self.curriculum)
        if self.stage == 0:
            task = self.pool[int(self.rng_tasks.integers(len(self.pool)))]
        else:
            task = sample_task(phase, self.stage, self.rng_tasks, self.env_config.colors_in_play)
        state = reset(self.env_config, task, int(self.rng_env.integers(2 ** 31)))
        eps = cfg.epsilon(self.episode)
        T = self.env_config.max_steps
        if self.flat:
            traj = run_flat_episode(self.net, task, state, self.rng_sampling, T, eps=eps,
                                    max_primitive_steps=self.env_config.max_primitive_steps)
        else:
            traj = run_hier_episode(self.stack(), self.stage, task, state, self.rng_sampling, T, eps=eps,
                                    use_stg=not cfg.no_stg, explore_heads=cfg.explore_heads,
                                    base_level=cfg.base_level, base_greedy=cfg.base_greedy,
                                    **self.env_config.budgets)
        self.replay.add(replay_episode(traj, cfg.gamma))
        if traj.final_reward == 1.0 and self.stg is not None:
            self.positives.append((task.index, traj.switches, traj.instructions))
            self.stg.add_episode(task, traj.switches, traj.instructions)
        self.curriculum.record(task, traj.final_reward)
        if self.threshold_episode is None and self.curriculum.all_ready():
            self.threshold_episode = self.episode
        for _ in range(int(self.rng_replay.poisson(cfg.poisson_lambda))):
            self.update()
        self._emit(EpisodeMetrics(self.episode, self.stage, phase, task, traj.final_reward, len(traj),
                                  self.i, 0 if self.flat else self.tau, eps,
                                  {t: self.curriculum.rolling_mean(t) for t in self.pool}))
        self.episode += 1
        return traj

    def update(self) -> LossParts:
        batch, _ = self.replay.sample(self.config.batch_size, self.rng_replay)
        parts = minibatch_update(batch, self.net, self.tau, self.config, self.optimizer)
        self.i += 1
        if self.i % self.config.alternation_period == 0:
            self.tau = self.tau % 3 + 1
        return parts

    def done(self) -> bool:
        cfg = self.config
        return self.i >= cfg.max_iterations or (cfg.max_episodes is not None and self.episode >= cfg.max_episodes)

    def train(self, until: Optional[Callable[["StageTrainer"], bool]] = None,
              stop_after_episodes: Optional[int] = None) -> "StageTrainer":
        """Run episodes until N updates (or the episode cap, or ``until``) is reached."""
        self.write_header()
        while not self.done():
            if stop_after_episodes is not None and self.episode >= stop_after_episodes:
                break
            self.run_episode()
            if until is not None and until(self):
                break
        return self

    # -- persistence
    def state_arrays(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays: dict[str, np.ndarray] = {}
        for name, t in self.net.params.items():
            arrays[f"param/{name}"] = t.data
        for name, v in self.optimizer.accumulators.items():
            arrays[f"rmsprop/{name}"] = v
        if self.stg is not None:
            arrays.update(stg_arrays(self.stg))
        eps = list(self.replay.episodes)
        arrays["replay/len"] = np.array([len(ep) for ep in eps], dtype=np.float64)
        arrays["replay/task"] = np.array([ep.task.index for ep in eps], dtype=np.float64)
        arrays["replay/final"] = np.array([ep.final_reward for ep in eps])
        if eps:
            for key in eps[0].arrays:
                arrays[f"replay/{key}"] = np.concatenate([ep.arrays[key] for ep in eps])
        arrays["positives/task"] = np.array([p[0] for p in self.positives], dtype=np.float64)
        arrays["positives/len"] = np.array([len(p[1]) for p in self.positives], dtype=np.float64)
        arrays["positives/e"] = np.array([e for p in self.positives for e in p[1]], dtype=np.float64)
        arrays["positives/g"] = np.array([g for p in self.positives for g in p[2]], dtype=np.float64)
        for t in self.pool:
            arrays[f"curriculum/{t}"] = np.array(self.curriculum.buffers[t], dtype=np.float64)
        meta = {
            "kind": "train_state", "version": __version__, "stage": self.stage, "seed": self.seed,
            "flat": self.flat, "i": self.i, "tau": self.tau, "episode": self.episode,
            "phase": self.curriculum.phase, "threshold_episode": self.threshold_episode,
            "optimizer_keys": list(self.optimizer.accumulators),
            "config": config_to_dict(self.config), "env_config": asdict(self.env_config),
            "rng": {name: getattr(self, f"rng_{name}").bit_generator.state
                    for name in ("init", "env", "tasks", "sampling", "replay")},
        }
        return arrays, meta

    def load_state_arrays(self, arrays: dict[str, np.ndarray], meta: dict) -> None:
        if meta.get("kind") != "train_state" or meta["stage"] != self.stage or meta["flat"] != self.flat:
            raise ValueError("checkpoint does not match this trainer")
        self.net.params.set_values({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
        self.optimizer.accumulators = {k: arrays[f"rmsprop/{k}"].copy() for k in meta["optimizer_keys"]}
        if self.stg is not None:
            self.stg = stg_from_arrays(arrays, self.stg.stage, self.stg.alpha, self.stg.collapse_e1)
        self.replay = ReplayMemory(self.config.replay_capacity)
        lengths = arrays["replay/len"].astype(int)
        keys = [k[len("replay/"):] for k in arrays if k.startswith("replay/") and k not in
                ("replay/len", "replay/task", "replay/final")]
        int_keys = {"e", "g", "a"}
        start = 0
        for n, ti, fr in zip(lengths, arrays["replay/task"], arrays["replay/final"]):
            cols = {}
            for key in keys:
                col = arrays[f"replay/{key}"][start:start + n]
                cols[key] = col.astype(np.int64) if key in int_keys else col.copy()
            self.replay.add(ReplayEpisode(Task.from_index(int(ti)), float(fr), cols))
            start += n
        self.positives = []
        pos = 0
        for ti, n in zip(arrays["positives/task"], arrays["positives/len"].astype(int)):
            e = [int(x) for x in arrays["positives/e"][pos:pos + n]]
            g = [int(x) for x in arrays["positives/g"][pos:pos + n]]
            self.positives.append((int(ti), e, g))
            pos += n
        for t in self.pool:
            self.curriculum.buffers[t] = deque(arrays[f"curriculum/{t}"].tolist(), maxlen=self.config.window)
        self.curriculum.phase = meta["phase"]
        self.threshold_episode = meta["threshold_episode"]
        self.i, self.tau, self.episode = meta["i"], meta["tau"], meta["episode"]
        for name, state in meta["rng"].items():
            getattr(self, f"rng_{name}").bit_generator.state = state


def stg_arrays(stg: StgTable, prefix: str = "stg") -> dict[str, np.ndarray]:
    return {f"{prefix}/q": stg.q, f"{prefix}/rho": stg.rho, f"{prefix}/q_counts": stg.q_counts,
            f"{prefix}/rho_counts": stg.rho_counts}


def stg_from_arrays(arrays, stage: int, alpha: float, collapse_e1: bool, prefix: str = "stg") -> StgTable:
    return StgTable(stage, alpha, collapse_e1, arrays[f"{prefix}/q"].copy(), arrays[f"{prefix}/rho"].copy(),
                    arrays[f"{prefix}/q_counts"].copy(), arrays[f"{prefix}/rho_counts"].copy())


def config_to_dict(config: TrainConfig) -> dict:
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def train_stage(stage: int, base: Optional[PolicyStack], env_config: EnvConfig, config: TrainConfig, seed: int,
                metrics: Optional[io.TextIOBase] = None,
                until: Optional[Callable[[StageTrainer], bool]] = None) -> StageTrainer:
    """Train the stage-``stage`` policy on top of ``base`` and return the finished trainer."""
    return StageTrainer(stage, env_config, config, seed, base, metrics).train(until)
