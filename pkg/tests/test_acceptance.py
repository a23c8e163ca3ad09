"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line in the run summary.

Criteria 6, 7, 8 (CSV half), 9 and 12 train real policies and take most of
the wall-clock time; the trained stacks are shared through module fixtures.
"""
from __future__ import annotations

import csv
import statistics
import time
from fractions import Fraction
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from hrlstg.cli import main as cli_main
from hrlstg.env import OBS_DIM, WALL, EnvConfig, goal_reached, reset, step
from hrlstg.evaluation import success_rate, trace_plan, variant_config
from hrlstg.policy import PolicyNet, PolicyStack
from hrlstg.rollout import PENALTY, replay_plan, run_hier_episode
from hrlstg.stg import init_uniform, mle_update, reshaped_instruction_dist, reshaped_switch_dist
from hrlstg.tasks import N_COLORS, TASK_ENC_DIM, Skill, Task, parse_task, task_set
from hrlstg.autodiff import RmsProp
from hrlstg.trainer import (Batch, CurriculumState, StageTrainer, TrainConfig, build_losses,
                            curriculum_phase, gradients, minibatch_update)

from oracles import (a2c_gradients, block_total, enumerate_small_states, hand_count_chain, log_softmax_np,
                     np_forward, oracle_goal, rmsprop_reference, sample_chain, synthetic_corpus, walk_plan)

RED, BLUE = 0, 4
SEEDS = (0, 1, 2, 3, 4)
EVAL_SEEDS = (0,)
VALIDATION_SEED = 999


# --- criterion 1 -------------------------------------------------------------------

def random_batch(rng, stage, size=8):
    return Batch(x=rng.normal(size=(size, OBS_DIM + TASK_ENC_DIM)), e=rng.integers(0, 2, size),
                 g=rng.integers(0, N_COLORS * stage, size), a=rng.integers(0, 8, size),
                 ret=rng.uniform(-0.5, 1.0, size), mu_aug=rng.uniform(0.05, 1.0, size),
                 mu_sw=rng.uniform(0.05, 1.0, size), mu_inst=rng.uniform(0.02, 1.0, size))


def head_logps(params, batch, n_hidden, stage):
    _, logits = np_forward(params, batch.x, n_hidden, stage, flat=False)
    rows = np.arange(len(batch.ret))
    lsm = {k: log_softmax_np(logits[k]) for k in ("switch", "skill", "item", "action")}
    return {
        "sw": lsm["switch"][rows, batch.e],
        "inst": lsm["skill"][rows, batch.g // N_COLORS] + lsm["item"][rows, batch.g % N_COLORS],
        "aug": lsm["action"][rows, batch.a],
        "v": logits["v"][:, 0],
        "vsw": logits["vsw"][rows, batch.e],
    }


def oracle_objectives(params, batch, n_hidden, stage, frozen):
    """The three policy terms and the value loss with weights and advantages held fixed."""
    lp = head_logps(params, batch, n_hidden, stage)
    w, a_sw, a_br = frozen["w"], frozen["a_sw"], frozen["a_br"]
    e = batch.e.astype(float)
    return {
        1: np.mean(lp["sw"] * w["sw"] * a_sw),
        2: np.mean(lp["inst"] * (1 - e) * w["inst"] * a_br),
        3: np.mean(lp["aug"] * e * w["aug"] * a_br),
        "value": 0.5 * np.mean((lp["v"] - batch.ret) ** 2) + 0.5 * np.mean((lp["vsw"] - batch.ret) ** 2),
    }


@pytest.mark.criterion(1)
def test_criterion_1_gradients_match_finite_differences(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    stage, hidden = 2, (6, 5)
    net = PolicyNet(stage, hidden=hidden, rng=rng)
    batch = random_batch(rng, stage)
    params = {name: t.data for name, t in net.params.items()}
    lp0 = head_logps(params, batch, len(hidden), stage)
    frozen = {"w": {k: np.clip(np.exp(lp0[k]) / getattr(batch, f"mu_{k}"), 0, 10) for k in ("sw", "inst", "aug")},
              "a_sw": batch.ret - lp0["v"], "a_br": batch.ret - lp0["vsw"]}
    config = TrainConfig(gamma=0.95)
    worst = 0.0
    for key in (1, 2, 3, "value"):
        parts = build_losses(net, batch, 1 if key == "value" else key, config)
        loss = parts.value_loss if key == "value" else parts.objective
        target = oracle_objectives(params, batch, len(hidden), stage, frozen)[key]
        assert loss.data == pytest.approx(target, rel=1e-12, abs=1e-14)
        analytic = gradients(net, loss)
        h = 1e-5
        for name, tensor in net.params.items():
            data = tensor.data
            numeric = np.zeros_like(data)
            for idx in np.ndindex(data.shape):
                old = data[idx]
                data[idx] = old + h
                up = oracle_objectives({n: t.data for n, t in net.params.items()}, batch, len(hidden), stage,
                                       frozen)[key]
                data[idx] = old - h
                down = oracle_objectives({n: t.data for n, t in net.params.items()}, batch, len(hidden), stage,
                                         frozen)[key]
                data[idx] = old
                numeric[idx] = (up - down) / (2 * h)
            a = analytic[name]
            rel = np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), 1e-8)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    verdict(1, worst < 1e-4 and elapsed < 60,
            f"max elementwise relative error {worst:.2e} over 3 policy terms + value loss; {elapsed:.1f}s")


# --- criterion 2 -------------------------------------------------------------------

class Episode(SimpleNamespace):
    pass


@pytest.mark.criterion(2)
def test_criterion_2_stg_matches_hand_counts(verdict):
    start = time.perf_counter()
    goals = list(task_set(2))
    records = synthetic_corpus(goals, 12, n=20, seed=0)
    corpus = [Episode(task=g, switches=s, instructions=i, final_reward=1.0) for g, s, i in records]
    table = mle_update(init_uniform(2, alpha=0.0), corpus)
    q_ref, rho_ref = hand_count_chain([(g.index, s, i) for g, s, i in records], table.n_symbols, table.symbol)
    exact = all([Fraction(x) for x in table.q[g]] == [Fraction(float(f)) for f in row] for g, row in q_ref.items())
    exact &= all([Fraction(x) for x in table.rho[g, s]] == [Fraction(float(f)) for f in row]
                 for (g, s), row in rho_ref.items())
    exact &= all(sum(row) == 1 for row in q_ref.values())

    # a known chain over three symbols of "Get blue": Find red, Find blue, act directly
    start_p = np.array([0.5, 0.3, 0.2])
    trans = np.array([[0.05, 0.9, 0.05], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    tuples = [(0, RED), (0, BLUE), (1, 0)]
    goal = parse_task("Get blue")
    seqs = sample_chain(start_p, trans, 1000, 10, np.random.default_rng(0))
    chain_eps = [Episode(task=goal, switches=[tuples[i][0] for i in s], instructions=[tuples[i][1] for i in s],
                         final_reward=1.0) for s in seqs]
    fitted = mle_update(init_uniform(1, alpha=0.0), chain_eps)
    n_transitions = int(fitted.rho_counts[goal.index].sum())
    syms = [fitted.symbol(*t) for t in tuples]
    err = float(np.max(np.abs(fitted.rho[goal.index][np.ix_(syms, syms)] - trans)))
    elapsed = time.perf_counter() - start
    verdict(2, exact and n_transitions == 10 ** 4 and err < 0.02 and elapsed < 60,
            f"20-episode corpus exact={exact}; {n_transitions} transitions, max |rho - P| = {err:.4f}; "
            f"{elapsed:.1f}s")


# --- criterion 3 -------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_criterion_3_uniform_prior_is_neutral(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(1000):
        stage = 1 + trial % 3
        table = init_uniform(stage)
        goal = task_set(stage).tasks[int(rng.integers(6 * (stage + 1)))]
        raw_sw = rng.dirichlet(np.ones(2))
        raw_inst = rng.dirichlet(np.full(6 * stage, 0.5))
        hist = None if trial % 4 == 0 else (int(rng.integers(2)), int(rng.integers(6 * stage)))
        worst = max(worst, float(np.max(np.abs(reshaped_switch_dist(raw_sw, table, goal, hist) - raw_sw))),
                    float(np.max(np.abs(reshaped_instruction_dist(raw_inst, table, goal, hist) - raw_inst))))
    verdict(3, worst < 1e-12, f"max deviation from raw heads {worst:.1e} over 1000 inputs")


# --- criterion 4 -------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_criterion_4_on_policy_update_is_a2c(verdict):
    rng = np.random.default_rng(4)
    stage, hidden = 2, (7,)
    weight_dev = update_dev = 0.0
    for terms in ((1,), (2,), (3,), (1, 2, 3)):
        net = PolicyNet(stage, hidden=hidden, rng=rng)
        batch = random_batch(rng, stage, size=12)
        params0 = {name: t.data.copy() for name, t in net.params.items()}
        lp = head_logps(params0, batch, len(hidden), stage)
        batch.mu_sw, batch.mu_inst, batch.mu_aug = np.exp(lp["sw"]), np.exp(lp["inst"]), np.exp(lp["aug"])
        config = TrainConfig(gamma=0.95, lr=1e-3, no_alternating=len(terms) == 3)
        tau = terms[0]
        parts = build_losses(net, batch, tau, config)
        weight_dev = max(weight_dev, max(float(np.max(np.abs(w - 1.0))) for w in parts.weights.values()))
        optimizer = RmsProp(config.lr, config.rms_decay, config.rms_eps)
        minibatch_update(batch, net, tau, config, optimizer)
        ref_grads = a2c_gradients(params0, batch, len(hidden), stage, terms=terms)
        expected, _ = rmsprop_reference(params0, ref_grads, {}, config.lr, config.rms_decay, config.rms_eps,
                                        config.clip_norm)
        for name, t in net.params.items():
            update_dev = max(update_dev, float(np.max(np.abs(t.data - expected[name]))))
    verdict(4, weight_dev < 1e-12 and update_dev < 1e-10,
            f"max |w - 1| = {weight_dev:.1e}; max parameter difference vs A2C reference {update_dev:.1e}")


# --- criterion 5 -------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_5_environment_invariants_exhaustive(verdict):
    start = time.perf_counter()
    states = enumerate_small_states(4, events=True)
    tasks = task_set(3).tasks
    conserved = walls = goals = 0
    for s in states:
        total = block_total(s)
        for a in range(8):
            t = step(s, a)
            conserved += block_total(t) != total
            walls += t.layout.kind(t.agent.row, t.agent.col) == WALL
        for task in tasks:
            goals += goal_reached(s, task) != oracle_goal(s, int(task.skill), task.item)
    elapsed = time.perf_counter() - start
    verdict(5, conserved == walls == goals == 0 and elapsed < 300,
            f"{len(states)} states x 8 actions x 24 goals: {conserved} conservation, {walls} wall, "
            f"{goals} goal mismatches; {elapsed:.0f}s")


# --- criterion 10 ------------------------------------------------------------------

@pytest.mark.criterion(10)
def test_criterion_10_penalty_semantics(verdict):
    env = EnvConfig(layout="single_room", room_size=7, colors_in_play=(RED, BLUE), blocks_per_episode=2,
                    distractors=True)
    rng = np.random.default_rng(10)
    stacks = {}
    for k in (1, 2, 3):
        init = np.random.default_rng(100 + k)
        nets = [PolicyNet(0, flat=True, rng=init)] + [PolicyNet(j, rng=init) for j in range(1, k + 1)]
        stacks[k] = PolicyStack(nets, [None] + [init_uniform(j) for j in range(1, k + 1)])
    steps = penalties = episodes = violations = 0
    while steps < 10 ** 5:
        k = 1 + episodes % 3
        goals = [g for g in task_set(k).tasks if g.item in env.colors_in_play]
        goal = goals[int(rng.integers(len(goals)))]
        initial = reset(env, goal, episodes)
        traj = run_hier_episode(stacks[k], k, goal, initial, rng, T=30, eps=0.2, trace=True, base_T=15)
        violations += int(np.any(traj.rewards[:-1] != 0))
        for rec in traj.steps:
            if rec.r == PENALTY:
                # top-level penalties are delegations; a non-executable one at this level or below
                violations += rec.e != 0
                violations += k == 1 and rec.executable is not False
        _, final, p = walk_plan(traj.plan.children, goal, initial)
        violations += final != traj.final_reward or replay_plan(traj.plan) != traj.final_reward
        violations += (traj.final_reward == PENALTY) != (p >= 1)
        penalties += traj.final_reward == PENALTY
        steps += traj.primitive_steps + len(traj)
        episodes += 1
    verdict(10, violations == 0 and penalties > 0,
            f"{steps} steps over {episodes} episodes, {penalties} penalised episodes, {violations} violations")


# --- criterion 11 ------------------------------------------------------------------

DETERMINISM_CONFIG = """
[run]
checkpoint_every = 20

[env]
colors_in_play = red, blue
max_steps = 25
base_max_steps = 10
max_primitive_steps = 60

[train]
gamma = 0.95
lr = 0.001
hidden = 16
batch_size = 8
max_episodes = 70
"""


@pytest.mark.criterion(11)
def test_criterion_11_determinism_and_resume(tmp_path, verdict):
    cfg = tmp_path / "c.ini"
    cfg.write_text(DETERMINISM_CONFIG)

    def train(run, *extra):
        return cli_main(["train", "--config", str(cfg), "--run-dir", str(tmp_path / run), "--seed", "5",
                         "--stage", "1", "--bootstrap", *extra])

    codes = [train("a"), train("b"), train("c", "--stop-after", "33")]
    codes.append(train("c", "--resume", str(tmp_path / "c" / "train_k0.state")))
    codes.append(cli_main(["train", "--config", str(cfg), "--run-dir", str(tmp_path / "d"), "--seed", "5",
                           "--stage", "0"]))
    codes.append(cli_main(["train", "--config", str(cfg), "--run-dir", str(tmp_path / "d"), "--seed", "5",
                           "--stage", "1", "--stop-after", "41"]))
    codes.append(cli_main(["train", "--config", str(cfg), "--run-dir", str(tmp_path / "d"), "--seed", "5",
                           "--stage", "1", "--resume", str(tmp_path / "d" / "train_k1.state")]))

    def read(run, name):
        return (tmp_path / run / name).read_bytes()

    names = ("metrics_k0.csv", "metrics_k1.csv", "policy_k1.ckpt")
    same_seed = all(read("a", n) == read("b", n) for n in names)
    resumed = all(read("a", n) == read(r, n) for n in names for r in ("c", "d"))
    rows = len(read("a", "metrics_k1.csv").splitlines()) - 2
    verdict(11, codes == [0] * 7 and same_seed and resumed and rows == 70,
            f"identical seeds byte-identical={same_seed}; resumed (stage 0 at 33, stage 1 at 41) "
            f"byte-identical={resumed}; {rows} rows")


# --- trained policies (criteria 6-9, 12) -----------------------------------------------

def env_config(blocks: int, hierarchical: bool) -> EnvConfig:
    budgets = dict(base_max_steps=30, max_primitive_steps=400) if hierarchical else {}
    return EnvConfig(layout="single_room", room_size=7, colors_in_play=(RED, BLUE), blocks_per_episode=blocks,
                     distractors=blocks > 1, max_steps=100, **budgets)


def train_config(max_episodes: int, **kw) -> TrainConfig:
    return TrainConfig(gamma=0.95, lr=1e-3, eps_decay_episodes=4000, max_episodes=max_episodes, **kw)


def fit(trainer: StageTrainer, block: int = 1000, target: float = 0.95) -> StageTrainer:
    """Train in blocks; stop once the threshold is reached and a held-out greedy check passes."""
    while not trainer.done():
        trainer.train(stop_after_episodes=trainer.episode + block)
        if trainer.threshold_episode is None:
            continue
        check = success_rate(trainer.stack(), trainer.pool, trainer.env_config, n=50, seeds=(VALIDATION_SEED,))
        if check.success >= target:
            break
    return trainer


def get_tasks():
    return [Task(Skill.GET, c) for c in (RED, BLUE)]


@pytest.fixture(scope="module")
def base_policies():
    """pi_0 per seed: Find-x in a 7x7 room, 2 colors, one distractor block."""
    env = env_config(2, hierarchical=False)
    out = {}
    for seed in SEEDS:
        trainer = fit(StageTrainer(0, env, train_config(60_000), seed))
        out[seed] = trainer
    return out


@pytest.fixture(scope="module")
def stage_one_runs(base_policies, tmp_path_factory):
    """Full model and flat baseline on G_1 with single-item episodes, per seed."""
    env = env_config(1, hierarchical=True)
    out_dir = tmp_path_factory.mktemp("stage1")
    runs = {}
    for variant, kw in (("full", {}), ("flat", {"flat_baseline": True})):
        for seed in SEEDS:
            path = out_dir / f"{variant}_s{seed}.csv"
            with open(path, "w", newline="") as fh:
                base = PolicyStack([base_policies[seed].net])
                trainer = fit(StageTrainer(1, env, train_config(30_000, **kw), seed, base, metrics=fh))
            runs[variant, seed] = (trainer, path)
    return runs


@pytest.mark.criterion(6)
def test_criterion_6_stage_zero(base_policies, verdict):
    env = env_config(2, hierarchical=False)
    rates = {}
    for seed, trainer in base_policies.items():
        report = success_rate(PolicyStack([trainer.net]), trainer.pool, env, n=100, seeds=EVAL_SEEDS)
        rates[seed] = (report.success, trainer.episode)
    good = sum(rate >= 0.9 and eps <= 60_000 for rate, eps in rates.values())
    detail = ", ".join(f"s{s}: {r:.3f} @ {e}" for s, (r, e) in rates.items())
    verdict(6, good >= 4, f"{good}/5 seeds >= 0.9 greedy success (200 episodes) [{detail}]")


@pytest.mark.criterion(7)
def test_criterion_7_stage_one_vs_flat(stage_one_runs, verdict):
    env = env_config(1, hierarchical=True)
    finals, thresholds = {}, {"full": [], "flat": []}
    for (variant, seed), (trainer, _) in stage_one_runs.items():
        # a run that never reaches the threshold counts as one episode past its budget
        thr = trainer.threshold_episode
        thresholds[variant].append(thr if thr is not None else trainer.config.max_episodes + 1)
        if variant == "full":
            finals[seed] = (thr, success_rate(trainer.stack(), get_tasks(), env, n=100, seeds=EVAL_SEEDS).success)
    full_ok = all(thr is not None and rate >= 0.85 for thr, rate in finals.values())
    med_full, med_flat = statistics.median(thresholds["full"]), statistics.median(thresholds["flat"])
    detail = ", ".join(f"s{s}: thr {t} Get {r:.3f}" for s, (t, r) in finals.items())
    verdict(7, full_ok and med_full < med_flat,
            f"median episodes-to-threshold full {med_full} vs flat {med_flat}; full [{detail}]; "
            f"flat thresholds {thresholds['flat']}")


def phase_dips(path: Path, window: int = 200) -> tuple[float, float] | None:
    with open(path) as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    phases = [int(r["phase"]) for r in rows]
    if 2 not in phases or phases[0] != 1:
        return None
    switch = phases.index(2)
    reward = [max(float(r["final_reward"]), 0.0) for r in rows]
    return float(np.mean(reward[max(switch - window, 0):switch])), float(np.mean(reward[switch:switch + window]))


@pytest.mark.criterion(8)
def test_criterion_8_curriculum(stage_one_runs, verdict):
    base = [parse_task("Find red"), parse_task("Find blue")]
    cur = CurriculumState(base + get_tasks(), base, r_min=0.9, window=200)
    trace = []
    for _ in range(200):
        cur.record(base[0], 1.0)
    for value in [0.0] * 21 + [1.0] * 179:
        cur.record(base[1], value)
    trace.append(curriculum_phase(cur))  # 0.895: stays in phase 1
    cur.record(base[1], 1.0)
    trace.append(curriculum_phase(cur))  # exactly 0.9: not above the threshold
    cur.record(base[1], 1.0)
    trace.append(curriculum_phase(cur))  # 0.905: switch
    unit_ok = trace == [1, 1, 2]
    dips = {seed: phase_dips(path) for (variant, seed), (_, path) in stage_one_runs.items() if variant == "full"}
    dip_ok = all(d is not None and d[1] < d[0] for d in dips.values())
    detail = ", ".join(f"s{s}: {d[0]:.2f}->{d[1]:.2f}" if d else f"s{s}: no switch" for s, d in dips.items())
    verdict(8, unit_ok and dip_ok, f"constructed streams phases {trace}; reward before->after switch [{detail}]")


@pytest.mark.criterion(9)
def test_criterion_9_generalisation_to_distractors(stage_one_runs, verdict):
    env = variant_config(env_config(1, hierarchical=True), "distractors")
    rates = {"full": [], "flat": []}
    for (variant, seed), (trainer, _) in stage_one_runs.items():
        rates[variant].append(success_rate(trainer.stack(), get_tasks(), env, n=100, seeds=EVAL_SEEDS).success)
    full, flat = float(np.mean(rates["full"])), float(np.mean(rates["flat"]))
    verdict(9, full - flat >= 0.20,
            f"Get-x with 3 distractors: hierarchical {full:.3f} vs flat {flat:.3f} "
            f"(per seed {[round(r, 2) for r in rates['full']]} vs {[round(r, 2) for r in rates['flat']]})")


@pytest.fixture(scope="module")
def stage_three_stack(base_policies):
    env = env_config(2, hierarchical=True)
    stack = PolicyStack([base_policies[0].net])
    for k, cap in ((1, 30_000), (2, 30_000), (3, 40_000)):
        trainer = fit(StageTrainer(k, env, train_config(cap), 0, stack))
        stack = trainer.stack()
    return stack, env


@pytest.mark.criterion(12)
def test_criterion_12_stack_blue_trace(stage_three_stack, verdict):
    stack, env = stage_three_stack
    goal = parse_task("Stack blue")
    plan = trace_plan(stack, goal, env, seed=0)
    allowed = {"Get blue", "Find blue", "Put blue"}
    delegated = [n.label for n in plan.children if n.kind == "instr"]
    last = plan.children[-1] if plan.children else None
    ok = (plan.final_reward == 1.0 and set(delegated) <= allowed and last is not None
          and last.reward == 1.0 and replay_plan(plan) == 1.0)
    print(plan.render())
    verdict(12, ok, f"top-level plan {[n.label for n in plan.children]} final reward {plan.final_reward:+g}; "
                    f"replay {replay_plan(plan):+g}")
