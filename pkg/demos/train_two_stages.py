"""
Training a base skill and a hierarchical policy on top of it
============================================================

Stage 0 learns "Find x" from primitive actions. Stage 1 learns "Get x" and
may either delegate a "Find" instruction to the frozen stage-0 policy or act
directly. Expect ten to fifteen minutes on one CPU core.
"""
import sys

from hrlstg.env import EnvConfig
from hrlstg.evaluation import success_rate, trace_plan, variant_config
from hrlstg.policy import PolicyStack
from hrlstg.tasks import parse_task
from hrlstg.trainer import StageTrainer, TrainConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
room = dict(layout="single_room", room_size=7, colors_in_play=(0, 4), max_steps=100)
config = TrainConfig(gamma=0.95, lr=1e-3, eps_decay_episodes=4000, max_episodes=30_000)


def train_until_good(trainer, target=0.95):
    while not trainer.done():
        trainer.train(stop_after_episodes=trainer.episode + 1000)
        check = success_rate(trainer.stack(), trainer.pool, trainer.env_config, n=50, seeds=(999,))
        print(f"  stage {trainer.stage}: {trainer.episode} episodes, phase {trainer.curriculum.phase}, "
              f"greedy success {check.success:.2f}")
        if trainer.threshold_episode is not None and check.success >= target:
            return trainer
    return trainer


print("stage 0: Find x")
base = train_until_good(StageTrainer(0, EnvConfig(blocks_per_episode=2, distractors=True, **room), config, seed))

# stage 1 trains on single-item rooms; the curriculum starts on the base tasks
env1 = EnvConfig(blocks_per_episode=1, base_max_steps=30, max_primitive_steps=400, **room)
print("stage 1: Get x")
top = train_until_good(StageTrainer(1, env1, config, seed, PolicyStack([base.net])))
print(f"curriculum threshold reached at episode {top.threshold_episode}")

# distractors were never seen during stage-1 training
report = success_rate(top.stack(), [parse_task("Get red"), parse_task("Get blue")],
                      variant_config(env1, "distractors"), n=100)
print(report.table())

# one greedy episode, unfolded into the instructions it issued
print(trace_plan(top.stack(), parse_task("Get blue"), variant_config(env1, "distractors"), seed=1).render())
