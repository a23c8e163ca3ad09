"""
Learning a task grammar from successful episodes
================================================

The grammar is a Markov chain over <switch, instruction> pairs per goal. It
starts uniform, so it leaves the policy untouched; after a few successful
episodes it pushes the switch and instruction heads toward the sequences
that worked.
"""
from types import SimpleNamespace

import numpy as np

from hrlstg.stg import format_table, init_uniform, mle_update, reshaped_instruction_dist, reshaped_switch_dist
from hrlstg.tasks import parse_task

goal = parse_task("Get blue")
FIND_BLUE = 4  # index of "Find blue" among the stage-0 instructions

# three successes: find the block, then pick it up directly (e=1)
episodes = [SimpleNamespace(task=goal, switches=[0, 1], instructions=[FIND_BLUE, 0], final_reward=1.0)
            for _ in range(3)]
# and one where a primitive step came first
episodes.append(SimpleNamespace(task=goal, switches=[1, 0, 1], instructions=[0, FIND_BLUE, 0], final_reward=1.0))

table = mle_update(init_uniform(1, alpha=0.1), episodes)
print(format_table(table, [goal]))

# a policy that is undecided gets nudged toward delegating "Find blue" first
raw_switch = np.array([0.5, 0.5])
raw_instruction = np.full(6, 1 / 6)
print("switch at t=0:     ", reshaped_switch_dist(raw_switch, table, goal).round(3))
print("instruction at t=0:", reshaped_instruction_dist(raw_instruction, table, goal).round(3))
# after delegating "Find blue" the grammar prefers acting directly
print("switch after Find: ", reshaped_switch_dist(raw_switch, table, goal, (0, FIND_BLUE)).round(3))

# with a uniform table nothing changes
flat = init_uniform(1)
print(np.abs(reshaped_switch_dist(raw_switch, flat, goal) - raw_switch).max())
