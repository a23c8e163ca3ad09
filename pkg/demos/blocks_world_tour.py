"""
A tour of the blocks world
==========================

Reset a room, move around, pick a block up and stack it. Every state is an
immutable value, so stepping never changes the state you started from.
"""
from hrlstg.env import (Action, EnvConfig, goal_reached, instruction_executable, observe, parse_map, render,
                        reset, step)
from hrlstg.tasks import parse_task, task_set

# stage k solves every task of the earlier stages plus one new skill
for k in range(4):
    print(f"stage {k}: {len(task_set(k).tasks)} tasks, newest {task_set(k).tasks[-1]}")

# a seeded episode start: a 7x7 room with the target and one distractor
env = EnvConfig(layout="single_room", room_size=7, colors_in_play=(0, 4), blocks_per_episode=2, distractors=True)
state = reset(env, parse_task("Get blue"), seed=3)
print(render(state))

# maps can also be written by hand; the arrow is the agent
state = parse_map("""
#######
#.....#
#..v..#
#..b..#
#..b..#
#######
""")
state = step(state, Action.PICK_UP)
print(render(state, show_held=True))
print("Get blue reached:", goal_reached(state, parse_task("Get blue")))

# step into the freed cell and drop the held block onto the other one
state = step(step(state, Action.MOVE_FORWARD), Action.PUT_DOWN)
print(render(state, show_held=True), state.last_event)
print("Stack blue reached:", goal_reached(state, parse_task("Stack blue")))

# instructions that cannot possibly succeed are refused (and penalised during rollouts)
print("Find red executable:", instruction_executable(state, parse_task("Find red")))

# the policy sees a fixed-length egocentric feature vector
print(observe(state).round(2))
