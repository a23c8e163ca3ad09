import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hrlstg.env import (OBS_DIM, Action, ConfigError, EnvConfig, Event, Pose, WALL, goal_reached,
                        instruction_executable, make_layout, observe, parse_map, render, reset, reward,
                        step, with_event)
from hrlstg.tasks import Skill, Task, parse_task, task_set

BLUE, RED = 4, 0


def cfg(**kw):
    base = dict(layout="single_room", room_size=7, colors_in_play=(RED, BLUE))
    base.update(kw)
    return EnvConfig(**base)


def test_layout_shapes():
    two = make_layout("two_rooms", 7)
    assert (two.height, two.width) == (9, 17)
    assert sum(row.count("+") for row in two.rows) == 1
    assert [len(room) for room in two.rooms] == [49, 49]
    big = make_layout("big_room", 7)
    assert len(big.rooms) == 1 and len(big.rooms[0]) == 7 * 15
    assert len(make_layout("single_room", 7).rooms[0]) == 49


def test_config_validation():
    for bad in (dict(room_size=4), dict(room_size=6), dict(layout="maze"), dict(colors_in_play=()),
                dict(blocks_per_episode=0), dict(max_steps=0), dict(colors_in_play=(0, 0))):
        with pytest.raises(ConfigError):
            cfg(**bad)


def test_reset_deterministic_and_seed_sensitive():
    task = parse_task("Get blue")
    c = cfg(blocks_per_episode=3, distractors=True)
    assert reset(c, task, 5) == reset(c, task, 5)
    differ = sum(reset(c, task, s).key() != reset(c, task, s + 1000).key() for s in range(100))
    assert differ >= 99


def test_reset_single_item():
    s = reset(cfg(), parse_task("Get blue"), 3)
    assert s.grid_blocks() == [BLUE]
    assert s.held is None and s.step_count == 0


def test_reset_distractors_same_room():
    c = EnvConfig(layout="two_rooms", blocks_per_episode=4, distractors=True, colors_in_play=(RED, BLUE))
    layout = c.make_layout()
    for seed in range(50):
        s = reset(c, parse_task("Get blue"), seed)
        cells = [pos for pos, _ in s.stacks]
        assert len(cells) == 4 == len(set(cells))
        assert BLUE in s.grid_blocks()
        room = next(r for r in layout.rooms if (s.agent.row, s.agent.col) in r)
        assert all(cell in room for cell in cells)


def test_reset_stack_places_two_targets():
    s = reset(cfg(), parse_task("Stack red"), 0)
    assert s.grid_blocks() == [RED, RED]


def test_reset_errors():
    with pytest.raises(ConfigError):
        reset(cfg(), parse_task("Find green"), 0)
    with pytest.raises(ConfigError):
        reset(EnvConfig(layout="single_room", room_size=5, blocks_per_episode=25, distractors=True),
              parse_task("Find red"), 0)


ROOM = """
#######
#.....#
#..^..#
#..b..#
#.....#
#######
"""


def test_turns_and_moves():
    s = parse_map(ROOM)
    t = s
    for _ in range(4):
        t = step(t, Action.TURN_LEFT)
    assert t.agent == s.agent and t.step_count == 4
    # the block behind is impassable; forward is free until the wall
    assert step(s, Action.MOVE_BACKWARD).agent == s.agent
    s2 = step(s, Action.MOVE_FORWARD)
    assert s2.agent == Pose(1, 3, 0)
    assert step(s2, Action.MOVE_FORWARD).agent == s2.agent
    assert step(s, Action.MOVE_RIGHT).agent == Pose(2, 4, 0)
    assert step(s, Action.MOVE_LEFT).agent == Pose(2, 2, 0)


def test_failed_pickup_is_noop():
    s = step(parse_map(ROOM), Action.TURN_LEFT)
    t = step(s, Action.PICK_UP)
    assert t.key()[:3] == s.key()[:3] and t.last_event == Event() and t.step_count == s.step_count + 1


def test_pickup_putdown_events():
    s = parse_map("""
#######
#.....#
#..v..#
#..b..#
#.....#
#######
""")
    t = step(s, Action.PICK_UP)
    assert t.held == BLUE and t.last_event == Event("pickup", BLUE, 0) and t.grid_blocks() == []
    u = step(t, Action.PUT_DOWN)
    assert u.held is None and u.last_event == Event("putdown", BLUE, 1)


def test_putdown_onto_same_color_makes_pair():
    s = parse_map("""
#####
#.v.#
#.b.#
#####
""", held=BLUE)
    t = step(s, Action.PUT_DOWN)
    assert t.front_stack() == (BLUE, BLUE) and t.last_event == Event("putdown", BLUE, 2)
    assert render(t).splitlines()[2] == "#.B.#"
    assert step(step(t, Action.PICK_UP), Action.PUT_DOWN).front_stack() == (BLUE, BLUE)


def test_putdown_blocked_on_full_stack_and_wall():
    s = parse_map("#####\n#.v.#\n#.B.#\n#####", held=RED)
    assert step(s, Action.PUT_DOWN).held == RED
    w = parse_map("#####\n#.^.#\n#...#\n#####", held=RED)
    assert step(w, Action.PUT_DOWN).held == RED


def test_goal_examples():
    facing_blue = parse_map("####\n#>b#\n####")
    assert goal_reached(facing_blue, parse_task("Find blue"))
    assert not goal_reached(facing_blue, parse_task("Find red"))
    holding = parse_map("###\n#^#\n###", held=BLUE)
    assert goal_reached(holding, parse_task("Get blue"))
    on_blue = with_event(parse_map("####\n#>B#\n####"), Event("putdown", BLUE, 2))
    assert goal_reached(on_blue, parse_task("Stack blue"))
    assert goal_reached(on_blue, parse_task("Put blue"))
    red_base = parse_map("####\n#>b#\n####")
    red_base = red_base.__class__(red_base.layout, (((1, 2), (RED, BLUE)),), red_base.agent, None,
                                  Event("putdown", BLUE, 2))
    assert not goal_reached(red_base, parse_task("Stack blue"))
    assert reward(on_blue, parse_task("Stack blue")) == 1.0
    assert reward(on_blue, parse_task("Get blue")) == 0.0


def test_executability_examples():
    no_red = parse_map("#####\n#^.b#\n#####")
    assert not instruction_executable(no_red, parse_task("Find red"))
    assert instruction_executable(no_red, parse_task("Find blue"))
    assert instruction_executable(parse_map("###\n#^#\n###", held=BLUE), parse_task("Put blue"))
    assert not instruction_executable(no_red, parse_task("Stack blue"))
    assert not instruction_executable(parse_map("#####\n#^.b#\n#####", held=RED), parse_task("Get blue"))


def test_observe_contract():
    s = parse_map(ROOM)
    o = observe(s)
    assert o.shape == (OBS_DIM,) and np.all(np.abs(o) <= 1)
    assert np.array_equal(o, observe(parse_map(ROOM)))
    empty_slot = 6 + 6
    assert o[empty_slot] == 1.0
    disp = 6 + 7 + 14
    # red absent: presence 0, displacement 0
    assert o[disp + 3 * RED: disp + 3 * RED + 3].tolist() == [0, 0, 0]
    # blue sits directly behind the north-facing agent
    assert o[disp + 3 * BLUE + 2] == 1.0
    assert o[disp + 3 * BLUE] < 0 and o[disp + 3 * BLUE + 1] == 0


def test_observe_egocentric_rotation():
    north = parse_map("#####\n#...#\n#.^.#\n#.b.#\n#####")
    south = parse_map("#####\n#...#\n#.v.#\n#.b.#\n#####")
    disp = 6 + 7 + 14 + 3 * BLUE
    assert observe(north)[disp] == -observe(south)[disp]
    assert observe(south)[disp] > 0


def test_render_parse_round_trip():
    s = reset(EnvConfig(blocks_per_episode=4, distractors=True), parse_task("Get blue"), 11)
    back = parse_map(render(s))
    assert back.stacks == s.stacks and back.agent == s.agent
    assert render(back) == render(s)


actions = st.lists(st.integers(0, 7), max_size=60)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), acts=actions, task_idx=st.integers(0, 23))
def test_random_walk_invariants(seed, acts, task_idx):
    task = task_set(3).tasks[task_idx]
    c = EnvConfig(colors_in_play=tuple(range(6)), blocks_per_episode=4, distractors=True)
    s = reset(c, task, seed)
    total = s.count_blocks()
    for i, a in enumerate(acts):
        before = s
        key = before.key()
        s = step(s, a)
        assert before.key() == key  # purity
        assert s.count_blocks() == total
        assert s.layout.kind(s.agent.row, s.agent.col) != WALL
        assert s.step_count == i + 1
        assert all(len(stack) <= 2 for _, stack in s.stacks)
        if goal_reached(s, Task(Skill.STACK, task.item)):
            assert s.front_stack() == (task.item, task.item)
